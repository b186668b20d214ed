//! Star-shaped domains and metric scenarios.
//!
//! A domain is described by a radial graph `ρ(θ, φ)` about a star center:
//! the boundary surface is `{ c + ρ(ω) ω : ω ∈ S² }`. Three graph families
//! are supported — constant radius (balls), axis-aligned ellipsoids, and
//! truncated real spherical-harmonic expansions. The implicit view
//! `φ(x) = |x − c| − ρ(ω(x))` is negative exactly inside the body, which is
//! what the voxel machinery and the grid builder consume.
//!
//! A *metric scenario* pairs a domain with a conformal factor recipe: flat
//! (`f ≡ 1`), an explicit `f = 1 + m/(2r)` profile, or "synthesize a
//! harmonic factor that makes the boundary minimal", which is resolved once
//! a grid exists. Scenarios with a closed-form potential carry an analytic
//! reference used by oracle tests and convergence studies.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fold arbitrary spherical angles into the canonical chart
/// `θ ∈ [0, π]`, `φ ∈ [0, 2π)`. Crossing a pole flips `φ` by π.
pub fn fold_angles(theta: f64, phi: f64) -> (f64, f64) {
    let mut t = theta.rem_euclid(2.0 * std::f64::consts::PI);
    let mut p = phi;
    if t > std::f64::consts::PI {
        t = 2.0 * std::f64::consts::PI - t;
        p += std::f64::consts::PI;
    }
    (t, p.rem_euclid(2.0 * std::f64::consts::PI))
}

/// Unit direction for spherical angles.
pub fn unit_dir(theta: f64, phi: f64) -> Vector3<f64> {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Vector3::new(st * cp, st * sp, ct)
}

/// Spherical angles of a direction vector (assumed non-zero).
pub fn dir_angles(v: &Vector3<f64>) -> (f64, f64) {
    let r = v.norm();
    let theta = (v.z / r).clamp(-1.0, 1.0).acos();
    let phi = v.y.atan2(v.x).rem_euclid(2.0 * std::f64::consts::PI);
    (theta, phi)
}

// ---------------------------------------------------------------------------
// radial graphs
// ---------------------------------------------------------------------------

/// Truncated real spherical-harmonic expansion of a radial graph.
///
/// Coefficients are stored in the flat layout `idx = l² + l + m` for
/// `0 ≤ l ≤ l_max`, `−l ≤ m ≤ l`, against the orthonormal real basis:
/// `Y_{l,0} = N_{l,0} P_l(cos θ)`,
/// `Y_{l,m} = √2 N_{l,m} P_l^m(cos θ) cos(mφ)` for `m > 0`,
/// `Y_{l,−m} = √2 N_{l,m} P_l^m(cos θ) sin(mφ)` for `m > 0`,
/// with `N_{l,m} = √((2l+1)/(4π) · (l−m)!/(l+m)!)`. In particular a unit
/// sphere is the single coefficient `c_{0,0} = √(4π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicGraph {
    l_max: usize,
    coeffs: Vec<f64>,
}

impl HarmonicGraph {
    pub fn new(l_max: usize, coeffs: Vec<f64>) -> Result<Self> {
        let expect = (l_max + 1) * (l_max + 1);
        if coeffs.len() != expect {
            return Err(Error::InvalidDomain(format!(
                "harmonic graph with l_max = {l_max} needs {expect} coefficients, got {}",
                coeffs.len()
            )));
        }
        if l_max > 24 {
            return Err(Error::InvalidDomain(format!(
                "harmonic degree l_max = {l_max} beyond the supported cutoff 24"
            )));
        }
        if !coeffs.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidDomain(
                "harmonic coefficients must be finite".into(),
            ));
        }
        Ok(Self { l_max, coeffs })
    }

    /// Unit sphere perturbed by a single harmonic: `ρ = 1 + amp · Y_{l,m}`.
    pub fn unit_sphere_plus(l: usize, m: i64, amp: f64) -> Result<Self> {
        let mut coeffs = vec![0.0; (l + 1) * (l + 1)];
        coeffs[0] = (4.0 * std::f64::consts::PI).sqrt();
        let idx = (l * l) as i64 + l as i64 + m;
        coeffs[idx as usize] += amp;
        Self::new(l, coeffs)
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    fn eval(&self, theta: f64, phi: f64) -> f64 {
        let x = theta.cos();
        let lmax = self.l_max;
        // Associated Legendre values P_l^m(x) with the Condon–Shortley phase,
        // built by the usual diagonal-then-upward recurrence.
        let mut p = vec![0.0; (lmax + 1) * (lmax + 1)];
        let pidx = |l: usize, m: usize| l * (lmax + 1) + m;
        let somx2 = (1.0 - x * x).max(0.0).sqrt();
        p[pidx(0, 0)] = 1.0;
        for m in 1..=lmax {
            p[pidx(m, m)] = -p[pidx(m - 1, m - 1)] * (2.0 * m as f64 - 1.0) * somx2;
        }
        for m in 0..lmax {
            p[pidx(m + 1, m)] = x * (2.0 * m as f64 + 1.0) * p[pidx(m, m)];
        }
        for m in 0..=lmax {
            for l in (m + 2)..=lmax {
                let lf = l as f64;
                let mf = m as f64;
                p[pidx(l, m)] = ((2.0 * lf - 1.0) * x * p[pidx(l - 1, m)]
                    - (lf + mf - 1.0) * p[pidx(l - 2, m)])
                    / (lf - mf);
            }
        }

        let mut sum = 0.0;
        for l in 0..=lmax {
            for m in -(l as i64)..=(l as i64) {
                let c = self.coeffs[(l * l) as usize + (l as i64 + m) as usize];
                if c == 0.0 {
                    continue;
                }
                let ma = m.unsigned_abs() as usize;
                let mut norm = (2.0 * l as f64 + 1.0) / (4.0 * std::f64::consts::PI);
                for k in (l - ma + 1)..=(l + ma) {
                    norm /= k as f64;
                }
                let norm = norm.sqrt();
                let base = norm * p[pidx(l, ma)];
                let y = if m == 0 {
                    base
                } else if m > 0 {
                    std::f64::consts::SQRT_2 * base * (ma as f64 * phi).cos()
                } else {
                    std::f64::consts::SQRT_2 * base * (ma as f64 * phi).sin()
                };
                sum += c * y;
            }
        }
        sum
    }
}

/// Radial graph `ω ↦ ρ(ω)` of a star-shaped boundary.
#[derive(Debug, Clone, PartialEq)]
pub enum RadialGraph {
    /// Ball of the given radius.
    Constant(f64),
    /// Axis-aligned ellipsoid: `ρ(ω) = (ωᵀ diag(1/a², 1/b², 1/c²) ω)^{−1/2}`.
    Ellipsoid { semi_axes: [f64; 3] },
    /// Truncated spherical-harmonic expansion.
    Harmonics(HarmonicGraph),
}

impl RadialGraph {
    /// Boundary radius in the direction `(θ, φ)`; angles are folded first.
    pub fn radius(&self, theta: f64, phi: f64) -> f64 {
        let (t, p) = fold_angles(theta, phi);
        match self {
            RadialGraph::Constant(r) => *r,
            RadialGraph::Ellipsoid { semi_axes: [a, b, c] } => {
                let w = unit_dir(t, p);
                let q = (w.x / a).powi(2) + (w.y / b).powi(2) + (w.z / c).powi(2);
                1.0 / q.sqrt()
            }
            RadialGraph::Harmonics(h) => h.eval(t, p),
        }
    }

    /// First angular derivatives `(∂ρ/∂θ, ∂ρ/∂φ)` by high-accuracy central
    /// differences; the graphs are smooth, so a small fixed step suffices.
    pub fn radius_grad(&self, theta: f64, phi: f64) -> (f64, f64) {
        if let RadialGraph::Constant(_) = self {
            return (0.0, 0.0);
        }
        const H: f64 = 1.0e-4;
        let dt = (self.radius(theta + H, phi) - self.radius(theta - H, phi)) / (2.0 * H);
        let dp = (self.radius(theta, phi + H) - self.radius(theta, phi - H)) / (2.0 * H);
        (dt, dp)
    }

    /// Second angular derivatives `(ρ_θθ, ρ_θφ, ρ_φφ)` by central differences.
    pub fn radius_hess(&self, theta: f64, phi: f64) -> (f64, f64, f64) {
        if let RadialGraph::Constant(_) = self {
            return (0.0, 0.0, 0.0);
        }
        const H: f64 = 1.0e-4;
        let f0 = self.radius(theta, phi);
        let dtt = (self.radius(theta + H, phi) - 2.0 * f0 + self.radius(theta - H, phi)) / (H * H);
        let dpp = (self.radius(theta, phi + H) - 2.0 * f0 + self.radius(theta, phi - H)) / (H * H);
        let dtp = (self.radius(theta + H, phi + H) - self.radius(theta + H, phi - H)
            - self.radius(theta - H, phi + H)
            + self.radius(theta - H, phi - H))
            / (4.0 * H * H);
        (dtt, dtp, dpp)
    }
}

// ---------------------------------------------------------------------------
// implicit domain
// ---------------------------------------------------------------------------

/// A star-shaped body with smooth boundary, described by a radial graph
/// about its star center, together with the implicit view used for
/// inside/outside tests.
#[derive(Debug, Clone)]
pub struct ImplicitDomain {
    graph: RadialGraph,
    center: Vector3<f64>,
    bounding_radius: f64,
    min_radius: f64,
    smoothness: u32,
}

/// Angular sampling used to validate graphs and integrate over directions.
const VALIDATE_THETA: usize = 96;
const VALIDATE_PHI: usize = 192;

/// Build a star-shaped domain from a radial graph, validating positivity.
pub fn make_star_domain(graph: RadialGraph, center: Vector3<f64>) -> Result<ImplicitDomain> {
    match &graph {
        RadialGraph::Constant(r) => {
            if !(*r > 0.0) || !r.is_finite() {
                return Err(Error::InvalidDomain(format!(
                    "ball radius must be positive and finite, got {r}"
                )));
            }
        }
        RadialGraph::Ellipsoid { semi_axes } => {
            if !semi_axes.iter().all(|a| *a > 0.0 && a.is_finite()) {
                return Err(Error::InvalidDomain(format!(
                    "ellipsoid semi-axes must be positive, got {semi_axes:?}"
                )));
            }
        }
        RadialGraph::Harmonics(_) => {}
    }

    let mut min_r = f64::INFINITY;
    let mut max_r: f64 = 0.0;
    let mut visit = |theta: f64, phi: f64| {
        let r = graph.radius(theta, phi);
        min_r = min_r.min(r);
        max_r = max_r.max(r);
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::InvalidDomain(format!(
                "radial graph is not positive at θ = {theta:.4}, φ = {phi:.4} (ρ = {r:.4e})"
            )));
        }
        Ok(())
    };
    for j in 0..VALIDATE_THETA {
        let theta = (j as f64 + 0.5) * std::f64::consts::PI / VALIDATE_THETA as f64;
        for k in 0..VALIDATE_PHI {
            let phi = k as f64 * 2.0 * std::f64::consts::PI / VALIDATE_PHI as f64;
            visit(theta, phi)?;
        }
    }
    visit(0.0, 0.0)?;
    visit(std::f64::consts::PI, 0.0)?;

    // For harmonic graphs the sampled maximum can miss a ridge between
    // sample points, so inflate slightly; balls and ellipsoids attain their
    // maxima on the sample.
    let bounding = match &graph {
        RadialGraph::Harmonics(_) => max_r * 1.002,
        _ => max_r,
    };

    Ok(ImplicitDomain {
        graph,
        center,
        bounding_radius: bounding,
        min_radius: min_r,
        smoothness: u32::MAX, // all supported graph families are C^∞
    })
}

impl ImplicitDomain {
    pub fn graph(&self) -> &RadialGraph {
        &self.graph
    }

    pub fn star_center(&self) -> Vector3<f64> {
        self.center
    }

    /// Radius of the smallest origin-centered ball containing the body
    /// (in body coordinates, i.e. about the star center).
    pub fn bounding_radius(&self) -> f64 {
        self.bounding_radius
    }

    pub fn min_radius(&self) -> f64 {
        self.min_radius
    }

    /// Differentiability classes guaranteed by the construction.
    pub fn smoothness(&self) -> u32 {
        self.smoothness
    }

    /// Boundary radius in the direction `(θ, φ)` from the star center.
    pub fn radius(&self, theta: f64, phi: f64) -> f64 {
        self.graph.radius(theta, phi)
    }

    /// Implicit view: negative exactly inside the body, zero on the
    /// boundary, positive outside.
    pub fn implicit_value(&self, x: &Vector3<f64>) -> f64 {
        let d = x - self.center;
        let r = d.norm();
        if r == 0.0 {
            return -self.min_radius;
        }
        let (theta, phi) = dir_angles(&d);
        r - self.graph.radius(theta, phi)
    }

    /// Exact volume of a star-shaped body: `(1/3) ∮ ρ³ dω`, by closed form
    /// where available and by angular quadrature otherwise.
    pub fn volume(&self) -> f64 {
        match &self.graph {
            RadialGraph::Constant(r) => 4.0 / 3.0 * std::f64::consts::PI * r.powi(3),
            RadialGraph::Ellipsoid { semi_axes: [a, b, c] } => {
                4.0 / 3.0 * std::f64::consts::PI * a * b * c
            }
            RadialGraph::Harmonics(_) => {
                // Gauss quadrature in cos θ is exact for the polynomial
                // integrand ρ³ at every supported harmonic degree.
                let rule = crate::quad::SphereRule::gauss(128, 256);
                rule.integrate(|t, p| self.graph.radius(t, p).powi(3)) / 3.0
            }
        }
    }
}

// ---------------------------------------------------------------------------
// factor recipes and scenarios
// ---------------------------------------------------------------------------

/// Recipe for the conformal factor of a scenario. The grid-dependent
/// synthesis variant is materialized by the pipeline once a grid exists.
#[derive(Debug, Clone, PartialEq)]
pub enum FactorSpec {
    /// Constant factor (flat metric when the constant is 1).
    Constant(f64),
    /// `f(x) = 1 + m / (2 |x − c|)` about the star center.
    Schwarzschild { mass: f64 },
    /// Harmonic factor with minimal inner boundary, solved numerically.
    SynthesizeMinimal,
}

/// Closed-form reference data for oracle scenarios.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnalyticReference {
    /// Flat exterior of a round ball: `u = log(r/R)`, capacity `R`, mass 0.
    FlatBall { radius: f64 },
    /// Schwarzschild exterior in the conformally flat chart: the body is the
    /// ball of radius `m/2`, `u = log(2r/m)`, capacity `m/2`, mass `m`.
    Schwarzschild { mass: f64 },
}

impl AnalyticReference {
    /// Exact potential as a function of the distance to the star center,
    /// normalized to `u = log r + a + o(1)`.
    pub fn exact_u(&self, r: f64) -> f64 {
        match self {
            AnalyticReference::FlatBall { radius } => (r / radius).ln(),
            AnalyticReference::Schwarzschild { mass } => (2.0 * r / mass).ln(),
        }
    }

    pub fn capacity(&self) -> f64 {
        match self {
            AnalyticReference::FlatBall { radius } => *radius,
            AnalyticReference::Schwarzschild { mass } => mass / 2.0,
        }
    }

    pub fn adm_mass(&self) -> f64 {
        match self {
            AnalyticReference::FlatBall { .. } => 0.0,
            AnalyticReference::Schwarzschild { mass } => *mass,
        }
    }
}

/// A domain plus a conformal-factor recipe: everything the pipeline needs
/// to set up a run.
#[derive(Debug, Clone)]
pub struct MetricScenario {
    pub domain: ImplicitDomain,
    pub factor: FactorSpec,
    pub label: String,
    pub analytic_reference: Option<AnalyticReference>,
}

/// Round ball with the flat metric.
pub fn make_ball(radius: f64, center: Vector3<f64>) -> Result<MetricScenario> {
    let domain = make_star_domain(RadialGraph::Constant(radius), center)?;
    Ok(MetricScenario {
        domain,
        factor: FactorSpec::Constant(1.0),
        label: format!("ball-{radius}"),
        analytic_reference: Some(AnalyticReference::FlatBall { radius }),
    })
}

/// Schwarzschild exterior of mass `m` in the conformally flat chart.
pub fn make_schwarzschild(mass: f64) -> Result<MetricScenario> {
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(Error::InvalidDomain(format!(
            "Schwarzschild mass must be positive, got {mass}"
        )));
    }
    let domain = make_star_domain(RadialGraph::Constant(mass / 2.0), Vector3::zeros())?;
    Ok(MetricScenario {
        domain,
        factor: FactorSpec::Schwarzschild { mass },
        label: format!("schwarzschild-{mass}"),
        analytic_reference: Some(AnalyticReference::Schwarzschild { mass }),
    })
}

/// Axis-aligned ellipsoid with a synthesized minimal-boundary factor.
pub fn make_ellipsoid_scenario(semi_axes: [f64; 3]) -> Result<MetricScenario> {
    let domain = make_star_domain(RadialGraph::Ellipsoid { semi_axes }, Vector3::zeros())?;
    Ok(MetricScenario {
        domain,
        factor: FactorSpec::SynthesizeMinimal,
        label: format!(
            "ellipsoid-{}-{}-{}",
            semi_axes[0], semi_axes[1], semi_axes[2]
        ),
        analytic_reference: None,
    })
}

// ---------------------------------------------------------------------------
// JSON scenario files
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum DomainSpecJson {
    Ball {
        radius: f64,
    },
    Star {
        l_max: usize,
        coeffs: Vec<f64>,
    },
    Ellipsoid {
        semi_axes: [f64; 3],
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum FactorSpecJson {
    Schwarzschild { schwarzschild_m: f64 },
    Synthesize { synthesize_minimal: bool },
    Constant { constant: f64 },
}

/// On-disk scenario description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    domain: DomainSpecJson,
    factor: FactorSpecJson,
    label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    center: Option<[f64; 3]>,
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ScenarioFile = serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("scenario JSON: {e}")))?;
        Ok(spec)
    }

    /// Resolve the file into a scenario, validating the pieces.
    pub fn into_scenario(self) -> Result<MetricScenario> {
        let center = self
            .center
            .map(|c| Vector3::new(c[0], c[1], c[2]))
            .unwrap_or_else(Vector3::zeros);
        let (graph, reference) = match self.domain {
            DomainSpecJson::Ball { radius } => (
                RadialGraph::Constant(radius),
                Some(AnalyticReference::FlatBall { radius }),
            ),
            DomainSpecJson::Star { l_max, coeffs } => (
                RadialGraph::Harmonics(HarmonicGraph::new(l_max, coeffs)?),
                None,
            ),
            DomainSpecJson::Ellipsoid { semi_axes } => {
                (RadialGraph::Ellipsoid { semi_axes }, None)
            }
        };
        let factor = match self.factor {
            FactorSpecJson::Schwarzschild { schwarzschild_m } => {
                if !(schwarzschild_m > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "schwarzschild_m must be positive, got {schwarzschild_m}"
                    )));
                }
                FactorSpec::Schwarzschild {
                    mass: schwarzschild_m,
                }
            }
            FactorSpecJson::Synthesize { synthesize_minimal } => {
                if !synthesize_minimal {
                    return Err(Error::InvalidConfig(
                        "synthesize_minimal must be true when present".into(),
                    ));
                }
                FactorSpec::SynthesizeMinimal
            }
            FactorSpecJson::Constant { constant } => {
                if !(constant > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "constant factor must be positive, got {constant}"
                    )));
                }
                FactorSpec::Constant(constant)
            }
        };

        // A flat factor on a round ball is the classical oracle; keep the
        // reference only when the factor matches the closed form.
        let analytic_reference = match (&factor, reference) {
            (FactorSpec::Constant(c), Some(r)) if *c == 1.0 => Some(r),
            (FactorSpec::Schwarzschild { mass }, Some(AnalyticReference::FlatBall { radius }))
                if (*mass - 2.0 * radius).abs() < 1e-12 * mass.max(1.0) =>
            {
                Some(AnalyticReference::Schwarzschild { mass: *mass })
            }
            _ => None,
        };

        let domain = make_star_domain(graph, center)?;
        Ok(MetricScenario {
            domain,
            factor,
            label: self.label,
            analytic_reference,
        })
    }
}

/// Convenience: parse a scenario straight from JSON text.
pub fn scenario_from_json(text: &str) -> Result<MetricScenario> {
    ScenarioFile::from_json(text)?.into_scenario()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ball_rejects_nonpositive_radius() {
        assert!(make_ball(0.0, Vector3::zeros()).is_err());
        assert!(make_ball(-1.0, Vector3::zeros()).is_err());
        assert!(make_schwarzschild(-2.0).is_err());
    }

    #[test]
    fn implicit_sign_convention() {
        let scen = make_ball(2.0, Vector3::new(1.0, 0.0, 0.0)).unwrap();
        let d = &scen.domain;
        assert!(d.implicit_value(&Vector3::new(1.0, 0.0, 0.0)) < 0.0);
        assert!(d.implicit_value(&Vector3::new(1.0, 1.9, 0.0)) < 0.0);
        assert!(d.implicit_value(&Vector3::new(1.0, 2.1, 0.0)) > 0.0);
        assert_relative_eq!(
            d.implicit_value(&Vector3::new(3.0, 0.0, 0.0)),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn ellipsoid_radius_hits_semi_axes() {
        let g = RadialGraph::Ellipsoid {
            semi_axes: [1.2, 1.0, 0.8],
        };
        assert_relative_eq!(g.radius(std::f64::consts::FRAC_PI_2, 0.0), 1.2, epsilon = 1e-12);
        assert_relative_eq!(
            g.radius(std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2),
            1.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(g.radius(0.0, 0.0), 0.8, epsilon = 1e-12);
    }

    #[test]
    fn y20_perturbation_matches_closed_form() {
        // Y_{2,0} = sqrt(5/16π) (3 cos²θ − 1)
        let g = RadialGraph::Harmonics(HarmonicGraph::unit_sphere_plus(2, 0, 0.2).unwrap());
        let y20 = |theta: f64| {
            (5.0 / (16.0 * std::f64::consts::PI)).sqrt() * (3.0 * theta.cos().powi(2) - 1.0)
        };
        for &theta in &[0.1, 0.7, 1.3, 2.0, 2.9] {
            assert_relative_eq!(
                g.radius(theta, 0.42),
                1.0 + 0.2 * y20(theta),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn sectoral_harmonic_depends_on_phi() {
        // Y_{2,2} = sqrt(15/16π) sin²θ cos 2φ (real orthonormal basis)
        let g = RadialGraph::Harmonics(HarmonicGraph::unit_sphere_plus(2, 2, 0.1).unwrap());
        let y22 = |theta: f64, phi: f64| {
            (15.0 / (16.0 * std::f64::consts::PI)).sqrt()
                * theta.sin().powi(2)
                * (2.0 * phi).cos()
        };
        for &(theta, phi) in &[(0.6, 0.3), (1.4, 2.0), (2.2, 4.9)] {
            assert_relative_eq!(
                g.radius(theta, phi),
                1.0 + 0.1 * y22(theta, phi),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn nonpositive_graph_rejected() {
        // Strong enough Y20 makes the graph dip negative near the equator.
        let g = HarmonicGraph::unit_sphere_plus(2, 0, 4.0).unwrap();
        let err = make_star_domain(RadialGraph::Harmonics(g), Vector3::zeros());
        assert!(err.is_err());
    }

    #[test]
    fn pole_folding_is_consistent() {
        let g = RadialGraph::Harmonics(HarmonicGraph::unit_sphere_plus(2, 1, 0.15).unwrap());
        // Crossing the north pole: (−θ, φ) ≡ (θ, φ + π).
        let a = g.radius(-0.2, 1.0);
        let b = g.radius(0.2, 1.0 + std::f64::consts::PI);
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn volume_closed_forms() {
        let ball = make_ball(2.0, Vector3::zeros()).unwrap();
        assert_relative_eq!(
            ball.domain.volume(),
            4.0 / 3.0 * std::f64::consts::PI * 8.0,
            epsilon = 1e-12
        );
        let ell = make_ellipsoid_scenario([1.2, 1.0, 1.0]).unwrap();
        assert_relative_eq!(
            ell.domain.volume(),
            4.0 / 3.0 * std::f64::consts::PI * 1.2,
            epsilon = 1e-12
        );
        // Quadrature route on a harmonic graph representing a plain sphere.
        let mut coeffs = vec![0.0; 1];
        coeffs[0] = (4.0 * std::f64::consts::PI).sqrt() * 1.5;
        let dom =
            make_star_domain(RadialGraph::Harmonics(HarmonicGraph::new(0, coeffs).unwrap()),
                Vector3::zeros())
            .unwrap();
        assert_relative_eq!(
            dom.volume(),
            4.0 / 3.0 * std::f64::consts::PI * 1.5f64.powi(3),
            max_relative = 1e-12
        );
    }

    #[test]
    fn analytic_reference_values() {
        let r = AnalyticReference::Schwarzschild { mass: 2.0 };
        assert_relative_eq!(r.exact_u(1.0), 0.0, epsilon = 1e-15);
        assert_relative_eq!(r.capacity(), 1.0);
        assert_relative_eq!(r.adm_mass(), 2.0);
        let b = AnalyticReference::FlatBall { radius: 5.0 };
        assert_relative_eq!(b.exact_u(5.0), 0.0, epsilon = 1e-15);
        assert_relative_eq!(b.capacity(), 5.0);
    }

    #[test]
    fn reference_u_vanishes_on_boundary_samples() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let scen = make_schwarzschild(2.0).unwrap();
        let reference = scen.analytic_reference.unwrap();
        for _ in 0..1000 {
            let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
            let phi: f64 = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
            let rho = scen.domain.radius(theta, phi);
            assert!(reference.exact_u(rho).abs() < 1e-13);
        }
    }

    #[test]
    fn scenario_json_roundtrip() {
        let text = r#"{
            "domain": { "ball": { "radius": 1.0 } },
            "factor": { "schwarzschild_m": 2.0 },
            "label": "schwarzschild-2"
        }"#;
        let scen = scenario_from_json(text).unwrap();
        assert_eq!(scen.label, "schwarzschild-2");
        assert!(matches!(scen.factor, FactorSpec::Schwarzschild { mass } if mass == 2.0));
        assert!(matches!(
            scen.analytic_reference,
            Some(AnalyticReference::Schwarzschild { .. })
        ));

        let text = r#"{
            "domain": { "star": { "l_max": 2, "coeffs": [3.5449077018110318, 0,0,0,0,0, 0.2, 0,0] } },
            "factor": { "synthesize_minimal": true },
            "label": "bumpy"
        }"#;
        let scen = scenario_from_json(text).unwrap();
        assert!(matches!(scen.factor, FactorSpec::SynthesizeMinimal));
        assert!(scen.analytic_reference.is_none());

        let text = r#"{
            "domain": { "ellipsoid": { "semi_axes": [1.2, 1.0, 1.0] } },
            "factor": { "constant": 1.0 },
            "label": "flat-ellipsoid"
        }"#;
        let scen = scenario_from_json(text).unwrap();
        assert!(matches!(scen.factor, FactorSpec::Constant(c) if c == 1.0));
    }

    #[test]
    fn scenario_json_errors() {
        assert!(scenario_from_json("{ not json").is_err());
        let bad_factor = r#"{
            "domain": { "ball": { "radius": 1.0 } },
            "factor": { "schwarzschild_m": -3.0 },
            "label": "x"
        }"#;
        assert!(scenario_from_json(bad_factor).is_err());
        let bad_domain = r#"{
            "domain": { "ball": { "radius": -1.0 } },
            "factor": { "constant": 1.0 },
            "label": "x"
        }"#;
        assert!(scenario_from_json(bad_domain).is_err());
    }
}
