//! Curvature of a star-shaped boundary from its radial graph.
//!
//! The boundary `X(θ, φ) = c + ρ(θ, φ) ω(θ, φ)` is a smooth parametrized
//! surface away from the chart poles, so its fundamental forms follow from
//! `ρ` and its first and second angular derivatives. Signs are fixed so a
//! round sphere of radius `R` has mean curvature `+2/R` with respect to the
//! outward normal (sum-of-principal-curvatures convention), matching the
//! convention used for level sets of the exterior potential.

use nalgebra::Vector3;

use crate::domain::{unit_dir, ImplicitDomain};

/// Pointwise boundary geometry at fixed angles.
#[derive(Debug, Clone, Copy)]
pub struct SurfacePoint {
    /// Position in ambient coordinates.
    pub position: Vector3<f64>,
    /// Outward unit normal.
    pub normal: Vector3<f64>,
    /// Area element per `dθ dφ` (that is, `√(EG − F²)`).
    pub area_element: f64,
    /// Mean curvature (sum of principal curvatures, `+2/R` on a sphere).
    pub mean_curvature: f64,
    /// Gauss curvature.
    pub gauss_curvature: f64,
}

impl SurfacePoint {
    /// Squared norm of the full second fundamental form, `H² − 2K`.
    pub fn second_form_norm_sq(&self) -> f64 {
        self.mean_curvature * self.mean_curvature - 2.0 * self.gauss_curvature
    }

    /// Squared norm of the trace-free part, `|A|² − H²/2`.
    pub fn tracefree_form_norm_sq(&self) -> f64 {
        self.mean_curvature * self.mean_curvature / 2.0 - 2.0 * self.gauss_curvature
    }
}

/// Angular distance from a chart pole below which curvatures switch to the
/// φ-averaged ring limit. Inside this band the finite differences behind
/// `ρ_φφ` fall under rounding noise (the true variation scales like
/// `θ² h²`), so a direct evaluation silently corrupts the second
/// fundamental form; the ring average converges to the pole value at
/// `O(RING²)`.
const POLE_RING: f64 = 0.02;

/// Evaluate position, outward normal and curvatures of the boundary at
/// `(θ, φ)`. Chart poles are handled by the ring limit described at
/// [`POLE_RING`]; first-order data (position, normal, area element) is
/// evaluated directly with a tiny pad off the pole.
pub fn surface_point(domain: &ImplicitDomain, theta: f64, phi: f64) -> SurfacePoint {
    let (theta, phi) = crate::domain::fold_angles(theta, phi);
    let mut p = surface_point_raw(domain, theta, phi);
    let near_north = theta < POLE_RING;
    let near_south = theta > std::f64::consts::PI - POLE_RING;
    if near_north || near_south {
        let ring_theta = if near_north {
            POLE_RING
        } else {
            std::f64::consts::PI - POLE_RING
        };
        let n = 16;
        let mut h = 0.0;
        let mut k = 0.0;
        for i in 0..n {
            let q = surface_point_raw(
                domain,
                ring_theta,
                i as f64 * 2.0 * std::f64::consts::PI / n as f64,
            );
            h += q.mean_curvature;
            k += q.gauss_curvature;
        }
        p.mean_curvature = h / n as f64;
        p.gauss_curvature = k / n as f64;
    }
    p
}

fn surface_point_raw(domain: &ImplicitDomain, theta: f64, phi: f64) -> SurfacePoint {
    const POLE_PAD: f64 = 1.0e-6;
    let theta = theta.clamp(POLE_PAD, std::f64::consts::PI - POLE_PAD);

    let graph = domain.graph();
    let rho = graph.radius(theta, phi);
    let (rt, rp) = graph.radius_grad(theta, phi);
    let (rtt, rtp, rpp) = graph.radius_hess(theta, phi);

    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let w = unit_dir(theta, phi);
    let wt = Vector3::new(ct * cp, ct * sp, -st);
    let wp = Vector3::new(-st * sp, st * cp, 0.0);
    let wtt = -w;
    let wtp = Vector3::new(-ct * sp, ct * cp, 0.0);
    let wpp = Vector3::new(-st * cp, -st * sp, 0.0);

    let xt = rt * w + rho * wt;
    let xp = rp * w + rho * wp;
    let xtt = rtt * w + 2.0 * rt * wt + rho * wtt;
    let xtp = rtp * w + rt * wp + rp * wt + rho * wtp;
    let xpp = rpp * w + 2.0 * rp * wp + rho * wpp;

    let e = xt.dot(&xt);
    let f = xt.dot(&xp);
    let g = xp.dot(&xp);
    let det = e * g - f * f;

    let n_raw = xt.cross(&xp);
    let n_len = n_raw.norm();
    // For a positive radial graph the cross product already points outward
    // (it equals ρ² sinθ e_r on a sphere); keep a guard for degenerate input.
    let normal = if n_raw.dot(&w) >= 0.0 {
        n_raw / n_len
    } else {
        -n_raw / n_len
    };

    let l = xtt.dot(&normal);
    let m = xtp.dot(&normal);
    let n = xpp.dot(&normal);

    let mean_curvature = -(e * n - 2.0 * f * m + g * l) / det;
    let gauss_curvature = (l * n - m * m) / det;

    SurfacePoint {
        position: domain.star_center() + rho * w,
        normal,
        area_element: n_len,
        mean_curvature,
        gauss_curvature,
    }
}

/// Minimum of the boundary mean curvature over a dense angular sample;
/// used to check mean-convexity before synthesizing minimal factors.
pub fn min_mean_curvature(domain: &ImplicitDomain, n_theta: usize, n_phi: usize) -> f64 {
    let mut min_h = f64::INFINITY;
    for j in 0..n_theta {
        let theta = (j as f64 + 0.5) * std::f64::consts::PI / n_theta as f64;
        for k in 0..n_phi {
            let phi = k as f64 * 2.0 * std::f64::consts::PI / n_phi as f64;
            min_h = min_h.min(surface_point(domain, theta, phi).mean_curvature);
        }
    }
    min_h
}

/// Total boundary area by Gauss quadrature of the parametric area element
/// (the `sin θ` factor of the measure is divided back out, since
/// `area_element` already carries the full `√(EG − F²)`).
pub fn boundary_area(domain: &ImplicitDomain, n_theta: usize, n_phi: usize) -> f64 {
    let rule = crate::quad::SphereRule::gauss(n_theta, n_phi);
    rule.integrate(|theta, phi| surface_point(domain, theta, phi).area_element / theta.sin())
}
