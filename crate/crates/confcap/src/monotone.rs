//! Surface quantities measured along the level sets of the potential.
//!
//! For each extracted level surface the module evaluates the gradient and
//! Hessian of the potential (and the conformal factor, when the scenario
//! carries one) at the mesh vertices, and integrates the quantities the
//! inequality verdicts are built from: the curvature integral
//! `U(t) = ∮ H_g |∇^g u| da_g`, its algebraic companion
//! `Q(t) = 8π(e^t + 2 − e^{−t}) − (e^t + 1)² e^{−t} U(t)`, metric and
//! euclidean areas, Hawking mass, the roundness integral `∮|Å|² da`, and
//! the Gauss curvature total.
//!
//! `U` is computed twice — once literally in conformal quantities and once
//! in the euclidean form `∮ (H + 4 f_ν / f)|∇u| da` — and the difference is
//! recorded; the two agree analytically, so the residual is a consistency
//! meter on the conformal bookkeeping.  Mean curvature likewise comes from
//! two routes: the divergence form `(Δu − ν·∇²u·ν)/|∇u|` and the identity
//! `−2(ν·∇²u·ν)/|∇u|` that exact 3-harmonic functions satisfy; their gap
//! measures how far the discrete solution is from 3-harmonicity on the
//! surface.
//!
//! Vertices where `|∇u|` falls under `10⁻³ ×` its median on the surface are
//! masked out of curvature-bearing integrands; a sample with more than 5%
//! of its area masked is flagged and carries no verdict weight.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use crate::domain::dir_angles;
use crate::error::{Error, Result};
use crate::grid::{AnnularGrid, FieldInterp};
use crate::levelset::{extract_level_surface, LevelSurface};
use crate::par;
use crate::parametric::surface_point;

/// Tolerance on drops of `Q` between consecutive samples.
pub const TOL_Q: f64 = 0.03 * 16.0 * PI;
/// Tolerance on `U` exceeding the round-model bound `U_s`.
pub const TOL_U: f64 = 0.03 * 8.0 * PI;
/// Tolerance on the finite-difference inequality `U′ + U²/16π ≤ 4π`.
pub const TOL_ODE: f64 = 0.05 * 4.0 * PI;
/// Relative `|∇u|` threshold below which a vertex is masked.
pub const MASK_REL: f64 = 1.0e-3;
/// Masked-area fraction above which a whole sample is flagged.
pub const MASK_MAX_FRACTION: f64 = 0.05;

/// Nodal gradient/Hessian of the potential, plus the conformal factor and
/// its gradient when present, stored per component so they can be sampled
/// anywhere via trilinear interpolation.
pub struct VolumeFields {
    grad: [Vec<f64>; 3],
    hess: [Vec<f64>; 6],
    factor: Option<FactorFields>,
}

struct FactorFields {
    f: Vec<f64>,
    grad: [Vec<f64>; 3],
}

fn split_vectors(v: &[Vector3<f64>]) -> [Vec<f64>; 3] {
    [
        v.iter().map(|g| g.x).collect(),
        v.iter().map(|g| g.y).collect(),
        v.iter().map(|g| g.z).collect(),
    ]
}

impl VolumeFields {
    pub fn new(grid: &AnnularGrid, u: &[f64], factor: Option<&[f64]>) -> Self {
        let grad = grid.gradient_field(u);
        let hess = grid.hessian_field(&grad);
        let sym = |r: usize, c: usize| -> Vec<f64> {
            hess.iter()
                .map(|m| 0.5 * (m[(r, c)] + m[(c, r)]))
                .collect()
        };
        Self {
            grad: split_vectors(&grad),
            hess: [sym(0, 0), sym(0, 1), sym(0, 2), sym(1, 1), sym(1, 2), sym(2, 2)],
            factor: factor.map(|f| FactorFields {
                f: f.to_vec(),
                grad: split_vectors(&grid.gradient_field(f)),
            }),
        }
    }

    pub fn has_factor(&self) -> bool {
        self.factor.is_some()
    }

    fn node_grad(&self, q: usize) -> Vector3<f64> {
        Vector3::new(self.grad[0][q], self.grad[1][q], self.grad[2][q])
    }

    fn node_factor(&self, q: usize) -> (f64, Vector3<f64>) {
        match &self.factor {
            Some(ff) => (
                ff.f[q],
                Vector3::new(ff.grad[0][q], ff.grad[1][q], ff.grad[2][q]),
            ),
            None => (1.0, Vector3::zeros()),
        }
    }

    fn sampler<'a>(&'a self, grid: &'a AnnularGrid) -> FieldSampler<'a> {
        FieldSampler {
            grad: self.grad.each_ref().map(|c| FieldInterp::new(grid, c)),
            hess: self.hess.each_ref().map(|c| FieldInterp::new(grid, c)),
            factor: self.factor.as_ref().map(|ff| {
                (
                    FieldInterp::new(grid, &ff.f),
                    ff.grad.each_ref().map(|c| FieldInterp::new(grid, c)),
                )
            }),
        }
    }
}

struct FieldSampler<'a> {
    grad: [FieldInterp<'a>; 3],
    hess: [FieldInterp<'a>; 6],
    factor: Option<(FieldInterp<'a>, [FieldInterp<'a>; 3])>,
}

impl FieldSampler<'_> {
    fn at(&self, s: f64, theta: f64, phi: f64) -> PointSample {
        let g = Vector3::new(
            self.grad[0].value(s, theta, phi),
            self.grad[1].value(s, theta, phi),
            self.grad[2].value(s, theta, phi),
        );
        let h: Vec<f64> = self.hess.iter().map(|c| c.value(s, theta, phi)).collect();
        let hess = Matrix3::new(h[0], h[1], h[2], h[1], h[3], h[4], h[2], h[4], h[5]);
        let (f, f_grad) = match &self.factor {
            Some((f, fg)) => (
                f.value(s, theta, phi),
                Vector3::new(
                    fg[0].value(s, theta, phi),
                    fg[1].value(s, theta, phi),
                    fg[2].value(s, theta, phi),
                ),
            ),
            None => (1.0, Vector3::zeros()),
        };
        PointSample { grad: g, hess, f, f_grad }
    }
}

struct PointSample {
    grad: Vector3<f64>,
    hess: Matrix3<f64>,
    f: f64,
    f_grad: Vector3<f64>,
}

/// Adjugate (transposed cofactor matrix) of a 3×3 matrix.
fn adjugate(m: &Matrix3<f64>) -> Matrix3<f64> {
    let c00 = m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)];
    let c01 = -(m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)]);
    let c02 = m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)];
    let c10 = -(m[(0, 1)] * m[(2, 2)] - m[(0, 2)] * m[(2, 1)]);
    let c11 = m[(0, 0)] * m[(2, 2)] - m[(0, 2)] * m[(2, 0)];
    let c12 = -(m[(0, 0)] * m[(2, 1)] - m[(0, 1)] * m[(2, 0)]);
    let c20 = m[(0, 1)] * m[(1, 2)] - m[(0, 2)] * m[(1, 1)];
    let c21 = -(m[(0, 0)] * m[(1, 2)] - m[(0, 2)] * m[(1, 0)]);
    let c22 = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    Matrix3::new(c00, c10, c20, c01, c11, c21, c02, c12, c22)
}

/// Pointwise surface quantities derived from the sampled fields.
#[derive(Clone, Copy, Default)]
struct VertexQuantities {
    grad_norm: f64,
    /// Mean curvature, divergence form `(Δu − ν·∇²u·ν)/|∇u|`.
    h_div: f64,
    /// Mean curvature via the 3-harmonic identity `−2(ν·∇²u·ν)/|∇u|`.
    h_identity: f64,
    gauss: f64,
    f: f64,
    f_nu: f64,
}

fn vertex_quantities(p: &PointSample) -> VertexQuantities {
    let gn = p.grad.norm();
    if gn == 0.0 {
        // Critical point on the surface; masked by construction.
        return VertexQuantities { f: p.f, ..Default::default() };
    }
    let nu = p.grad / gn;
    let lap = p.hess.trace();
    let nhn = (p.hess * nu).dot(&nu);
    VertexQuantities {
        grad_norm: gn,
        h_div: (lap - nhn) / gn,
        h_identity: -2.0 * nhn / gn,
        gauss: (adjugate(&p.hess) * nu).dot(&nu) / (gn * gn),
        f: p.f,
        f_nu: p.f_grad.dot(&nu),
    }
}

/// Integrated quantities of one level surface.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct LevelSample {
    pub t: f64,
    /// `U(t) = ∮ H_g |∇^g u| da_g`, computed in conformal quantities.
    pub u_value: f64,
    /// `Q(t)` from [`compute_q`].
    pub q_value: f64,
    pub area_euc: f64,
    pub area_g: f64,
    pub hawking_mass: f64,
    /// Roundness integral `∮ |Å_g|² da_g`; conformally invariant, so it is
    /// evaluated in euclidean quantities as `∮ (H²/2 − 2K) da`.
    pub ring_integral: f64,
    /// `∮ K da`; 4π on anything sphere-like (Gauss–Bonnet).
    pub gauss_integral: f64,
    /// `∮ |∇u|² da`; 4π on exact solutions at every regular level.
    pub flux: f64,
    /// `|U_conformal − U_euclidean|`; rounding-level when the conformal
    /// bookkeeping is right.
    pub conformal_residual: f64,
    /// Area-relative gap between the two mean-curvature routes.
    pub h_route_gap: f64,
    pub masked_fraction: f64,
    pub component_count: usize,
    pub flagged: bool,
}

/// Measure one extracted level surface.
pub fn measure_level(
    grid: &AnnularGrid,
    fields: &VolumeFields,
    surf: &LevelSurface,
) -> LevelSample {
    let sampler = fields.sampler(grid);
    let n = surf.positions.len();
    let q: Vec<VertexQuantities> = par::map_chunks(n, 512, |range| {
        range
            .map(|v| {
                let (s, dir) = surf.logical[v];
                let (theta, phi) = dir_angles(&dir);
                vertex_quantities(&sampler.at(s, theta, phi))
            })
            .collect()
    });

    let mut norms: Vec<f64> = q.iter().map(|x| x.grad_norm).collect();
    norms.sort_by(f64::total_cmp);
    let threshold = MASK_REL * norms[n / 2];
    let live: Vec<bool> = q.iter().map(|x| x.grad_norm > threshold).collect();

    let masked_integrand = |f: &dyn Fn(&VertexQuantities) -> f64| -> Vec<f64> {
        q.iter()
            .zip(&live)
            .map(|(x, &ok)| if ok { f(x) } else { 0.0 })
            .collect()
    };

    let u_euclidean = surf.integrate(&masked_integrand(&|x| {
        (x.h_div + 4.0 * x.f_nu / x.f) * x.grad_norm
    }));
    let u_conformal = surf.integrate(&masked_integrand(&|x| {
        let inv2 = 1.0 / (x.f * x.f);
        let h_g = inv2 * (x.h_div + 4.0 * x.f_nu / x.f);
        let grad_g = inv2 * x.grad_norm;
        let da_g = (x.f * x.f) * (x.f * x.f);
        h_g * grad_g * da_g
    }));
    let hawking_int = surf.integrate(&masked_integrand(&|x| {
        let hg = x.h_div + 4.0 * x.f_nu / x.f;
        hg * hg
    }));
    let ring_integral = surf.integrate(&masked_integrand(&|x| {
        0.5 * x.h_div * x.h_div - 2.0 * x.gauss
    }));
    let gauss_integral = surf.integrate(&masked_integrand(&|x| x.gauss));
    let h_gap = surf.integrate(&masked_integrand(&|x| (x.h_div - x.h_identity).abs()));

    let area_euc = surf.area();
    let area_g = surf.integrate(&q.iter().map(|x| x.f.powi(4)).collect::<Vec<_>>());
    let flux = surf.integrate(&q.iter().map(|x| x.grad_norm * x.grad_norm).collect::<Vec<_>>());
    let masked_area = surf.integrate(
        &live.iter().map(|&ok| if ok { 0.0 } else { 1.0 }).collect::<Vec<_>>(),
    );

    let masked_fraction = masked_area / area_euc;
    finish_sample(
        surf.level,
        u_conformal,
        u_euclidean,
        area_euc,
        area_g,
        hawking_int,
        ring_integral,
        gauss_integral,
        flux,
        h_gap / area_euc,
        masked_fraction,
        surf.component_count(),
    )
}

/// Pointwise scalars attached to one surface vertex, for dumps.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct VertexProbe {
    pub grad_norm: f64,
    pub mean_curvature: f64,
    pub factor: f64,
}

/// Sample `|∇u|`, euclidean mean curvature, and the conformal factor at each
/// vertex of an extracted surface, in vertex order.
pub fn vertex_probe(
    grid: &AnnularGrid,
    fields: &VolumeFields,
    surf: &LevelSurface,
) -> Vec<VertexProbe> {
    let sampler = fields.sampler(grid);
    par::map_chunks(surf.positions.len(), 512, |range| {
        range
            .map(|v| {
                let (s, dir) = surf.logical[v];
                let (theta, phi) = dir_angles(&dir);
                let q = vertex_quantities(&sampler.at(s, theta, phi));
                VertexProbe {
                    grad_norm: q.grad_norm,
                    mean_curvature: q.h_div,
                    factor: q.f,
                }
            })
            .collect()
    })
}

#[allow(clippy::too_many_arguments)]
fn finish_sample(
    t: f64,
    u_conformal: f64,
    u_euclidean: f64,
    area_euc: f64,
    area_g: f64,
    hawking_int: f64,
    ring_integral: f64,
    gauss_integral: f64,
    flux: f64,
    h_route_gap: f64,
    masked_fraction: f64,
    component_count: usize,
) -> LevelSample {
    LevelSample {
        t,
        u_value: u_conformal,
        q_value: compute_q(t, u_conformal),
        area_euc,
        area_g,
        hawking_mass: (area_g / (16.0 * PI)).sqrt() * (1.0 - hawking_int / (16.0 * PI)),
        ring_integral,
        gauss_integral,
        flux,
        conformal_residual: (u_conformal - u_euclidean).abs(),
        h_route_gap,
        masked_fraction,
        component_count,
        flagged: masked_fraction > MASK_MAX_FRACTION,
    }
}

/// Measure the domain boundary itself — the `t = 0` sample.  The potential
/// vanishes there exactly, so extraction would degenerate; instead the
/// boundary is the grid's `s = 0` face, with curvature taken from the
/// parametric surface geometry and the remaining fields read at the nodes.
pub fn boundary_sample(grid: &AnnularGrid, fields: &VolumeFields) -> LevelSample {
    let dom = grid.domain();
    let (_, n_t, n_p) = grid.dims();
    let (_, h_t, h_p) = grid.spacing();

    struct Entry {
        w: f64,
        grad_norm: f64,
        h: f64,
        gauss: f64,
        tracefree: f64,
        f: f64,
        f_nu: f64,
    }
    let mut entries = Vec::with_capacity(n_t * n_p);
    for j in 0..n_t {
        for k in 0..n_p {
            let q = grid.idx(0, j, k);
            let sp = surface_point(dom, grid.theta_at(j), grid.phi_at(k));
            let (f, f_grad) = fields.node_factor(q);
            entries.push(Entry {
                w: sp.area_element * h_t * h_p,
                grad_norm: fields.node_grad(q).norm(),
                h: sp.mean_curvature,
                gauss: sp.gauss_curvature,
                tracefree: sp.tracefree_form_norm_sq(),
                f,
                f_nu: f_grad.dot(&sp.normal),
            });
        }
    }

    let mut norms: Vec<f64> = entries.iter().map(|e| e.grad_norm).collect();
    norms.sort_by(f64::total_cmp);
    let threshold = MASK_REL * norms[norms.len() / 2];

    let mut area_euc = 0.0;
    let mut area_g = 0.0;
    let mut flux = 0.0;
    let mut masked_area = 0.0;
    let mut u_euclidean = 0.0;
    let mut u_conformal = 0.0;
    let mut hawking_int = 0.0;
    let mut ring_integral = 0.0;
    let mut gauss_integral = 0.0;
    for e in &entries {
        area_euc += e.w;
        area_g += e.f.powi(4) * e.w;
        flux += e.grad_norm * e.grad_norm * e.w;
        if e.grad_norm <= threshold {
            masked_area += e.w;
            continue;
        }
        let hg = e.h + 4.0 * e.f_nu / e.f;
        u_euclidean += hg * e.grad_norm * e.w;
        let inv2 = 1.0 / (e.f * e.f);
        u_conformal += (inv2 * hg) * (inv2 * e.grad_norm) * (e.f * e.f) * (e.f * e.f) * e.w;
        hawking_int += hg * hg * e.w;
        ring_integral += e.tracefree * e.w;
        gauss_integral += e.gauss * e.w;
    }

    finish_sample(
        0.0,
        u_conformal,
        u_euclidean,
        area_euc,
        area_g,
        hawking_int,
        ring_integral,
        gauss_integral,
        flux,
        0.0,
        masked_area / area_euc,
        1,
    )
}

/// How the level sweep is sampled.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SeriesConfig {
    pub n_levels: usize,
    /// First level value.
    pub t_min: f64,
    /// Last level as a fraction of `max u` on the grid.
    pub t_max_fraction: f64,
    /// Mesh refinement rounds per surface.
    pub subdivisions: usize,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        Self {
            n_levels: 24,
            t_min: 0.05,
            t_max_fraction: 0.85,
            subdivisions: 2,
        }
    }
}

/// Extract and measure the whole level series (the `t = 0` boundary sample
/// is *not* included; prepend [`boundary_sample`] for the full sweep).
pub fn measure_series(
    grid: &AnnularGrid,
    u: &[f64],
    fields: &VolumeFields,
    cfg: &SeriesConfig,
) -> Result<Vec<LevelSample>> {
    let u_max = u.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let t_hi = cfg.t_max_fraction * u_max;
    if cfg.n_levels < 2 || !(t_hi > cfg.t_min) || cfg.t_min <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "level sweep [{:.3}, {:.3}] with {} levels is unusable",
            cfg.t_min, t_hi, cfg.n_levels
        )));
    }
    let mut samples = Vec::with_capacity(cfg.n_levels);
    for i in 0..cfg.n_levels {
        let t = cfg.t_min + (t_hi - cfg.t_min) * i as f64 / (cfg.n_levels - 1) as f64;
        let surf = extract_level_surface(grid, u, t, cfg.subdivisions)?;
        samples.push(measure_level(grid, fields, &surf));
    }
    Ok(samples)
}

/// `Q(t)` from `t` and `U(t)`.
pub fn compute_q(t: f64, u_value: f64) -> f64 {
    let et = t.exp();
    8.0 * PI * (et + 2.0 - 1.0 / et) - (et + 1.0) * (et + 1.0) / et * u_value
}

/// Invert [`compute_q`]: the `U` that produces the given `Q` at `t`.
pub fn u_from_q(t: f64, q_value: f64) -> f64 {
    let et = t.exp();
    (8.0 * PI * (et + 2.0 - 1.0 / et) - q_value) * et / ((et + 1.0) * (et + 1.0))
}

/// The round-model curve `U_s(t) = 8π (e^t − 1)/(e^t + 1)`; level-set `U`
/// of the capped round metric, independent of its mass.
pub fn schwarzschild_model_u(t: f64) -> f64 {
    let et = t.exp();
    8.0 * PI * (et - 1.0) / (et + 1.0)
}

/// Verdicts over a measured series (ordered by `t`, boundary sample first
/// when present).  Flagged samples carry no weight.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct MonotoneReport {
    pub unflagged: usize,
    /// `Q` never drops by more than [`TOL_Q`] between consecutive samples.
    pub q_monotone: bool,
    pub worst_q_drop: f64,
    /// `U ≤ U_s + TOL_U` everywhere.
    pub u_bound: bool,
    pub worst_u_excess: f64,
    /// Finite-difference `U′ + U²/16π ≤ 4π + TOL_ODE` everywhere.
    pub ode_bound: bool,
    pub worst_ode_excess: f64,
}

pub fn monotonicity_report(samples: &[LevelSample]) -> Result<MonotoneReport> {
    let live: Vec<&LevelSample> = samples.iter().filter(|s| !s.flagged).collect();
    if live.len() < 5 {
        return Err(Error::InsufficientSamples(format!(
            "{} unflagged samples, need at least 5",
            live.len()
        )));
    }

    let mut worst_q_drop = f64::NEG_INFINITY;
    for w in live.windows(2) {
        worst_q_drop = worst_q_drop.max(w[0].q_value - w[1].q_value);
    }

    let mut worst_u_excess = f64::NEG_INFINITY;
    for s in &live {
        worst_u_excess = worst_u_excess.max(s.u_value - schwarzschild_model_u(s.t));
    }

    let mut worst_ode_excess = f64::NEG_INFINITY;
    for i in 0..live.len() {
        let (a, b) = match i {
            0 => (0, 1),
            i if i == live.len() - 1 => (i - 1, i),
            i => (i - 1, i + 1),
        };
        let du = (live[b].u_value - live[a].u_value) / (live[b].t - live[a].t);
        let u = live[i].u_value;
        worst_ode_excess = worst_ode_excess.max(du + u * u / (16.0 * PI) - 4.0 * PI);
    }

    Ok(MonotoneReport {
        unflagged: live.len(),
        q_monotone: worst_q_drop <= TOL_Q,
        worst_q_drop,
        u_bound: worst_u_excess <= TOL_U,
        worst_u_excess,
        ode_bound: worst_ode_excess <= TOL_ODE,
        worst_ode_excess,
    })
}

/// Weighted roundness excess `∫ (e^τ+1)² e^{−τ} ∮|Å|² da dτ` over
/// `[0, s_max]`, by the trapezoid rule on unflagged samples.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct StabilityExcess {
    pub value: f64,
    /// Set when the unflagged samples leave a gap longer than half the
    /// requested window.
    pub low_confidence: bool,
}

pub fn stability_excess(samples: &[LevelSample], s_max: f64) -> StabilityExcess {
    if s_max <= 0.0 {
        return StabilityExcess { value: 0.0, low_confidence: false };
    }
    let live: Vec<&LevelSample> = samples
        .iter()
        .filter(|s| !s.flagged && s.t <= s_max)
        .collect();
    if live.len() < 2 {
        return StabilityExcess { value: 0.0, low_confidence: true };
    }
    let weight = |s: &LevelSample| {
        let et = s.t.exp();
        (et + 1.0) * (et + 1.0) / et * s.ring_integral
    };
    let mut value = 0.0;
    let mut widest_gap = live[0].t;
    for w in live.windows(2) {
        let dt = w[1].t - w[0].t;
        value += 0.5 * (weight(w[0]) + weight(w[1])) * dt;
        widest_gap = widest_gap.max(dt);
    }
    widest_gap = widest_gap.max(s_max - live[live.len() - 1].t);
    StabilityExcess {
        value,
        low_confidence: widest_gap > 0.5 * s_max,
    }
}
