//! Fraenkel asymmetry: the volume of the symmetric difference between the
//! body and the best volume-matched ball, relative to the body's volume.
//!
//! The volumes are measured on a voxel lattice over the body's bounding
//! box with linearly anti-aliased occupancies, so two identical sets give
//! exactly zero and the interface error is second order in the voxel size.
//! The body's occupancy is precomputed once; trying a ball center only
//! recomputes the ball side, which keeps the center search cheap.  The
//! search itself is a coarse lattice around the star center followed by
//! cyclic per-axis golden-section refinement — deterministic by
//! construction.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::domain::{dir_angles, ImplicitDomain};
use crate::par;
use crate::quad::SphereRule;

/// Voxel resolution and center-search effort.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct AsymmetryConfig {
    /// Voxels per axis of the occupancy lattice.
    pub n_voxels: usize,
    /// Coarse center lattice points per axis.
    pub coarse_n: usize,
    /// Half-width of the coarse lattice as a fraction of the matched-ball
    /// radius.
    pub coarse_span: f64,
    /// Rounds of cyclic golden-section refinement over the three axes.
    pub golden_cycles: usize,
    /// Golden-section iterations per axis and round.
    pub golden_iters: usize,
}

impl Default for AsymmetryConfig {
    fn default() -> Self {
        Self {
            n_voxels: 128,
            coarse_n: 7,
            coarse_span: 0.25,
            golden_cycles: 2,
            golden_iters: 16,
        }
    }
}

/// Result of the asymmetry minimization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsymmetryResult {
    pub alpha: f64,
    /// Center of the best volume-matched ball.
    pub center: [f64; 3],
    /// Radius of that ball.
    pub ball_radius: f64,
    /// Body volume used for the normalization.
    pub volume: f64,
}

/// Precomputed smoothed occupancy of the body on its voxel lattice.
struct VoxelBody {
    origin: Vector3<f64>,
    h: f64,
    n: usize,
    occ: Vec<f64>,
}

impl VoxelBody {
    fn build(domain: &ImplicitDomain, n: usize) -> Self {
        let c0 = domain.star_center();
        let rb = domain.bounding_radius();
        let h = 2.0 * rb / n as f64;
        let origin = c0 - Vector3::repeat(rb - 0.5 * h);

        let occ = par::map_chunks(n * n * n, 4096, |range| {
            range
                .map(|v| {
                    let p = Self::pos_of(origin, h, n, v);
                    let d = p - c0;
                    let r = d.norm();
                    if r == 0.0 {
                        return 1.0;
                    }
                    let (theta, phi) = dir_angles(&d);
                    let rho = domain.radius(theta, phi);
                    smooth_step((r - rho) / h)
                })
                .collect()
        });
        Self { origin, h, n, occ }
    }

    #[inline]
    fn pos_of(origin: Vector3<f64>, h: f64, n: usize, v: usize) -> Vector3<f64> {
        let k = v % n;
        let j = (v / n) % n;
        let i = v / (n * n);
        origin + h * Vector3::new(i as f64, j as f64, k as f64)
    }

    /// `|Ω Δ B(center, radius)|` via the anti-aliased occupancies.
    fn symdiff(&self, center: Vector3<f64>, radius: f64) -> f64 {
        let (origin, h, n) = (self.origin, self.h, self.n);
        let occ = &self.occ;
        par::sum(occ.len(), |v| {
            let p = Self::pos_of(origin, h, n, v);
            let ball = smooth_step(((p - center).norm() - radius) / h);
            (occ[v] - ball).abs()
        }) * h * h * h
    }
}

/// Linear anti-aliasing ramp: 1 inside, 0 outside, across one voxel width.
#[inline]
fn smooth_step(t: f64) -> f64 {
    (0.5 - t).clamp(0.0, 1.0)
}

/// Minimize the symmetric difference over ball centers.
pub fn fraenkel_asymmetry(domain: &ImplicitDomain, cfg: &AsymmetryConfig) -> AsymmetryResult {
    let volume = domain.volume();
    let radius = (3.0 * volume / (4.0 * std::f64::consts::PI)).cbrt();
    let body = VoxelBody::build(domain, cfg.n_voxels);

    let c0 = domain.star_center();
    let span = cfg.coarse_span * radius;
    let m = cfg.coarse_n;
    let mut best = (f64::INFINITY, c0);
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                let frac = |t: usize| (2.0 * t as f64 / (m - 1) as f64 - 1.0) * span;
                let center = c0 + Vector3::new(frac(a), frac(b), frac(c));
                let d = body.symdiff(center, radius);
                if d < best.0 {
                    best = (d, center);
                }
            }
        }
    }

    let step = 2.0 * span / (m - 1) as f64;
    let (mut value, mut center) = best;
    for _ in 0..cfg.golden_cycles {
        for axis in 0..3 {
            let eval = |t: f64| {
                let mut c = center;
                c[axis] += t;
                body.symdiff(c, radius)
            };
            let (t, v) = golden_min(eval, -step, step, cfg.golden_iters);
            if v < value {
                value = v;
                center[axis] += t;
            }
        }
    }

    AsymmetryResult {
        alpha: value / volume,
        center: [center.x, center.y, center.z],
        ball_radius: radius,
        volume,
    }
}

/// Golden-section minimum of `f` on `[a, b]`; returns `(argmin, min)`.
fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let inv_phi = 0.5 * (5.0f64.sqrt() - 1.0);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Binary-membership symmetric difference on a voxel lattice: the blunt
/// oracle the smoothed estimator is checked against.
pub fn binary_symdiff(
    domain: &ImplicitDomain,
    center: Vector3<f64>,
    radius: f64,
    n: usize,
) -> f64 {
    let c0 = domain.star_center();
    let rb = domain.bounding_radius().max(radius + (center - c0).norm());
    let h = 2.0 * rb / n as f64;
    let origin = c0 - Vector3::repeat(rb - 0.5 * h);
    par::sum(n * n * n, |v| {
        let p = VoxelBody::pos_of(origin, h, n, v);
        let in_body = domain.implicit_value(&p) < 0.0;
        let in_ball = (p - center).norm() < radius;
        if in_body != in_ball {
            1.0
        } else {
            0.0
        }
    }) * h * h * h
}

/// Symmetric difference against a concentric ball by exact radial overlap:
/// `(1/3) ∮ |ρ³ − R³| dω`.  Valid because both sets are star-shaped about
/// the same center.
pub fn radial_symdiff(domain: &ImplicitDomain, radius: f64, rule: &SphereRule) -> f64 {
    let r3 = radius * radius * radius;
    rule.integrate(|theta, phi| {
        let rho = domain.radius(theta, phi);
        (rho * rho * rho - r3).abs() / 3.0
    })
}
