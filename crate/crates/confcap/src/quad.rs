//! Quadrature rules used throughout the crate.
//!
//! Angular integrals over the unit sphere pair Gauss–Legendre nodes in
//! `cos θ` with the uniform rectangle rule in `φ`. The combination is exact
//! for spherical polynomials of high degree (Gauss–Legendre handles
//! polynomial degree `2n−1` in `cos θ`, the rectangle rule handles
//! trigonometric degree `n_φ − 1`), so radial-graph volumes and areas of the
//! supported harmonic families integrate to machine precision.

/// Gauss–Legendre nodes and weights on `[−1, 1]`, ascending in the node.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut out = vec![(0.0, 0.0); n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Standard asymptotic initial guess for the i-th root, then Newton.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out[i] = (-x, w);
        out[n - 1 - i] = (x, w);
    }
    out
}

/// Value and derivative of the Legendre polynomial `P_n` at `x`, via the
/// three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p_prev = 1.0;
    let mut p = x;
    for k in 2..=n {
        let kf = k as f64;
        let p_next = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * p_prev) / kf;
        p_prev = p;
        p = p_next;
    }
    let dp = n as f64 * (x * p - p_prev) / (x * x - 1.0);
    (p, dp)
}

/// Quadrature rule for `∮_{S²} f dω`: nodes `(θ, φ)` with weights that
/// already include the `sin θ dθ dφ` measure.
#[derive(Debug, Clone)]
pub struct SphereRule {
    nodes: Vec<(f64, f64, f64)>,
}

impl SphereRule {
    /// Gauss–Legendre in `cos θ` crossed with the uniform rectangle rule
    /// in `φ`.
    pub fn gauss(n_theta: usize, n_phi: usize) -> Self {
        let gl = gauss_legendre(n_theta);
        let dphi = 2.0 * std::f64::consts::PI / n_phi as f64;
        let mut nodes = Vec::with_capacity(n_theta * n_phi);
        for &(x, w) in &gl {
            let theta = x.clamp(-1.0, 1.0).acos();
            for k in 0..n_phi {
                nodes.push((theta, k as f64 * dphi, w * dphi));
            }
        }
        Self { nodes }
    }

    pub fn nodes(&self) -> &[(f64, f64, f64)] {
        &self.nodes
    }

    pub fn integrate(&self, mut f: impl FnMut(f64, f64) -> f64) -> f64 {
        self.nodes.iter().map(|&(t, p, w)| w * f(t, p)).sum()
    }
}
