//! ε-regularized 3-harmonic exterior potential.
//!
//! Solves `div((|∇u|² + ε²)^{1/2} ∇u) = 0` between the star boundary (u = 0)
//! and the truncation sphere (u = const), by Picard iteration on the frozen
//! conductivity inside an ε-continuation loop: the regularization starts at
//! the scale of the initial gradient and is cut down geometrically, each
//! stage warm-starting from the last.  Steps are damped and backtracked
//! against the regularized 3-Dirichlet energy, which the exact solution
//! minimizes.  The converged potential is rescaled so its conserved flux is
//! 4π, the normalization under which the logarithmic growth has unit
//! coefficient; the regularization scales along with it.

mod linsolve;
mod operator;

pub(crate) use linsolve::{solve_masked, LinearOp};
pub(crate) use operator::{FrozenOperator, Stencil};

use crate::error::{Error, Result};
use crate::grid::AnnularGrid;
use crate::par;

/// Tunables of the nonlinear solve.  The defaults are what every pipeline
/// run uses; tests shrink the grid, not the tolerances.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Picard step fraction before backtracking.
    pub damping: f64,
    /// Stop a stage when the damped update, relative to the outer Dirichlet
    /// value, falls below this.
    pub picard_tol: f64,
    /// Iteration cap per continuation stage.
    pub picard_max_iter: usize,
    /// Relative residual target of the inner linear solves.
    pub cg_tol: f64,
    /// Iteration cap of the inner linear solves.
    pub cg_max_iter: usize,
    /// Geometric factor between consecutive regularization stages.
    pub eps_factor: f64,
    /// Terminal regularization is this value divided by the mean cell size.
    pub eps_terminal_scale: f64,
    /// Rescale the potential so the conserved flux equals 4π.
    pub normalize_flux: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            damping: 0.7,
            picard_tol: 1e-8,
            picard_max_iter: 48,
            cg_tol: 1e-10,
            cg_max_iter: 8000,
            eps_factor: 0.25,
            eps_terminal_scale: 1e-3,
            normalize_flux: true,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "solver damping {} outside (0, 1]",
                self.damping
            )));
        }
        if !(self.eps_factor > 0.0 && self.eps_factor < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "continuation factor {} outside (0, 1)",
                self.eps_factor
            )));
        }
        if self.picard_tol <= 0.0 || self.cg_tol <= 0.0 || self.eps_terminal_scale <= 0.0 {
            return Err(Error::InvalidConfig(
                "solver tolerances must be positive".into(),
            ));
        }
        if self.picard_max_iter == 0 || self.cg_max_iter == 0 {
            return Err(Error::InvalidConfig(
                "solver iteration caps must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// What one continuation stage did, for run reports.
#[derive(Debug, Clone)]
pub struct StageReport {
    pub epsilon: f64,
    pub picard_iterations: usize,
    pub cg_iterations: usize,
    pub energy: f64,
    pub final_change: f64,
}

/// Converged potential together with its normalization data.
#[derive(Debug, Clone)]
pub struct PotentialSolution {
    /// Nodal potential; zero on the body, `outer_value` on the truncation
    /// sphere.
    pub u: Vec<f64>,
    /// Regularization the potential satisfies after the flux rescaling.
    pub epsilon: f64,
    /// Dirichlet value on the truncation sphere after rescaling.
    pub outer_value: f64,
    /// Conserved flux (4π when normalization is on).
    pub flux: f64,
    /// Relative spread of the flux across the sampling band; a discretization
    /// health indicator.
    pub flux_spread: f64,
    pub stages: Vec<StageReport>,
}

/// Flux of the frozen-conductivity operator through the coordinate shell
/// `i`: the conserved quantity of the divergence-form equation.
pub(crate) fn flux_through_shell(
    grid: &AnnularGrid,
    u: &[f64],
    sigma: &[f64],
    i: usize,
) -> f64 {
    let (_, n_t, n_p) = grid.dims();
    let (_, h_t, h_p) = grid.spacing();
    // The θ-sum is a midpoint rule on sinθ·(smooth); exact cell integrals of
    // sinθ differ from sinθ_j·h_t by the constant 2·sin(h_t/2)/h_t, so this
    // factor makes the dominant angular mode integrate exactly.
    let theta_cell = (0.5 * h_t).sin() / (0.5 * h_t);
    par::sum(n_t * n_p, |jk| {
        let q = grid.idx(i, jk / n_p, jk % n_p);
        let (du_s, du_t, du_p) = grid.partials4(u, q);
        let [ss, st, sp, _, _] = grid.coeffs(q);
        sigma[q] * (ss * du_s + st * du_t + sp * du_p)
    }) * h_t * h_p * theta_cell
}

/// Regularized 3-Dirichlet energy `∫ (|∇u|² + ε²)^{3/2} / 3` against the
/// node measure the conductivity is defined with.
fn regularized_energy(measure: &[f64], grad_sq: &[f64], eps: f64) -> f64 {
    let e2 = eps * eps;
    par::sum(grad_sq.len(), |q| {
        let x = grad_sq[q] + e2;
        measure[q] * x * x.sqrt()
    }) / 3.0
}

/// Nodal volume element matched to the stencil's trapezoidal radial ends.
pub(crate) fn node_measure(grid: &AnnularGrid) -> Vec<f64> {
    let (n_s, _, _) = grid.dims();
    let (h_s, h_t, h_p) = grid.spacing();
    let hvol = h_s * h_t * h_p;
    let mut w = vec![0.0; grid.n_nodes()];
    par::fill(&mut w, |q| {
        let (i, _, _) = grid.node_coords(q);
        let [_, _, _, tt, _] = grid.coeffs(q);
        let r = grid.radius_at(q);
        let half = if i == 0 || i == n_s - 1 { 0.5 } else { 1.0 };
        half * r * r * tt * hvol
    });
    w
}

/// Squared-gradient field derived from the stencil's own quadratic terms,
/// so that the frozen operator is the exact gradient of the regularized
/// energy built from it.  Clamped at zero: the node-owned share of the
/// energy can dip negative where the angular stretch is strong.
fn edge_grad_sq(stencil: &Stencil, measure: &[f64], u: &[f64], out: &mut [f64]) {
    stencil.local_quadratic(u, out);
    for (t, &m) in out.iter_mut().zip(measure) {
        *t = (2.0 * *t / m).max(0.0);
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Solve for the exterior potential on a prepared grid.
pub fn solve_potential(grid: &AnnularGrid, cfg: &SolverConfig) -> Result<PotentialSolution> {
    cfg.validate()?;
    let n = grid.n_nodes();
    let (n_s, n_t, n_p) = grid.dims();
    let (h_s, _, _) = grid.spacing();

    let mut v_outer = 0.0;
    for j in 0..n_t {
        for k in 0..n_p {
            v_outer += grid.log_ratio_at(j, k);
        }
    }
    v_outer /= (n_t * n_p) as f64;

    let mut u = vec![0.0; n];
    par::fill(&mut u, |q| {
        let (i, _, _) = grid.node_coords(q);
        v_outer * i as f64 * h_s
    });
    let free: Vec<bool> = (0..n)
        .map(|q| {
            let (i, _, _) = grid.node_coords(q);
            i != 0 && i != n_s - 1
        })
        .collect();

    let stencil = Stencil::new(grid);
    let measure = node_measure(grid);
    let mut grad_sq = vec![0.0; n];
    edge_grad_sq(&stencil, &measure, &u, &mut grad_sq);

    let eps_terminal = cfg.eps_terminal_scale / grid.mean_cell_size();
    let eps_start = grad_sq
        .iter()
        .fold(0.0f64, |m, &g| m.max(g))
        .sqrt()
        .max(eps_terminal);
    let mut schedule = Vec::new();
    let mut eps = eps_start;
    loop {
        schedule.push(eps.max(eps_terminal));
        if eps <= eps_terminal {
            break;
        }
        eps *= cfg.eps_factor;
    }

    let mut stages = Vec::with_capacity(schedule.len());
    let mut sigma = vec![0.0; n];
    let mut au = vec![0.0; n];
    let mut gs_try = vec![0.0; n];
    for &eps in &schedule {
        let eps2 = eps * eps;
        let mut energy = regularized_energy(&measure, &grad_sq, eps);
        let mut cg_total = 0;
        let mut change = f64::INFINITY;
        let mut iterations = 0;
        for it in 0..cfg.picard_max_iter {
            iterations = it + 1;
            par::fill(&mut sigma, |q| (grad_sq[q] + eps2).sqrt());
            let op = FrozenOperator::new(&stencil, &sigma);
            op.apply(&u, &mut au);
            let rhs: Vec<f64> = (0..n).map(|q| if free[q] { -au[q] } else { 0.0 }).collect();
            let (delta, cg_its) =
                linsolve::solve_masked(&op, &free, &rhs, cfg.cg_tol, cfg.cg_max_iter)?;
            cg_total += cg_its;

            let mut step = cfg.damping;
            let mut accepted = false;
            for _ in 0..6 {
                let u_try: Vec<f64> = (0..n).map(|q| u[q] + step * delta[q]).collect();
                edge_grad_sq(&stencil, &measure, &u_try, &mut gs_try);
                let e_try = regularized_energy(&measure, &gs_try, eps);
                if e_try <= energy * (1.0 + 1e-12) {
                    u = u_try;
                    std::mem::swap(&mut grad_sq, &mut gs_try);
                    energy = e_try;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
            change = step * delta.iter().fold(0.0f64, |m, &d| m.max(d.abs())) / v_outer;
            if change < cfg.picard_tol {
                break;
            }
        }
        stages.push(StageReport {
            epsilon: eps,
            picard_iterations: iterations,
            cg_iterations: cg_total,
            energy,
            final_change: change,
        });
    }

    let last = stages.last().expect("schedule is never empty");
    if !(last.final_change <= 10.0 * cfg.picard_tol) {
        return Err(Error::SolverDiverged {
            residual: last.final_change,
            target: cfg.picard_tol,
            iterations: last.picard_iterations,
        });
    }

    let eps_final = *schedule.last().expect("schedule is never empty");
    par::fill(&mut sigma, |q| (grad_sq[q] + eps_final * eps_final).sqrt());
    let band: Vec<usize> = (n_s / 4..(3 * n_s) / 4).collect();
    let mut fluxes: Vec<f64> = band
        .iter()
        .map(|&i| flux_through_shell(grid, &u, &sigma, i))
        .collect();
    let spread_base = fluxes.clone();
    let flux_raw = median(&mut fluxes);
    if !(flux_raw > 0.0) {
        return Err(Error::SolverDiverged {
            residual: flux_raw,
            target: 4.0 * std::f64::consts::PI,
            iterations: last.picard_iterations,
        });
    }
    let spread = spread_base
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &f| {
            (lo.min(f), hi.max(f))
        });
    let flux_spread = (spread.1 - spread.0) / flux_raw;

    let lambda = if cfg.normalize_flux {
        (4.0 * std::f64::consts::PI / flux_raw).sqrt()
    } else {
        1.0
    };
    for v in &mut u {
        *v *= lambda;
    }

    Ok(PotentialSolution {
        u,
        epsilon: lambda * eps_final,
        outer_value: lambda * v_outer,
        flux: lambda * lambda * flux_raw,
        flux_spread,
        stages,
    })
}
