//! Symmetric stencil for the conductivity-frozen divergence-form equation.
//!
//! Each linearized step of the potential solver freezes the conductivity
//! σ = (|∇u|² + ε²)^{1/2} and solves div(σ ∇u) = 0 in grid coordinates.  The
//! discrete operator is constructed as the exact gradient of a discrete
//! quadratic energy, so symmetry and consistency across the pole
//! identifications hold by construction: `apply` is a pure gather of every
//! energy term that references the target node.

use crate::grid::{AnnularGrid, Axis};
use crate::par;

const MISSING: u32 = u32::MAX;

/// Geometry-dependent part of the frozen operator: neighbor tables and
/// metric prefactors that stay fixed while the conductivity is updated.
pub(crate) struct Stencil {
    n_nodes: usize,
    /// Neighbor node per slot `[s−, s+, θ−, θ+, φ−, φ+]`; `MISSING` marks the
    /// absent radial neighbors on the two Dirichlet shells.
    nbr: Vec<[u32; 6]>,
    /// `A_dd · h_vol / h_d²` per node, for d = s, θ, φ.
    pre_ax: [Vec<f64>; 3],
    /// `w · A_{se} · h_vol / (2 h_s h_e)` per node, for e = θ, φ, where the
    /// trapezoidal weight w is ½ on the two radial end shells.
    pre_cr: [Vec<f64>; 2],
}

impl Stencil {
    pub(crate) fn new(grid: &AnnularGrid) -> Self {
        let n = grid.n_nodes();
        let (n_s, _, _) = grid.dims();
        let (h_s, h_t, h_p) = grid.spacing();
        let hvol = h_s * h_t * h_p;

        let mut nbr = vec![[MISSING; 6]; n];
        par::fill(&mut nbr, |q| {
            let mut row = [MISSING; 6];
            for (a, &axis) in Axis::ALL.iter().enumerate() {
                for (slot, step) in [(2 * a, -1i8), (2 * a + 1, 1)] {
                    if let Some(m) = grid.neighbor(q, axis, step) {
                        row[slot] = m as u32;
                    }
                }
            }
            row
        });

        let ax_f = [hvol / (h_s * h_s), hvol / (h_t * h_t), hvol / (h_p * h_p)];
        let cr_f = [hvol / (2.0 * h_s * h_t), hvol / (2.0 * h_s * h_p)];
        let mut pre_ax = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        let mut pre_cr = [vec![0.0; n], vec![0.0; n]];
        for q in 0..n {
            let [ss, st, sp, tt, pp] = grid.coeffs(q);
            let (i, _, _) = grid.node_coords(q);
            let w = if i == 0 || i == n_s - 1 { 0.5 } else { 1.0 };
            pre_ax[0][q] = ss * ax_f[0];
            pre_ax[1][q] = tt * ax_f[1];
            pre_ax[2][q] = pp * ax_f[2];
            pre_cr[0][q] = w * st * cr_f[0];
            pre_cr[1][q] = w * sp * cr_f[1];
        }

        Self {
            n_nodes: n,
            nbr,
            pre_ax,
            pre_cr,
        }
    }

    /// Node-owned share of the unit-conductivity quadratic energy: the terms
    /// whose conductivity slot is node `q`.  Summed against a conductivity
    /// field this reproduces [`FrozenOperator::energy`], and the gradient of
    /// that sum (conductivity frozen) is exactly [`FrozenOperator::apply`] —
    /// which is what makes the Picard energy test and the operator agree to
    /// roundoff rather than to discretization error.
    pub(crate) fn local_quadratic(&self, u: &[f64], out: &mut [f64]) {
        let nbr = &self.nbr;
        par::fill(out, |q| {
            let nb = &nbr[q];
            let uq = u[q];
            let mut t = 0.0;
            for d in 0..3 {
                for s in 0..2 {
                    let m = nb[2 * d + s];
                    if m != MISSING {
                        let du = u[m as usize] - uq;
                        t += 0.25 * self.pre_ax[d][q] * du * du;
                    }
                }
            }
            for e in 0..2 {
                let slot_e = 2 * e + 2;
                for s in 0..2 {
                    let ms = nb[s];
                    if ms != MISSING {
                        let me = nb[slot_e + s] as usize;
                        t += self.pre_cr[e][q] * (u[ms as usize] - uq) * (u[me] - uq);
                    }
                }
            }
            t
        });
    }
}

/// The frozen-conductivity operator: stencil prefactors scaled by a nodal
/// conductivity field.  Applying it yields the gradient of the discrete
/// energy ½ Σ σ (A_dd u_d u_d + 2 A_{se} u_s u_e) per cell volume.
pub(crate) struct FrozenOperator<'s> {
    stencil: &'s Stencil,
    ax: [Vec<f64>; 3],
    cr: [Vec<f64>; 2],
}

impl<'s> FrozenOperator<'s> {
    pub(crate) fn new(stencil: &'s Stencil, sigma: &[f64]) -> Self {
        debug_assert_eq!(sigma.len(), stencil.n_nodes);
        let scale = |pre: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; pre.len()];
            par::fill(&mut out, |q| sigma[q] * pre[q]);
            out
        };
        Self {
            stencil,
            ax: [
                scale(&stencil.pre_ax[0]),
                scale(&stencil.pre_ax[1]),
                scale(&stencil.pre_ax[2]),
            ],
            cr: [scale(&stencil.pre_cr[0]), scale(&stencil.pre_cr[1])],
        }
    }

    pub(crate) fn n_nodes(&self) -> usize {
        self.stencil.n_nodes
    }

    /// `out = A u`, computed as a pure gather so it parallelizes without
    /// write contention and is deterministic for any thread count.
    pub(crate) fn apply(&self, u: &[f64], out: &mut [f64]) {
        par::fill(out, |q| self.row(q, u));
    }

    #[inline]
    fn row(&self, q: usize, u: &[f64]) -> f64 {
        let nbr = &self.stencil.nbr;
        let nb = &nbr[q];
        let uq = u[q];
        let mut acc = 0.0;

        for d in 0..3 {
            let bq = self.ax[d][q];
            for s in 0..2 {
                let m = nb[2 * d + s];
                if m != MISSING {
                    let m = m as usize;
                    acc += 0.5 * (bq + self.ax[d][m]) * (uq - u[m]);
                }
            }
        }

        for e in 0..2 {
            let slot_e = 2 * e + 2;
            let gq = self.cr[e][q];
            for s in 0..2 {
                // Energy terms centered here, and the ones centered at the
                // radial neighbor (whose opposite-sign term references us).
                let ms = nb[s];
                if ms != MISSING {
                    let ms = ms as usize;
                    let me = nb[slot_e + s] as usize;
                    acc += gq * (2.0 * uq - u[ms] - u[me]);
                    let pe = nbr[ms][slot_e + (1 - s)] as usize;
                    acc += self.cr[e][ms] * (u[pe] - u[ms]);
                }
                // Terms centered at the angular neighbor.  Across a pole the
                // slot signs are not mutual, so match by reverse lookup.
                let p = nb[slot_e + s] as usize;
                for sig in 0..2 {
                    let ps = nbr[p][sig];
                    if ps != MISSING && nbr[p][slot_e + sig] == q as u32 {
                        acc += self.cr[e][p] * (u[ps as usize] - u[p]);
                    }
                }
            }
        }
        acc
    }

    /// Diagonal of the operator, for Jacobi preconditioning.
    pub(crate) fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.stencil.n_nodes];
        par::fill(&mut d, |q| {
            let nb = &self.stencil.nbr[q];
            let mut acc = 0.0;
            for a in 0..3 {
                for s in 0..2 {
                    let m = nb[2 * a + s];
                    if m != MISSING {
                        acc += 0.5 * (self.ax[a][q] + self.ax[a][m as usize]);
                    }
                }
            }
            for e in 0..2 {
                for s in 0..2 {
                    if nb[s] != MISSING {
                        acc += 2.0 * self.cr[e][q];
                    }
                }
            }
            acc
        });
        d
    }

    /// The discrete quadratic energy ½ uᵀA u, evaluated from the same terms
    /// `apply` differentiates.  Used by tests to pin the operator to its
    /// variational form.
    #[cfg(test)]
    pub(crate) fn energy(&self, u: &[f64]) -> f64 {
        let nbr = &self.stencil.nbr;
        par::sum(self.stencil.n_nodes, |q| {
            let nb = &nbr[q];
            let uq = u[q];
            let mut e = 0.0;
            for d in 0..3 {
                for s in 0..2 {
                    let m = nb[2 * d + s];
                    if m != MISSING {
                        let m = m as usize;
                        let du = u[m] - uq;
                        e += 0.125 * (self.ax[d][q] + self.ax[d][m]) * du * du;
                    }
                }
            }
            for pair in 0..2 {
                let slot_e = 2 * pair + 2;
                for s in 0..2 {
                    let ms = nb[s];
                    if ms != MISSING {
                        let me = nb[slot_e + s] as usize;
                        e += self.cr[pair][q] * (u[ms as usize] - uq) * (u[me] - uq);
                    }
                }
            }
            e
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{make_star_domain, HarmonicGraph, RadialGraph};
    use crate::grid::GridConfig;
    use nalgebra::Vector3;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn bumpy_graph() -> HarmonicGraph {
        let mut coeffs = vec![0.0; 16];
        coeffs[0] = (4.0 * std::f64::consts::PI).sqrt();
        coeffs[7] = 0.12;
        coeffs[10] = 0.05;
        HarmonicGraph::new(3, coeffs).unwrap()
    }

    fn star_grid() -> AnnularGrid {
        let dom =
            make_star_domain(RadialGraph::Harmonics(bumpy_graph()), Vector3::zeros()).unwrap();
        let cfg = GridConfig {
            n_s: 12,
            n_t: 8,
            n_p: 16,
            r_out_over_bounding: 5.0,
        };
        AnnularGrid::build(&dom, &cfg).unwrap()
    }

    fn wavy_sigma(grid: &AnnularGrid) -> Vec<f64> {
        grid.positions()
            .iter()
            .map(|p| 1.0 + 0.45 * (1.7 * p.x).sin() * (1.3 * p.y).cos() * (0.9 * p.z).sin())
            .collect()
    }

    fn random_field(grid: &AnnularGrid, seed: u64) -> Vec<f64> {
        let mut rng = StdRng::seed_from_u64(seed);
        (0..grid.n_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn apply_is_exact_energy_gradient() {
        let grid = star_grid();
        let stencil = Stencil::new(&grid);
        let op = FrozenOperator::new(&stencil, &wavy_sigma(&grid));
        let u = random_field(&grid, 11);
        let v = random_field(&grid, 23);

        let mut au = vec![0.0; grid.n_nodes()];
        op.apply(&u, &mut au);
        let vau = par::dot(&v, &au);

        let up: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
        let um: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - b).collect();
        let diff = op.energy(&up) - op.energy(&um);
        assert!(
            (diff - 2.0 * vau).abs() <= 1e-10 * diff.abs().max(1.0),
            "gradient identity violated: {diff:.12e} vs {:.12e}",
            2.0 * vau
        );
    }

    #[test]
    fn operator_is_symmetric() {
        let grid = star_grid();
        let stencil = Stencil::new(&grid);
        let op = FrozenOperator::new(&stencil, &wavy_sigma(&grid));
        let u = random_field(&grid, 3);
        let v = random_field(&grid, 5);
        let mut au = vec![0.0; grid.n_nodes()];
        let mut av = vec![0.0; grid.n_nodes()];
        op.apply(&u, &mut au);
        op.apply(&v, &mut av);
        let uav = par::dot(&u, &av);
        let vau = par::dot(&v, &au);
        assert!(
            (uav - vau).abs() <= 1e-12 * uav.abs().max(1.0),
            "asymmetry: {uav:.15e} vs {vau:.15e}"
        );
    }

    #[test]
    fn constants_lie_in_the_kernel() {
        let grid = star_grid();
        let stencil = Stencil::new(&grid);
        let op = FrozenOperator::new(&stencil, &wavy_sigma(&grid));
        let ones = vec![1.0; grid.n_nodes()];
        let mut out = vec![0.0; grid.n_nodes()];
        op.apply(&ones, &mut out);
        let scale = op.diagonal().iter().cloned().fold(0.0f64, f64::max);
        let worst = out.iter().cloned().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(worst <= 1e-12 * scale, "kernel defect {worst:.3e}");
    }

    #[test]
    fn local_quadratic_shares_sum_to_energy() {
        let grid = star_grid();
        let stencil = Stencil::new(&grid);
        let sigma = wavy_sigma(&grid);
        let op = FrozenOperator::new(&stencil, &sigma);
        let u = random_field(&grid, 42);
        let mut t = vec![0.0; grid.n_nodes()];
        stencil.local_quadratic(&u, &mut t);
        let recombined = par::dot(&sigma, &t);
        let direct = op.energy(&u);
        assert!(
            (recombined - direct).abs() <= 1e-12 * direct.abs().max(1.0),
            "share decomposition broken: {recombined:.15e} vs {direct:.15e}"
        );
    }

    #[test]
    fn diagonal_is_positive() {
        let grid = star_grid();
        let stencil = Stencil::new(&grid);
        let op = FrozenOperator::new(&stencil, &wavy_sigma(&grid));
        let diag = op.diagonal();
        let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min > 0.0, "non-positive diagonal entry {min:.3e}");
    }

    #[test]
    fn consistent_with_divergence_form() {
        // For σ ≡ 1 and u = |x|², div(σ ∇u) = 6, so A u ≈ −6 · cell volume.
        let err = |n_s: usize, n_t: usize, n_p: usize| -> f64 {
            let dom =
                make_star_domain(RadialGraph::Harmonics(bumpy_graph()), Vector3::zeros()).unwrap();
            let cfg = GridConfig {
                n_s,
                n_t,
                n_p,
                r_out_over_bounding: 4.0,
            };
            let grid = AnnularGrid::build(&dom, &cfg).unwrap();
            let stencil = Stencil::new(&grid);
            let op = FrozenOperator::new(&stencil, &vec![1.0; grid.n_nodes()]);
            let u: Vec<f64> = grid.positions().iter().map(|p| p.norm_squared()).collect();
            let mut au = vec![0.0; grid.n_nodes()];
            op.apply(&u, &mut au);
            let w = grid.weights();
            let mut num = 0.0;
            let mut den = 0.0;
            for q in 0..grid.n_nodes() {
                let (i, _, _) = grid.node_coords(q);
                if i >= 2 && i + 2 < n_s {
                    let r = au[q] / w[q] + 6.0;
                    num += w[q] * r * r;
                    den += w[q];
                }
            }
            (num / den).sqrt()
        };
        let coarse = err(16, 8, 16);
        let fine = err(32, 16, 32);
        assert!(fine < 0.2, "fine-grid divergence defect {fine:.3e}");
        assert!(
            coarse / fine > 3.0,
            "divergence form not second order: {coarse:.3e} vs {fine:.3e}"
        );
    }
}
