//! Pull-back of the Wasserstein metric along the heat-kernel embedding.
//!
//! For a source `z` and a tangent vector `U` at `z`, the Kantorovich
//! potential `psi_U` solves
//!
//! ```text
//! div_omega(p_t grad psi_U) = -U . grad_z p_t,      int psi_U d omega = 0,
//! ```
//!
//! and the flowed metric is `g_t(U, W) = int <grad psi_U, grad psi_W> p_t d omega`.
//! The equation is discretized in divergence form with vertex weights
//! `q = p_t omega` and edge weights `kappa_ij (W_i + W_j) / 2`, `W = p_t exp(-f) / V`,
//! and solved by a sparse Cholesky factorization whose symbolic part is
//! shared by every source.
//!
//! All integrals against `p_t d omega` are vertex quadratures with weights `q`.
//! Curvature integrands use pointwise gradients and Hessians from the stencils
//! of the manifold; derivatives of `p_t` in `y` are stencil applications to the
//! kernel column, which coincide with termwise differentiation of the
//! spectral expansion.

mod perelman;
mod state;

pub use perelman::{constraint_residual, hamilton_perelman_check, solve_constraint, ConstraintSolution, HamiltonPerelmanReport};
pub use state::SourceState;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use faer::{Mat, Side};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::heat::SpectralHeatOperator;
use crate::manifold::{sym_min_eig, MetricMeasureSpace, SymForm, Tangent};

/// Lower bound on `p_t` relative to its maximum used for weights and logarithms.
pub const KERNEL_FLOOR: f64 = 1e-14;
/// Relative PDE residual accepted from the potential solver.
pub const RESIDUAL_TOL: f64 = 1e-9;

/// Solution of the potential equation for one `(t, z, U)`.
#[derive(Clone, Debug, PartialEq)]
pub struct KantorovichPotential {
    pub t: f64,
    pub z: usize,
    pub u: Tangent,
    pub psi: Vec<f64>,
    /// Relative residual in the `p_t d omega`-weighted L2 norm.
    pub residual: f64,
    /// Number of refinement sweeps after the direct solve.
    pub iterations: usize,
}

/// `g_t` at a vertex in the vertex frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowedMetric {
    pub t: f64,
    pub z: usize,
    pub g: SymForm,
    /// Smallest eigenvalue of `g`, the positivity certificate.
    pub min_eig: f64,
}

/// The three contributions to `d/dt g_t(U, W)` and their sum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetaIntegral {
    /// `-2 int Ric(grad psi_U, grad psi_W) p_t d omega`.
    pub ricci: f64,
    /// `-2 int Hess f(grad psi_U, grad psi_W) p_t d omega`.
    pub hess_f: f64,
    /// `-2 int <Hess psi_U, Hess psi_W> p_t d omega`.
    pub hess_psi: f64,
    pub total: f64,
}

/// Both sides of the integrated weighted Bochner identity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BochnerCheck {
    /// `int (Delta_p psi)^2 p_t d omega`.
    pub lhs: f64,
    /// `int [|Hess psi|^2 + (Ric + Hess f - Hess ln p_t)(grad psi, grad psi)] p_t d omega`.
    pub rhs: f64,
    pub residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Monotonicity {
    pub a: f64,
    /// `-2 int |grad Delta_p psi|^2 p_t d omega`.
    pub da_dt_formula: f64,
    pub da_dt_fd: f64,
}

/// `X_(t,z)` and the Lie derivative of `g_t` along it on the frame basis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct XField {
    pub x: Tangent,
    pub lie: SymForm,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FFunctionals {
    pub t: f64,
    pub f: f64,
    pub f_hat: f64,
    /// `F-hat` with the Bochner-reduced integrand (Hessian and curvature terms).
    pub f_hat_reduced: f64,
    /// `int (R + |grad f|^2) d omega`.
    pub perelman_f: f64,
    /// Source vertices used in the outer quadrature.
    pub sources: usize,
    /// Subsampling level: grid stride or icosphere level.
    pub subsampling: usize,
}

/// Potential solver and curvature quadratures for a fixed `(M, H)`.
pub struct OttoFlow<'a> {
    m: &'a MetricMeasureSpace,
    h: &'a SpectralHeatOperator,
    symbolic: SymbolicLlt<usize>,
    structure: SymbolicSparseColMat<usize>,
    diag_slot: Vec<usize>,
    edge_slot: Vec<usize>,
    hess_f: Vec<SymForm>,
    grad_f: Vec<Tangent>,
}

impl<'a> OttoFlow<'a> {
    pub fn new(m: &'a MetricMeasureSpace, h: &'a SpectralHeatOperator) -> Result<Self> {
        if h.n() != m.n() {
            return Err(Error::InvalidParameter("heat operator does not match the manifold".into()));
        }
        let n = m.n();
        // Lower-triangular CSC: column c holds the diagonal then rows r > c.
        let mut cols: Vec<Vec<(usize, usize)>> = (0..n).map(|c| vec![(c, usize::MAX)]).collect();
        for (e, edge) in m.edges().iter().enumerate() {
            let (lo, hi) = if edge.i < edge.j { (edge.i, edge.j) } else { (edge.j, edge.i) };
            cols[lo].push((hi, e));
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        let mut diag_slot = vec![0; n];
        let mut edge_slot = vec![0; m.edges().len()];
        col_ptr.push(0);
        for (c, col) in cols.iter_mut().enumerate() {
            col.sort_unstable();
            for &(r, e) in col.iter() {
                if r == c {
                    diag_slot[c] = row_idx.len();
                } else {
                    edge_slot[e] = row_idx.len();
                }
                row_idx.push(r);
            }
            col_ptr.push(row_idx.len());
        }
        let structure = SymbolicSparseColMat::new_checked(n, n, col_ptr, None, row_idx);
        let symbolic = SymbolicLlt::try_new(structure.as_ref(), Side::Lower)
            .map_err(|e| Error::SolverFailure(format!("symbolic factorization: {e:?}")))?;
        let hess_f = m.hessian(m.dilaton())?;
        let grad_f = m.gradient(m.dilaton());
        Ok(OttoFlow { m, h, symbolic, structure, diag_slot, edge_slot, hess_f, grad_f })
    }

    pub fn manifold(&self) -> &MetricMeasureSpace {
        self.m
    }

    pub fn heat(&self) -> &SpectralHeatOperator {
        self.h
    }

    pub(crate) fn hess_f(&self) -> &[SymForm] {
        &self.hess_f
    }

    /// Edge weights `kappa_ij (W_i + W_j) / 2` of the operator `Delta_{p_t d omega}`,
    /// where `W = pc * density` and `pc` is the clamped kernel.
    pub(crate) fn kernel_edge_weights(&self, pc: &[f64]) -> Vec<f64> {
        let d = self.m.density();
        self.m
            .edges()
            .iter()
            .map(|e| e.kappa * 0.5 * (pc[e.i] * d[e.i] + pc[e.j] * d[e.j]))
            .collect()
    }

    /// Factorizes the stiffness matrix of `Delta_{p_t d omega}` with a Dirichlet
    /// row and column at `z`.
    pub(crate) fn factorize(&self, a: &[f64], z: usize) -> Result<Llt<usize, f64>> {
        let mut vals = vec![0.0; self.structure.compute_nnz()];
        for (e, (edge, &w)) in self.m.edges().iter().zip(a).enumerate() {
            if edge.i == z || edge.j == z {
                if edge.i != z {
                    vals[self.diag_slot[edge.i]] += w;
                }
                if edge.j != z {
                    vals[self.diag_slot[edge.j]] += w;
                }
                continue;
            }
            vals[self.edge_slot[e]] = -w;
            vals[self.diag_slot[edge.i]] += w;
            vals[self.diag_slot[edge.j]] += w;
        }
        vals[self.diag_slot[z]] = 1.0;
        let mat = SparseColMat::new(self.structure.clone(), vals);
        Llt::try_new_with_symbolic(self.symbolic.clone(), mat.as_ref(), Side::Lower)
            .map_err(|e| Error::SolverFailure(format!("numeric factorization at source {z}: {e:?}")))
    }

    /// Solves `K psi = b` (stiffness of weights `a`) with `psi_z = 0`, refines,
    /// then shifts to zero `omega`-mean. Returns `(psi, residual, sweeps)`,
    /// the residual being relative in the `q`-weighted norm of `b / q`.
    pub(crate) fn solve_with(
        &self,
        llt: &Llt<usize, f64>,
        a: &[f64],
        q: &[f64],
        b: &[f64],
        z: usize,
    ) -> Result<(Vec<f64>, f64, usize)> {
        let n = self.m.n();
        let bnorm = weighted_norm(b, q);
        if bnorm == 0.0 {
            return Ok((vec![0.0; n], 0.0, 0));
        }
        let mut psi = vec![0.0; n];
        let mut r: Vec<f64> = b.to_vec();
        r[z] = 0.0;
        let mut sweeps = 0;
        let mut residual = f64::INFINITY;
        for sweep in 0..6 {
            let rhs = Mat::<f64>::from_fn(n, 1, |i, _| r[i]);
            let d = llt.solve(rhs);
            for i in 0..n {
                psi[i] += d[(i, 0)];
            }
            psi[z] = 0.0;
            let full = self.residual_vector(a, &psi, b);
            residual = weighted_norm(&full, q) / bnorm;
            sweeps = sweep;
            if residual <= 1e-3 * RESIDUAL_TOL {
                break;
            }
            r = full;
            r[z] = 0.0;
        }
        if !residual.is_finite() {
            return Err(Error::SolverFailure(format!("non-finite residual at source {z}")));
        }
        if residual > RESIDUAL_TOL {
            return Err(Error::ResidualTooLarge { residual, tol: RESIDUAL_TOL });
        }
        let mean = self.m.integrate(&psi);
        for v in psi.iter_mut() {
            *v -= mean;
        }
        Ok((psi, residual, sweeps))
    }

    /// `b - K psi` for the full (ungauged) stiffness.
    pub(crate) fn residual_vector(&self, a: &[f64], psi: &[f64], b: &[f64]) -> Vec<f64> {
        let mut r = b.to_vec();
        for (e, w) in self.m.edges().iter().zip(a) {
            let d = w * (psi[e.j] - psi[e.i]);
            r[e.i] += d;
            r[e.j] -= d;
        }
        r
    }

    /// Potential for a single direction `U`.
    pub fn solve_potential(&self, t: f64, z: usize, u: Tangent) -> Result<KantorovichPotential> {
        if !u.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidParameter("non-finite tangent vector".into()));
        }
        self.h.check_time(t)?;
        self.m.check_vertex(z)?;
        let p = self.h.heat_kernel(t, z)?;
        let pc = clamp_kernel(&p);
        let omega = self.m.omega();
        let q: Vec<f64> = pc.iter().zip(omega).map(|(a, b)| a * b).collect();
        let grads = self.h.source_gradient_unchecked(self.m, t, z);
        let mut g: Vec<f64> = (0..self.m.n())
            .map(|i| (0..self.m.dim()).map(|a| u[a] * grads[a][i]).sum())
            .collect();
        crate::heat::project_zero_mean(&mut g, &pc, omega);
        let b: Vec<f64> = g.iter().zip(omega).map(|(a, w)| a * w).collect();
        let a = self.kernel_edge_weights(&pc);
        let llt = self.factorize(&a, z)?;
        let (psi, residual, iterations) = self.solve_with(&llt, &a, &q, &b, z)?;
        Ok(KantorovichPotential { t, z, u, psi, residual, iterations })
    }

    /// Potentials for the frame directions with every derived quadrature field.
    pub fn source_state(&self, t: f64, z: usize) -> Result<SourceState<'_>> {
        self.h.check_time(t)?;
        self.m.check_vertex(z)?;
        SourceState::new(self, t, z, true)
    }

    pub(crate) fn source_state_unchecked(&self, t: f64, z: usize) -> Result<SourceState<'_>> {
        SourceState::new(self, t, z, false)
    }

    pub fn flowed_metric(&self, t: f64, z: usize) -> Result<FlowedMetric> {
        let s = self.source_state(t, z)?;
        let fm = s.flowed_metric();
        if !(fm.min_eig > 0.0) {
            return Err(Error::NotPositiveDefinite { min_eig: fm.min_eig });
        }
        Ok(fm)
    }

    /// `g_t` at every vertex, computed in parallel; the output order is the
    /// vertex order regardless of the thread count.
    pub fn flowed_metric_field(&self, t: f64) -> Result<Vec<FlowedMetric>> {
        self.h.check_time(t)?;
        (0..self.m.n()).into_par_iter().map(|z| self.flowed_metric(t, z)).collect()
    }

    /// `g_t` at a subset of vertices.
    pub fn flowed_metric_at(&self, t: f64, zs: &[usize]) -> Result<Vec<FlowedMetric>> {
        self.h.check_time(t)?;
        zs.par_iter().map(|&z| self.flowed_metric(t, z)).collect()
    }

    /// Centered difference of `g_t` in `t` with step `rel * t`. The stencil
    /// may reach slightly below `t_min`.
    pub fn metric_derivative_fd(&self, t: f64, z: usize, rel: f64) -> Result<SymForm> {
        self.h.check_time(t)?;
        let dt = rel * t;
        let gp = self.source_state_unchecked(t + dt, z)?.flowed_metric().g;
        let gm = self.source_state_unchecked(t - dt, z)?.flowed_metric().g;
        Ok(std::array::from_fn(|k| (gp[k] - gm[k]) / (2.0 * dt)))
    }

    pub fn induced_ricci(&self, t: f64, z: usize, u: Tangent, w: Tangent) -> Result<f64> {
        Ok(self.source_state(t, z)?.induced_ricci(&u, &w))
    }

    pub fn induced_riemann(&self, t: f64, z: usize, v: [Tangent; 4]) -> Result<f64> {
        Ok(self.source_state(t, z)?.induced_riemann(&v))
    }

    pub fn beta_integral(&self, t: f64, z: usize, u: Tangent, w: Tangent) -> Result<BetaIntegral> {
        Ok(self.source_state(t, z)?.beta_integral(&u, &w))
    }

    pub fn bochner_check(&self, t: f64, z: usize, u: Tangent) -> Result<BochnerCheck> {
        Ok(self.source_state(t, z)?.bochner_check(&u))
    }

    pub fn monotonicity(&self, t: f64, z: usize, u: Tangent) -> Result<Monotonicity> {
        let s = self.source_state(t, z)?;
        let a = s.a_functional(&u);
        let da_dt_formula = s.da_dt(&u);
        let dt = 0.01 * t;
        let ap = self.source_state_unchecked(t + dt, z)?.a_functional(&u);
        let am = self.source_state_unchecked(t - dt, z)?.a_functional(&u);
        Ok(Monotonicity { a, da_dt_formula, da_dt_fd: (ap - am) / (2.0 * dt) })
    }

    pub fn x_field_and_lie(&self, t: f64, z: usize) -> Result<XField> {
        self.source_state(t, z)?.x_field_and_lie()
    }

    /// `F`, `F-hat` and the Perelman energy, with the outer `z`-integral taken
    /// over a stratified subset of sources (`subsampling = 1` uses every vertex).
    pub fn f_functionals(&self, t: f64, subsampling: usize) -> Result<FFunctionals> {
        self.h.check_time(t)?;
        let (sources, weights) = quadrature_sources(self.m, subsampling)?;
        let parts: Vec<[f64; 3]> = sources
            .par_iter()
            .map(|&z| {
                let s = self.source_state(t, z)?;
                let x = s.x_field_and_lie()?;
                let mut out = [0.0; 3];
                for a in 0..self.m.dim() {
                    let mut e = [0.0; 2];
                    e[a] = 1.0;
                    let aa = s.a_functional(&e);
                    let lie = if a == 0 { x.lie[0] } else { x.lie[2] };
                    let beta = s.beta_integral(&e, &e);
                    out[0] += aa;
                    out[1] += aa + 0.5 * lie;
                    out[2] += -0.5 * (beta.ricci + beta.hess_f + beta.hess_psi);
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        let mut acc = [0.0; 3];
        for (p, w) in parts.iter().zip(&weights) {
            for k in 0..3 {
                acc[k] += w * p[k];
            }
        }
        Ok(FFunctionals {
            t,
            f: acc[0],
            f_hat: acc[1],
            f_hat_reduced: acc[2],
            perelman_f: self.perelman_f(),
            sources: sources.len(),
            subsampling,
        })
    }

    /// `int (R + |grad f|^2) d omega`.
    pub fn perelman_f(&self) -> f64 {
        let r = self.m.scalar_curvature();
        self.grad_f
            .iter()
            .zip(self.m.omega())
            .map(|(g, w)| (r + g[0] * g[0] + g[1] * g[1]) * w)
            .sum()
    }
}

/// Sources and normalized `omega` weights for the outer quadrature.
pub fn quadrature_sources(m: &MetricMeasureSpace, level: usize) -> Result<(Vec<usize>, Vec<f64>)> {
    use crate::manifold::ManifoldSpec;
    if level == 0 {
        return Err(Error::InvalidParameter("subsampling level must be >= 1".into()));
    }
    let sources: Vec<usize> = match m.spec() {
        ManifoldSpec::FlatTorus { resolution, .. } => {
            let mut v = Vec::new();
            for iy in (0..resolution[1]).step_by(level) {
                for ix in (0..resolution[0]).step_by(level) {
                    v.push(ix + resolution[0] * iy);
                }
            }
            v
        }
        ManifoldSpec::Circle { resolution, .. } => (0..*resolution).step_by(level).collect(),
        ManifoldSpec::RoundSphere { subdivisions, .. } => {
            // Coarser icosphere levels are prefixes of the vertex list.
            let drop = (level - 1).min(*subdivisions);
            let count = 10 * 4usize.pow((*subdivisions - drop) as u32) + 2;
            (0..count).collect()
        }
    };
    let raw: Vec<f64> = match m.spec() {
        ManifoldSpec::RoundSphere { subdivisions, radius } if sources.len() < m.n() => {
            let coarse = crate::manifold::build_manifold(&ManifoldSpec::RoundSphere {
                subdivisions: subdivisions - (level - 1).min(*subdivisions),
                radius: *radius,
            })?;
            sources.iter().map(|&z| coarse.mass()[z] * m.density()[z]).collect()
        }
        _ => sources.iter().map(|&z| m.omega()[z]).collect(),
    };
    let total: f64 = raw.iter().sum();
    Ok((sources, raw.into_iter().map(|w| w / total).collect()))
}

pub(crate) fn clamp_kernel(p: &[f64]) -> Vec<f64> {
    let pmax = p.iter().cloned().fold(0.0, f64::max);
    let floor = KERNEL_FLOOR * pmax;
    p.iter().map(|&v| v.max(floor)).collect()
}

/// `sqrt(sum (r_i / q_i)^2 q_i)`.
fn weighted_norm(r: &[f64], q: &[f64]) -> f64 {
    r.iter().zip(q).map(|(a, w)| a * a / w).sum::<f64>().sqrt()
}

/// Smallest eigenvalue helper that also covers one-dimensional forms.
pub(crate) fn form_min_eig(g: &SymForm, dim: usize) -> f64 {
    if dim == 1 {
        g[0]
    } else {
        sym_min_eig(g)
    }
}

#[cfg(test)]
mod tests;
