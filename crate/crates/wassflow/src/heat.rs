//! Spectral heat semigroup of `Delta_omega`.
//!
//! The weighted Laplacian is symmetrized by `omega^{1/2}` and diagonalized
//! densely, giving `-Delta_omega phi_k = lambda_k phi_k` with
//! `<phi_j, phi_k>_omega = delta_jk`. Within each cluster of numerically equal
//! eigenvalues the basis is made canonical by Gram-Schmidt on the cluster
//! coordinates of vertex indicators, visiting vertices in index order, so that
//! the result is reproducible bit for bit.
//!
//! The heat kernel is taken with respect to `omega`:
//! `p_t(y, z) = sum_k exp(-lambda_k t) phi_k(y) phi_k(z)`, so that
//! `sum_y p_t(y, z) omega_y = 1`.

use faer::{Col, Mat, Side};

use crate::error::{Error, Result};
use crate::manifold::MetricMeasureSpace;

/// Relative gap below which neighbouring eigenvalues are treated as one cluster.
const CLUSTER_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct SpectralHeatOperator {
    lambda: Vec<f64>,
    /// `n x k`, column `k` is `phi_k`.
    phi: Mat<f64>,
    omega: Vec<f64>,
    t_min: f64,
}

/// Diagonalizes `-Delta_omega`, keeping the `k` lowest modes (all when `None`).
pub fn eigendecompose(m: &MetricMeasureSpace, k: Option<usize>) -> Result<SpectralHeatOperator> {
    let n = m.n();
    let k = k.unwrap_or(n);
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("number of modes {k} must be in 1..={n}")));
    }
    let omega = m.omega();
    let sq: Vec<f64> = omega.iter().map(|w| w.sqrt()).collect();
    let mut s = Mat::<f64>::zeros(n, n);
    for (e, c) in m.edges().iter().zip(m.edge_weights()) {
        let v = c / (sq[e.i] * sq[e.j]);
        s[(e.i, e.j)] -= v;
        s[(e.j, e.i)] -= v;
        s[(e.i, e.i)] += c / omega[e.i];
        s[(e.j, e.j)] += c / omega[e.j];
    }
    let evd = s
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::EigenFailure(format!("{e:?}")))?;
    let vals = evd.S().column_vector();
    let vecs = evd.U();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)));
    let lambda_all: Vec<f64> = order.iter().map(|&i| vals[i]).collect();
    if lambda_all.iter().any(|l| !l.is_finite()) {
        return Err(Error::EigenFailure("non-finite eigenvalue".into()));
    }

    // Extend k to the end of a cluster that it would otherwise cut.
    let mut kk = k;
    while kk < n && same_cluster(lambda_all[kk - 1], lambda_all[kk]) {
        kk += 1;
    }
    let mut u = Mat::<f64>::from_fn(n, kk, |r, c| vecs[(r, order[c])]);
    let mut start = 0;
    while start < kk {
        let mut end = start + 1;
        while end < kk && same_cluster(lambda_all[end - 1], lambda_all[end]) {
            end += 1;
        }
        canonicalize(&mut u, start, end);
        start = end;
    }
    let phi = Mat::<f64>::from_fn(n, kk, |r, c| u[(r, c)] / sq[r]);
    let mut lambda: Vec<f64> = lambda_all[..kk].to_vec();
    // The constant mode is exact; clear its rounding.
    lambda[0] = lambda[0].max(0.0);
    Ok(SpectralHeatOperator { lambda, phi, omega: omega.to_vec(), t_min: m.t_min() })
}

fn same_cluster(a: f64, b: f64) -> bool {
    (b - a).abs() <= CLUSTER_TOL * b.abs().max(1.0)
}

/// Replaces columns `start..end` of the orthonormal `u` by a canonical basis
/// of their span.
fn canonicalize(u: &mut Mat<f64>, start: usize, end: usize) {
    let n = u.nrows();
    let m = end - start;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m);
    for j in 0..n {
        if basis.len() == m {
            break;
        }
        let mut c: Vec<f64> = (start..end).map(|col| u[(j, col)]).collect();
        for b in &basis {
            let d: f64 = c.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in c.iter_mut().zip(b) {
                *x -= d * y;
            }
        }
        // Second pass for numerical orthogonality.
        for b in &basis {
            let d: f64 = c.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in c.iter_mut().zip(b) {
                *x -= d * y;
            }
        }
        let norm2: f64 = c.iter().map(|x| x * x).sum();
        let remaining = (m - basis.len()) as f64;
        if norm2 >= 0.1 * remaining / n as f64 {
            let norm = norm2.sqrt();
            basis.push(c.into_iter().map(|x| x / norm).collect());
        }
    }
    debug_assert_eq!(basis.len(), m);
    let old = Mat::<f64>::from_fn(n, m, |r, c| u[(r, start + c)]);
    for (bi, b) in basis.iter().enumerate() {
        for r in 0..n {
            let mut v = 0.0;
            for c in 0..m {
                v += old[(r, c)] * b[c];
            }
            u[(r, start + bi)] = v;
        }
    }
}

impl SpectralHeatOperator {
    pub fn n(&self) -> usize {
        self.phi.nrows()
    }

    /// Number of retained modes.
    pub fn k(&self) -> usize {
        self.lambda.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.lambda
    }

    pub fn eigenfunction(&self, k: usize) -> Vec<f64> {
        (0..self.n()).map(|r| self.phi[(r, k)]).collect()
    }

    pub fn phi(&self, y: usize, k: usize) -> f64 {
        self.phi[(y, k)]
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    /// Upper bound on the tail `sum_{j >= k} exp(-lambda_j t)` of a truncated
    /// expansion, using `lambda_{k-1}` as a lower bound for the discarded modes.
    pub fn truncation_bound(&self, t: f64) -> f64 {
        let n = self.n();
        let k = self.k();
        if k == n {
            0.0
        } else {
            (n - k) as f64 * (-self.lambda[k - 1] * t).exp()
        }
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        if !(t.is_finite()) || t < self.t_min {
            return Err(Error::TimeTooSmall { t, t_min: self.t_min });
        }
        Ok(())
    }

    fn check_vertex(&self, z: usize) -> Result<()> {
        if z < self.n() {
            Ok(())
        } else {
            Err(Error::VertexOutOfRange { index: z, n: self.n() })
        }
    }

    /// `sum_k exp(-lambda_k t) c_k phi_k` without any checks.
    pub(crate) fn synthesize(&self, t: f64, coef: impl Fn(usize) -> f64) -> Vec<f64> {
        let c = Col::<f64>::from_fn(self.k(), |k| (-self.lambda[k] * t).exp() * coef(k));
        let out = &self.phi * &c;
        (0..self.n()).map(|r| out[r]).collect()
    }

    /// Heat kernel column `p_t(., z)` without the time check; used by finite
    /// difference stencils that may straddle `t_min`.
    pub(crate) fn kernel_unchecked(&self, t: f64, z: usize) -> Vec<f64> {
        self.synthesize(t, |k| self.phi[(z, k)])
    }

    /// `p_t(., z)`. Fails below `t_min` or when a value is below `-1e-8`.
    pub fn heat_kernel(&self, t: f64, z: usize) -> Result<Vec<f64>> {
        self.check_time(t)?;
        self.check_vertex(z)?;
        let p = self.kernel_unchecked(t, z);
        check_positive(&p)?;
        Ok(p)
    }

    /// Heat kernel with source given as a convex combination of vertices.
    pub fn heat_kernel_mixture(&self, t: f64, sources: &[(usize, f64)]) -> Result<Vec<f64>> {
        self.check_time(t)?;
        for &(z, _) in sources {
            self.check_vertex(z)?;
        }
        let p = self.synthesize(t, |k| sources.iter().map(|&(z, w)| w * self.phi[(z, k)]).sum());
        check_positive(&p)?;
        Ok(p)
    }

    /// `P_t u = sum_k exp(-lambda_k t) <phi_k, u>_omega phi_k`.
    pub fn semigroup(&self, t: f64, u: &[f64]) -> Vec<f64> {
        let coef: Vec<f64> = (0..self.k())
            .map(|k| (0..self.n()).map(|r| self.phi[(r, k)] * u[r] * self.omega[r]).sum())
            .collect();
        self.synthesize(t, |k| coef[k])
    }

    /// Source gradient `grad_z p_t(., z)`, one field per frame direction at
    /// `z`, using the gradient stencil of `m` at the source.
    pub fn heat_kernel_source_gradient(&self, m: &MetricMeasureSpace, t: f64, z: usize) -> Result<Vec<Vec<f64>>> {
        self.check_time(t)?;
        self.check_vertex(z)?;
        Ok(self.source_gradient_unchecked(m, t, z))
    }

    pub(crate) fn source_gradient_unchecked(&self, m: &MetricMeasureSpace, t: f64, z: usize) -> Vec<Vec<f64>> {
        let stencil = m.grad_stencil();
        (0..m.dim())
            .map(|a| {
                self.synthesize(t, |k| {
                    let pz = self.phi[(z, k)];
                    stencil.row(z).map(|(j, w)| w[a] * (self.phi[(j, k)] - pz)).sum()
                })
            })
            .collect()
    }

    /// `Delta_y p_t(., z)` evaluated termwise.
    pub fn heat_kernel_laplacian(&self, t: f64, z: usize) -> Result<Vec<f64>> {
        self.check_time(t)?;
        self.check_vertex(z)?;
        Ok(self.synthesize(t, |k| -self.lambda[k] * self.phi[(z, k)]))
    }

    /// `-t ln p_t(y, z)` along a schedule of times.
    pub fn varadhan_sequence(&self, schedule: &[f64], y: usize, z: usize) -> Result<Vec<f64>> {
        self.check_vertex(y)?;
        self.check_vertex(z)?;
        schedule
            .iter()
            .map(|&t| {
                self.check_time(t)?;
                let p: f64 = (0..self.k()).map(|k| (-self.lambda[k] * t).exp() * self.phi[(y, k)] * self.phi[(z, k)]).sum();
                if p <= 0.0 {
                    return Err(Error::NegativityViolation { value: p, vertex: y });
                }
                Ok(-t * p.ln())
            })
            .collect()
    }
}

/// Removes the mass of `g` against `omega` by subtracting a multiple of the
/// probability density `p` (`sum p omega = 1`); returns the removed amount.
pub fn project_zero_mean(g: &mut [f64], p: &[f64], omega: &[f64]) -> f64 {
    let mean: f64 = g.iter().zip(omega).map(|(a, w)| a * w).sum();
    let mass: f64 = p.iter().zip(omega).map(|(a, w)| a * w).sum();
    let c = mean / mass;
    for (gi, pi) in g.iter_mut().zip(p) {
        *gi -= c * pi;
    }
    mean
}

fn check_positive(p: &[f64]) -> Result<()> {
    if let Some((i, &v)) = p.iter().enumerate().find(|(_, &v)| v < -1e-8) {
        return Err(Error::NegativityViolation { value: v, vertex: i });
    }
    Ok(())
}

/// Varadhan estimate of `d^2 / 4` from small-time samples.
#[derive(Clone, Debug, PartialEq)]
pub struct VaradhanLimit {
    /// `-t ln p_t(y, z)`.
    pub raw: Vec<f64>,
    /// Raw values with the Gaussian prefactor `(n/2) t ln(4 pi t / V^{2/n})` removed.
    pub corrected: Vec<f64>,
    /// Linear extrapolation of the corrected values to `t = 0`.
    pub extrapolated: f64,
}

/// `-t ln p_t(y, z)` on a schedule and its extrapolation to `t -> 0`.
///
/// The kernel is taken against the unit-mass measure `omega`, so the Gaussian
/// prefactor is `V (4 pi t)^{-n/2}`; it is removed before a linear fit over
/// the three smallest times.
pub fn varadhan_limit(
    m: &MetricMeasureSpace,
    h: &SpectralHeatOperator,
    schedule: &[f64],
    y: usize,
    z: usize,
) -> Result<VaradhanLimit> {
    let raw = h.varadhan_sequence(schedule, y, z)?;
    let dim = m.dim() as f64;
    let v = m.volume();
    let corrected: Vec<f64> = schedule
        .iter()
        .zip(&raw)
        .map(|(&t, r)| r - 0.5 * dim * t * (4.0 * std::f64::consts::PI * t / v.powf(2.0 / dim)).ln())
        .collect();
    let extrapolated = crate::extrapolate::linear_to_zero(schedule, &corrected)?;
    Ok(VaradhanLimit { raw, corrected, extrapolated })
}

/// Dilaton flow `exp(-2 f_t / q) = P_t exp(-2 f / q)` for the fixed weighted
/// semigroup of `m`.
pub fn dilaton_heat_flow(m: &MetricMeasureSpace, h: &SpectralHeatOperator, q: f64, t: f64) -> Result<Vec<f64>> {
    if !(q > 0.0) {
        return Err(Error::InvalidParameter(format!("q = {q} must be positive")));
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("t = {t} must be non-negative")));
    }
    // Factor out the minimum so the exponentials stay in range.
    let f = m.dilaton();
    let fmin = f.iter().cloned().fold(f64::INFINITY, f64::min);
    let u0: Vec<f64> = f.iter().map(|fi| (-2.0 * (fi - fmin) / q).exp()).collect();
    let u = h.semigroup(t, &u0);
    u.iter()
        .enumerate()
        .map(|(i, &ui)| {
            if ui <= 0.0 {
                Err(Error::NegativityViolation { value: ui, vertex: i })
            } else {
                Ok(fmin - 0.5 * q * ui.ln())
            }
        })
        .collect()
}

/// Discrete generator of the dilaton flow at `t = 0`:
/// `-(q/2) Delta_omega(e^{-2f/q}) / e^{-2f/q}`.
pub fn dilaton_flow_generator(m: &MetricMeasureSpace, f: &[f64], q: f64) -> Vec<f64> {
    let fmin = f.iter().cloned().fold(f64::INFINITY, f64::min);
    let u: Vec<f64> = f.iter().map(|fi| (-2.0 * (fi - fmin) / q).exp()).collect();
    let lu = m.weighted_laplacian(&u);
    lu.iter().zip(&u).map(|(l, ui)| -0.5 * q * l / ui).collect()
}

#[cfg(test)]
mod tests;
