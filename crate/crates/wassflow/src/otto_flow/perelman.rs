//! Measure-preservation constraint of the Hamilton-Perelman system and the
//! `1/q` approach of the dilaton heat flow to its backward equation.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::extrapolate::fit_line;
use crate::heat::dilaton_flow_generator;
use crate::manifold::{ManifoldSpec, MetricMeasureSpace};

/// Result of driving `|grad f|^2 - 2 Lap f - R` to zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSolution {
    pub f: Vec<f64>,
    /// Max-norm of the constraint residual at `f`.
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonPerelmanReport {
    /// Max-norm of `|grad f|^2 - 2 Lap f - R`.
    pub measure_residual: f64,
    /// `omega`-L2 distance between `Lap_omega f` and `-Lap f - R`.
    pub tangency_residual: f64,
    pub qs: Vec<f64>,
    /// `|| G_q - Lap_omega f ||` for the dilaton flow generator `G_q`.
    pub generator_deviation: Vec<f64>,
    /// `|| (2/q) |grad f|^2 ||`, the explicit correction of the backward equation.
    pub explicit_correction: Vec<f64>,
    /// Decay exponent of `generator_deviation` in `q`, `None` when it vanishes.
    pub exponent: Option<f64>,
    pub explicit_exponent: Option<f64>,
}

fn require_grid(m: &MetricMeasureSpace) -> Result<()> {
    match m.spec() {
        ManifoldSpec::RoundSphere { .. } => {
            Err(Error::InvalidParameter("the Hamilton-Perelman check needs a grid manifold".into()))
        }
        _ => Ok(()),
    }
}

/// `|grad f|^2 - 2 Lap f - R` with stencil gradients and the cotangent Laplacian.
pub fn constraint_residual(m: &MetricMeasureSpace, f: &[f64]) -> Vec<f64> {
    let r = m.scalar_curvature();
    let lap = m.laplacian(f);
    (0..m.n())
        .map(|i| {
            let g = m.gradient_at(f, i);
            g[0] * g[0] + g[1] * g[1] - 2.0 * lap[i] - r
        })
        .collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

fn omega_norm(m: &MetricMeasureSpace, v: &[f64]) -> f64 {
    v.iter().zip(m.omega()).map(|(a, w)| a * a * w).sum::<f64>().sqrt()
}

/// Dense Jacobian of [`constraint_residual`].
fn jacobian(m: &MetricMeasureSpace, f: &[f64]) -> Mat<f64> {
    let n = m.n();
    let mut j = Mat::<f64>::zeros(n, n);
    for e in m.edges() {
        let c = 2.0 * e.kappa;
        j[(e.i, e.j)] -= c / m.mass()[e.i];
        j[(e.i, e.i)] += c / m.mass()[e.i];
        j[(e.j, e.i)] -= c / m.mass()[e.j];
        j[(e.j, e.j)] += c / m.mass()[e.j];
    }
    let st = m.grad_stencil();
    for i in 0..n {
        let g = st.apply(i, f);
        for (k, w) in st.row(i) {
            let d = 2.0 * (g[0] * w[0] + g[1] * w[1]);
            j[(i, k)] += d;
            j[(i, i)] -= d;
        }
    }
    j
}

/// Levenberg-Marquardt on the discrete constraint starting from `f0`.
pub fn solve_constraint(m: &MetricMeasureSpace, f0: &[f64], tol: f64, max_iter: usize) -> Result<ConstraintSolution> {
    require_grid(m)?;
    if f0.len() != m.n() || !f0.iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidDilaton("initial guess must be finite with one value per vertex".into()));
    }
    let n = m.n();
    let mut f = f0.to_vec();
    let mut r = constraint_residual(m, &f);
    let mut cost: f64 = r.iter().map(|x| x * x).sum();
    let mut mu = 1e-3;
    let mut iterations = 0;
    while iterations < max_iter && max_abs(&r) > tol {
        iterations += 1;
        let j = jacobian(m, &f);
        let jt = j.transpose();
        let mut a = jt * &j;
        let scale = (0..n).map(|i| a[(i, i)]).fold(0.0, f64::max);
        let rhs = Mat::<f64>::from_fn(n, 1, |i, _| -(0..n).map(|k| j[(k, i)] * r[k]).sum::<f64>());
        loop {
            for i in 0..n {
                a[(i, i)] += mu * scale;
            }
            let step = a
                .llt(Side::Lower)
                .map_err(|e| Error::SolverFailure(format!("constraint normal equations: {e:?}")))?
                .solve(&rhs);
            for i in 0..n {
                a[(i, i)] -= mu * scale;
            }
            let trial: Vec<f64> = (0..n).map(|i| f[i] + step[(i, 0)]).collect();
            let rt = constraint_residual(m, &trial);
            let ct: f64 = rt.iter().map(|x| x * x).sum();
            if ct < cost {
                f = trial;
                r = rt;
                cost = ct;
                mu = (mu / 3.0).max(1e-14);
                break;
            }
            mu *= 4.0;
            if mu > 1e8 {
                return Err(Error::SolverFailure("constraint solve stalled".into()));
            }
        }
    }
    Ok(ConstraintSolution { residual: max_abs(&r), f, iterations })
}

fn decay_exponent(qs: &[f64], vals: &[f64]) -> Option<f64> {
    if vals.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    let x: Vec<f64> = qs.iter().map(|q| q.ln()).collect();
    let y: Vec<f64> = vals.iter().map(|v| v.ln()).collect();
    Some(-fit_line(&x, &y).1)
}

/// Evaluates the constraint and the `q`-corrected backward equation for the
/// dilaton of `m`.
pub fn hamilton_perelman_check(m: &MetricMeasureSpace, qs: &[f64]) -> Result<HamiltonPerelmanReport> {
    require_grid(m)?;
    if qs.len() < 2 || qs.iter().any(|q| !(*q > 0.0)) {
        return Err(Error::InvalidParameter("need at least two positive q values".into()));
    }
    let f = m.dilaton();
    let measure_residual = max_abs(&constraint_residual(m, f));
    let lap_w = m.weighted_laplacian(f);
    let lap = m.laplacian(f);
    let r = m.scalar_curvature();
    let backward: Vec<f64> = lap_w.iter().zip(&lap).map(|(lw, l)| lw + l + r).collect();
    let tangency_residual = omega_norm(m, &backward);
    let grad2: Vec<f64> = m.gradient(f).iter().map(|g| g[0] * g[0] + g[1] * g[1]).collect();
    let mut generator_deviation = Vec::with_capacity(qs.len());
    let mut explicit_correction = Vec::with_capacity(qs.len());
    for &q in qs {
        let gq = dilaton_flow_generator(m, f, q);
        let d: Vec<f64> = gq.iter().zip(&lap_w).map(|(a, b)| a - b).collect();
        generator_deviation.push(omega_norm(m, &d));
        let c: Vec<f64> = grad2.iter().map(|g| 2.0 / q * g).collect();
        explicit_correction.push(omega_norm(m, &c));
    }
    Ok(HamiltonPerelmanReport {
        measure_residual,
        tangency_residual,
        qs: qs.to_vec(),
        exponent: decay_exponent(qs, &generator_deviation),
        explicit_exponent: decay_exponent(qs, &explicit_correction),
        generator_deviation,
        explicit_correction,
    })
}
