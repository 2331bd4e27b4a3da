//! Log-domain Sinkhorn iterations for `OT_eps` with the KL penalty against
//! the product measure.

use crate::error::{Error, Result};

/// L1 marginal tolerance.
pub(crate) const TOL: f64 = 1e-9;
const MAX_ITER: usize = 200_000;

pub(crate) struct SinkhornOutcome {
    /// Dual value `<a, f> + <b, g>`, equal to `OT_eps` at the fixed point.
    pub value: f64,
    /// `<plan, c>`.
    pub transport_cost: f64,
    pub plan: Vec<f64>,
    pub iterations: usize,
}

fn log_sum_exp(vals: impl Iterator<Item = f64> + Clone) -> f64 {
    let mx = vals.clone().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return mx;
    }
    mx + vals.map(|v| (v - mx).exp()).sum::<f64>().ln()
}

/// Solves at `eps` after warm starts along `eps_k = max(c) 2^{-k}`.
pub(crate) fn solve(a: &[f64], b: &[f64], c: &[f64], eps: f64, tol: f64) -> Result<SinkhornOutcome> {
    let la: Vec<f64> = a.iter().map(|x| x.ln()).collect();
    let lb: Vec<f64> = b.iter().map(|x| x.ln()).collect();
    let mut f = vec![0.0; a.len()];
    let mut g = vec![0.0; b.len()];
    let mut stage = c.iter().cloned().fold(0.0, f64::max);
    let mut warm = 0;
    while stage > 2.0 * eps {
        warm += iterate(a, &la, &lb, c, stage, 1e-3, 2_000, &mut f, &mut g).1;
        stage *= 0.5;
    }
    let (done, it, err) = iterate(a, &la, &lb, c, eps, tol, MAX_ITER, &mut f, &mut g);
    if !done {
        return Err(Error::SinkhornNotConverged { iterations: MAX_ITER, error: err });
    }
    let (n1, n2) = (a.len(), b.len());
    let mut plan = vec![0.0; n1 * n2];
    let mut cost = 0.0;
    for i in 0..n1 {
        for j in 0..n2 {
            let p = (la[i] + lb[j] + (f[i] + g[j] - c[i * n2 + j]) / eps).exp();
            plan[i * n2 + j] = p;
            cost += p * c[i * n2 + j];
        }
    }
    let value = a.iter().zip(&f).map(|(x, y)| x * y).sum::<f64>() + b.iter().zip(&g).map(|(x, y)| x * y).sum::<f64>();
    Ok(SinkhornOutcome { value, transport_cost: cost, plan, iterations: warm + it })
}

/// Alternating updates until the row marginal error is below `tol`.
/// Returns `(converged, iterations, error)`.
#[allow(clippy::too_many_arguments)]
fn iterate(
    a: &[f64],
    la: &[f64],
    lb: &[f64],
    c: &[f64],
    eps: f64,
    tol: f64,
    max_iter: usize,
    f: &mut [f64],
    g: &mut [f64],
) -> (bool, usize, f64) {
    let (n1, n2) = (la.len(), lb.len());
    let mut err = f64::INFINITY;
    for it in 1..=max_iter {
        for i in 0..n1 {
            let row = &c[i * n2..(i + 1) * n2];
            f[i] = -eps * log_sum_exp((0..n2).map(|j| lb[j] + (g[j] - row[j]) / eps));
        }
        for j in 0..n2 {
            g[j] = -eps * log_sum_exp((0..n1).map(|i| la[i] + (f[i] - c[i * n2 + j]) / eps));
        }
        // Columns are exact after the g-update; check the rows.
        if it % 10 == 0 || it == 1 {
            err = 0.0;
            for i in 0..n1 {
                let row = &c[i * n2..(i + 1) * n2];
                let s: f64 = (0..n2).map(|j| (la[i] + lb[j] + (f[i] + g[j] - row[j]) / eps).exp()).sum();
                err += (s - a[i]).abs();
            }
            if err <= tol {
                return (true, it, err);
            }
        }
    }
    (false, max_iter, err)
}
