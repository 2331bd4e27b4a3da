//! Exact and entropic quadratic Wasserstein distances between measures
//! supported on the vertices of a sampled manifold, with the ground cost
//! `d_g^2` taken from [`MetricMeasureSpace::geodesic_distance`].

mod simplex;
mod sinkhorn;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::heat::SpectralHeatOperator;
use crate::manifold::{frechet_mean, interpolation_weights, MetricMeasureSpace};

/// Largest combined support accepted by [`w2_exact`].
pub const SUPPORT_LIMIT: usize = 6000;
/// Relative weight below which heat-kernel measures are truncated.
pub const TRUNCATION: f64 = 1e-12;

/// Probability measure on a subset of vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    pub support: Vec<usize>,
    pub weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Normalizes nonnegative weights; zero weights are dropped.
    pub fn new(support: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if support.len() != weights.len() || support.is_empty() {
            return Err(Error::InvalidMeasure("support and weights must be nonempty and of equal length".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidMeasure("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidMeasure("total mass is zero".into()));
        }
        let mut sorted = support.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|p| p[0] == p[1]) {
            return Err(Error::InvalidMeasure("repeated support vertex".into()));
        }
        let (support, weights): (Vec<usize>, Vec<f64>) =
            support.into_iter().zip(weights).filter(|(_, w)| *w > 0.0).map(|(s, w)| (s, w / total)).unzip();
        Ok(DiscreteMeasure { support, weights })
    }

    pub fn dirac(vertex: usize) -> Self {
        DiscreteMeasure { support: vec![vertex], weights: vec![1.0] }
    }

    /// `p * omega` truncated to weights `>= TRUNCATION * max` and renormalized.
    pub fn from_density(m: &MetricMeasureSpace, p: &[f64]) -> Result<Self> {
        if p.len() != m.n() {
            return Err(Error::InvalidMeasure("density length does not match the manifold".into()));
        }
        let w: Vec<f64> = p.iter().zip(m.omega()).map(|(a, b)| a * b).collect();
        let wmax = w.iter().cloned().fold(0.0, f64::max);
        let (s, v): (Vec<usize>, Vec<f64>) =
            w.iter().enumerate().filter(|(_, x)| **x >= TRUNCATION * wmax).map(|(i, x)| (i, *x)).unzip();
        DiscreteMeasure::new(s, v)
    }

    /// Heat-kernel measure `p_t(., z) omega`.
    pub fn heat(m: &MetricMeasureSpace, h: &SpectralHeatOperator, t: f64, z: usize) -> Result<Self> {
        DiscreteMeasure::from_density(m, &h.heat_kernel(t, z)?)
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Solver {
    Exact { pivots: usize },
    Entropic { epsilon: f64, iterations: usize },
}

/// Coupling stored as `(vertex_from, vertex_to, mass)` triplets.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    pub entries: Vec<(usize, usize, f64)>,
    /// L1 deviation of the two marginals from the inputs.
    pub marginal_residual: [f64; 2],
    pub cost: f64,
    pub solver: Solver,
}

impl TransportPlan {
    /// Sparse triplet CSV `from,to,mass`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("from,to,mass\n");
        for (i, j, w) in &self.entries {
            s.push_str(&format!("{i},{j},{w:.17e}\n"));
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Wasserstein {
    pub distance: f64,
    pub plan: TransportPlan,
}

fn cost_matrix(m: &MetricMeasureSpace, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<Vec<f64>> {
    for &v in mu.support.iter().chain(&nu.support) {
        m.check_vertex(v)?;
    }
    let n2 = nu.len();
    let mut c = vec![0.0; mu.len() * n2];
    c.par_chunks_mut(n2).zip(&mu.support).for_each(|(row, &y)| {
        for (x, &z) in row.iter_mut().zip(&nu.support) {
            let d = m.spec().distance(&m.point(y), &m.point(z));
            *x = d * d;
        }
    });
    Ok(c)
}

fn marginal_residuals(mu: &DiscreteMeasure, nu: &DiscreteMeasure, flow: &[f64]) -> [f64; 2] {
    let n2 = nu.len();
    let mut cols = vec![0.0; n2];
    let mut r0 = 0.0;
    for (i, row) in flow.chunks(n2).enumerate() {
        r0 += (row.iter().sum::<f64>() - mu.weights[i]).abs();
        for (c, f) in cols.iter_mut().zip(row) {
            *c += f;
        }
    }
    let r1 = cols.iter().zip(&nu.weights).map(|(a, b)| (a - b).abs()).sum();
    [r0, r1]
}

/// Orders both supports along the displacement of the two barycentres in the
/// ambient coordinates; the north-west corner basis along this order is close
/// to optimal for nearby smooth measures.
fn initial_orders(m: &MetricMeasureSpace, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> (Vec<usize>, Vec<usize>) {
    let mean = |d: &DiscreteMeasure| {
        let mut x = [0.0; 3];
        for (&v, w) in d.support.iter().zip(&d.weights) {
            let p = m.point(v);
            for k in 0..3 {
                x[k] += w * p[k];
            }
        }
        x
    };
    let (ma, mb) = (mean(mu), mean(nu));
    let mut dir = [mb[0] - ma[0], mb[1] - ma[1], mb[2] - ma[2]];
    if dir.iter().map(|x| x * x).sum::<f64>() < 1e-24 {
        dir = [1.0, 0.0, 0.0];
    }
    let order = |d: &DiscreteMeasure| {
        let key: Vec<f64> = d
            .support
            .iter()
            .map(|&v| {
                let p = m.point(v);
                p[0] * dir[0] + p[1] * dir[1] + p[2] * dir[2]
            })
            .collect();
        let mut idx: Vec<usize> = (0..d.len()).collect();
        idx.sort_by(|&i, &j| key[i].total_cmp(&key[j]).then(i.cmp(&j)));
        idx
    };
    (order(mu), order(nu))
}

/// Exact `W_2` by network simplex.
pub fn w2_exact(m: &MetricMeasureSpace, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<Wasserstein> {
    let size = mu.len() + nu.len();
    if size > SUPPORT_LIMIT {
        return Err(Error::SupportTooLarge { size, limit: SUPPORT_LIMIT });
    }
    let c = cost_matrix(m, mu, nu)?;
    let mut b = nu.weights.clone();
    // Balance the two totals exactly so the artificial arcs can drain.
    let gap = mu.weights.iter().sum::<f64>() - b.iter().sum::<f64>();
    let jmax = (0..b.len()).max_by(|&i, &j| b[i].total_cmp(&b[j])).unwrap_or(0);
    b[jmax] += gap;
    let (order_a, order_b) = initial_orders(m, mu, nu);
    let max_pivots = 200 * size * size.max(10);
    let out = simplex::solve(&mu.weights, &b, &c, &order_a, &order_b, max_pivots)
        .ok_or_else(|| Error::TransportFailure("network simplex did not terminate".into()))?;
    if out.artificial > 1e-12 {
        return Err(Error::TransportFailure(format!("infeasible basis, artificial flow {:.3e}", out.artificial)));
    }
    let marginal_residual = marginal_residuals(mu, nu, &out.flow);
    let n2 = nu.len();
    let entries = out
        .flow
        .iter()
        .enumerate()
        .filter(|(_, f)| **f > 0.0)
        .map(|(e, f)| (mu.support[e / n2], nu.support[e % n2], *f))
        .collect();
    let cost = out.cost.max(0.0);
    Ok(Wasserstein {
        distance: cost.sqrt(),
        plan: TransportPlan { entries, marginal_residual, cost, solver: Solver::Exact { pivots: out.pivots } },
    })
}

/// Debiased Sinkhorn estimate `sqrt(S_eps)` with
/// `S_eps = OT_eps(mu, nu) - (OT_eps(mu, mu) + OT_eps(nu, nu)) / 2`.
pub fn w2_entropic(
    m: &MetricMeasureSpace,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    epsilon: f64,
) -> Result<Wasserstein> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter("epsilon must be positive".into()));
    }
    let tol = sinkhorn::TOL;
    let cross = sinkhorn::solve(&mu.weights, &nu.weights, &cost_matrix(m, mu, nu)?, epsilon, tol)?;
    let self_mu = sinkhorn::solve(&mu.weights, &mu.weights, &cost_matrix(m, mu, mu)?, epsilon, tol)?;
    let self_nu = sinkhorn::solve(&nu.weights, &nu.weights, &cost_matrix(m, nu, nu)?, epsilon, tol)?;
    let s = cross.value - 0.5 * (self_mu.value + self_nu.value);
    let n2 = nu.len();
    let entries = cross
        .plan
        .iter()
        .enumerate()
        .filter(|(_, f)| **f > 0.0)
        .map(|(e, f)| (mu.support[e / n2], nu.support[e % n2], *f))
        .collect();
    Ok(Wasserstein {
        distance: s.max(0.0).sqrt(),
        plan: TransportPlan {
            entries,
            marginal_residual: marginal_residuals(mu, nu, &cross.plan),
            cost: cross.transport_cost,
            solver: Solver::Entropic { epsilon, iterations: cross.iterations },
        },
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContractionReport {
    pub t: f64,
    pub y: usize,
    pub z: usize,
    pub w2: f64,
    pub distance: f64,
    /// `e^{-K t} d(y, z)`.
    pub bound: f64,
    pub ratio: f64,
    pub k: f64,
}

/// `W_2(p_t(., y) omega, p_t(., z) omega) / (e^{-K t} d(y, z))` with `K` the
/// Bakry-Emery lower bound of `Ric + Hess f`.
pub fn contraction_check(
    m: &MetricMeasureSpace,
    h: &SpectralHeatOperator,
    t: f64,
    y: usize,
    z: usize,
) -> Result<ContractionReport> {
    let k = m.bakry_emery_k()?;
    let distance = m.geodesic_distance(y, z)?;
    if distance == 0.0 {
        return Err(Error::InvalidParameter("contraction check needs distinct vertices".into()));
    }
    let mu = DiscreteMeasure::heat(m, h, t, y)?;
    let nu = DiscreteMeasure::heat(m, h, t, z)?;
    let w2 = w2_exact(m, &mu, &nu)?.distance;
    let bound = (-k * t).exp() * distance;
    Ok(ContractionReport { t, y, z, w2, distance, bound, ratio: w2 / bound, k })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CouplingReport {
    pub t: f64,
    /// `(1/2q) sum_k d(y_k, cm)^2`.
    pub a: f64,
    /// `(1/2q) sum_k W_2(p_t delta_k, p_t delta_cm)^2`.
    pub a_t: f64,
    /// `e^{-2 K t} a` with `K` the Ricci lower bound of `(M, g)`.
    pub bound: f64,
    pub ratio: f64,
    /// Interpolation weights defining the heat measure at the center of mass.
    pub center: Vec<(usize, f64)>,
}

/// Center-of-mass coupling of the vertices `points` and its heat deformation.
pub fn coupling_deformation(
    m: &MetricMeasureSpace,
    h: &SpectralHeatOperator,
    points: &[usize],
    t: f64,
) -> Result<CouplingReport> {
    for &p in points {
        m.check_vertex(p)?;
    }
    let pts: Vec<_> = points.iter().map(|&p| m.point(p)).collect();
    let cm = frechet_mean(m, &pts)?;
    let q = points.len() as f64;
    let a = cm.coupling;
    let center = interpolation_weights(m, cm.vertex, &cm.offset)?;
    let k = match m.dim() {
        1 => 0.0,
        _ => m.spec().sectional_curvature(),
    };
    let bound = (-2.0 * k * t).exp() * a;
    let nu = DiscreteMeasure::from_density(m, &h.heat_kernel_mixture(t, &center)?)?;
    let d2: Vec<f64> = points
        .par_iter()
        .map(|&y| {
            let mu = DiscreteMeasure::heat(m, h, t, y)?;
            Ok(w2_exact(m, &mu, &nu)?.plan.cost)
        })
        .collect::<Result<_>>()?;
    let a_t = d2.iter().sum::<f64>() / (2.0 * q);
    let ratio = if bound > 0.0 { a_t / bound } else { f64::NAN };
    Ok(CouplingReport { t, a, a_t, bound, ratio, center })
}

#[cfg(test)]
mod tests;
