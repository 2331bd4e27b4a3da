//! Distance on the warped product and the epsilon-approximate energy.

use std::f64::consts::PI;

use petgraph::algo::dijkstra;
use petgraph::graph::{DiGraph, NodeIndex};

use super::{cluster, MapRule, SigmaDilaton, SurfaceGrid};
use crate::error::{Error, Result};
use crate::manifold::{MetricMeasureSpace, Point};

/// Point `(y, xi)` of `M x T^q`, `xi` in unit-period coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct WarpedPoint {
    pub vertex: usize,
    pub xi: Vec<f64>,
}

/// Discretization of `M x_f T^q` for path search.
///
/// A geodesic moves the fiber coordinate along the straight line joining the
/// two fiber points, so the search runs over `M x [0, L]`, `L` the fiber
/// separation, with `levels + 1` fiber levels. Every vertex is joined to all
/// vertices within `radius` and every higher level, with edge length
/// `sqrt(d^2 + e^{-(f_i + f_j)/q} ds^2)`.
#[derive(Clone, Debug)]
pub struct WarpedContext<'a> {
    manifold: &'a MetricMeasureSpace,
    /// `f / q` at the vertices.
    scaled: Vec<f64>,
    q: usize,
    levels: usize,
    balls: Vec<Vec<(usize, f64)>>,
}

impl<'a> WarpedContext<'a> {
    pub fn new(manifold: &'a MetricMeasureSpace, f: &SigmaDilaton, q: usize, levels: usize, radius_factor: f64) -> Result<Self> {
        if q == 0 {
            return Err(Error::InvalidParameter("fiber dimension q must be positive".into()));
        }
        if levels == 0 {
            return Err(Error::InvalidParameter("at least one fiber level is required".into()));
        }
        if !(radius_factor >= 1.0) {
            return Err(Error::InvalidParameter(format!("radius factor {radius_factor} < 1")));
        }
        let spec = manifold.spec();
        let scaled = manifold.points().iter().map(|p| Ok(f.eval(spec, p)? / q as f64)).collect::<Result<Vec<_>>>()?;
        let radius = radius_factor * manifold.max_edge() * (1.0 + 1e-9);
        let balls = (0..manifold.n()).map(|i| ball(manifold, i, radius)).collect();
        Ok(WarpedContext { manifold, scaled, q, levels, balls })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// Length scale of the base discretization.
    pub fn spacing(&self) -> f64 {
        self.manifold.max_edge()
    }
}

/// Vertices other than `i` within geodesic distance `radius`, found by a
/// breadth-first search over mesh edges.
fn ball(m: &MetricMeasureSpace, i: usize, radius: f64) -> Vec<(usize, f64)> {
    let pi = m.point(i);
    let mut seen = vec![i];
    let mut frontier = vec![i];
    let mut out = Vec::new();
    while let Some(v) = frontier.pop() {
        for &(j, _) in m.neighbors(v) {
            if seen.contains(&j) {
                continue;
            }
            seen.push(j);
            let d = m.spec().distance(&pi, &m.point(j));
            if d <= radius {
                out.push((j, d));
                frontier.push(j);
            }
        }
    }
    out.sort_by_key(|x| x.0);
    out
}

fn fiber_separation(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = (x - y).rem_euclid(1.0);
            d.min(1.0 - d).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

/// Shortest-path distance between two points of the warped product.
pub fn warped_distance(ctx: &WarpedContext<'_>, p: &WarpedPoint, q: &WarpedPoint) -> Result<f64> {
    let m = ctx.manifold;
    m.check_vertex(p.vertex)?;
    m.check_vertex(q.vertex)?;
    if p.xi.len() != ctx.q || q.xi.len() != ctx.q {
        return Err(Error::InvalidParameter(format!(
            "fiber coordinates have lengths {} and {}, expected {}",
            p.xi.len(),
            q.xi.len(),
            ctx.q
        )));
    }
    let len = fiber_separation(&p.xi, &q.xi);
    if len == 0.0 {
        return m.geodesic_distance(p.vertex, q.vertex);
    }
    let k = ctx.levels;
    let ds = len / k as f64;
    let node = |v: usize, a: usize| NodeIndex::new(v * (k + 1) + a);
    let mut g: DiGraph<(), f64> = DiGraph::with_capacity(m.n() * (k + 1), 0);
    for _ in 0..m.n() * (k + 1) {
        g.add_node(());
    }
    for i in 0..m.n() {
        let ui = ctx.scaled[i];
        for a in 0..=k {
            for b in a + 1..=k {
                let s = (b - a) as f64 * ds * (-ui).exp();
                g.add_edge(node(i, a), node(i, b), s);
            }
            for &(j, d) in &ctx.balls[i] {
                let w = (-0.5 * (ui + ctx.scaled[j])).exp();
                for b in a..=k {
                    let s = (b - a) as f64 * ds * w;
                    g.add_edge(node(i, a), node(j, b), d.hypot(s));
                }
            }
        }
    }
    let goal = node(q.vertex, k);
    let dist = dijkstra(&g, node(p.vertex, 0), Some(goal), |e| *e.weight());
    dist.get(&goal)
        .copied()
        .ok_or_else(|| Error::InvalidParameter("warped points are not connected".into()))
}

/// Points of the disk sample.
pub const STENCIL_SIZE: usize = 32;

/// Unit-disk stencil: four radii, each replicated over the eight symmetries
/// of the square so that second moments are isotropic.
pub(super) fn unit_stencil() -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(STENCIL_SIZE);
    for j in 0..4 {
        let r = ((j as f64 + 0.5) / 4.0).sqrt();
        let th = (j as f64 + 0.5) * PI / 16.0;
        let (x, y) = (r * th.cos(), r * th.sin());
        for (a, b) in [(x, y), (y, x)] {
            for (sa, sb) in [(1.0, 1.0), (-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)] {
                out.push([sa * a, sb * b]);
            }
        }
    }
    out
}

/// Epsilon-approximate energy and its two-term split.
#[derive(Clone, Debug, PartialEq)]
pub struct EpsEnergy {
    pub eps: f64,
    pub value: f64,
    /// Contribution of `d_g^2`, tending to `E[phi, g]`.
    pub base: f64,
    /// Fiber contribution, tending to `(F / 2) D[f / q]`.
    pub fiber: f64,
}

/// `E_eps = (1 / 2 m2) sum_x area(x) G(x) / eps^2`, where `G(x)` is the mean
/// of `d_h^2(Phi(x), Phi(x + v))` over the stencil scaled to the
/// `gamma`-disk of radius `eps` and `m2` is the stencil's second moment.
/// `d_h^2` uses the product split
/// `d_g^2 + (F/2) e^{-2f(x)/q} |e^{f(x)/q} - e^{f(x + v)/q}|^2`.
pub fn eps_energy(
    manifold: &MetricMeasureSpace,
    grid: &SurfaceGrid,
    rule: &MapRule,
    f: &SigmaDilaton,
    points: &[Point],
    eps: f64,
) -> Result<EpsEnergy> {
    if !(eps > grid.spacing()) {
        return Err(Error::InvalidParameter(format!(
            "eps = {eps} is under-resolved by the surface grid spacing {}",
            grid.spacing()
        )));
    }
    let c = cluster(manifold, points)?;
    let qf = points.len() as f64;
    let spec = manifold.spec();
    let stencil = unit_stencil();
    let m2 = stencil.iter().map(|v| v[0] * v[0]).sum::<f64>() / stencil.len() as f64;
    let (mut base, mut fiber) = (0.0, 0.0);
    for k in 0..grid.len() {
        let x = grid.coords(k);
        let scale = eps * (-0.5 * grid.log_factor()[k]).exp();
        let px = rule.eval(manifold, x)?;
        let ux = f.eval(spec, &px)? / qf;
        let (mut gb, mut gf) = (0.0, 0.0);
        for v in &stencil {
            let py = rule.eval(manifold, [x[0] + scale * v[0], x[1] + scale * v[1]])?;
            let uy = f.eval(spec, &py)? / qf;
            gb += spec.distance(&px, &py).powi(2);
            gf += 0.5 * c.f_cm * (-2.0 * ux).exp() * (ux.exp() - uy.exp()).powi(2);
        }
        let w = grid.area(k) / (stencil.len() as f64 * m2 * eps * eps);
        base += w * gb;
        fiber += w * gf;
    }
    Ok(EpsEnergy { eps, value: 0.5 * (base + fiber), base: 0.5 * base, fiber: 0.5 * fiber })
}
