use super::{ManifoldSpec, MetricMeasureSpace, Point, Tangent};
use crate::error::{Error, Result};

pub(crate) fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub(crate) fn normalize(a: &[f64; 3]) -> [f64; 3] {
    let r = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    [a[0] / r, a[1] / r, a[2] / r]
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// `e1 = normalize(a x n)` with `a = z` (or `x` near the poles), `e2 = n x e1`.
pub(crate) fn sphere_frame(p: &[f64; 3]) -> [[f64; 3]; 2] {
    let n = normalize(p);
    let a = if n[2].abs() > 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 0.0, 1.0] };
    let e1 = normalize(&cross(&a, &n));
    let e2 = cross(&n, &e1);
    [e1, e2]
}

fn sphere_angle(p: &[f64; 3], q: &[f64; 3]) -> f64 {
    let s = (dot3(&cross(p, q), &cross(p, q))).sqrt();
    s.atan2(dot3(p, q))
}

/// Log map on a sphere through the origin, in the given frame at `p`.
pub(crate) fn sphere_log(p: &[f64; 3], frame: &[[f64; 3]; 2], q: &[f64; 3]) -> [f64; 2] {
    let r = dot3(p, p).sqrt();
    let theta = sphere_angle(p, q);
    let c = dot3(p, q) / (r * r);
    let t = [q[0] - c * p[0], q[1] - c * p[1], q[2] - c * p[2]];
    let tn = dot3(&t, &t).sqrt();
    if tn == 0.0 {
        return [0.0, 0.0];
    }
    let s = r * theta / tn;
    [s * dot3(&t, &frame[0]), s * dot3(&t, &frame[1])]
}

fn wrap(x: f64, l: f64) -> f64 {
    x.rem_euclid(l)
}

/// Signed minimal-image difference `b - a` on a circle of length `l`.
fn wrap_diff(a: f64, b: f64, l: f64) -> f64 {
    let d = (b - a).rem_euclid(l);
    if d > 0.5 * l {
        d - l
    } else {
        d
    }
}

pub(crate) fn distance(spec: &ManifoldSpec, a: &Point, b: &Point) -> f64 {
    match spec {
        ManifoldSpec::Circle { .. } => {
            let c = spec.circumference().unwrap();
            wrap_diff(a[0], b[0], c).abs()
        }
        ManifoldSpec::FlatTorus { sides, .. } => {
            let dx = wrap_diff(a[0], b[0], sides[0]);
            let dy = wrap_diff(a[1], b[1], sides[1]);
            dx.hypot(dy)
        }
        ManifoldSpec::RoundSphere { radius, .. } => radius * sphere_angle(a, b),
    }
}

pub(crate) fn frame_at(spec: &ManifoldSpec, p: &Point) -> [[f64; 3]; 2] {
    match spec {
        ManifoldSpec::Circle { .. } => [[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]],
        ManifoldSpec::FlatTorus { .. } => [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        ManifoldSpec::RoundSphere { .. } => sphere_frame(p),
    }
}

pub(crate) fn log(spec: &ManifoldSpec, p: &Point, q: &Point) -> Tangent {
    match spec {
        ManifoldSpec::Circle { .. } => [wrap_diff(p[0], q[0], spec.circumference().unwrap()), 0.0],
        ManifoldSpec::FlatTorus { sides, .. } => [wrap_diff(p[0], q[0], sides[0]), wrap_diff(p[1], q[1], sides[1])],
        ManifoldSpec::RoundSphere { .. } => sphere_log(p, &sphere_frame(p), q),
    }
}

pub(crate) fn exp(spec: &ManifoldSpec, p: &Point, v: &Tangent) -> Point {
    match spec {
        ManifoldSpec::Circle { factor, .. } => {
            let c = spec.circumference().unwrap();
            let s = wrap(p[0] + v[0], c);
            [s, arclength_to_param(factor, s), 0.0]
        }
        ManifoldSpec::FlatTorus { sides, .. } => [wrap(p[0] + v[0], sides[0]), wrap(p[1] + v[1], sides[1]), 0.0],
        ManifoldSpec::RoundSphere { radius, .. } => {
            let f = sphere_frame(p);
            let w = [
                v[0] * f[0][0] + v[1] * f[1][0],
                v[0] * f[0][1] + v[1] * f[1][1],
                v[0] * f[0][2] + v[1] * f[1][2],
            ];
            let len = dot3(&w, &w).sqrt();
            if len == 0.0 {
                return *p;
            }
            let th = len / radius;
            let (s, c) = th.sin_cos();
            let out = [
                c * p[0] + s * radius * w[0] / len,
                c * p[1] + s * radius * w[1] / len,
                c * p[2] + s * radius * w[2] / len,
            ];
            let u = normalize(&out);
            [u[0] * radius, u[1] * radius, u[2] * radius]
        }
    }
}

/// Inverts `s = int_0^x a` by Newton iteration.
pub(crate) fn arclength_to_param(factor: &super::ConformalFactor, s: f64) -> f64 {
    let c = factor.primitive(2.0 * std::f64::consts::PI);
    let mut x = s / c * 2.0 * std::f64::consts::PI;
    for _ in 0..50 {
        let r = factor.primitive(x) - s;
        let dx = r / factor.eval(x);
        x -= dx;
        if dx.abs() < 1e-15 {
            break;
        }
    }
    x
}

/// Riemannian center of mass of a cluster.
#[derive(Clone, Debug, PartialEq)]
pub struct FrechetMean {
    pub point: Point,
    /// Nearest vertex and the log-map offset from it.
    pub vertex: usize,
    pub offset: Tangent,
    /// `F = (1/2) sum_k d(point, y_k)^2`.
    pub value: f64,
    /// `a = F / q`.
    pub coupling: f64,
    pub iterations: usize,
}

/// Minimizes `F(y) = (1/2) sum_k d(y, y_k)^2` by Riemannian gradient descent
/// with step `1/q`. All points must lie within the localization radius of
/// the first one.
pub fn frechet_mean(m: &MetricMeasureSpace, points: &[Point]) -> Result<FrechetMean> {
    let spec = m.spec();
    if points.is_empty() {
        return Err(Error::InvalidParameter("empty point set".into()));
    }
    let r0 = spec.localization_radius();
    let spread = points.iter().map(|p| distance(spec, &points[0], p)).fold(0.0, f64::max);
    if spread >= r0 {
        return Err(Error::NotLocalized { r0, spread });
    }
    let q = points.len() as f64;
    let mut y = points[0];
    let max_iter = 10_000;
    let tol = 1e-13 * spec.diameter();
    for it in 0..max_iter {
        let mut g = [0.0, 0.0];
        for p in points {
            let l = log(spec, &y, p);
            g[0] += l[0] / q;
            g[1] += l[1] / q;
        }
        let norm = g[0].hypot(g[1]);
        if norm <= tol {
            return Ok(finish(m, y, points, it));
        }
        y = exp(spec, &y, &g);
    }
    let mut g = [0.0, 0.0];
    for p in points {
        let l = log(spec, &y, p);
        g[0] += l[0] / q;
        g[1] += l[1] / q;
    }
    Err(Error::FrechetNotConverged { iterations: max_iter, residual: g[0].hypot(g[1]) })
}

fn finish(m: &MetricMeasureSpace, y: Point, points: &[Point], iterations: usize) -> FrechetMean {
    let spec = m.spec();
    let value = 0.5 * points.iter().map(|p| distance(spec, &y, p).powi(2)).sum::<f64>();
    let vertex = m.nearest_vertex(&y);
    FrechetMean {
        point: y,
        vertex,
        offset: m.log_at(vertex, &y),
        value,
        coupling: value / points.len() as f64,
        iterations,
    }
}

/// Nonnegative weights on `vertex` and two of its neighbours reproducing the
/// point `exp_vertex(offset)` by linear interpolation in the log chart.
pub fn interpolation_weights(m: &MetricMeasureSpace, vertex: usize, offset: &Tangent) -> Result<Vec<(usize, f64)>> {
    m.check_vertex(vertex)?;
    let legs: Vec<(usize, Tangent)> = m.neighbors(vertex).iter().map(|&(j, _)| (j, m.log_at(vertex, &m.point(j)))).collect();
    if offset[0].hypot(offset[1]) < 1e-14 * m.max_edge() {
        return Ok(vec![(vertex, 1.0)]);
    }
    if m.dim() == 1 {
        let (j, l) = legs
            .iter()
            .find(|(_, l)| l[0] * offset[0] > 0.0)
            .ok_or_else(|| Error::InvalidParameter("no neighbour on the side of the offset".into()))?;
        let a = offset[0] / l[0];
        return Ok(vec![(vertex, 1.0 - a), (*j, a)]);
    }
    let mut sorted = legs;
    sorted.sort_by(|a, b| a.1[1].atan2(a.1[0]).total_cmp(&b.1[1].atan2(b.1[0])));
    let mut best: Option<(f64, Vec<(usize, f64)>)> = None;
    for k in 0..sorted.len() {
        let (j, a) = sorted[k];
        let (l, b) = sorted[(k + 1) % sorted.len()];
        let det = a[0] * b[1] - a[1] * b[0];
        if det.abs() < 1e-300 {
            continue;
        }
        let alpha = (offset[0] * b[1] - offset[1] * b[0]) / det;
        let beta = (a[0] * offset[1] - a[1] * offset[0]) / det;
        let gamma = 1.0 - alpha - beta;
        let violation = (-alpha).max(-beta).max(-gamma).max(0.0);
        if best.as_ref().is_none_or(|(v, _)| violation < *v) {
            best = Some((violation, vec![(vertex, gamma), (j, alpha), (l, beta)]));
        }
    }
    let (violation, w) = best.ok_or_else(|| Error::InvalidParameter("degenerate vertex star".into()))?;
    if violation > 1e-9 {
        return Err(Error::InvalidParameter(format!("offset leaves the vertex star (violation {violation:.3e})")));
    }
    // Clip round-off and renormalize.
    let w: Vec<(usize, f64)> = w.into_iter().map(|(i, x)| (i, x.max(0.0))).collect();
    let s: f64 = w.iter().map(|(_, x)| x).sum();
    Ok(w.into_iter().map(|(i, x)| (i, x / s)).collect())
}
