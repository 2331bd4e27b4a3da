use std::f64::consts::PI;

use super::{ConformalFactor, Edge, RawMesh, Stencil};

/// Circle with `ds = a(x) dx`, sampled uniformly in `x`. Points carry the
/// arclength coordinate in slot 0 and the parameter in slot 1.
pub(crate) fn circle(n: usize, factor: &ConformalFactor) -> RawMesh {
    let dx = 2.0 * PI / n as f64;
    let xs: Vec<f64> = (0..n).map(|i| i as f64 * dx).collect();
    let s: Vec<f64> = xs.iter().map(|&x| factor.primitive(x)).collect();
    let total = factor.primitive(2.0 * PI);
    // Segment i joins vertex i to i+1.
    let seg: Vec<f64> = (0..n)
        .map(|i| if i + 1 < n { s[i + 1] - s[i] } else { total - s[i] })
        .collect();
    let points = (0..n).map(|i| [s[i], xs[i], 0.0]).collect();
    let frames = vec![[[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]; n];
    let mass = (0..n).map(|i| 0.5 * (seg[(i + n - 1) % n] + seg[i])).collect();
    let edges = (0..n)
        .map(|i| {
            let j = (i + 1) % n;
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            Edge { i: a, j: b, kappa: 1.0 / seg[i], length: seg[i] }
        })
        .collect();
    let mut grad = Vec::with_capacity(n);
    let mut hess = Vec::with_capacity(n);
    for i in 0..n {
        let a = seg[(i + n - 1) % n];
        let b = seg[i];
        let im = (i + n - 1) % n;
        let ip = (i + 1) % n;
        // Quadratic interpolation through (-a, u_-), (0, u_0), (b, u_+).
        grad.push(vec![(im, [-b / (a * (a + b)), 0.0]), (ip, [a / (b * (a + b)), 0.0])]);
        hess.push(vec![(im, [2.0 / (a * (a + b)), 0.0, 0.0]), (ip, [2.0 / (b * (a + b)), 0.0, 0.0])]);
    }
    RawMesh { points, frames, mass, edges, grad: Stencil::from_rows(grad), hess: Stencil::from_rows(hess) }
}

/// Periodic lattice with `nx * ny` vertices, index `ix + nx * iy`.
pub(crate) fn torus(res: [usize; 2], sides: [f64; 2]) -> RawMesh {
    let [nx, ny] = res;
    let hx = sides[0] / nx as f64;
    let hy = sides[1] / ny as f64;
    let id = |ix: usize, iy: usize| (ix % nx) + nx * (iy % ny);
    let n = nx * ny;
    let mut points = Vec::with_capacity(n);
    for iy in 0..ny {
        for ix in 0..nx {
            points.push([ix as f64 * hx, iy as f64 * hy, 0.0]);
        }
    }
    let frames = vec![[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]; n];
    let mass = vec![hx * hy; n];
    let mut edges = Vec::with_capacity(2 * n);
    for iy in 0..ny {
        for ix in 0..nx {
            let i = id(ix, iy);
            for (j, kappa, length) in [(id(ix + 1, iy), hy / hx, hx), (id(ix, iy + 1), hx / hy, hy)] {
                let (a, b) = if i < j { (i, j) } else { (j, i) };
                edges.push(Edge { i: a, j: b, kappa, length });
            }
        }
    }
    let mut grad = Vec::with_capacity(n);
    let mut hess = Vec::with_capacity(n);
    for iy in 0..ny {
        for ix in 0..nx {
            let xp = id(ix + 1, iy);
            let xm = id(ix + nx - 1, iy);
            let yp = id(ix, iy + 1);
            let ym = id(ix, iy + ny - 1);
            grad.push(vec![
                (xp, [0.5 / hx, 0.0]),
                (xm, [-0.5 / hx, 0.0]),
                (yp, [0.0, 0.5 / hy]),
                (ym, [0.0, -0.5 / hy]),
            ]);
            let cxy = 0.25 / (hx * hy);
            hess.push(vec![
                (xp, [1.0 / (hx * hx), 0.0, 0.0]),
                (xm, [1.0 / (hx * hx), 0.0, 0.0]),
                (yp, [0.0, 0.0, 1.0 / (hy * hy)]),
                (ym, [0.0, 0.0, 1.0 / (hy * hy)]),
                (id(ix + 1, iy + 1), [0.0, cxy, 0.0]),
                (id(ix + nx - 1, iy + ny - 1), [0.0, cxy, 0.0]),
                (id(ix + 1, iy + ny - 1), [0.0, -cxy, 0.0]),
                (id(ix + nx - 1, iy + 1), [0.0, -cxy, 0.0]),
            ]);
        }
    }
    RawMesh { points, frames, mass, edges, grad: Stencil::from_rows(grad), hess: Stencil::from_rows(hess) }
}
