use std::collections::{BTreeSet, HashMap};

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};

use super::geometry::{cross, normalize, sphere_frame, sphere_log};
use super::{Edge, RawMesh, Stencil};
use crate::error::{Error, Result};

/// Subdivided icosahedron projected to the sphere of radius `r`. Vertices of
/// coarser levels keep their indices, so the first `10 * 4^k + 2` vertices
/// form level `k`.
pub(crate) fn icosphere(subdivisions: usize, r: f64) -> Result<RawMesh> {
    let (verts, faces) = icosphere_topology(subdivisions);
    let points: Vec<[f64; 3]> = verts.iter().map(|v| [v[0] * r, v[1] * r, v[2] * r]).collect();
    let n = points.len();

    let mut mass = vec![0.0; n];
    let mut kappa: HashMap<(usize, usize), f64> = HashMap::new();
    for f in &faces {
        let p = [points[f[0]], points[f[1]], points[f[2]]];
        let area = 0.5 * norm(&cross(&sub(&p[1], &p[0]), &sub(&p[2], &p[0])));
        for k in 0..3 {
            mass[f[k]] += area / 3.0;
            let a = f[(k + 1) % 3];
            let b = f[(k + 2) % 3];
            let c = p[k];
            let u = sub(&points[a], &c);
            let v = sub(&points[b], &c);
            let cot = dot3(&u, &v) / norm(&cross(&u, &v));
            *kappa.entry(ordered(a, b)).or_insert(0.0) += 0.5 * cot;
        }
    }
    let mut keys: Vec<_> = kappa.keys().cloned().collect();
    keys.sort_unstable();
    let edges: Vec<Edge> = keys
        .iter()
        .map(|&(i, j)| {
            let c = dot3(&points[i], &points[j]) / (r * r);
            let s = norm(&cross(&points[i], &points[j])) / (r * r);
            Edge { i, j, kappa: kappa[&(i, j)], length: r * s.atan2(c) }
        })
        .collect();

    let frames: Vec<[[f64; 3]; 2]> = points.iter().map(sphere_frame).collect();

    let mut nbrs = vec![BTreeSet::new(); n];
    for e in &edges {
        nbrs[e.i].insert(e.j);
        nbrs[e.j].insert(e.i);
    }
    let mut grad = Vec::with_capacity(n);
    let mut hess = Vec::with_capacity(n);
    for i in 0..n {
        let mut ring: BTreeSet<usize> = BTreeSet::new();
        for &j in &nbrs[i] {
            ring.insert(j);
            ring.extend(nbrs[j].iter().cloned());
        }
        ring.remove(&i);
        let ring: Vec<usize> = ring.into_iter().collect();
        let coords: Vec<[f64; 2]> = ring.iter().map(|&j| sphere_log(&points[i], &frames[i], &points[j])).collect();
        let w = quadratic_fit_weights(&coords)
            .ok_or_else(|| Error::HessianUnavailable(format!("quadratic fit is singular at vertex {i}")))?;
        grad.push(ring.iter().zip(&w).map(|(&j, c)| (j, [c[0], c[1]])).collect());
        hess.push(ring.iter().zip(&w).map(|(&j, c)| (j, [c[2], c[3], c[4]])).collect());
    }
    Ok(RawMesh { points, frames, mass, edges, grad: Stencil::from_rows(grad), hess: Stencil::from_rows(hess) })
}

/// Least-squares weights for `u(v) - u(0) ~ g.v + v^T H v / 2` with basis
/// `[x, y, x^2/2, xy, y^2/2]`. Row `j` of the result maps sample `j` to the
/// five coefficients.
fn quadratic_fit_weights(coords: &[[f64; 2]]) -> Option<Vec<[f64; 5]>> {
    let m = coords.len();
    if m < 5 {
        return None;
    }
    let scale = coords.iter().map(|c| c[0].hypot(c[1])).fold(0.0, f64::max);
    // Work in scaled coordinates to keep the normal matrix well conditioned.
    let basis = |c: &[f64; 2]| {
        let (x, y) = (c[0] / scale, c[1] / scale);
        [x, y, 0.5 * x * x, x * y, 0.5 * y * y]
    };
    let x = Mat::from_fn(m, 5, |r, k| basis(&coords[r])[k]);
    let xtx = x.transpose() * &x;
    let llt = xtx.llt(Side::Lower).ok()?;
    let sol = llt.solve(x.transpose().to_owned());
    let unscale = [1.0 / scale, 1.0 / scale, 1.0 / (scale * scale), 1.0 / (scale * scale), 1.0 / (scale * scale)];
    Some((0..m).map(|r| std::array::from_fn(|k| sol[(k, r)] * unscale[k])).collect())
}

pub(crate) fn icosphere_topology(subdivisions: usize) -> (Vec<[f64; 3]>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<[f64; 3]> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(normalize)
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mid = [0usize; 3];
            for k in 0..3 {
                let key = ordered(f[k], f[(k + 1) % 3]);
                mid[k] = *cache.entry(key).or_insert_with(|| {
                    let a = verts[key.0];
                    let b = verts[key.1];
                    verts.push(normalize(&[a[0] + b[0], a[1] + b[1], a[2] + b[2]]));
                    verts.len() - 1
                });
            }
            next.push([f[0], mid[0], mid[2]]);
            next.push([f[1], mid[1], mid[0]]);
            next.push([f[2], mid[2], mid[1]]);
            next.push([mid[0], mid[1], mid[2]]);
        }
        faces = next;
    }
    (verts, faces)
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: &[f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}
