use std::f64::consts::PI;

use rand::Rng;
use wassflow::heat::{eigendecompose, varadhan_limit};
use wassflow::manifold::{DilatonRule, ManifoldSpec};

use super::{label, rel, Context, RunError};
use crate::report::{Bound, Check, Outcome, Table};
use crate::row;

fn bump() -> DilatonRule {
    DilatonRule::Bump { amplitude: 0.5, concentration: 1.0, center: [0.3, 0.6, 0.0] }
}

pub fn axioms(ctx: &Context) -> Result<Outcome, RunError> {
    let samples = ctx.count("samples", 1)?;
    let mut out = Outcome::default();
    let mut mass = Table::new("mass", &["case", "t", "z", "error"]);
    let mut sym = Table::new("symmetry", &["case", "t", "y", "z", "error"]);
    let mut semi = Table::new("semigroup", &["case", "s", "t", "y", "z", "error"]);
    let (mut e_mass, mut e_sym, mut e_semi) = (0.0f64, 0.0f64, 0.0f64);
    let cases = ctx.manifolds(vec![ManifoldSpec::unit_torus(32), ManifoldSpec::sphere(3)]);
    let mut stage = 0;
    for spec in &cases {
        for f in ctx.dilatons(vec![DilatonRule::Zero, bump()]) {
            let name = label(spec, &f);
            let m = ctx.build(spec, &f)?;
            let h = ctx.stage("eigendecomposition", eigendecompose(&m, None))?;
            let ts = ctx.times(h.t_min(), || vec![h.t_min(), 3.0 * h.t_min()])?;
            let (lo, hi) = (ts.iter().cloned().fold(f64::INFINITY, f64::min), ts.iter().cloned().fold(0.0, f64::max));
            let w = m.omega();
            stage += 1;
            let mut rng = ctx.rng(stage);
            for _ in 0..samples {
                let s = rng.random_range(lo..=hi);
                let t = rng.random_range(lo..=hi);
                let y = rng.random_range(0..m.n());
                let z = rng.random_range(0..m.n());
                let pz = ctx.stage("heat kernel", h.heat_kernel(t, z))?;
                let py = ctx.stage("heat kernel", h.heat_kernel(t, y))?;
                let em = (pz.iter().zip(w).map(|(p, w)| p * w).sum::<f64>() - 1.0).abs();
                let es = (pz[y] - py[z]).abs() / pz[y].abs().max(1.0);
                let ps = ctx.stage("heat kernel", h.heat_kernel(s, y))?;
                let comp: f64 = (0..m.n()).map(|i| ps[i] * pz[i] * w[i]).sum();
                let direct = ctx.stage("heat kernel", h.heat_kernel(s + t, z))?[y];
                let eg = (comp - direct).abs() / direct.abs().max(1.0);
                mass.row(row![name.as_str(), t, z, em]);
                sym.row(row![name.as_str(), t, y, z, es]);
                semi.row(row![name.as_str(), s, t, y, z, eg]);
                e_mass = e_mass.max(em);
                e_sym = e_sym.max(es);
                e_semi = e_semi.max(eg);
            }
        }
    }
    out.check(Check::new(1, "max mass error", e_mass, Bound::AtMost { limit: ctx.tol("mass") }));
    out.check(Check::new(1, "max symmetry error", e_sym, Bound::AtMost { limit: ctx.tol("symmetry") }));
    out.check(Check::new(1, "max semigroup error", e_semi, Bound::AtMost { limit: ctx.tol("semigroup") }));
    out.table(mass);
    out.table(sym);
    out.table(semi);
    Ok(out)
}

/// `e^{-s} I_k(s)` by the trapezoid rule on `(1/pi) int_0^pi e^{s(cos th - 1)} cos(k th)`.
fn scaled_bessel(k: i64, s: f64) -> f64 {
    let steps = 4096;
    let mut acc = 0.0;
    for j in 0..=steps {
        let th = PI * j as f64 / steps as f64;
        let w = if j == 0 || j == steps { 0.5 } else { 1.0 };
        acc += w * (s * (th.cos() - 1.0)).exp() * (k as f64 * th).cos();
    }
    acc / steps as f64
}

/// Kernel of the continuous-time random walk generated by the 5-point
/// Laplacian on an `n x n` torus of side `side`, against the uniform
/// probability measure: a wrapped product of lattice Gaussians.
fn lattice_kernel(n: usize, side: f64, t: f64, dx: i64, dy: i64) -> f64 {
    let h = side / n as f64;
    let s = 2.0 * t / (h * h);
    let axis = |d: i64| (-20..=20).map(|j| scaled_bessel(d + j * n as i64, s)).sum::<f64>();
    (n * n) as f64 * axis(dx) * axis(dy)
}

pub fn varadhan(ctx: &Context) -> Result<Outcome, RunError> {
    let pairs = ctx.count("pairs", 1)?;
    let mut out = Outcome::default();
    let mut table = Table::new("varadhan", &["case", "y", "z", "distance", "extrapolated", "quarter_d2", "rel_error"]);
    let mut oracle = Table::new("kernel_oracle", &["case", "t", "y", "z", "spectral", "lattice", "error"]);
    let mut seq = Table::new("sequence", &["case", "y", "z", "t", "raw", "corrected"]);
    let cases = ctx.manifolds(vec![ManifoldSpec::unit_torus(32), ManifoldSpec::sphere(4)]);
    let f = ctx.dilatons(vec![DilatonRule::Zero]).remove(0);
    let (mut worst, mut worst_oracle) = (0.0f64, 0.0f64);
    let mut have_oracle = false;
    for (ci, spec) in cases.iter().enumerate() {
        let name = label(spec, &f);
        let m = ctx.build(spec, &f)?;
        let h = ctx.stage("eigendecomposition", eigendecompose(&m, None))?;
        let sched = ctx.times(h.t_min(), || [2.0, 3.0, 4.0].iter().map(|k| k * h.t_min()).collect())?;
        if sched.len() < 3 {
            return Err(RunError::Config("varadhan needs at least three times".into()));
        }
        let diam = m.spec().diameter();
        let mut rng = ctx.rng(ci as u64);
        let mut found = 0;
        let mut tries = 0;
        while found < pairs {
            tries += 1;
            if tries > 100_000 {
                return Err(RunError::Config(format!("no vertex pairs with diam/6 <= d <= diam/3 on {name}")));
            }
            let y = rng.random_range(0..m.n());
            let z = rng.random_range(0..m.n());
            let d = m.spec().distance(&m.point(y), &m.point(z));
            if !(d >= diam / 6.0 && d <= diam / 3.0) {
                continue;
            }
            found += 1;
            let v = ctx.stage("varadhan limit", varadhan_limit(&m, &h, &sched, y, z))?;
            let q = 0.25 * d * d;
            let e = rel(v.extrapolated, q);
            worst = worst.max(e);
            table.row(row![name.as_str(), y, z, d, v.extrapolated, q, e]);
            for ((t, r), c) in sched.iter().zip(&v.raw).zip(&v.corrected) {
                seq.row(row![name.as_str(), y, z, *t, *r, *c]);
            }
            if let (ManifoldSpec::FlatTorus { resolution, sides }, DilatonRule::Zero) = (m.spec(), &f) {
                if resolution[0] == resolution[1] && sides[0] == sides[1] {
                    have_oracle = true;
                    let n = resolution[0];
                    let (dx, dy) = ((z % n) as i64 - (y % n) as i64, (z / n) as i64 - (y / n) as i64);
                    for &t in &sched {
                        let p = ctx.stage("heat kernel", h.heat_kernel(t, y))?[z];
                        let ex = lattice_kernel(n, sides[0], t, dx, dy);
                        let err = (p - ex).abs() / ex.max(1.0);
                        worst_oracle = worst_oracle.max(err);
                        oracle.row(row![name.as_str(), t, y, z, p, ex, err]);
                    }
                }
            }
        }
    }
    out.check(Check::new(2, "max relative error of extrapolated -t ln p_t vs d^2/4", worst, Bound::AtMost { limit: ctx.tol("varadhan") }));
    if have_oracle {
        out.check(Check::new(2, "max lattice kernel oracle deviation", worst_oracle, Bound::AtMost { limit: ctx.tol("kernel_oracle") }));
    }
    out.table(table);
    out.table(seq);
    if have_oracle {
        out.table(oracle);
    }
    Ok(out)
}
