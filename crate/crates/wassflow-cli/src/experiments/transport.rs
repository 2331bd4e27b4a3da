use rand::Rng;
use rand_chacha::ChaCha8Rng;
use wassflow::extrapolate::linear_to_zero;
use wassflow::heat::eigendecompose;
use wassflow::manifold::{DilatonRule, ManifoldSpec, MetricMeasureSpace};
use wassflow::transport::{contraction_check, coupling_deformation, w2_exact, DiscreteMeasure};

use super::{label, rel, Context, RunError};
use crate::report::{Bound, Check, Outcome, Table};
use crate::row;

fn distinct(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let mut v: Vec<usize> = Vec::with_capacity(k);
    while v.len() < k {
        let x = rng.random_range(0..n);
        if !v.contains(&x) {
            v.push(x);
        }
    }
    v
}

fn random_measure(rng: &mut ChaCha8Rng, n: usize) -> wassflow::Result<DiscreteMeasure> {
    let k = rng.random_range(1..=6);
    let support = distinct(rng, n, k);
    let weights = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    DiscreteMeasure::new(support, weights)
}

/// Minimum of `(1/4) sum d^2` over the 24 bijections between two uniform
/// four-point measures; by Birkhoff this is the optimal cost.
fn brute_force(m: &MetricMeasureSpace, a: &[usize], b: &[usize]) -> f64 {
    let mut best = f64::INFINITY;
    for p in 0..24usize {
        let mut pool: Vec<usize> = (0..4).collect();
        let mut code = p;
        let mut cost = 0.0;
        for (i, &ai) in a.iter().enumerate() {
            let j = pool.remove(code % (4 - i));
            code /= 4 - i;
            cost += 0.25 * m.spec().distance(&m.point(ai), &m.point(b[j])).powi(2);
        }
        best = best.min(cost);
    }
    best
}

fn exact_transport_checks(ctx: &Context, out: &mut Outcome) -> Result<(), RunError> {
    let triples = ctx.count("triples", 1)?;
    let m = ctx.build(&ManifoldSpec::sphere(3), &DilatonRule::Zero)?;
    let n = m.n();
    let mut rng = ctx.rng(1);
    let mut table = Table::new("dirac", &["y", "z", "w2", "geodesic", "rel_error"]);
    let mut worst_dirac = 0.0f64;
    for _ in 0..20 {
        let (y, z) = (rng.random_range(0..n), rng.random_range(0..n));
        let w = ctx.stage("exact transport", w2_exact(&m, &DiscreteMeasure::dirac(y), &DiscreteMeasure::dirac(z)))?.distance;
        let d = ctx.stage("geodesic distance", m.geodesic_distance(y, z))?;
        let e = rel(w, d);
        worst_dirac = worst_dirac.max(e);
        table.row(row![y, z, w, d, e]);
    }
    out.table(table);
    out.check(Check::new(10, "Dirac-to-Dirac W2 vs geodesic distance", worst_dirac, Bound::AtMost { limit: 4.0 * f64::EPSILON }));

    let mut table = Table::new("brute_force", &["trial", "exact_cost", "brute_cost", "error"]);
    let mut worst_bf = 0.0f64;
    for trial in 0..20usize {
        let a = distinct(&mut rng, n, 4);
        let b = distinct(&mut rng, n, 4);
        let mu = ctx.stage("measure", DiscreteMeasure::new(a.clone(), vec![0.25; 4]))?;
        let nu = ctx.stage("measure", DiscreteMeasure::new(b.clone(), vec![0.25; 4]))?;
        let c = ctx.stage("exact transport", w2_exact(&m, &mu, &nu))?.plan.cost;
        let bf = brute_force(&m, &a, &b);
        worst_bf = worst_bf.max((c - bf).abs());
        table.row(row![trial, c, bf, (c - bf).abs()]);
    }
    out.table(table);
    out.check(Check::new(10, "4-point brute-force oracle deviation", worst_bf, Bound::AtMost { limit: ctx.tol("brute_force") }));

    let mut table = Table::new("metric_axioms", &["triple", "w_ab", "w_bc", "w_ac", "w_ba", "w_aa"]);
    let (mut tri, mut sym, mut id) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..triples {
        let a = ctx.stage("measure", random_measure(&mut rng, n))?;
        let b = ctx.stage("measure", random_measure(&mut rng, n))?;
        let c = ctx.stage("measure", random_measure(&mut rng, n))?;
        let w = |x: &DiscreteMeasure, y: &DiscreteMeasure| ctx.stage("exact transport", w2_exact(&m, x, y)).map(|r| r.distance);
        let (ab, bc, ac, ba, aa) = (w(&a, &b)?, w(&b, &c)?, w(&a, &c)?, w(&b, &a)?, w(&a, &a)?);
        tri = tri.max(ac - ab - bc);
        sym = sym.max((ab - ba).abs());
        id = id.max(aa);
        table.row(row![k, ab, bc, ac, ba, aa]);
    }
    out.table(table);
    let bound = Bound::AtMost { limit: ctx.tol("metric_axioms") };
    out.check(Check::new(10, "triangle inequality violation", tri.max(0.0), bound));
    out.check(Check::new(10, "symmetry violation", sym, bound));
    out.check(Check::new(10, "W2(mu, mu)", id, bound));
    Ok(())
}

pub fn contraction(ctx: &Context) -> Result<Outcome, RunError> {
    let pairs = ctx.count("pairs", 1)?;
    let spec = ctx.manifolds(vec![ManifoldSpec::sphere(4)]).remove(0);
    let f = ctx.dilatons(vec![DilatonRule::Zero]).remove(0);
    let m = ctx.build(&spec, &f)?;
    let h = ctx.stage("eigendecomposition", eigendecompose(&m, None))?;
    let ts = ctx.times(h.t_min(), || vec![0.05, 0.1, 0.2])?;
    if let Some(t) = ts.iter().find(|&&t| t < h.t_min()) {
        return Err(RunError::Config(format!("contraction time {t} is below t_min = {} for {}", h.t_min(), label(&spec, &f))));
    }
    let mut rng = ctx.rng(0);
    let mut table = Table::new("contraction", &["t", "y", "z", "distance", "w2", "bound", "ratio"]);
    let mut worst = 0.0f64;
    let mut chosen = Vec::with_capacity(pairs);
    while chosen.len() < pairs {
        let (y, z) = (rng.random_range(0..m.n()), rng.random_range(0..m.n()));
        if y != z {
            chosen.push((y, z));
        }
    }
    for &t in &ts {
        for &(y, z) in &chosen {
            let r = ctx.stage("contraction check", contraction_check(&m, &h, t, y, z))?;
            worst = worst.max(r.ratio);
            table.row(row![t, y, z, r.distance, r.w2, r.bound, r.ratio]);
        }
    }
    let mut out = Outcome::default();
    out.metric("bakry_emery_k", ctx.stage("curvature bound", m.bakry_emery_k())?);
    out.check(Check::new(9, "max W2 / (e^{-Kt} d)", worst, Bound::AtMost { limit: ctx.tol("contraction") }));
    out.table(table);
    exact_transport_checks(ctx, &mut out)?;
    Ok(out)
}

pub fn coupling(ctx: &Context) -> Result<Outcome, RunError> {
    let radius = ctx.param("radius");
    let q = ctx.count("points", 2)?;
    let spec = ctx.manifolds(vec![ManifoldSpec::sphere(4)]).remove(0);
    if !matches!(spec, ManifoldSpec::RoundSphere { .. } | ManifoldSpec::FlatTorus { .. }) {
        return ctx.unsupported("the circle");
    }
    let f = DilatonRule::Zero;
    let m = ctx.build(&spec, &f)?;
    let h = ctx.stage("eigendecomposition", eigendecompose(&m, None))?;
    let mut ts = ctx.times(h.t_min(), || vec![h.t_min(), 1.5 * h.t_min(), 0.05f64.max(2.0 * h.t_min()), 0.1f64.max(4.0 * h.t_min())])?;
    ts.sort_by(f64::total_cmp);
    if ts.len() < 3 {
        return Err(RunError::Config("coupling-deformation needs at least three times".into()));
    }
    // Vertex 0 and points on an ellipse of geodesic radius ~`radius` around it.
    let p0 = m.point(0);
    let mut pts = vec![0usize];
    for k in 0..q - 1 {
        let th = k as f64 * 2.0 * std::f64::consts::PI / (q - 1) as f64 + 0.3;
        let p = m.spec().exp(&p0, &[radius * th.cos(), radius * 0.7 * th.sin()]);
        pts.push(m.nearest_vertex(&p));
    }
    let mut table = Table::new("coupling", &["t", "a", "a_t", "bound", "ratio"]);
    let (mut worst, mut a, mut at) = (0.0f64, 0.0, Vec::new());
    for &t in &ts {
        let r = ctx.stage("coupling deformation", coupling_deformation(&m, &h, &pts, t))?;
        worst = worst.max(r.ratio);
        a = r.a;
        at.push(r.a_t);
        table.row(row![t, r.a, r.a_t, r.bound, r.ratio]);
    }
    let limit = ctx.stage("extrapolation", linear_to_zero(&ts, &at))?;
    let mut out = Outcome::default();
    out.metric("a", a);
    out.metric("a_t_extrapolated", limit);
    out.check(Check::new(9, "max a_t / (e^{-2Kt} a)", worst, Bound::AtMost { limit: ctx.tol("coupling_bound") }));
    out.check(Check::new(9, "|a_t(0) - a| / a", rel(limit, a), Bound::AtMost { limit: ctx.tol("coupling_limit") }));
    out.table(table);
    Ok(out)
}
