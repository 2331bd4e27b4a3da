use std::f64::consts::PI;

use wassflow::extrapolate::{geometric_schedule, linear_to_zero};
use wassflow::heat::eigendecompose;
use wassflow::manifold::{DilatonRule, ManifoldSpec, MetricMeasureSpace, Point};
use wassflow::otto_flow::OttoFlow;
use wassflow::sigma_model::{
    deformed_energy_flow, dilatonic_action, eps_energy, warped_energy, MapRule, SigmaDilaton, SigmaMap, SpeedOptions,
    SurfaceGrid,
};

use super::{rel, Context, RunError};
use crate::report::{Bound, Check, Outcome, Table};
use crate::row;

/// Mesh neighbours of vertex 0, cycled to `q` points.
fn cluster(m: &MetricMeasureSpace, q: usize) -> Vec<Point> {
    let nb = m.neighbors(0);
    (0..q).map(|i| m.point(nb[i % nb.len()].0)).collect()
}

/// `amp sin(2 pi x) cos(2 pi y)` on an `n x n` surface grid.
fn wobble(n: usize, amp: f64) -> Result<Vec<f64>, wassflow::Error> {
    let g = SurfaceGrid::flat(n)?;
    Ok((0..g.len())
        .map(|k| {
            let x = g.coords(k);
            amp * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos()
        })
        .collect())
}

fn grid(ctx: &Context, n: usize) -> Result<SurfaceGrid, RunError> {
    ctx.stage("surface grid", SurfaceGrid::flat(n))
}

pub fn energies(ctx: &Context) -> Result<Outcome, RunError> {
    let n = ctx.count("grid", 8)?;
    let q = ctx.count("points", 1)?;
    let r = ctx.param("radius");
    let spec = ctx.manifolds(vec![ManifoldSpec::sphere(3)]).remove(0);
    if matches!(spec, ManifoldSpec::Circle { .. }) {
        return ctx.unsupported("the circle");
    }
    let m = ctx.build(&spec, &DilatonRule::Zero)?;
    let rule = MapRule::Wave { center: 0, amplitude: [0.25, 0.2], shear: 0.1 };
    let qs: Vec<usize> = match &ctx.config.schedules.q {
        Some(v) => v.iter().map(|&x| x as usize).filter(|&x| x >= 1).collect(),
        None => vec![q],
    };
    let mut out = Outcome::default();

    let mut fact = Table::new("factorization", &["grid", "wobble", "q", "warped", "factorized", "base", "dirichlet", "f_cm", "gap"]);
    let mut worst_gap = 0.0f64;
    for (size, amp) in [(16, 0.0), (32, 0.0), (n, 0.0), (16, 0.3), (32, 0.3)] {
        let g = ctx.stage("surface grid", wobble(size, amp).and_then(|s| SurfaceGrid::conformal(size, s)))?;
        let map = ctx.stage("sample map", SigmaMap::from_rule(&m, &g, &rule))?;
        for &qq in &qs {
            let pts = cluster(&m, qq);
            let f = ctx.stage("center-of-mass dilaton", SigmaDilaton::center_of_mass(&m, &pts, r))?;
            let w = ctx.stage("warped energy", warped_energy(&m, &g, &map, &f, &pts))?;
            worst_gap = worst_gap.max(w.gap);
            fact.row(row![size, amp, qq, w.warped, w.factorized, w.base, w.dirichlet, w.f_cm, w.gap]);
        }
    }
    out.check(Check::new(11, "warped factorization gap", worst_gap, Bound::AtMost { limit: ctx.tol("factorization") }));
    out.table(fact);

    let pts = cluster(&m, q);
    let f = ctx.stage("center-of-mass dilaton", SigmaDilaton::center_of_mass(&m, &pts, r))?;
    let g = grid(ctx, n)?;
    let map = ctx.stage("sample map", SigmaMap::from_rule(&m, &g, &rule))?;
    let a = ctx.stage("dilatonic action", dilatonic_action(&m, &g, &map, &f, &pts, None, true))?;
    let w = ctx.stage("warped energy", warped_energy(&m, &g, &map, &f, &pts))?;
    let mut action = Table::new(
        "action",
        &["grid", "action", "coupling", "energy", "curvature_term", "gauss_bonnet", "curvature_mass", "warped_rhs", "gap"],
    );
    action.row(row![
        n,
        a.action,
        a.coupling,
        a.energy,
        a.curvature_term,
        a.gauss_bonnet,
        a.curvature_mass,
        a.warped_rhs.unwrap_or(f64::NAN),
        a.gap.unwrap_or(f64::NAN)
    ]);
    out.table(action);
    out.metric("coupling_vs_f_over_q", rel(a.coupling, w.f_cm / q as f64));
    out.check(Check::new(11, "conformal-gauge identity gap", a.gap.unwrap_or(f64::NAN), Bound::AtMost { limit: ctx.tol("conformal") }));
    out.check(Check::new(11, "|sum K area|", a.gauss_bonnet.abs(), Bound::AtMost { limit: ctx.tol("gauss_bonnet") }));

    let eps = ctx.config.schedules.eps.clone().unwrap_or_else(|| vec![0.2, 0.1, 0.05]);
    if eps.len() < 3 {
        return Err(RunError::Config("schedule.eps needs at least three values".into()));
    }
    if let Some(e) = eps.iter().find(|&&e| e <= g.spacing()) {
        return Err(RunError::Config(format!("eps = {e} is not above the surface grid spacing {}", g.spacing())));
    }
    let mut trace = Table::new("eps_energy", &["eps", "value", "base", "fiber"]);
    let mut vals = Vec::new();
    for &e in &eps {
        let r = ctx.stage("eps energy", eps_energy(&m, &g, &rule, &f, &pts, e))?;
        trace.row(row![e, r.value, r.base, r.fiber]);
        vals.push(r.value);
    }
    let e2: Vec<f64> = eps.iter().map(|e| e * e).collect();
    let limit = ctx.stage("extrapolation", linear_to_zero(&e2, &vals))?;
    out.metric("eps_extrapolated", limit);
    out.metric("warped_energy", w.warped);
    out.check(Check::new(11, "|E_eps(0) - E_warped| / E_warped", rel(limit, w.warped), Bound::AtMost { limit: ctx.tol("eps_limit") }));
    out.table(trace);
    out.table(Table::from_text("map", map.to_csv()));
    Ok(out)
}

pub fn deformed(ctx: &Context) -> Result<Outcome, RunError> {
    let n = ctx.count("grid", 8)?;
    let subsample = ctx.count("subsample", 1)?;
    let step = ctx.count("step", 1)?;
    let spec = ctx.manifolds(vec![ManifoldSpec::unit_torus(32)]).remove(0);
    let f = ctx.dilatons(vec![DilatonRule::Zero]).remove(0);
    let m = ctx.build(&spec, &f)?;
    let h = ctx.stage("eigendecomposition", eigendecompose(&m, None))?;
    let flow = ctx.stage("otto flow", OttoFlow::new(&m, &h))?;
    let g = grid(ctx, n)?;
    let rule = MapRule::Wave { center: 0, amplitude: [0.12, 0.096], shear: 0.036 };
    let map = ctx.stage("sample map", SigmaMap::from_rule(&m, &g, &rule))?;
    let ts = ctx.times(h.t_min(), || geometric_schedule(h.t_min(), 2f64.powf(0.25), 4))?;
    let speed = SpeedOptions { t: 2.0 * h.t_min(), subsample, step };
    let d = ctx.stage("deformed energy", deformed_energy_flow(&flow, &g, &map, &ts, Some(speed)))?;
    let mut out = Outcome::default();
    out.metric("base_energy", d.base);
    out.metric("extrapolated", d.extrapolated);
    out.check(Check::new(11, "|E[phi, g_t -> 0] - E[phi, g]| / E[phi, g]", d.gap, Bound::AtMost { limit: ctx.tol("deformed_limit") }));
    if let Some(s) = d.speed {
        let mut t = Table::new("speed", &["t", "pullback", "wasserstein", "gap"]);
        t.row(row![s.t, s.pullback, s.wasserstein, s.gap]);
        out.table(t);
        out.check(Check::new(11, "pullback vs W2-speed estimate", s.gap, Bound::AtMost { limit: ctx.tol("speed") }));
    }
    out.table(Table::from_text("energy", d.to_csv()));
    Ok(out)
}
