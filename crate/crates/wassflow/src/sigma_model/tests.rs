use super::*;
use crate::extrapolate::{geometric_schedule, linear_to_zero};
use crate::heat::eigendecompose;
use crate::manifold::{build_manifold, DilatonRule, ManifoldSpec};
use crate::otto_flow::OttoFlow;
use proptest::prelude::*;

fn sphere() -> MetricMeasureSpace {
    build_manifold(&ManifoldSpec::sphere(3)).unwrap()
}

fn torus(n: usize) -> MetricMeasureSpace {
    build_manifold(&ManifoldSpec::unit_torus(n)).unwrap()
}

const WAVE: MapRule = MapRule::Wave { center: 0, amplitude: [0.25, 0.2], shear: 0.1 };

fn cluster_points(m: &MetricMeasureSpace, q: usize) -> Vec<Point> {
    let nb = m.neighbors(0);
    (0..q).map(|i| m.point(nb[i % nb.len()].0)).collect()
}

fn wobble(grid_m: usize, amp: f64) -> Vec<f64> {
    let g = SurfaceGrid::flat(grid_m).unwrap();
    (0..g.len())
        .map(|k| {
            let x = g.coords(k);
            amp * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos()
        })
        .collect()
}

#[test]
fn constant_map_has_zero_energy() {
    let m = sphere();
    let g = SurfaceGrid::flat(16).unwrap();
    let map = SigmaMap::from_rule(&m, &g, &MapRule::Constant { vertex: 7 }).unwrap();
    assert_eq!(harmonic_energy(&m, &g, &map, TargetMetric::Base).unwrap(), 0.0);
}

#[test]
fn identity_on_unit_torus_has_unit_energy() {
    let m = torus(32);
    let g = SurfaceGrid::flat(32).unwrap();
    let map = SigmaMap::from_rule(&m, &g, &MapRule::Identity).unwrap();
    let e = harmonic_energy(&m, &g, &map, TargetMetric::Base).unwrap();
    assert!((e - 1.0).abs() < 1e-12, "{e}");
}

#[test]
fn identity_rejects_curved_target() {
    let m = sphere();
    let g = SurfaceGrid::flat(8).unwrap();
    assert!(matches!(SigmaMap::from_rule(&m, &g, &MapRule::Identity), Err(Error::InvalidMap(_))));
}

#[test]
fn grid_too_small_is_rejected() {
    assert!(SurfaceGrid::flat(3).is_err());
    assert!(SurfaceGrid::conformal(8, vec![0.0; 10]).is_err());
}

#[test]
fn energy_is_conformally_invariant() {
    let m = sphere();
    for n in [16, 32] {
        let g = SurfaceGrid::flat(n).unwrap();
        let gc = SurfaceGrid::conformal(n, wobble(n, 0.4)).unwrap();
        let map = SigmaMap::from_rule(&m, &g, &WAVE).unwrap();
        let e = harmonic_energy(&m, &g, &map, TargetMetric::Base).unwrap();
        let ec = harmonic_energy(&m, &gc, &map, TargetMetric::Base).unwrap();
        assert!((e - ec).abs() <= 1e-12 * e, "{e} vs {ec}");
    }
}

#[test]
fn energy_converges_under_refinement() {
    let m = sphere();
    let e: Vec<f64> = [16, 32, 64]
        .iter()
        .map(|&n| {
            let g = SurfaceGrid::flat(n).unwrap();
            harmonic_energy(&m, &g, &SigmaMap::from_rule(&m, &g, &WAVE).unwrap(), TargetMetric::Base).unwrap()
        })
        .collect();
    let ratio = (e[1] - e[0]).abs() / (e[2] - e[1]).abs();
    assert!(ratio > 3.0, "refinement ratio {ratio}");
}

#[test]
fn warped_energy_routes_agree() {
    let m = sphere();
    let pts = cluster_points(&m, 5);
    let f = SigmaDilaton::center_of_mass(&m, &pts, 0.3).unwrap();
    for n in [16, 32] {
        let g = SurfaceGrid::conformal(n, wobble(n, 0.3)).unwrap();
        let map = SigmaMap::from_rule(&m, &g, &WAVE).unwrap();
        let w = warped_energy(&m, &g, &map, &f, &pts).unwrap();
        assert!(w.gap <= 1e-10, "gap {}", w.gap);
        assert_eq!(w.q, 5);
        assert!(w.dirichlet > 0.0 && w.warped > w.base);
    }
}

#[test]
fn constant_dilaton_reduces_to_base_energy() {
    let m = sphere();
    let pts = cluster_points(&m, 3);
    let f = SigmaDilaton::Rule(DilatonRule::Constant(0.7));
    let g = SurfaceGrid::flat(16).unwrap();
    let map = SigmaMap::from_rule(&m, &g, &WAVE).unwrap();
    let w = warped_energy(&m, &g, &map, &f, &pts).unwrap();
    assert_eq!(w.dirichlet, 0.0);
    assert!((w.warped - w.base).abs() <= 1e-13 * w.base);
}

#[test]
fn dirichlet_scales_with_inverse_square_fiber_dimension() {
    let m = sphere();
    let pts = cluster_points(&m, 4);
    let f = SigmaDilaton::center_of_mass(&m, &pts, 0.3).unwrap();
    let g = SurfaceGrid::flat(32).unwrap();
    let map = SigmaMap::from_rule(&m, &g, &WAVE).unwrap();
    let pf = map.pull_back(&m, &f).unwrap();
    let q = 4.0;
    let d1 = g.dirichlet(&pf.iter().map(|v| v / q).collect::<Vec<_>>()).unwrap();
    let d2 = g.dirichlet(&pf.iter().map(|v| v / (2.0 * q)).collect::<Vec<_>>()).unwrap();
    assert!((d2 * 4.0 - d1).abs() <= 1e-12 * d1, "{d1} {d2}");
}

#[test]
fn gauss_bonnet_and_gauge_invariance() {
    let m = sphere();
    let pts = cluster_points(&m, 5);
    let f = SigmaDilaton::center_of_mass(&m, &pts, 0.3).unwrap();
    let g = SurfaceGrid::flat(32).unwrap();
    let map = SigmaMap::from_rule(&m, &g, &WAVE).unwrap();
    let a = dilatonic_action(&m, &g, &map, &f, &pts, None, true).unwrap();
    assert!(a.gauss_bonnet.abs() <= 1e-12 * a.curvature_mass.max(1.0), "{}", a.gauss_bonnet);
    let SigmaDilaton::CenterOfMass { points, r, log_c } = f.clone() else { unreachable!() };
    let shifted = SigmaDilaton::CenterOfMass { points, r, log_c: log_c + 0.8 };
    let b = dilatonic_action(&m, &g, &map, &shifted, &pts, Some(a.coupling), true).unwrap();
    assert!((a.action - b.action).abs() <= 1e-9 * a.action.abs(), "{} {}", a.action, b.action);
}

#[test]
fn conformal_action_identity() {
    let m = sphere();
    let pts = cluster_points(&m, 5);
    let f = SigmaDilaton::center_of_mass(&m, &pts, 0.3).unwrap();
    let w = {
        let g = SurfaceGrid::flat(64).unwrap();
        let map = SigmaMap::from_rule(&m, &g, &WAVE).unwrap();
        let a = dilatonic_action(&m, &g, &map, &f, &pts, None, true).unwrap();
        let e = warped_energy(&m, &g, &map, &f, &pts).unwrap();
        assert!((a.coupling - e.f_cm / 5.0).abs() <= 1e-12 * a.coupling);
        assert!(a.gap.unwrap() <= 0.05, "gap {:?}", a.gap);
        a.gap.unwrap()
    };
    let g = SurfaceGrid::flat(32).unwrap();
    let map = SigmaMap::from_rule(&m, &g, &WAVE).unwrap();
    let coarse = dilatonic_action(&m, &g, &map, &f, &pts, None, true).unwrap().gap.unwrap();
    assert!(coarse > 2.0 * w, "identity gap does not shrink: {coarse} -> {w}");
}

#[test]
fn eps_energy_converges_to_warped_energy() {
    let m = sphere();
    let pts = cluster_points(&m, 5);
    let f = SigmaDilaton::center_of_mass(&m, &pts, 0.3).unwrap();
    let g = SurfaceGrid::flat(64).unwrap();
    let map = SigmaMap::from_rule(&m, &g, &WAVE).unwrap();
    let w = warped_energy(&m, &g, &map, &f, &pts).unwrap();
    let eps = [0.2, 0.1, 0.05];
    let runs: Vec<EpsEnergy> = eps.iter().map(|&e| eps_energy(&m, &g, &WAVE, &f, &pts, e).unwrap()).collect();
    let e2: Vec<f64> = eps.iter().map(|e| e * e).collect();
    let value = linear_to_zero(&e2, &runs.iter().map(|r| r.value).collect::<Vec<_>>()).unwrap();
    assert!((value - w.warped).abs() <= 0.05 * w.warped, "{value} vs {}", w.warped);
    let last = runs.last().unwrap();
    assert!((last.base - w.base).abs() <= 0.02 * w.base);
    let fiber = 0.5 * w.f_cm * w.dirichlet;
    assert!((last.fiber - fiber).abs() <= 0.02 * fiber, "{} vs {fiber}", last.fiber);
    assert!(eps_energy(&m, &g, &WAVE, &f, &pts, 0.01).is_err());
}

#[test]
fn stencil_is_isotropic() {
    let s = super::distance::unit_stencil();
    assert_eq!(s.len(), STENCIL_SIZE);
    let (mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0);
    for v in &s {
        xx += v[0] * v[0];
        yy += v[1] * v[1];
        xy += v[0] * v[1];
    }
    assert!((xx - yy).abs() < 1e-13 && xy.abs() < 1e-13);
}

#[test]
fn warped_distance_without_fiber_gap_is_geodesic() {
    let m = sphere();
    let ctx = WarpedContext::new(&m, &SigmaDilaton::Rule(DilatonRule::Zero), 2, 4, 1.5).unwrap();
    let p = WarpedPoint { vertex: 0, xi: vec![0.1, 0.2] };
    let q = WarpedPoint { vertex: 9, xi: vec![1.1, 0.2] };
    assert_eq!(warped_distance(&ctx, &p, &q).unwrap(), m.geodesic_distance(0, 9).unwrap());
}

#[test]
fn warped_distance_with_constant_dilaton() {
    let m = torus(16);
    let c = 0.6;
    let q = 2;
    let ctx = WarpedContext::new(&m, &SigmaDilaton::Rule(DilatonRule::Constant(c)), q, 8, 2.5).unwrap();
    let a = WarpedPoint { vertex: 0, xi: vec![0.0, 0.0] };
    let b = WarpedPoint { vertex: 3, xi: vec![0.09, 0.12] };
    let d = m.geodesic_distance(0, 3).unwrap();
    let l = 0.15;
    let exact = d.hypot((-c / q as f64).exp() * l);
    let got = warped_distance(&ctx, &a, &b).unwrap();
    assert!(got >= exact * (1.0 - 1e-12), "{got} < {exact}");
    assert!((got - exact).abs() <= 0.05 * exact, "{got} vs {exact}");
}

#[test]
fn warped_distance_graph_refinement() {
    let m = sphere();
    let pts = cluster_points(&m, 3);
    let f = SigmaDilaton::center_of_mass(&m, &pts, 0.3).unwrap();
    let a = WarpedPoint { vertex: 0, xi: vec![0.0, 0.0, 0.0] };
    let b = WarpedPoint { vertex: 20, xi: vec![0.2, 0.1, 0.3] };
    let coarse = warped_distance(&WarpedContext::new(&m, &f, 3, 4, 1.5).unwrap(), &a, &b).unwrap();
    let fine = warped_distance(&WarpedContext::new(&m, &f, 3, 8, 2.5).unwrap(), &a, &b).unwrap();
    assert!(fine <= coarse + 1e-12);
    assert!(coarse - fine <= 2.0 * m.max_edge(), "{coarse} {fine}");
    let base = m.geodesic_distance(0, 20).unwrap();
    assert!(fine >= base * (1.0 - 0.05));
}

#[test]
fn deformed_energy_tends_to_base_energy() {
    let m = torus(32);
    let h = eigendecompose(&m, None).unwrap();
    let flow = OttoFlow::new(&m, &h).unwrap();
    let g = SurfaceGrid::flat(32).unwrap();
    let rule = MapRule::Wave { center: 0, amplitude: [0.15, 0.1], shear: 0.05 };
    let map = SigmaMap::from_rule(&m, &g, &rule).unwrap();
    let sched = geometric_schedule(h.t_min(), 2f64.powf(0.25), 3);
    let d = deformed_energy_flow(&flow, &g, &map, &sched, None).unwrap();
    assert!(d.gap <= 0.02, "gap {}", d.gap);
    assert!(d.energy.iter().all(|e| *e < d.base * 1.001));

    let still = SigmaMap::from_rule(&m, &g, &MapRule::Constant { vertex: 5 }).unwrap();
    let z = deformed_energy_flow(&flow, &g, &still, &sched, None).unwrap();
    assert!(z.energy.iter().all(|e| *e == 0.0));
}

#[test]
fn deformed_energy_matches_wasserstein_speed() {
    let m = torus(32);
    let h = eigendecompose(&m, None).unwrap();
    let flow = OttoFlow::new(&m, &h).unwrap();
    let g = SurfaceGrid::flat(32).unwrap();
    let rule = MapRule::Wave { center: 0, amplitude: [0.12, 0.096], shear: 0.036 };
    let map = SigmaMap::from_rule(&m, &g, &rule).unwrap();
    let sched = geometric_schedule(h.t_min(), 2f64.powf(0.25), 3);
    let opts = SpeedOptions { t: 2.0 * h.t_min(), subsample: 4, step: 2 };
    let s = deformed_energy_flow(&flow, &g, &map, &sched, Some(opts)).unwrap().speed.unwrap();
    assert!(s.gap <= 0.10, "{s:?}");
}

#[test]
fn map_csv_has_a_row_per_sample() {
    let m = sphere();
    let g = SurfaceGrid::flat(8).unwrap();
    let map = SigmaMap::from_rule(&m, &g, &WAVE).unwrap();
    assert_eq!(map.to_csv().lines().count(), 1 + 64);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn energy_scales_quadratically_on_flat_target(a in 0.02f64..0.2, b in 0.02f64..0.2, k in 1.5f64..3.0) {
        // Small waves on the flat torus: E is quadratic in the amplitude.
        let m = torus(16);
        let g = SurfaceGrid::flat(16).unwrap();
        let e = |s: f64| {
            let rule = MapRule::Wave { center: 0, amplitude: [s * a, s * b], shear: 0.0 };
            harmonic_energy(&m, &g, &SigmaMap::from_rule(&m, &g, &rule).unwrap(), TargetMetric::Base).unwrap()
        };
        let (e1, ek) = (e(1.0), e(k));
        prop_assert!((ek - k * k * e1).abs() <= 1e-10 * ek);
    }

    #[test]
    fn conformal_invariance_random_factor(amp in -0.8f64..0.8, shift in -2.0f64..2.0) {
        let m = sphere();
        let g = SurfaceGrid::flat(16).unwrap();
        let sig: Vec<f64> = wobble(16, amp).iter().map(|s| s + shift).collect();
        let gc = SurfaceGrid::conformal(16, sig).unwrap();
        let map = SigmaMap::from_rule(&m, &g, &WAVE).unwrap();
        let e = harmonic_energy(&m, &g, &map, TargetMetric::Base).unwrap();
        let ec = harmonic_energy(&m, &gc, &map, TargetMetric::Base).unwrap();
        prop_assert!((e - ec).abs() <= 1e-12 * e);
    }
}
