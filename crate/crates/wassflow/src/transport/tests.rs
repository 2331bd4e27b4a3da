use super::*;
use crate::heat::eigendecompose;
use crate::manifold::{build_manifold, ManifoldSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_measure(rng: &mut ChaCha8Rng, n: usize, k: usize) -> DiscreteMeasure {
    let mut support: Vec<usize> = Vec::new();
    while support.len() < k {
        let v = rng.random_range(0..n);
        if !support.contains(&v) {
            support.push(v);
        }
    }
    let weights = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    DiscreteMeasure::new(support, weights).unwrap()
}

/// Minimum cost over all basic feasible couplings (spanning trees of the
/// bipartite graph) of a small instance.
fn brute_force(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    let (n1, n2) = (a.len(), b.len());
    let arcs = n1 * n2;
    let need = n1 + n2 - 1;
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << arcs) {
        if mask.count_ones() as usize != need {
            continue;
        }
        let chosen: Vec<usize> = (0..arcs).filter(|e| mask >> e & 1 == 1).collect();
        // Leaf peeling recovers the unique flow on a spanning tree.
        let mut supply: Vec<f64> = a.iter().copied().chain(b.iter().map(|x| -x)).collect();
        let mut alive = chosen.clone();
        let mut flow = vec![0.0; arcs];
        let mut ok = true;
        while !alive.is_empty() {
            let mut deg = vec![0; n1 + n2];
            for &e in &alive {
                deg[e / n2] += 1;
                deg[n1 + e % n2] += 1;
            }
            let Some(pos) = alive.iter().position(|&e| deg[e / n2] == 1 || deg[n1 + e % n2] == 1) else {
                ok = false;
                break;
            };
            let e = alive.remove(pos);
            let (i, j) = (e / n2, n1 + e % n2);
            let x = if deg[i] == 1 { supply[i] } else { -supply[j] };
            flow[e] = x;
            supply[i] -= x;
            supply[j] += x;
        }
        if !ok || supply.iter().any(|s| s.abs() > 1e-12) || flow.iter().any(|f| *f < -1e-14) {
            continue;
        }
        best = best.min(flow.iter().zip(c).map(|(f, c)| f * c).sum());
    }
    best
}

#[test]
fn dirac_distance_is_geodesic_distance() {
    for spec in [ManifoldSpec::unit_torus(12), ManifoldSpec::sphere(2), ManifoldSpec::circle(20)] {
        let m = build_manifold(&spec).unwrap();
        for (y, z) in [(0, 5), (3, 17), (1, 1)] {
            let w = w2_exact(&m, &DiscreteMeasure::dirac(y), &DiscreteMeasure::dirac(z)).unwrap();
            assert_eq!(w.distance, m.geodesic_distance(y, z).unwrap());
        }
    }
}

#[test]
fn identical_measures_have_zero_distance_and_diagonal_plan() {
    let m = build_manifold(&ManifoldSpec::sphere(2)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mu = random_measure(&mut rng, m.n(), 12);
    let w = w2_exact(&m, &mu, &mu).unwrap();
    assert_eq!(w.distance, 0.0);
    assert!(w.plan.entries.iter().all(|(i, j, _)| i == j));
    assert!(w.plan.marginal_residual.iter().all(|r| *r <= 1e-9));
}

#[test]
fn small_instances_match_basis_enumeration() {
    let m = build_manifold(&ManifoldSpec::sphere(2)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let mu = random_measure(&mut rng, m.n(), 4);
        let nu = random_measure(&mut rng, m.n(), 4);
        let c = cost_matrix(&m, &mu, &nu).unwrap();
        let exact = w2_exact(&m, &mu, &nu).unwrap();
        let oracle = brute_force(&mu.weights, &nu.weights, &c);
        assert!((exact.plan.cost - oracle).abs() < 1e-10, "{} vs {oracle}", exact.plan.cost);
        assert!(exact.plan.marginal_residual.iter().all(|r| *r <= 1e-9));
    }
}

#[test]
fn exact_distance_satisfies_metric_axioms() {
    let m = build_manifold(&ManifoldSpec::unit_torus(10)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let k = rng.random_range(1..8);
        let mu = random_measure(&mut rng, m.n(), k);
        let (k2, k3) = (rng.random_range(1..8), rng.random_range(1..8));
        let nu = random_measure(&mut rng, m.n(), k2);
        let xi = random_measure(&mut rng, m.n(), k3);
        let d_mn = w2_exact(&m, &mu, &nu).unwrap().distance;
        let d_nm = w2_exact(&m, &nu, &mu).unwrap().distance;
        let d_mx = w2_exact(&m, &mu, &xi).unwrap().distance;
        let d_xn = w2_exact(&m, &xi, &nu).unwrap().distance;
        assert!((d_mn - d_nm).abs() < 1e-10);
        assert!(d_mn <= d_mx + d_xn + 1e-8);
    }
}

#[test]
fn support_limit_is_enforced() {
    let m = build_manifold(&ManifoldSpec::unit_torus(80)).unwrap();
    let all = DiscreteMeasure::new((0..m.n()).collect(), vec![1.0; m.n()]).unwrap();
    assert!(matches!(w2_exact(&m, &all, &all), Err(Error::SupportTooLarge { .. })));
    assert!(DiscreteMeasure::new(vec![1, 1], vec![0.5, 0.5]).is_err());
    assert!(DiscreteMeasure::new(vec![1], vec![-1.0]).is_err());
}

#[test]
fn entropic_estimate_is_symmetric_and_converges() {
    let m = build_manifold(&ManifoldSpec::unit_torus(10)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mu = random_measure(&mut rng, m.n(), 6);
    let nu = random_measure(&mut rng, m.n(), 5);
    let exact = w2_exact(&m, &mu, &nu).unwrap().distance;
    let mut prev = f64::INFINITY;
    for eps in [0.2, 0.1, 0.05] {
        let a = w2_entropic(&m, &mu, &nu, eps).unwrap();
        let b = w2_entropic(&m, &nu, &mu, eps).unwrap();
        assert!((a.distance - b.distance).abs() < 1e-10);
        assert!(a.plan.marginal_residual[0] <= 1e-9);
        let gap = (a.distance - exact).abs();
        assert!(gap < prev, "eps {eps}: gap {gap} did not shrink from {prev}");
        prev = gap;
    }
    let same = w2_entropic(&m, &mu, &mu, 0.05).unwrap();
    assert!(same.distance < 1e-6);
    assert!(w2_entropic(&m, &mu, &nu, 0.0).is_err());
}

#[test]
fn flat_torus_heat_measures_do_not_expand_distance() {
    let m = build_manifold(&ManifoldSpec::unit_torus(16)).unwrap();
    let h = eigendecompose(&m, None).unwrap();
    let t = 2.0 * h.t_min();
    let r = contraction_check(&m, &h, t, 0, 3 + 16 * 2).unwrap();
    assert_eq!(r.k, 0.0);
    assert!(r.ratio <= 1.02, "{r:?}");
}

#[test]
fn single_point_coupling_vanishes() {
    let m = build_manifold(&ManifoldSpec::sphere(2)).unwrap();
    let h = eigendecompose(&m, None).unwrap();
    let r = coupling_deformation(&m, &h, &[7], 2.0 * h.t_min()).unwrap();
    assert_eq!(r.a, 0.0);
    assert!(r.a_t < 1e-12, "{r:?}");
}

#[test]
fn interpolation_weights_reproduce_offsets() {
    for spec in [ManifoldSpec::sphere(3), ManifoldSpec::unit_torus(12)] {
        let m = build_manifold(&spec).unwrap();
        let v = 20;
        let h = 0.4 * m.max_edge();
        for off in [[h, 0.1 * h], [-0.3 * h, 0.5 * h], [0.0, -0.45 * h]] {
            let w = interpolation_weights(&m, v, &off).unwrap();
            assert!(w.iter().all(|(_, x)| *x >= 0.0));
            let mut rec = [0.0, 0.0];
            for (i, x) in &w {
                let l = m.log_at(v, &m.point(*i));
                rec[0] += x * l[0];
                rec[1] += x * l[1];
            }
            assert!((rec[0] - off[0]).abs() < 1e-12 && (rec[1] - off[1]).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn cost_is_invariant_under_relabeling(seed in 0u64..1000, k in 2usize..7) {
        let m = build_manifold(&ManifoldSpec::sphere(1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu = random_measure(&mut rng, m.n(), k);
        let nu = random_measure(&mut rng, m.n(), k);
        let base = w2_exact(&m, &mu, &nu).unwrap().plan.cost;
        let rev = DiscreteMeasure {
            support: mu.support.iter().rev().copied().collect(),
            weights: mu.weights.iter().rev().copied().collect(),
        };
        let other = w2_exact(&m, &rev, &nu).unwrap().plan.cost;
        prop_assert!((base - other).abs() < 1e-12);
    }
}
