use super::*;
use crate::manifold::{build_manifold, DilatonRule, ManifoldSpec};
use std::f64::consts::PI;

fn torus(n: usize, f: Option<DilatonRule>) -> MetricMeasureSpace {
    let m = build_manifold(&ManifoldSpec::unit_torus(n)).unwrap();
    match f {
        Some(r) => m.with_dilaton(&r).unwrap(),
        None => m,
    }
}

fn bump() -> DilatonRule {
    DilatonRule::Bump { amplitude: 0.5, concentration: 1.0, center: [0.3, 0.6, 0.0] }
}

/// `e^{-s} I_m(s)` by the trapezoid rule on `(1/pi) int_0^pi e^{s(cos th - 1)} cos(m th)`.
fn scaled_bessel(m: i64, s: f64) -> f64 {
    let k = 4096;
    let mut acc = 0.0;
    for j in 0..=k {
        let th = PI * j as f64 / k as f64;
        let w = if j == 0 || j == k { 0.5 } else { 1.0 };
        acc += w * (s * (th.cos() - 1.0)).exp() * (m as f64 * th).cos();
    }
    acc / k as f64
}

/// Exact kernel of the 5-point lattice Laplacian on the unit `n x n` torus.
fn lattice_kernel(n: usize, t: f64, dx: i64, dy: i64) -> f64 {
    let h = 1.0 / n as f64;
    let s = 2.0 * t / (h * h);
    let axis = |d: i64| (-20..=20).map(|j| scaled_bessel(d + j * n as i64, s)).sum::<f64>();
    (n * n) as f64 * axis(dx) * axis(dy)
}

#[test]
fn eigenfunctions_are_omega_orthonormal() {
    let m = torus(12, Some(bump()));
    let h = eigendecompose(&m, None).unwrap();
    let w = m.omega();
    for a in [0, 1, 5, 40, 143] {
        for b in [0, 1, 5, 40, 143] {
            let fa = h.eigenfunction(a);
            let fb = h.eigenfunction(b);
            let ip: f64 = (0..m.n()).map(|i| fa[i] * fb[i] * w[i]).sum();
            let expect = if a == b { 1.0 } else { 0.0 };
            assert!((ip - expect).abs() < 1e-12, "<phi_{a}, phi_{b}> = {ip}");
        }
    }
    assert!(h.eigenvalues()[0].abs() < 1e-10);
    assert!(h.eigenvalues().windows(2).all(|p| p[0] <= p[1]));
}

#[test]
fn eigenpairs_satisfy_the_weighted_equation() {
    let m = torus(10, Some(bump()));
    let h = eigendecompose(&m, None).unwrap();
    for k in [1, 7, 50] {
        let phi = h.eigenfunction(k);
        let l = m.weighted_laplacian(&phi);
        let lam = h.eigenvalues()[k];
        let err = l.iter().zip(&phi).map(|(a, b)| (a + lam * b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9 * lam.max(1.0), "mode {k}: {err}");
    }
}

#[test]
fn canonical_basis_is_reproducible_and_sign_fixed() {
    let m = torus(12, None);
    let a = eigendecompose(&m, None).unwrap();
    let b = eigendecompose(&m, None).unwrap();
    for k in 0..m.n() {
        assert_eq!(a.eigenfunction(k), b.eigenfunction(k));
    }
    // The first eigenfunction is the positive constant.
    assert!(a.eigenfunction(0).iter().all(|v| (v - 1.0).abs() < 1e-12));
}

#[test]
fn time_below_t_min_is_rejected() {
    let m = torus(16, None);
    let h = eigendecompose(&m, None).unwrap();
    let t = 0.5 * h.t_min();
    assert!(matches!(h.heat_kernel(t, 0), Err(Error::TimeTooSmall { .. })));
    assert!(matches!(h.heat_kernel(h.t_min(), 999), Err(Error::VertexOutOfRange { .. })));
}

#[test]
fn kernel_has_unit_mass_symmetry_and_semigroup() {
    for m in [torus(16, Some(bump())), build_manifold(&ManifoldSpec::sphere(2)).unwrap()] {
        let h = eigendecompose(&m, None).unwrap();
        let w = m.omega();
        let (s, t) = (1.5 * h.t_min(), 2.5 * h.t_min());
        let (y, z) = (3, m.n() / 2 + 1);
        let pz = h.heat_kernel(t, z).unwrap();
        let py = h.heat_kernel(t, y).unwrap();
        let mass: f64 = pz.iter().zip(w).map(|(p, w)| p * w).sum();
        assert!((mass - 1.0).abs() < 1e-10);
        assert!((pz[y] - py[z]).abs() < 1e-10 * pz[y].abs().max(1.0));
        let ps_y = h.heat_kernel(s, y).unwrap();
        let comp: f64 = (0..m.n()).map(|i| ps_y[i] * pz[i] * w[i]).sum();
        let direct = h.heat_kernel(s + t, z).unwrap()[y];
        assert!((comp - direct).abs() < 1e-8 * direct.abs().max(1.0));
    }
}

#[test]
fn torus_kernel_matches_lattice_bessel_oracle() {
    let n = 32;
    let m = torus(n, None);
    let h = eigendecompose(&m, None).unwrap();
    for t in [h.t_min(), 2.0 * h.t_min(), 4.0 * h.t_min()] {
        let p = h.heat_kernel(t, 0).unwrap();
        for (dx, dy) in [(0, 0), (1, 0), (3, 2), (7, 5), (16, 16)] {
            let ex = lattice_kernel(n, t, dx, dy);
            let got = p[dx as usize + n * dy as usize];
            assert!((got - ex).abs() < 1e-6 * ex.max(1.0), "t={t} ({dx},{dy}): {got} vs {ex}");
        }
    }
}

#[test]
fn source_gradient_is_central_difference_in_source() {
    let n = 16;
    let m = torus(n, Some(bump()));
    let h = eigendecompose(&m, None).unwrap();
    let t = 2.0 * h.t_min();
    let z = 5 + n * 7;
    let g = h.heat_kernel_source_gradient(&m, t, z).unwrap();
    let hx = 1.0 / n as f64;
    let pxp = h.heat_kernel(t, z + 1).unwrap();
    let pxm = h.heat_kernel(t, z - 1).unwrap();
    for y in 0..m.n() {
        let fd = (pxp[y] - pxm[y]) / (2.0 * hx);
        assert!((g[0][y] - fd).abs() < 1e-9 * fd.abs().max(1.0));
    }
}

#[test]
fn projection_removes_the_mean() {
    let m = torus(16, Some(bump()));
    let h = eigendecompose(&m, None).unwrap();
    let t = 2.0 * h.t_min();
    let z = 40;
    let p = h.heat_kernel(t, z).unwrap();
    let mut g = h.heat_kernel_source_gradient(&m, t, z).unwrap();
    for ga in g.iter_mut() {
        project_zero_mean(ga, &p, m.omega());
        assert!(m.integrate(ga).abs() < 1e-9);
    }
}

#[test]
fn termwise_laplacian_matches_operator() {
    let m = torus(12, Some(bump()));
    let h = eigendecompose(&m, None).unwrap();
    let t = 3.0 * h.t_min();
    let p = h.heat_kernel(t, 17).unwrap();
    let lp = h.heat_kernel_laplacian(t, 17).unwrap();
    let op = m.weighted_laplacian(&p);
    for (a, b) in lp.iter().zip(&op) {
        assert!((a - b).abs() < 1e-8 * b.abs().max(1.0));
    }
}

fn rk4_dilaton(m: &MetricMeasureSpace, q: f64, t: f64, steps: usize) -> Vec<f64> {
    let mut f = m.dilaton().to_vec();
    let dt = t / steps as f64;
    let rhs = |f: &[f64]| dilaton_flow_generator(m, f, q);
    for _ in 0..steps {
        let k1 = rhs(&f);
        let f2: Vec<f64> = f.iter().zip(&k1).map(|(a, b)| a + 0.5 * dt * b).collect();
        let k2 = rhs(&f2);
        let f3: Vec<f64> = f.iter().zip(&k2).map(|(a, b)| a + 0.5 * dt * b).collect();
        let k3 = rhs(&f3);
        let f4: Vec<f64> = f.iter().zip(&k3).map(|(a, b)| a + dt * b).collect();
        let k4 = rhs(&f4);
        for i in 0..f.len() {
            f[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    f
}

#[test]
fn dilaton_flow_matches_rk4() {
    let m = torus(32, Some(bump()));
    let h = eigendecompose(&m, None).unwrap();
    let spectral = dilaton_heat_flow(&m, &h, 2.0, 0.01).unwrap();
    let rk4 = rk4_dilaton(&m, 2.0, 0.01, 400);
    let err = spectral.iter().zip(&rk4).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-5, "max deviation {err}");
}

#[test]
fn dilaton_flow_generator_approximates_carre_du_champ_form() {
    // -(q/2) Lap(e^{-2f/q}) / e^{-2f/q} = Lap f - (2/q) |grad f|^2 up to O(h^2).
    let m = torus(64, Some(bump()));
    let f = m.dilaton().to_vec();
    let q = 4.0;
    let gen = dilaton_flow_generator(&m, &f, q);
    let lf = m.weighted_laplacian(&f);
    let gam = m.carre_du_champ(&f);
    let scale = lf.iter().map(|x| x.abs()).fold(0.0, f64::max);
    for i in 0..m.n() {
        assert!((gen[i] - (lf[i] - 2.0 / q * gam[i])).abs() < 1e-2 * scale);
    }
}

#[test]
fn dilaton_flow_fixes_constants() {
    let m = torus(12, None);
    let h = eigendecompose(&m, None).unwrap();
    let f = dilaton_heat_flow(&m, &h, 3.0, 0.2).unwrap();
    assert!(f.iter().all(|x| x.abs() < 1e-12));
}

#[test]
fn varadhan_sequence_approaches_quarter_squared_distance() {
    let m = torus(32, None);
    let h = eigendecompose(&m, None).unwrap();
    let (y, z) = (0, 6 + 32 * 3);
    let d = m.geodesic_distance(y, z).unwrap();
    let sched: Vec<f64> = [4.0, 2.0, 1.0].iter().map(|k| k * h.t_min()).collect();
    let v = varadhan_limit(&m, &h, &sched, y, z).unwrap();
    assert!((v.extrapolated / (0.25 * d * d) - 1.0).abs() < 0.05, "{} vs {}", v.extrapolated, 0.25 * d * d);
}

#[test]
fn truncated_expansion_reports_tail_bound() {
    let m = torus(10, None);
    let h = eigendecompose(&m, Some(30)).unwrap();
    assert!(h.k() >= 30);
    assert!(h.truncation_bound(0.05) > 0.0);
    let full = eigendecompose(&m, None).unwrap();
    assert_eq!(full.truncation_bound(0.05), 0.0);
}
