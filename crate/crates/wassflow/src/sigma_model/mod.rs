//! Harmonic-map energies of a periodic surface into a weighted manifold.
//!
//! The domain is the unit square torus `Sigma = [0, 1)^2` sampled on an
//! `m x m` grid with spacing `h = 1/m`, carrying a conformally flat metric
//! `gamma = e^sigma delta`. Maps `phi: Sigma -> M` are stored as image points
//! together with the nearest vertex and the log-map offset from it.
//!
//! Derivatives of `phi` are central differences of geodesic logarithms taken
//! in one chart per grid point, so no ambient embedding enters. The energy
//!
//! `E[phi, G] = 1/2 sum_x area(x) gamma^{-1}(x) sum_a G(D_a phi, D_a phi)`
//!
//! is evaluated either with the base metric in the chart of the image point
//! or with a per-vertex metric field (such as `g_t`) in the chart of the
//! image vertex.
//!
//! Warped quantities follow the product `N = M x_f T^q` with fiber metric
//! `e^{-2f/q} delta`, the lifted map `xi_k = (1/2) e^{f(phi)/q} d(phi_cm, y_k)`
//! and the center-of-mass coupling `a = F(phi_cm) / q`.

mod deformed;
mod distance;

pub use deformed::{deformed_energy_flow, DeformedEnergy, SpeedEstimate, SpeedOptions};
pub use distance::{eps_energy, warped_distance, EpsEnergy, WarpedContext, WarpedPoint, STENCIL_SIZE};

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::manifold::{frechet_mean, DilatonRule, ManifoldSpec, MetricMeasureSpace, Point, SymForm, Tangent};

/// Periodic `m x m` grid on the unit torus with metric `e^sigma delta`.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceGrid {
    m: usize,
    log_factor: Vec<f64>,
}

impl SurfaceGrid {
    pub fn flat(m: usize) -> Result<Self> {
        Self::conformal(m, vec![0.0; m * m])
    }

    /// Grid with `gamma = e^{sigma} delta`, `sigma` given per grid point.
    pub fn conformal(m: usize, log_factor: Vec<f64>) -> Result<Self> {
        if m < 4 {
            return Err(Error::InvalidParameter(format!("surface grid size {m} < 4")));
        }
        if log_factor.len() != m * m {
            return Err(Error::InvalidParameter(format!(
                "conformal factor has {} values for {} grid points",
                log_factor.len(),
                m * m
            )));
        }
        if log_factor.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidParameter("conformal factor must be finite".into()));
        }
        Ok(SurfaceGrid { m, log_factor })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.m * self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.m as f64
    }

    pub fn log_factor(&self) -> &[f64] {
        &self.log_factor
    }

    /// Periodic index of `(i, j)`.
    pub fn index(&self, i: isize, j: isize) -> usize {
        let m = self.m as isize;
        (i.rem_euclid(m) + m * j.rem_euclid(m)) as usize
    }

    pub fn coords(&self, k: usize) -> [f64; 2] {
        let h = self.spacing();
        [(k % self.m) as f64 * h, (k / self.m) as f64 * h]
    }

    /// Neighbour of `k` one step along axis `a` in direction `s = +-1`.
    pub fn step(&self, k: usize, a: usize, s: isize) -> usize {
        let (i, j) = ((k % self.m) as isize, (k / self.m) as isize);
        if a == 0 {
            self.index(i + s, j)
        } else {
            self.index(i, j + s)
        }
    }

    /// `gamma`-area of the cell at `k`.
    pub fn area(&self, k: usize) -> f64 {
        let h = self.spacing();
        h * h * self.log_factor[k].exp()
    }

    /// Isotropic inverse metric `gamma^{aa}` at `k`.
    pub fn inverse_metric(&self, k: usize) -> f64 {
        (-self.log_factor[k]).exp()
    }

    /// Five-point flat Laplacian `Delta_delta u`.
    pub fn flat_laplacian(&self, u: &[f64]) -> Vec<f64> {
        let h2 = self.spacing().powi(2);
        (0..self.len())
            .map(|k| {
                let s: f64 = (0..2).map(|a| u[self.step(k, a, 1)] + u[self.step(k, a, -1)]).sum();
                (s - 4.0 * u[k]) / h2
            })
            .collect()
    }

    /// Gaussian curvature of `gamma`: `K = -(1/2) e^{-sigma} Delta_delta sigma`.
    pub fn gaussian_curvature(&self) -> Vec<f64> {
        self.flat_laplacian(&self.log_factor)
            .iter()
            .zip(&self.log_factor)
            .map(|(l, s)| -0.5 * (-s).exp() * l)
            .collect()
    }

    /// Central difference of a scalar field along axis `a`.
    pub fn derivative(&self, u: &[f64], k: usize, a: usize) -> f64 {
        (u[self.step(k, a, 1)] - u[self.step(k, a, -1)]) * 0.5 * self.m as f64
    }

    /// Dirichlet energy `1/2 int |du|^2_gamma dmu_gamma` with central differences.
    pub fn dirichlet(&self, u: &[f64]) -> Result<f64> {
        if u.len() != self.len() {
            return Err(Error::InvalidParameter(format!("field has {} values for {} grid points", u.len(), self.len())));
        }
        Ok(0.5
            * (0..self.len())
                .map(|k| {
                    let d2: f64 = (0..2).map(|a| self.derivative(u, k, a).powi(2)).sum();
                    self.area(k) * self.inverse_metric(k) * d2
                })
                .sum::<f64>())
    }
}

/// Closed-form maps `Sigma -> M`.
#[derive(Clone, Debug, PartialEq)]
pub enum MapRule {
    Constant { vertex: usize },
    /// `(x, y) -> (L_x x, L_y y)` onto a flat torus.
    Identity,
    /// `(x, y) -> exp_c(a_0 sin 2 pi x + s cos 2 pi y, a_1 sin 2 pi y)`.
    Wave { center: usize, amplitude: [f64; 2], shear: f64 },
}

impl MapRule {
    /// Image of the surface point `x`.
    pub fn eval(&self, m: &MetricMeasureSpace, x: [f64; 2]) -> Result<Point> {
        match *self {
            MapRule::Constant { vertex } => {
                m.check_vertex(vertex)?;
                Ok(m.point(vertex))
            }
            MapRule::Identity => match m.spec() {
                ManifoldSpec::FlatTorus { sides, .. } => {
                    Ok([(sides[0] * x[0]).rem_euclid(sides[0]), (sides[1] * x[1]).rem_euclid(sides[1]), 0.0])
                }
                _ => Err(Error::InvalidMap("the identity map needs a flat torus target".into())),
            },
            MapRule::Wave { center, amplitude, shear } => {
                m.check_vertex(center)?;
                let sx = (2.0 * PI * x[0]).sin();
                let (sy, cy) = (2.0 * PI * x[1]).sin_cos();
                let v = [amplitude[0] * sx + shear * cy, amplitude[1] * sy];
                Ok(m.spec().exp(&m.point(center), &v))
            }
        }
    }

    /// Radius of a geodesic ball around the center containing the image.
    pub fn image_radius(&self) -> f64 {
        match *self {
            MapRule::Constant { .. } => 0.0,
            MapRule::Identity => f64::INFINITY,
            MapRule::Wave { amplitude, shear, .. } => (amplitude[0].abs() + shear.abs()).hypot(amplitude[1]),
        }
    }
}

/// Sampled map with image points, nearest vertices and chart offsets.
#[derive(Clone, Debug, PartialEq)]
pub struct SigmaMap {
    m: usize,
    points: Vec<Point>,
    vertex: Vec<usize>,
    offset: Vec<Tangent>,
}

impl SigmaMap {
    pub fn from_rule(manifold: &MetricMeasureSpace, grid: &SurfaceGrid, rule: &MapRule) -> Result<Self> {
        let points = (0..grid.len()).map(|k| rule.eval(manifold, grid.coords(k))).collect::<Result<Vec<_>>>()?;
        Self::from_points(manifold, grid, points)
    }

    pub fn from_points(manifold: &MetricMeasureSpace, grid: &SurfaceGrid, points: Vec<Point>) -> Result<Self> {
        if points.len() != grid.len() {
            return Err(Error::InvalidMap(format!("{} image points for {} grid points", points.len(), grid.len())));
        }
        let vertex: Vec<usize> = points.iter().map(|p| manifold.nearest_vertex(p)).collect();
        let offset = vertex.iter().zip(&points).map(|(&v, p)| manifold.log_at(v, p)).collect();
        Ok(SigmaMap { m: grid.m(), points, vertex, offset })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, k: usize) -> &Point {
        &self.points[k]
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn vertex(&self, k: usize) -> usize {
        self.vertex[k]
    }

    pub fn offset(&self, k: usize) -> Tangent {
        self.offset[k]
    }

    /// Distinct image vertices in increasing order.
    pub fn image_vertices(&self) -> Vec<usize> {
        let mut v = self.vertex.clone();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// `f` evaluated at every image point.
    pub fn pull_back(&self, manifold: &MetricMeasureSpace, f: &SigmaDilaton) -> Result<Vec<f64>> {
        self.points.iter().map(|p| f.eval(manifold.spec(), p)).collect()
    }

    /// Rows `grid_index,vertex,offset_0,offset_1`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("grid_index,vertex,offset_0,offset_1\n");
        for k in 0..self.len() {
            s.push_str(&format!("{k},{},{:.17e},{:.17e}\n", self.vertex[k], self.offset[k][0], self.offset[k][1]));
        }
        s
    }

    fn check_grid(&self, grid: &SurfaceGrid) -> Result<()> {
        if grid.m() != self.m {
            return Err(Error::InvalidMap(format!("map sampled on {}^2, grid is {}^2", self.m, grid.m())));
        }
        Ok(())
    }

    /// `D_a phi` at `k`, in the chart of the image point or of the image vertex.
    fn differential(&self, manifold: &MetricMeasureSpace, grid: &SurfaceGrid, k: usize, vertex_chart: bool) -> Result<[Tangent; 2]> {
        let spec = manifold.spec();
        let base = if vertex_chart { manifold.point(self.vertex[k]) } else { self.points[k] };
        let limit = 0.5 * spec.injectivity_radius();
        let half_inv_h = 0.5 * grid.m() as f64;
        let mut out = [[0.0; 2]; 2];
        for (a, d) in out.iter_mut().enumerate() {
            let lp = spec.log(&base, &self.points[grid.step(k, a, 1)]);
            let lm = spec.log(&base, &self.points[grid.step(k, a, -1)]);
            if lp[0].hypot(lp[1]).max(lm[0].hypot(lm[1])) >= limit {
                return Err(Error::InvalidMap(format!("map is not localizable at grid point {k}")));
            }
            *d = [(lp[0] - lm[0]) * half_inv_h, (lp[1] - lm[1]) * half_inv_h];
        }
        Ok(out)
    }
}

/// Target metric for [`harmonic_energy`].
#[derive(Clone, Copy, Debug)]
pub enum TargetMetric<'a> {
    /// `g` in the chart of each image point.
    Base,
    /// Per-vertex forms in the vertex frame, indexed by vertex; only image
    /// vertices are read.
    Field(&'a [Option<SymForm>]),
}

fn form(g: &SymForm, u: &Tangent) -> f64 {
    g[0] * u[0] * u[0] + 2.0 * g[1] * u[0] * u[1] + g[2] * u[1] * u[1]
}

/// `E[phi, G]` with central differences of geodesic logarithms.
pub fn harmonic_energy(manifold: &MetricMeasureSpace, grid: &SurfaceGrid, map: &SigmaMap, metric: TargetMetric<'_>) -> Result<f64> {
    map.check_grid(grid)?;
    let mut e = 0.0;
    for k in 0..grid.len() {
        let d = map.differential(manifold, grid, k, matches!(metric, TargetMetric::Field(_)))?;
        let w = match metric {
            TargetMetric::Base => d[0][0] * d[0][0] + d[0][1] * d[0][1] + d[1][0] * d[1][0] + d[1][1] * d[1][1],
            TargetMetric::Field(g) => {
                let v = map.vertex[k];
                let gv = g
                    .get(v)
                    .copied()
                    .flatten()
                    .ok_or_else(|| Error::InvalidParameter(format!("metric field has no value at image vertex {v}")))?;
                form(&gv, &d[0]) + form(&gv, &d[1])
            }
        };
        e += grid.area(k) * grid.inverse_metric(k) * w;
    }
    Ok(0.5 * e)
}

/// Dilaton fields pulled back to `Sigma`.
#[derive(Clone, Debug, PartialEq)]
pub enum SigmaDilaton {
    Rule(DilatonRule),
    /// `f(z) = (1/4 r^2) sum_k d(z, y_k)^2 + ln C`, `C` normalizing
    /// `e^{-f} dmu / V` to a probability measure.
    CenterOfMass { points: Vec<Point>, r: f64, log_c: f64 },
}

impl SigmaDilaton {
    pub fn center_of_mass(manifold: &MetricMeasureSpace, points: &[Point], r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(Error::InvalidParameter(format!("localization scale r = {r} must be positive")));
        }
        if points.is_empty() {
            return Err(Error::InvalidParameter("empty point set".into()));
        }
        let spec = manifold.spec();
        let big_f = |z: &Point| 0.5 * points.iter().map(|y| spec.distance(z, y).powi(2)).sum::<f64>();
        let c = manifold.points().iter().zip(manifold.mass()).map(|(z, w)| w * (-big_f(z) / (2.0 * r * r)).exp()).sum::<f64>()
            / manifold.volume();
        Ok(SigmaDilaton::CenterOfMass { points: points.to_vec(), r, log_c: c.ln() })
    }

    pub fn eval(&self, spec: &ManifoldSpec, p: &Point) -> Result<f64> {
        match self {
            SigmaDilaton::Rule(rule) => rule.eval(spec, p),
            SigmaDilaton::CenterOfMass { points, r, log_c } => {
                Ok(points.iter().map(|y| spec.distance(p, y).powi(2)).sum::<f64>() / (4.0 * r * r) + log_c)
            }
        }
    }
}

/// Warped energy by direct pullback and by factorization.
#[derive(Clone, Debug, PartialEq)]
pub struct WarpedEnergy {
    /// `E[Phi_q, h^(q)]` assembled from the full pullback tensor.
    pub warped: f64,
    /// `E[phi, g] + (F / 2) D[f / q]`.
    pub factorized: f64,
    pub base: f64,
    /// `D[f / q]`.
    pub dirichlet: f64,
    /// `F(phi_cm; q)`.
    pub f_cm: f64,
    pub q: usize,
    /// `a = F / q`.
    pub coupling: f64,
    /// `|warped - factorized| / max(|warped|, tiny)`.
    pub gap: f64,
}

/// Center-of-mass data of the reference points.
struct Cluster {
    f_cm: f64,
    distances: Vec<f64>,
}

fn cluster(manifold: &MetricMeasureSpace, points: &[Point]) -> Result<Cluster> {
    let cm = frechet_mean(manifold, points)?;
    let distances = points.iter().map(|p| manifold.spec().distance(&cm.point, p)).collect();
    Ok(Cluster { f_cm: cm.value, distances })
}

fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Harmonic energy of the lifted map `Phi_q` into `M x_f T^q`, `q` the
/// number of reference points.
pub fn warped_energy(
    manifold: &MetricMeasureSpace,
    grid: &SurfaceGrid,
    map: &SigmaMap,
    f: &SigmaDilaton,
    points: &[Point],
) -> Result<WarpedEnergy> {
    map.check_grid(grid)?;
    let c = cluster(manifold, points)?;
    let q = points.len();
    let qf = q as f64;
    let fphi = map.pull_back(manifold, f)?;
    let u: Vec<f64> = fphi.iter().map(|x| x / qf).collect();
    let mut warped = 0.0;
    for k in 0..grid.len() {
        let d = map.differential(manifold, grid, k, false)?;
        let warp = (-2.0 * u[k]).exp();
        let lift = (u[k]).exp();
        let mut tr = 0.0;
        for (a, da) in d.iter().enumerate() {
            let du = grid.derivative(&u, k, a);
            tr += da[0] * da[0] + da[1] * da[1];
            // d xi_k = (d_k / 2) e^{f/q} d(f/q), measured by e^{-2f/q} delta.
            for dk in &c.distances {
                let dxi = 0.5 * dk * lift * du;
                tr += warp * dxi * dxi;
            }
        }
        warped += grid.area(k) * grid.inverse_metric(k) * tr;
    }
    warped *= 0.5;
    let base = harmonic_energy(manifold, grid, map, TargetMetric::Base)?;
    let dirichlet = grid.dirichlet(&u)?;
    let factorized = base + 0.5 * c.f_cm * dirichlet;
    Ok(WarpedEnergy {
        warped,
        factorized,
        base,
        dirichlet,
        f_cm: c.f_cm,
        q,
        coupling: c.f_cm / qf,
        gap: relative_gap(warped, factorized),
    })
}

/// Dilatonic action and, in the conformal gauge, the warped-energy identity.
#[derive(Clone, Debug, PartialEq)]
pub struct DilatonicAction {
    /// `S = (2/a) E[phi, g] + int K_gamma f(phi) dmu_gamma`.
    pub action: f64,
    pub coupling: f64,
    pub energy: f64,
    pub curvature_term: f64,
    /// `sum K_gamma area`, zero on the torus.
    pub gauss_bonnet: f64,
    /// `sum |K_gamma| area`, the scale for `gauss_bonnet`.
    pub curvature_mass: f64,
    /// `(2q/F) E[Phi_q, h^(q)]`, present in the conformal gauge.
    pub warped_rhs: Option<f64>,
    pub gap: Option<f64>,
}

/// Largest `h^2 |Delta sigma|` accepted before `f(phi)` is flagged as under-resolved.
pub const CONFORMAL_RESOLUTION: f64 = 0.5;

/// Dilatonic action of `phi`. With `conformal`, the surface metric is
/// replaced by `e^{f(phi)/q} delta` and the coupling by `F / q`; otherwise
/// `grid` and `coupling` are used as given (`coupling = None` also selects
/// `F / q`).
pub fn dilatonic_action(
    manifold: &MetricMeasureSpace,
    grid: &SurfaceGrid,
    map: &SigmaMap,
    f: &SigmaDilaton,
    points: &[Point],
    coupling: Option<f64>,
    conformal: bool,
) -> Result<DilatonicAction> {
    map.check_grid(grid)?;
    let q = points.len() as f64;
    let fphi = map.pull_back(manifold, f)?;
    let gauge;
    let surface = if conformal {
        gauge = SurfaceGrid::conformal(grid.m(), fphi.iter().map(|x| x / q).collect())?;
        &gauge
    } else {
        grid
    };
    let h2 = surface.spacing().powi(2);
    let lap = surface.flat_laplacian(surface.log_factor());
    if let Some(worst) = lap.iter().map(|l| (l * h2).abs()).max_by(f64::total_cmp) {
        if worst > CONFORMAL_RESOLUTION {
            return Err(Error::InvalidMap(format!(
                "conformal factor is under-resolved on the surface grid (h^2 |Laplacian| = {worst:.3e})"
            )));
        }
    }
    let c = cluster(manifold, points)?;
    let a = match (conformal, coupling) {
        (false, Some(a)) => a,
        _ => c.f_cm / q,
    };
    if !(a > 0.0) {
        return Err(Error::InvalidParameter(format!("coupling a = {a} must be positive")));
    }
    let k = surface.gaussian_curvature();
    let (mut gb, mut mass, mut curv) = (0.0, 0.0, 0.0);
    for i in 0..surface.len() {
        let ka = k[i] * surface.area(i);
        gb += ka;
        mass += ka.abs();
        curv += ka * fphi[i];
    }
    let energy = harmonic_energy(manifold, surface, map, TargetMetric::Base)?;
    let action = 2.0 / a * energy + curv;
    let (warped_rhs, gap) = if conformal {
        let w = warped_energy(manifold, surface, map, f, points)?;
        let rhs = 2.0 * q / c.f_cm * w.warped;
        (Some(rhs), Some(relative_gap(action, rhs)))
    } else {
        (None, None)
    };
    Ok(DilatonicAction {
        action,
        coupling: a,
        energy,
        curvature_term: curv,
        gauss_bonnet: gb,
        curvature_mass: mass,
        warped_rhs,
        gap,
    })
}

#[cfg(test)]
mod tests;
