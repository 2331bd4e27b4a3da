//! Discrete weighted manifolds.
//!
//! A [`MetricMeasureSpace`] is a closed Riemannian manifold sampled at vertices,
//! together with a dilaton `f` and the normalized measure
//! `omega = exp(-f) dmu / V`. Three families are supported:
//!
//! | family | vertices | metric | stencils |
//! |---|---|---|---|
//! | circle | uniform grid in the parameter `x` | `ds = a(x) dx` | 3-point, non-uniform in arclength |
//! | flat torus | `nx * ny` lattice | Euclidean, periodic | central differences |
//! | round sphere | subdivided icosahedron | chordal cotangent weights | quadratic fit over the 2-ring |
//!
//! Tangent vectors and symmetric bilinear forms are expressed in a per-vertex
//! orthonormal frame, as `[f64; 2]` and `[xx, xy, yy]` respectively. On the
//! circle only the first component is meaningful.
//!
//! The weighted Laplacian is assembled from the base stiffness `kappa_ij` with
//! edge weights `kappa_ij (w_i + w_j) / 2`, `w = exp(-f) / V`, so that
//! `Delta_omega u_i = (1 / omega_i) sum_j c_ij (u_j - u_i)` is self-adjoint in
//! `L^2(omega)` by construction.

mod dilaton;
mod geometry;
mod grid;
mod sphere;

pub use dilaton::DilatonRule;
pub use geometry::{frechet_mean, interpolation_weights, FrechetMean};

use crate::error::{Error, Result};

/// Tangent vector in an orthonormal frame.
pub type Tangent = [f64; 2];
/// Symmetric bilinear form `[xx, xy, yy]` in an orthonormal frame.
pub type SymForm = [f64; 3];
/// Point in geometric coordinates: arclength `[s, x, 0]` on the circle,
/// `[x, y, 0]` on the torus, embedded `[x, y, z]` on the sphere.
pub type Point = [f64; 3];

/// Conformal factor `a(x)` of a circle metric `ds = a(x) dx`, `x` in `[0, 2 pi)`.
#[derive(Clone, Debug, PartialEq)]
pub enum ConformalFactor {
    Constant(f64),
    /// `a(x) = base + amplitude * sin(x)`.
    Sine { base: f64, amplitude: f64 },
}

impl ConformalFactor {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            ConformalFactor::Constant(c) => c,
            ConformalFactor::Sine { base, amplitude } => base + amplitude * x.sin(),
        }
    }

    /// `int_0^x a`.
    pub fn primitive(&self, x: f64) -> f64 {
        match *self {
            ConformalFactor::Constant(c) => c * x,
            ConformalFactor::Sine { base, amplitude } => base * x + amplitude * (1.0 - x.cos()),
        }
    }

    pub fn min_value(&self) -> f64 {
        match *self {
            ConformalFactor::Constant(c) => c,
            ConformalFactor::Sine { base, amplitude } => base - amplitude.abs(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ManifoldSpec {
    Circle { resolution: usize, factor: ConformalFactor },
    FlatTorus { resolution: [usize; 2], sides: [f64; 2] },
    RoundSphere { subdivisions: usize, radius: f64 },
}

impl ManifoldSpec {
    pub fn circle(resolution: usize) -> Self {
        ManifoldSpec::Circle { resolution, factor: ConformalFactor::Constant(1.0) }
    }

    pub fn flat_torus(n: usize, side: f64) -> Self {
        ManifoldSpec::FlatTorus { resolution: [n, n], sides: [side, side] }
    }

    pub fn unit_torus(n: usize) -> Self {
        Self::flat_torus(n, 1.0)
    }

    pub fn sphere(subdivisions: usize) -> Self {
        ManifoldSpec::RoundSphere { subdivisions, radius: 1.0 }
    }

    pub fn dim(&self) -> usize {
        match self {
            ManifoldSpec::Circle { .. } => 1,
            _ => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ManifoldSpec::Circle { resolution, factor } => {
                if *resolution < 8 {
                    return Err(Error::InvalidManifold(format!("circle resolution {resolution} < 8")));
                }
                if !(factor.min_value() > 0.0) {
                    return Err(Error::InvalidManifold("conformal factor must be positive".into()));
                }
            }
            ManifoldSpec::FlatTorus { resolution, sides } => {
                if resolution.iter().any(|&n| n < 8) {
                    return Err(Error::InvalidManifold(format!("torus resolution {resolution:?} has an axis < 8")));
                }
                if sides.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
                    return Err(Error::InvalidManifold(format!("torus sides {sides:?} must be positive")));
                }
            }
            ManifoldSpec::RoundSphere { subdivisions, radius } => {
                if *subdivisions < 1 {
                    return Err(Error::InvalidManifold("sphere subdivision must be >= 1".into()));
                }
                if *subdivisions > 6 {
                    return Err(Error::InvalidManifold(format!("sphere subdivision {subdivisions} > 6 is not supported")));
                }
                if !(*radius > 0.0 && radius.is_finite()) {
                    return Err(Error::InvalidManifold("sphere radius must be positive".into()));
                }
            }
        }
        Ok(())
    }

    /// Constant sectional curvature of the base metric.
    pub fn sectional_curvature(&self) -> f64 {
        match self {
            ManifoldSpec::RoundSphere { radius, .. } => 1.0 / (radius * radius),
            _ => 0.0,
        }
    }

    /// Circumference of a circle spec.
    pub fn circumference(&self) -> Option<f64> {
        match self {
            ManifoldSpec::Circle { factor, .. } => Some(factor.primitive(2.0 * std::f64::consts::PI)),
            _ => None,
        }
    }

    pub fn injectivity_radius(&self) -> f64 {
        match self {
            ManifoldSpec::Circle { .. } => 0.5 * self.circumference().unwrap(),
            ManifoldSpec::FlatTorus { sides, .. } => 0.5 * sides[0].min(sides[1]),
            ManifoldSpec::RoundSphere { radius, .. } => std::f64::consts::PI * radius,
        }
    }

    /// `r0 = min(inj / 3, pi / (6 sqrt(kappa)))`, the radius below which
    /// centers of mass are unique.
    pub fn localization_radius(&self) -> f64 {
        let k = self.sectional_curvature();
        let a = self.injectivity_radius() / 3.0;
        if k > 0.0 {
            a.min(std::f64::consts::PI / (6.0 * k.sqrt()))
        } else {
            a
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            ManifoldSpec::Circle { .. } => 0.5 * self.circumference().unwrap(),
            ManifoldSpec::FlatTorus { sides, .. } => 0.5 * (sides[0] * sides[0] + sides[1] * sides[1]).sqrt(),
            ManifoldSpec::RoundSphere { radius, .. } => std::f64::consts::PI * radius,
        }
    }

    pub fn distance(&self, a: &Point, b: &Point) -> f64 {
        geometry::distance(self, a, b)
    }

    pub fn log(&self, p: &Point, q: &Point) -> Tangent {
        geometry::log(self, p, q)
    }

    pub fn exp(&self, p: &Point, v: &Tangent) -> Point {
        geometry::exp(self, p, v)
    }

    pub fn frame_at(&self, p: &Point) -> [[f64; 3]; 2] {
        geometry::frame_at(self, p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    /// Base stiffness: `(Delta_g u)_i = (1/m_i) sum_j kappa_ij (u_j - u_i)`.
    pub kappa: f64,
    /// Geodesic length.
    pub length: f64,
}

/// Linear stencil `D u(i) = sum_j w_j (u_j - u_i)` stored in CSR form.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Stencil<const K: usize> {
    pub ptr: Vec<usize>,
    pub idx: Vec<usize>,
    pub w: Vec<[f64; K]>,
}

impl<const K: usize> Stencil<K> {
    pub fn from_rows(rows: Vec<Vec<(usize, [f64; K])>>) -> Self {
        let mut ptr = vec![0];
        let mut idx = Vec::new();
        let mut w = Vec::new();
        for row in rows {
            for (j, c) in row {
                idx.push(j);
                w.push(c);
            }
            ptr.push(idx.len());
        }
        Stencil { ptr, idx, w }
    }

    #[inline]
    pub fn apply(&self, i: usize, u: &[f64]) -> [f64; K] {
        let ui = u[i];
        let mut out = [0.0; K];
        for e in self.ptr[i]..self.ptr[i + 1] {
            let d = u[self.idx[e]] - ui;
            let c = &self.w[e];
            for k in 0..K {
                out[k] += c[k] * d;
            }
        }
        out
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, &[f64; K])> {
        (self.ptr[i]..self.ptr[i + 1]).map(move |e| (self.idx[e], &self.w[e]))
    }
}

/// Sampled weighted manifold `(M, g, omega)`.
#[derive(Clone, Debug)]
pub struct MetricMeasureSpace {
    spec: ManifoldSpec,
    points: Vec<Point>,
    frames: Vec<[[f64; 3]; 2]>,
    mass: Vec<f64>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(usize, usize)>>,
    grad: Stencil<2>,
    hess: Stencil<3>,
    volume: f64,
    max_edge: f64,
    dilaton: Vec<f64>,
    gauge_shift: f64,
    density: Vec<f64>,
    omega: Vec<f64>,
    edge_weight: Vec<f64>,
}

pub(crate) struct RawMesh {
    pub points: Vec<Point>,
    pub frames: Vec<[[f64; 3]; 2]>,
    pub mass: Vec<f64>,
    pub edges: Vec<Edge>,
    pub grad: Stencil<2>,
    pub hess: Stencil<3>,
}

/// Discretize `spec` with `f = 0`.
pub fn build_manifold(spec: &ManifoldSpec) -> Result<MetricMeasureSpace> {
    spec.validate()?;
    let raw = match spec {
        ManifoldSpec::Circle { resolution, factor } => grid::circle(*resolution, factor),
        ManifoldSpec::FlatTorus { resolution, sides } => grid::torus(*resolution, *sides),
        ManifoldSpec::RoundSphere { subdivisions, radius } => sphere::icosphere(*subdivisions, *radius)?,
    };
    let n = raw.points.len();
    let mut adjacency = vec![Vec::new(); n];
    for (e, edge) in raw.edges.iter().enumerate() {
        adjacency[edge.i].push((edge.j, e));
        adjacency[edge.j].push((edge.i, e));
    }
    let volume: f64 = raw.mass.iter().sum();
    let max_edge = raw.edges.iter().map(|e| e.length).fold(0.0, f64::max);
    let mut m = MetricMeasureSpace {
        spec: spec.clone(),
        points: raw.points,
        frames: raw.frames,
        mass: raw.mass,
        edges: raw.edges,
        adjacency,
        grad: raw.grad,
        hess: raw.hess,
        volume,
        max_edge,
        dilaton: vec![0.0; n],
        gauge_shift: 0.0,
        density: Vec::new(),
        omega: Vec::new(),
        edge_weight: Vec::new(),
    };
    m.assemble_weights(vec![0.0; n])?;
    Ok(m)
}

impl MetricMeasureSpace {
    /// Replace the dilaton by `f`, normalizing by an additive shift so that
    /// `sum omega = 1`. The subtracted constant is available as [`Self::gauge_shift`].
    pub fn set_dilaton(&self, f: &[f64]) -> Result<Self> {
        if f.len() != self.n() {
            return Err(Error::InvalidDilaton(format!("expected {} values, got {}", self.n(), f.len())));
        }
        if let Some(i) = f.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDilaton(format!("non-finite value at vertex {i}")));
        }
        let mut m = self.clone();
        m.assemble_weights(f.to_vec())?;
        Ok(m)
    }

    pub fn with_dilaton(&self, rule: &DilatonRule) -> Result<Self> {
        let f = rule.sample(self)?;
        self.set_dilaton(&f)
    }

    fn assemble_weights(&mut self, f: Vec<f64>) -> Result<()> {
        // Shift by the minimum first so exp never overflows.
        let fmin = f.iter().cloned().fold(f64::INFINITY, f64::min);
        let z: f64 = f.iter().zip(&self.mass).map(|(fi, m)| (-(fi - fmin)).exp() * m).sum::<f64>() / self.volume;
        let shift = fmin - z.ln();
        let dilaton: Vec<f64> = f.iter().map(|fi| fi - shift).collect();
        let density: Vec<f64> = dilaton.iter().map(|fi| (-fi).exp() / self.volume).collect();
        let mut omega: Vec<f64> = density.iter().zip(&self.mass).map(|(w, m)| w * m).collect();
        let total: f64 = omega.iter().sum();
        if !(total > 0.0) || omega.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidDilaton("weights underflow".into()));
        }
        // Remove the last rounding so that sum omega = 1 to machine precision.
        for w in omega.iter_mut() {
            *w /= total;
        }
        let density: Vec<f64> = omega.iter().zip(&self.mass).map(|(w, m)| w / m).collect();
        self.edge_weight = self.edges.iter().map(|e| e.kappa * 0.5 * (density[e.i] + density[e.j])).collect();
        self.gauge_shift = shift;
        self.dilaton = dilaton;
        self.density = density;
        self.omega = omega;
        Ok(())
    }

    pub fn spec(&self) -> &ManifoldSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn point(&self, i: usize) -> Point {
        self.points[i]
    }

    pub fn frame(&self, i: usize) -> [[f64; 3]; 2] {
        self.frames[i]
    }

    /// Riemannian volume element per vertex.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// `(neighbor, edge index)` pairs of vertex `i`.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adjacency[i]
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// Largest geodesic edge length `h`.
    pub fn max_edge(&self) -> f64 {
        self.max_edge
    }

    /// Smallest admissible heat time `4 h^2`.
    pub fn t_min(&self) -> f64 {
        4.0 * self.max_edge * self.max_edge
    }

    /// Gauge-fixed dilaton.
    pub fn dilaton(&self) -> &[f64] {
        &self.dilaton
    }

    pub fn gauge_shift(&self) -> f64 {
        self.gauge_shift
    }

    /// Vertex weights of `omega`; they sum to one.
    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    /// Density of `omega` with respect to the Riemannian volume.
    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// Edge coefficients `c_e` of the weighted Laplacian.
    pub fn edge_weights(&self) -> &[f64] {
        &self.edge_weight
    }

    pub(crate) fn grad_stencil(&self) -> &Stencil<2> {
        &self.grad
    }

    pub fn check_vertex(&self, i: usize) -> Result<()> {
        if i < self.n() {
            Ok(())
        } else {
            Err(Error::VertexOutOfRange { index: i, n: self.n() })
        }
    }

    pub fn integrate(&self, u: &[f64]) -> f64 {
        u.iter().zip(&self.omega).map(|(a, w)| a * w).sum()
    }

    /// `Delta_g u`.
    pub fn laplacian(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for e in &self.edges {
            let d = e.kappa * (u[e.j] - u[e.i]);
            out[e.i] += d;
            out[e.j] -= d;
        }
        for (o, m) in out.iter_mut().zip(&self.mass) {
            *o /= m;
        }
        out
    }

    /// `Delta_omega u = Delta_g u - <grad f, grad u>` in weak form.
    pub fn weighted_laplacian(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for (e, c) in self.edges.iter().zip(&self.edge_weight) {
            let d = c * (u[e.j] - u[e.i]);
            out[e.i] += d;
            out[e.j] -= d;
        }
        for (o, w) in out.iter_mut().zip(&self.omega) {
            *o /= w;
        }
        out
    }

    /// Discrete carre du champ of `Delta_omega`:
    /// `Gamma(u)_i = (1 / (2 omega_i)) sum_j c_ij (u_j - u_i)^2`.
    pub fn carre_du_champ(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for (e, c) in self.edges.iter().zip(&self.edge_weight) {
            let d = c * (u[e.j] - u[e.i]).powi(2);
            out[e.i] += d;
            out[e.j] += d;
        }
        for (o, w) in out.iter_mut().zip(&self.omega) {
            *o /= 2.0 * w;
        }
        out
    }

    /// Dirichlet form `sum_e c_e (u_j - u_i)(v_j - v_i) = -<u, Delta_omega v>_omega`.
    pub fn dirichlet_form(&self, u: &[f64], v: &[f64]) -> f64 {
        self.edges
            .iter()
            .zip(&self.edge_weight)
            .map(|(e, c)| c * (u[e.j] - u[e.i]) * (v[e.j] - v[e.i]))
            .sum()
    }

    pub fn gradient_at(&self, u: &[f64], i: usize) -> Tangent {
        self.grad.apply(i, u)
    }

    pub fn hessian_at(&self, u: &[f64], i: usize) -> SymForm {
        self.hess.apply(i, u)
    }

    pub fn gradient(&self, u: &[f64]) -> Vec<Tangent> {
        (0..self.n()).map(|i| self.grad.apply(i, u)).collect()
    }

    pub fn hessian(&self, u: &[f64]) -> Result<Vec<SymForm>> {
        if self.hess.ptr.len() != self.n() + 1 {
            return Err(Error::HessianUnavailable("no hessian stencil was built".into()));
        }
        Ok((0..self.n()).map(|i| self.hess.apply(i, u)).collect())
    }

    /// Ricci tensor of the base metric in the vertex frame.
    pub fn ricci(&self) -> SymForm {
        let k = self.spec.sectional_curvature();
        match self.dim() {
            1 => [0.0; 3],
            _ => [k, 0.0, k],
        }
    }

    pub fn scalar_curvature(&self) -> f64 {
        match self.dim() {
            1 => 0.0,
            _ => 2.0 * self.spec.sectional_curvature(),
        }
    }

    pub fn geodesic_distance(&self, y: usize, z: usize) -> Result<f64> {
        self.check_vertex(y)?;
        self.check_vertex(z)?;
        Ok(self.spec.distance(&self.points[y], &self.points[z]))
    }

    /// Log map from vertex `i` expressed in the frame of `i`.
    pub fn log_at(&self, i: usize, q: &Point) -> Tangent {
        self.spec.log(&self.points[i], q)
    }

    pub fn nearest_vertex(&self, p: &Point) -> usize {
        match &self.spec {
            ManifoldSpec::FlatTorus { resolution, sides } => {
                let ix = (p[0] / sides[0] * resolution[0] as f64).round().rem_euclid(resolution[0] as f64) as usize;
                let iy = (p[1] / sides[1] * resolution[1] as f64).round().rem_euclid(resolution[1] as f64) as usize;
                ix + resolution[0] * iy
            }
            _ => {
                let mut best = (f64::INFINITY, 0);
                for (i, q) in self.points.iter().enumerate() {
                    let d = self.spec.distance(p, q);
                    if d < best.0 {
                        best = (d, i);
                    }
                }
                best.1
            }
        }
    }

    /// Smallest eigenvalue of `Ric + Hess f` over all vertices.
    pub fn bakry_emery_k(&self) -> Result<f64> {
        let hess = self.hessian(&self.dilaton)?;
        let ric = self.ricci();
        let mut k = f64::INFINITY;
        for h in &hess {
            let a = [ric[0] + h[0], ric[1] + h[1], ric[2] + h[2]];
            let e = if self.dim() == 1 { a[0] } else { sym_min_eig(&a) };
            k = k.min(e);
        }
        Ok(k)
    }
}

/// Smallest eigenvalue of a symmetric 2x2 form.
pub fn sym_min_eig(a: &SymForm) -> f64 {
    let m = 0.5 * (a[0] + a[2]);
    let r = (0.25 * (a[0] - a[2]).powi(2) + a[1] * a[1]).sqrt();
    m - r
}

/// `a(u, v)` for a symmetric form.
#[inline]
pub fn sym_apply(a: &SymForm, u: &Tangent, v: &Tangent) -> f64 {
    a[0] * u[0] * v[0] + a[1] * (u[0] * v[1] + u[1] * v[0]) + a[2] * u[1] * v[1]
}

/// Frobenius inner product of two symmetric forms.
#[inline]
pub fn sym_dot(a: &SymForm, b: &SymForm) -> f64 {
    a[0] * b[0] + 2.0 * a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn dot(u: &Tangent, v: &Tangent) -> f64 {
    u[0] * v[0] + u[1] * v[1]
}
