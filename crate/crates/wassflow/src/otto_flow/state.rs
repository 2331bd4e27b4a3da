use super::{
    clamp_kernel, form_min_eig, BetaIntegral, BochnerCheck, FlowedMetric, OttoFlow, XField,
};
use crate::error::{Error, Result};
use crate::manifold::{dot, sym_apply, sym_dot, MetricMeasureSpace, SymForm, Tangent};

/// Kernel column, potentials along both frame axes at `z`, and the pointwise
/// fields every quadrature needs.
pub struct SourceState<'f> {
    m: &'f MetricMeasureSpace,
    hess_f: &'f [SymForm],
    pub t: f64,
    pub z: usize,
    /// Raw kernel `p_t(., z)` and its clamped version.
    pub p: Vec<f64>,
    pub pc: Vec<f64>,
    /// Quadrature weights `pc * omega`.
    pub q: Vec<f64>,
    /// Edge weights of `Delta_{p_t d omega}`.
    pub edge_weights: Vec<f64>,
    /// Potentials for the frame directions.
    pub psi: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    grad_psi: Vec<Vec<Tangent>>,
    hess_psi: Vec<Vec<SymForm>>,
    lap_psi: Vec<Vec<f64>>,
    grad_p: Vec<Tangent>,
    hess_p: Vec<SymForm>,
}

impl<'f> SourceState<'f> {
    pub(crate) fn new(flow: &'f OttoFlow<'f>, t: f64, z: usize, checked: bool) -> Result<Self> {
        let m = flow.manifold();
        let h = flow.heat();
        let p = if checked { h.heat_kernel(t, z)? } else { h.kernel_unchecked(t, z) };
        let pc = clamp_kernel(&p);
        let omega = m.omega();
        let q: Vec<f64> = pc.iter().zip(omega).map(|(a, b)| a * b).collect();
        let a = flow.kernel_edge_weights(&pc);
        let llt = flow.factorize(&a, z)?;
        let grads = h.source_gradient_unchecked(m, t, z);
        let mut psi = Vec::with_capacity(m.dim());
        let mut residuals = Vec::with_capacity(m.dim());
        for mut g in grads {
            crate::heat::project_zero_mean(&mut g, &pc, omega);
            let b: Vec<f64> = g.iter().zip(omega).map(|(x, w)| x * w).collect();
            let (s, r, _) = flow.solve_with(&llt, &a, &q, &b, z)?;
            psi.push(s);
            residuals.push(r);
        }
        let grad_psi = psi.iter().map(|s| m.gradient(s)).collect();
        let hess_psi = psi.iter().map(|s| m.hessian(s)).collect::<Result<Vec<_>>>()?;
        let lap_psi = psi
            .iter()
            .map(|s| {
                let r = flow.residual_vector(&a, s, &vec![0.0; m.n()]);
                // r = -K psi, so Delta_p psi = r / q.
                r.iter().zip(&q).map(|(x, w)| x / w).collect()
            })
            .collect();
        let grad_p = m.gradient(&p);
        let hess_p = m.hessian(&p)?;
        Ok(SourceState {
            m,
            hess_f: flow.hess_f(),
            t,
            z,
            p,
            pc,
            q,
            edge_weights: a,
            psi,
            residuals,
            grad_psi,
            hess_psi,
            lap_psi,
            grad_p,
            hess_p,
        })
    }

    fn dim(&self) -> usize {
        self.m.dim()
    }

    /// Potential for an arbitrary direction, by linearity.
    pub fn potential(&self, u: &Tangent) -> Vec<f64> {
        (0..self.m.n()).map(|i| (0..self.dim()).map(|a| u[a] * self.psi[a][i]).sum()).collect()
    }

    #[inline]
    fn grad_psi_u(&self, u: &Tangent, i: usize) -> Tangent {
        let mut out = [0.0; 2];
        for a in 0..self.dim() {
            let g = self.grad_psi[a][i];
            out[0] += u[a] * g[0];
            out[1] += u[a] * g[1];
        }
        out
    }

    #[inline]
    fn hess_psi_u(&self, u: &Tangent, i: usize) -> SymForm {
        let mut out = [0.0; 3];
        for a in 0..self.dim() {
            let h = self.hess_psi[a][i];
            for k in 0..3 {
                out[k] += u[a] * h[k];
            }
        }
        out
    }

    fn lap_psi_u(&self, u: &Tangent) -> Vec<f64> {
        (0..self.m.n()).map(|i| (0..self.dim()).map(|a| u[a] * self.lap_psi[a][i]).sum()).collect()
    }

    /// `Hess ln p_t` from the stencil derivatives of the kernel column.
    #[inline]
    fn hess_ln_p(&self, i: usize) -> SymForm {
        let pc = self.pc[i];
        let g = self.grad_p[i];
        let h = self.hess_p[i];
        [
            h[0] / pc - g[0] * g[0] / (pc * pc),
            h[1] / pc - g[0] * g[1] / (pc * pc),
            h[2] / pc - g[1] * g[1] / (pc * pc),
        ]
    }

    /// `g_t` on the frame basis as the discrete Dirichlet form of `Delta_{p_t d omega}`.
    pub fn flowed_metric(&self) -> FlowedMetric {
        let dim = self.dim();
        let mut g = [0.0; 3];
        for (e, w) in self.m.edges().iter().zip(&self.edge_weights) {
            let d0 = self.psi[0][e.j] - self.psi[0][e.i];
            g[0] += w * d0 * d0;
            if dim == 2 {
                let d1 = self.psi[1][e.j] - self.psi[1][e.i];
                g[1] += w * d0 * d1;
                g[2] += w * d1 * d1;
            }
        }
        FlowedMetric { t: self.t, z: self.z, g, min_eig: form_min_eig(&g, dim) }
    }

    pub fn metric(&self, u: &Tangent, w: &Tangent) -> f64 {
        sym_apply(&self.flowed_metric().g, u, w)
    }

    fn quad(&self, f: impl Fn(usize) -> f64) -> f64 {
        (0..self.m.n()).map(|i| self.q[i] * f(i)).sum()
    }

    pub fn induced_ricci(&self, u: &Tangent, w: &Tangent) -> f64 {
        if self.dim() == 1 {
            return 0.0;
        }
        let k = self.m.spec().sectional_curvature();
        k * self.quad(|i| dot(&self.grad_psi_u(u, i), &self.grad_psi_u(w, i)))
    }

    /// `<Rm(U, V) W, Z>` with `<Rm(a, b) c, d> = K ((b.c)(a.d) - (a.c)(b.d))`.
    pub fn induced_riemann(&self, v: &[Tangent; 4]) -> f64 {
        if self.dim() == 1 {
            return 0.0;
        }
        let k = self.m.spec().sectional_curvature();
        k * self.quad(|i| {
            let a = self.grad_psi_u(&v[0], i);
            let b = self.grad_psi_u(&v[1], i);
            let c = self.grad_psi_u(&v[2], i);
            let d = self.grad_psi_u(&v[3], i);
            dot(&b, &c) * dot(&a, &d) - dot(&a, &c) * dot(&b, &d)
        })
    }

    /// `sum_i <Rm(e_i, U) W, e_i>` over a `g_t`-orthonormal frame.
    pub fn riemann_trace(&self, u: &Tangent, w: &Tangent) -> Result<f64> {
        let frame = self.orthonormal_frame()?;
        Ok(frame.iter().map(|e| self.induced_riemann(&[*e, *u, *w, *e])).sum())
    }

    /// Gram-Schmidt of the vertex frame with respect to `g_t`.
    pub fn orthonormal_frame(&self) -> Result<Vec<Tangent>> {
        let g = self.flowed_metric().g;
        let mut out: Vec<Tangent> = Vec::new();
        for a in 0..self.dim() {
            let mut v = [0.0; 2];
            v[a] = 1.0;
            for e in &out {
                let c = sym_apply(&g, &v, e);
                v = [v[0] - c * e[0], v[1] - c * e[1]];
            }
            let n2 = sym_apply(&g, &v, &v);
            if !(n2 > 0.0) {
                return Err(Error::NotPositiveDefinite { min_eig: self.flowed_metric().min_eig });
            }
            let n = n2.sqrt();
            out.push([v[0] / n, v[1] / n]);
        }
        Ok(out)
    }

    pub fn beta_integral(&self, u: &Tangent, w: &Tangent) -> BetaIntegral {
        let ricci = -2.0 * self.induced_ricci(u, w);
        let hess_f = -2.0 * self.quad(|i| sym_apply(&self.hess_f[i], &self.grad_psi_u(u, i), &self.grad_psi_u(w, i)));
        let hess_psi = -2.0 * self.quad(|i| sym_dot(&self.hess_psi_u(u, i), &self.hess_psi_u(w, i)));
        BetaIntegral { ricci, hess_f, hess_psi, total: ricci + hess_f + hess_psi }
    }

    pub fn bochner_check(&self, u: &Tangent) -> BochnerCheck {
        let lhs = self.a_functional(u);
        let ric = self.m.ricci();
        let rhs = self.quad(|i| {
            let g = self.grad_psi_u(u, i);
            let h = self.hess_psi_u(u, i);
            let hl = self.hess_ln_p(i);
            let hf = self.hess_f[i];
            let form = [ric[0] + hf[0] - hl[0], ric[1] + hf[1] - hl[1], ric[2] + hf[2] - hl[2]];
            sym_dot(&h, &h) + sym_apply(&form, &g, &g)
        });
        let scale = lhs.abs().max(rhs.abs());
        let residual = if scale == 0.0 { 0.0 } else { (lhs - rhs).abs() / scale };
        BochnerCheck { lhs, rhs, residual }
    }

    /// `A = int (Delta_p psi_U)^2 p_t d omega`.
    pub fn a_functional(&self, u: &Tangent) -> f64 {
        let l = self.lap_psi_u(u);
        self.quad(|i| l[i] * l[i])
    }

    /// `-2 int |grad Delta_p psi_U|^2 p_t d omega`.
    pub fn da_dt(&self, u: &Tangent) -> f64 {
        let l = self.lap_psi_u(u);
        -2.0 * self.quad(|i| {
            let g = self.m.gradient_at(&l, i);
            dot(&g, &g)
        })
    }

    /// `L_X g_t(U, W) = 2 int grad psi_U . Hess ln p_t . grad psi_W p_t d omega`.
    pub fn lie_derivative(&self, u: &Tangent, w: &Tangent) -> f64 {
        2.0 * self.quad(|i| sym_apply(&self.hess_ln_p(i), &self.grad_psi_u(u, i), &self.grad_psi_u(w, i)))
    }

    /// Pulled-back derivative `beta(U, U) + L_X g_t(U, U)`.
    pub fn pulled_back_derivative(&self, u: &Tangent) -> f64 {
        self.beta_integral(u, u).total + self.lie_derivative(u, u)
    }

    pub fn x_field_and_lie(&self) -> Result<XField> {
        let dim = self.dim();
        let mut v = [0.0; 2];
        for (a, va) in v.iter_mut().enumerate().take(dim) {
            *va = self.quad(|i| {
                let gl = [self.grad_p[i][0] / self.pc[i], self.grad_p[i][1] / self.pc[i]];
                dot(&gl, &self.grad_psi[a][i])
            });
        }
        let g = self.flowed_metric().g;
        let x = if dim == 1 {
            if !(g[0] > 0.0) {
                return Err(Error::NotPositiveDefinite { min_eig: g[0] });
            }
            [v[0] / g[0], 0.0]
        } else {
            let det = g[0] * g[2] - g[1] * g[1];
            if !(det > 0.0 && g[0] > 0.0) {
                return Err(Error::NotPositiveDefinite { min_eig: form_min_eig(&g, 2) });
            }
            [(g[2] * v[0] - g[1] * v[1]) / det, (g[0] * v[1] - g[1] * v[0]) / det]
        };
        let e0 = [1.0, 0.0];
        let e1 = [0.0, 1.0];
        let lie = if dim == 1 {
            [self.lie_derivative(&e0, &e0), 0.0, 0.0]
        } else {
            [self.lie_derivative(&e0, &e0), self.lie_derivative(&e0, &e1), self.lie_derivative(&e1, &e1)]
        };
        Ok(XField { x, lie })
    }
}
