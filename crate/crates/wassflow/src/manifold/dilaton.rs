use std::f64::consts::PI;

use super::{ManifoldSpec, MetricMeasureSpace};
use crate::error::{Error, Result};

/// Closed-form dilaton fields.
#[derive(Clone, Debug, PartialEq)]
pub enum DilatonRule {
    Zero,
    Constant(f64),
    /// Smooth periodic bump of height `amplitude` centered at `center`:
    /// `amplitude * exp(concentration * (sum_k cos(2 pi (x_k - c_k) / L_k) - dim))`
    /// on the torus, `amplitude * exp(concentration * (n . c - 1))` on the
    /// sphere and `amplitude * exp(concentration * (cos(x - c) - 1))` on the
    /// circle (in the parameter `x`).
    Bump { amplitude: f64, concentration: f64, center: [f64; 3] },
    /// `amplitude * cos(2 pi (kx x / Lx + ky y / Ly))` on the torus.
    Cosine { amplitude: f64, modes: [i32; 2] },
}

impl DilatonRule {
    pub fn eval(&self, spec: &ManifoldSpec, p: &[f64; 3]) -> Result<f64> {
        Ok(match *self {
            DilatonRule::Zero => 0.0,
            DilatonRule::Constant(c) => c,
            DilatonRule::Bump { amplitude, concentration, center } => {
                let e = match spec {
                    ManifoldSpec::Circle { .. } => (p[1] - center[0]).cos() - 1.0,
                    ManifoldSpec::FlatTorus { sides, .. } => {
                        (2.0 * PI * (p[0] - center[0]) / sides[0]).cos()
                            + (2.0 * PI * (p[1] - center[1]) / sides[1]).cos()
                            - 2.0
                    }
                    ManifoldSpec::RoundSphere { radius, .. } => {
                        let c = super::geometry::normalize(&center);
                        (p[0] * c[0] + p[1] * c[1] + p[2] * c[2]) / radius - 1.0
                    }
                };
                amplitude * (concentration * e).exp()
            }
            DilatonRule::Cosine { amplitude, modes } => match spec {
                ManifoldSpec::FlatTorus { sides, .. } => {
                    amplitude
                        * (2.0 * PI * (modes[0] as f64 * p[0] / sides[0] + modes[1] as f64 * p[1] / sides[1])).cos()
                }
                ManifoldSpec::Circle { .. } => amplitude * (modes[0] as f64 * p[1]).cos(),
                ManifoldSpec::RoundSphere { .. } => {
                    return Err(Error::InvalidDilaton("cosine rule is defined on the torus and circle only".into()))
                }
            },
        })
    }

    pub fn sample(&self, m: &MetricMeasureSpace) -> Result<Vec<f64>> {
        m.points().iter().map(|p| self.eval(m.spec(), p)).collect()
    }
}
