//! Heat-kernel deformations of weighted Riemannian manifolds.
//!
//! The crate builds discrete weighted manifolds ([`manifold`]), their heat
//! semigroups ([`heat`]), the metrics induced on `M` by pulling back the
//! Wasserstein metric along `z -> p_t(., z) omega` ([`otto_flow`]), exact and
//! entropic optimal transport between discrete measures ([`transport`]), and
//! harmonic-map energies of surfaces into warped targets ([`sigma_model`]).

pub mod error;
pub mod extrapolate;
pub mod heat;
pub mod manifold;
pub mod otto_flow;
pub mod sigma_model;
pub mod transport;

pub use error::{Error, Result};

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/manifolds-and-heat.md")]
    pub struct ManifoldsAndHeat;
    #[doc = include_str!("../../../book/src/flowed-metric.md")]
    pub struct FlowedMetric;
    #[doc = include_str!("../../../book/src/transport.md")]
    pub struct Transport;
    #[doc = include_str!("../../../book/src/sigma-model.md")]
    pub struct SigmaModel;
}
