//! Named experiments. Each one builds its manifolds, runs the library and
//! returns checks against named tolerances.

use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wassflow::manifold::{build_manifold, DilatonRule, ManifoldSpec, MetricMeasureSpace};

use crate::config::ExperimentConfig;
use crate::report::Outcome;

mod curvature;
mod heat;
mod sigma;
mod transport;

pub const CATALOG: [&str; 13] = [
    "heat-axioms",
    "varadhan",
    "metric-limit",
    "tangency",
    "hp-tangency",
    "beta-consistency",
    "bochner",
    "monotonicity",
    "gradient-flow-F",
    "contraction",
    "coupling-deformation",
    "sigma-energies",
    "deformed-energy",
];

/// Static description of an experiment.
pub struct Spec {
    pub name: &'static str,
    pub summary: &'static str,
    pub criteria: &'static [u8],
    /// Tolerance names and default values.
    pub tolerances: &'static [(&'static str, f64)],
    /// Numeric knobs and default values.
    pub params: &'static [(&'static str, f64)],
    run: fn(&Context) -> Result<Outcome, RunError>,
}

pub fn spec(name: &str) -> Option<&'static Spec> {
    SPECS.iter().find(|s| s.name == name)
}

pub static SPECS: [Spec; 13] = [
    Spec {
        name: "heat-axioms",
        summary: "mass, symmetry and semigroup identity of the weighted heat kernel",
        criteria: &[1],
        tolerances: &[("mass", 1e-10), ("symmetry", 1e-10), ("semigroup", 1e-8)],
        params: &[("samples", 10.0)],
        run: heat::axioms,
    },
    Spec {
        name: "varadhan",
        summary: "small-time limit of -t ln p_t against d^2/4 and the lattice kernel oracle",
        criteria: &[2],
        tolerances: &[("varadhan", 0.05), ("kernel_oracle", 1e-6)],
        params: &[("pairs", 10.0)],
        run: heat::varadhan,
    },
    Spec {
        name: "metric-limit",
        summary: "g_t -> g as t -> 0 on the flat torus",
        criteria: &[3],
        tolerances: &[("metric_limit", 0.02)],
        params: &[("count", 6.0), ("ratio", 1.189_207_115_002_721)],
        run: curvature::metric_limit,
    },
    Spec {
        name: "tangency",
        summary: "d/dt g_t at t -> 0 against -2 Ric on the sphere and -2 Hess f on the torus",
        criteria: &[4],
        tolerances: &[("tangency", 0.10)],
        params: &[("count", 3.0), ("ratio", 2.0)],
        run: curvature::tangency,
    },
    Spec {
        name: "hp-tangency",
        summary: "Hamilton-Perelman constraint and the 1/q approach to the backward equation",
        criteria: &[12],
        tolerances: &[("hp_residual", 1e-6), ("hp_exponent_lo", 0.9), ("hp_exponent_hi", 1.1)],
        params: &[],
        run: curvature::hp_tangency,
    },
    Spec {
        name: "beta-consistency",
        summary: "beta integral against a finite difference of g_t in t",
        criteria: &[5],
        tolerances: &[("beta", 0.05)],
        params: &[("samples", 20.0)],
        run: curvature::beta_consistency,
    },
    Spec {
        name: "bochner",
        summary: "refinement of the integrated weighted Bochner identity",
        criteria: &[6],
        tolerances: &[("bochner_lo", 3.0), ("bochner_hi", 5.0)],
        params: &[],
        run: curvature::bochner,
    },
    Spec {
        name: "monotonicity",
        summary: "sign of the pulled-back derivative and decay of A(z, t)",
        criteria: &[7],
        tolerances: &[("monotonicity_fd", 0.05)],
        params: &[("sources", 10.0), ("directions", 5.0)],
        run: curvature::monotonicity,
    },
    Spec {
        name: "gradient-flow-F",
        summary: "F-hat along t and its t -> 0 limit against the Perelman energy",
        criteria: &[8],
        tolerances: &[("f_hat_limit", 0.02)],
        params: &[("subsampling", 4.0)],
        run: curvature::gradient_flow_f,
    },
    Spec {
        name: "contraction",
        summary: "W2 contraction of heat measures and exact transport sanity checks",
        criteria: &[9, 10],
        tolerances: &[("contraction", 1.02), ("brute_force", 1e-10), ("metric_axioms", 1e-8)],
        params: &[("pairs", 20.0), ("triples", 200.0)],
        run: transport::contraction,
    },
    Spec {
        name: "coupling-deformation",
        summary: "heat deformation of the center-of-mass coupling",
        criteria: &[9],
        tolerances: &[("coupling_bound", 1.05), ("coupling_limit", 0.02)],
        params: &[("radius", 0.3), ("points", 5.0)],
        run: transport::coupling,
    },
    Spec {
        name: "sigma-energies",
        summary: "warped factorization, conformal gauge identity, Gauss-Bonnet and E_eps",
        criteria: &[11],
        tolerances: &[("factorization", 1e-10), ("conformal", 0.05), ("gauss_bonnet", 1e-12), ("eps_limit", 0.05)],
        params: &[("grid", 64.0), ("points", 5.0), ("radius", 0.3)],
        run: sigma::energies,
    },
    Spec {
        name: "deformed-energy",
        summary: "E[phi, g_t] along t, its t -> 0 limit and a W2-speed estimate",
        criteria: &[11],
        tolerances: &[("deformed_limit", 0.02), ("speed", 0.10)],
        params: &[("grid", 32.0), ("subsample", 8.0), ("step", 2.0)],
        run: sigma::deformed,
    },
];

/// Failure of a run: bad configuration or a numerical error in a stage.
#[derive(Clone, Debug, PartialEq)]
pub enum RunError {
    Config(String),
    Numerical { experiment: String, stage: String, message: String },
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(m) => write!(f, "invalid config: {m}"),
            RunError::Numerical { experiment, stage, message } => {
                write!(f, "numerical failure in {experiment}, stage `{stage}`: {message}")
            }
        }
    }
}

impl std::error::Error for RunError {}

/// Per-experiment view of the configuration.
pub struct Context<'a> {
    pub spec: &'static Spec,
    pub config: &'a ExperimentConfig,
    tolerances: BTreeMap<String, f64>,
    params: BTreeMap<String, f64>,
}

impl<'a> Context<'a> {
    pub fn new(spec: &'static Spec, config: &'a ExperimentConfig) -> Self {
        let tolerances = spec
            .tolerances
            .iter()
            .map(|&(k, v)| (k.to_string(), config.tolerances.get(k).copied().unwrap_or(v)))
            .collect();
        let params =
            spec.params.iter().map(|&(k, v)| (k.to_string(), config.params.get(k).copied().unwrap_or(v))).collect();
        Context { spec, config, tolerances, params }
    }

    pub fn tol(&self, name: &str) -> f64 {
        self.tolerances[name]
    }

    pub fn tolerances(&self) -> &BTreeMap<String, f64> {
        &self.tolerances
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn param(&self, name: &str) -> f64 {
        self.params[name]
    }

    /// Integer parameter, at least `min`.
    pub fn count(&self, name: &str, min: usize) -> Result<usize, RunError> {
        let v = self.param(name);
        if v.fract() != 0.0 || v < min as f64 {
            return Err(RunError::Config(format!("params.{name} = {v} must be an integer >= {min}")));
        }
        Ok(v as usize)
    }

    /// Independent generator for a named stage.
    pub fn rng(&self, stage: u64) -> ChaCha8Rng {
        let name: u64 = self.spec.name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
        ChaCha8Rng::seed_from_u64(self.config.seed ^ name ^ stage.wrapping_mul(0x9e37_79b9_7f4a_7c15))
    }

    /// Wraps a library error with the stage name.
    pub fn stage<T>(&self, stage: &str, r: wassflow::Result<T>) -> Result<T, RunError> {
        r.map_err(|e| RunError::Numerical { experiment: self.spec.name.into(), stage: stage.into(), message: e.to_string() })
    }

    /// The configured manifold when present, otherwise `defaults`.
    pub fn manifolds(&self, defaults: Vec<ManifoldSpec>) -> Vec<ManifoldSpec> {
        match &self.config.manifold {
            Some(m) => vec![m.clone()],
            None => defaults,
        }
    }

    /// The configured dilaton when present, otherwise `defaults`.
    pub fn dilatons(&self, defaults: Vec<DilatonRule>) -> Vec<DilatonRule> {
        match &self.config.dilaton {
            Some(d) => vec![d.clone()],
            None => defaults,
        }
    }

    pub fn build(&self, spec: &ManifoldSpec, f: &DilatonRule) -> Result<MetricMeasureSpace, RunError> {
        let m = self.stage("build manifold", build_manifold(spec))?;
        match f {
            DilatonRule::Zero => Ok(m),
            _ => self.stage("apply dilaton", m.with_dilaton(f)),
        }
    }

    /// Configured `t` schedule, validated against `t_min`, or `default`.
    pub fn times(&self, t_min: f64, default: impl FnOnce() -> Vec<f64>) -> Result<Vec<f64>, RunError> {
        match &self.config.schedules.t {
            Some(ts) => {
                if let Some(t) = ts.iter().find(|&&t| t < t_min) {
                    return Err(RunError::Config(format!(
                        "schedule.t contains t = {t}, below t_min = {t_min} for {}",
                        self.spec.name
                    )));
                }
                Ok(ts.clone())
            }
            None => Ok(default()),
        }
    }

    /// Rejects a manifold kind the experiment cannot use.
    pub fn unsupported<T>(&self, what: &str) -> Result<T, RunError> {
        Err(RunError::Config(format!("{} does not support {what}", self.spec.name)))
    }
}

/// Names of tolerances or parameters in `given` that none of `experiments` uses.
pub fn unknown_keys(experiments: &[String], given: &BTreeMap<String, f64>, params: bool) -> Vec<String> {
    given
        .keys()
        .filter(|k| {
            !experiments.iter().filter_map(|e| spec(e)).any(|s| {
                let list = if params { s.params } else { s.tolerances };
                list.iter().any(|(n, _)| n == k)
            })
        })
        .cloned()
        .collect()
}

pub fn run(ctx: &Context) -> Result<Outcome, RunError> {
    (ctx.spec.run)(ctx)
}

/// Short description of a manifold for tables.
pub fn label(spec: &ManifoldSpec, f: &DilatonRule) -> String {
    let m = match spec {
        ManifoldSpec::FlatTorus { resolution, sides } => format!("torus{}x{}s{}", resolution[0], resolution[1], sides[0]),
        ManifoldSpec::RoundSphere { subdivisions, .. } => format!("sphere{subdivisions}"),
        ManifoldSpec::Circle { resolution, .. } => format!("circle{resolution}"),
    };
    let d = match f {
        DilatonRule::Zero => "f0".to_string(),
        DilatonRule::Constant(_) => "fconst".to_string(),
        DilatonRule::Bump { .. } => "fbump".to_string(),
        DilatonRule::Cosine { .. } => "fcos".to_string(),
    };
    format!("{m}-{d}")
}

/// Relative deviation `|a - b| / |b|`, or `|a|` when `b = 0`.
pub fn rel(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        (a - b).abs() / b.abs()
    }
}
