//! Flat `key = value` configuration with `[section]` headers.
//!
//! ```text
//! experiment = heat-axioms, varadhan
//! seed = 0
//!
//! [manifold]
//! kind = flat-torus
//! resolution = 32
//! side = 1.0
//!
//! [dilaton]
//! rule = bump
//! amplitude = 0.5
//! ```
//!
//! Keys before the first header belong to the `run` section. `#` starts a
//! comment. Lists are comma separated.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use wassflow::manifold::{ConformalFactor, DilatonRule, ManifoldSpec};

use crate::experiments::CATALOG;

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

const SECTIONS: [&str; 7] = ["run", "manifold", "dilaton", "schedule", "tolerance", "params", "output"];

/// Parsed but untyped entries, keyed by `(section, key)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<(String, String), String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        let mut section = "run".to_string();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let Some(name) = rest.strip_suffix(']') else {
                    return err(format!("line {}: unterminated section header", no + 1));
                };
                let name = name.trim().to_ascii_lowercase();
                if !SECTIONS.contains(&name.as_str()) {
                    return err(format!("line {}: unknown section [{name}]; valid sections: {}", no + 1, SECTIONS.join(", ")));
                }
                section = name;
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return err(format!("line {}: expected `key = value`", no + 1));
            };
            let key = k.trim().to_ascii_lowercase();
            if key.is_empty() {
                return err(format!("line {}: empty key", no + 1));
            }
            if entries.insert((section.clone(), key.clone()), v.trim().to_string()).is_some() {
                return err(format!("line {}: duplicate key {section}.{key}", no + 1));
            }
        }
        Ok(RawConfig { entries })
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.entries.get(&(section.to_string(), key.to_string())).map(String::as_str)
    }

    fn keys<'a>(&'a self, section: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.entries.keys().filter(move |(s, _)| s == section).map(|(_, k)| k.as_str())
    }

    fn check_keys(&self, section: &str, allowed: &[&str]) -> Result<(), ConfigError> {
        for k in self.keys(section) {
            if !allowed.contains(&k) {
                return err(format!("unknown key {section}.{k}; valid keys: {}", allowed.join(", ")));
            }
        }
        Ok(())
    }

    fn number<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, ConfigError> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| ConfigError(format!("{section}.{key}: cannot parse `{v}`"))),
        }
    }

    fn list<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>, ConfigError> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| s.trim().parse().map_err(|_| ConfigError(format!("{section}.{key}: cannot parse `{}`", s.trim()))))
                .collect::<Result<Vec<T>, _>>()
                .map(Some),
        }
    }
}

/// Explicit schedules replacing the experiment defaults.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Schedules {
    pub t: Option<Vec<f64>>,
    pub eps: Option<Vec<f64>>,
    pub q: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiments: Vec<String>,
    pub seed: u64,
    pub manifold: Option<ManifoldSpec>,
    pub dilaton: Option<DilatonRule>,
    pub schedules: Schedules,
    /// Requested tolerance overrides, checked against each experiment's names.
    pub tolerances: BTreeMap<String, f64>,
    /// Integer knobs such as sample counts or subsampling levels.
    pub params: BTreeMap<String, f64>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        Self::from_raw(&RawConfig::parse(text)?)
    }

    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        raw.check_keys("run", &["experiment", "seed"])?;
        raw.check_keys("output", &["dir"])?;
        raw.check_keys("schedule", &["t", "eps", "q"])?;
        let Some(list) = raw.get("run", "experiment") else {
            return err(format!("missing `experiment`; valid names: {}", CATALOG.join(", ")));
        };
        let experiments: Vec<String> = if list.trim() == "all" {
            CATALOG.iter().map(|s| s.to_string()).collect()
        } else {
            list.split(',').map(|s| s.trim().to_string()).collect()
        };
        for e in &experiments {
            if !CATALOG.contains(&e.as_str()) {
                return err(format!("unknown experiment `{e}`; valid names: {}", CATALOG.join(", ")));
            }
        }
        let seed = raw.number("run", "seed")?.unwrap_or(0);
        let schedules = Schedules { t: raw.list("schedule", "t")?, eps: raw.list("schedule", "eps")?, q: raw.list("schedule", "q")? };
        for (name, s) in [("t", &schedules.t), ("eps", &schedules.eps), ("q", &schedules.q)] {
            if let Some(v) = s {
                check_schedule(name, v)?;
            }
        }
        let mut tolerances = BTreeMap::new();
        for k in raw.keys("tolerance") {
            let v: f64 = raw.number("tolerance", k)?.unwrap_or(f64::NAN);
            tolerances.insert(k.to_string(), v);
        }
        check_tolerances(&tolerances)?;
        let mut params = BTreeMap::new();
        for k in raw.keys("params") {
            let v: f64 = raw.number("params", k)?.unwrap_or(f64::NAN);
            if !v.is_finite() {
                return err(format!("params.{k} must be finite"));
            }
            params.insert(k.to_string(), v);
        }
        Ok(ExperimentConfig {
            experiments,
            seed,
            manifold: manifold(raw)?,
            dilaton: dilaton(raw)?,
            schedules,
            tolerances,
            params,
            out: raw.get("output", "dir").map(PathBuf::from),
        })
    }

    /// Applies `k=v` overrides from the command line.
    pub fn override_tolerances(&mut self, pairs: &[String]) -> Result<(), ConfigError> {
        for p in pairs {
            let Some((k, v)) = p.split_once('=') else {
                return err(format!("tolerance override `{p}` is not of the form key=value"));
            };
            let v: f64 = v.trim().parse().map_err(|_| ConfigError(format!("tolerance override `{p}`: bad number")))?;
            self.tolerances.insert(k.trim().to_ascii_lowercase(), v);
        }
        check_tolerances(&self.tolerances)
    }
}

fn check_schedule(name: &str, v: &[f64]) -> Result<(), ConfigError> {
    if v.is_empty() {
        return err(format!("schedule.{name} is empty"));
    }
    if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return err(format!("schedule.{name} entries must be positive"));
    }
    let up = v.windows(2).all(|w| w[1] > w[0]);
    let down = v.windows(2).all(|w| w[1] < w[0]);
    if !(up || down) {
        return err(format!("schedule.{name} must be strictly monotone"));
    }
    Ok(())
}

fn check_tolerances(t: &BTreeMap<String, f64>) -> Result<(), ConfigError> {
    for (k, v) in t {
        if !(v.is_finite() && *v > 0.0) {
            return err(format!("tolerance.{k} must be positive"));
        }
    }
    Ok(())
}

fn manifold(raw: &RawConfig) -> Result<Option<ManifoldSpec>, ConfigError> {
    raw.check_keys("manifold", &["kind", "resolution", "side", "subdivisions", "radius", "factor_base", "factor_amplitude"])?;
    let Some(kind) = raw.get("manifold", "kind") else {
        return match raw.keys("manifold").next() {
            Some(_) => err("manifold section needs `kind`"),
            None => Ok(None),
        };
    };
    let spec = match kind {
        "flat-torus" | "torus" => {
            let n = raw.number("manifold", "resolution")?.unwrap_or(32usize);
            let side = raw.number("manifold", "side")?.unwrap_or(1.0);
            ManifoldSpec::flat_torus(n, side)
        }
        "sphere" => ManifoldSpec::RoundSphere {
            subdivisions: raw.number("manifold", "subdivisions")?.unwrap_or(3),
            radius: raw.number("manifold", "radius")?.unwrap_or(1.0),
        },
        "circle" => {
            let resolution = raw.number("manifold", "resolution")?.unwrap_or(256usize);
            let base = raw.number("manifold", "factor_base")?.unwrap_or(1.0);
            let amp: f64 = raw.number("manifold", "factor_amplitude")?.unwrap_or(0.0);
            let factor = if amp == 0.0 { ConformalFactor::Constant(base) } else { ConformalFactor::Sine { base, amplitude: amp } };
            ManifoldSpec::Circle { resolution, factor }
        }
        other => return err(format!("manifold.kind `{other}`; valid kinds: flat-torus, sphere, circle")),
    };
    spec.validate().map_err(|e| ConfigError(e.to_string()))?;
    Ok(Some(spec))
}

fn dilaton(raw: &RawConfig) -> Result<Option<DilatonRule>, ConfigError> {
    raw.check_keys("dilaton", &["rule", "amplitude", "concentration", "center", "modes"])?;
    let Some(rule) = raw.get("dilaton", "rule") else {
        return match raw.keys("dilaton").next() {
            Some(_) => err("dilaton section needs `rule`"),
            None => Ok(None),
        };
    };
    let amplitude = raw.number("dilaton", "amplitude")?;
    Ok(Some(match rule {
        "zero" => DilatonRule::Zero,
        "constant" => DilatonRule::Constant(amplitude.unwrap_or(0.0)),
        "bump" => {
            let c: Vec<f64> = raw.list("dilaton", "center")?.unwrap_or_else(|| vec![0.3, 0.6, 0.0]);
            if c.len() > 3 {
                return err("dilaton.center takes at most three coordinates");
            }
            let mut center = [0.0; 3];
            center[..c.len()].copy_from_slice(&c);
            DilatonRule::Bump {
                amplitude: amplitude.unwrap_or(0.5),
                concentration: raw.number("dilaton", "concentration")?.unwrap_or(1.0),
                center,
            }
        }
        "cosine" => {
            let m: Vec<i32> = raw.list("dilaton", "modes")?.unwrap_or_else(|| vec![1, 0]);
            if m.len() != 2 {
                return err("dilaton.modes takes two integers");
            }
            DilatonRule::Cosine { amplitude: amplitude.unwrap_or(0.1), modes: [m[0], m[1]] }
        }
        other => return err(format!("dilaton.rule `{other}`; valid rules: zero, constant, bump, cosine")),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_lists_and_comments() {
        let c = ExperimentConfig::from_text(
            "experiment = varadhan, bochner # two\nseed = 7\n[manifold]\nkind = sphere\nsubdivisions = 2\n[schedule]\nt = 0.1, 0.2\n[tolerance]\nmass = 1e-9\n",
        )
        .unwrap();
        assert_eq!(c.experiments, ["varadhan", "bochner"]);
        assert_eq!(c.seed, 7);
        assert_eq!(c.manifold, Some(ManifoldSpec::sphere(2)));
        assert_eq!(c.schedules.t, Some(vec![0.1, 0.2]));
        assert_eq!(c.tolerances["mass"], 1e-9);
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "experiment = nope",
            "seed = 1",
            "experiment = varadhan\n[bogus]\n",
            "experiment = varadhan\n[schedule]\nt = 0.2, 0.1, 0.3\n",
            "experiment = varadhan\n[tolerance]\nmass = -1\n",
            "experiment = varadhan\nexperiment = bochner",
            "experiment = varadhan\n[manifold]\nkind = torus\nresolution = 2\n",
            "experiment = varadhan\n[dilaton]\nrule = wobble\n",
        ] {
            assert!(ExperimentConfig::from_text(text).is_err(), "{text}");
        }
    }

    #[test]
    fn unknown_experiment_lists_catalog() {
        let e = ExperimentConfig::from_text("experiment = nope").unwrap_err();
        for name in CATALOG {
            assert!(e.0.contains(name));
        }
    }

    #[test]
    fn overrides_replace_tolerances() {
        let mut c = ExperimentConfig::from_text("experiment = all").unwrap();
        assert_eq!(c.experiments.len(), 13);
        c.override_tolerances(&["mass=1e-3".into()]).unwrap();
        assert_eq!(c.tolerances["mass"], 1e-3);
        assert!(c.override_tolerances(&["mass".into()]).is_err());
    }
}
