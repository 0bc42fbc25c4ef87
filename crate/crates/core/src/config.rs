//! Experiment configuration with per-family defaults.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::acquisition::Policy;
use crate::error::{Error, Result};
use crate::residual::ResidualConfig;
use crate::solvers::{IcGeneratorSpec, SolverConfig};
use crate::surrogate::SurrogateConfig;
use crate::types::{make_grid, Family, Grid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: Family,
    pub grid: Grid,
    pub ic: IcGeneratorSpec,
    /// Half-open sampling range `[lo, hi)` per PDE coefficient, keyed by name.
    pub delta_ranges: BTreeMap<String, [f64; 2]>,
    pub pool_size: usize,
    pub test_size: usize,
    pub initial_size: usize,
    pub batch_size: usize,
    pub rounds: usize,
    pub surrogate: SurrogateConfig,
    /// Continue training from the previous round's model instead of refitting.
    #[serde(default)]
    pub warm_start: bool,
    pub policy: Policy,
    /// SBAL sharpness.
    pub beta: f64,
    /// Divide scores by the nearest training sample's truth score.
    pub normalize: bool,
    pub seeds: Vec<u64>,
    pub solver: SolverConfig,
    pub residual: ResidualConfig,
    /// Extra test candidates tried when test simulations fail.
    pub max_test_retries: usize,
    /// Worker threads; `None` uses every core.
    pub workers: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn defaults(family: Family) -> Self {
        let (grid, ranges, pool, test, rounds) = match family {
            Family::Burgers1D => (
                make_grid(1, 256, 2.0 * PI, 0.05, 41).expect("valid default grid"),
                vec![("nu", [0.1, 1.0])],
                128,
                32,
                6,
            ),
            Family::CompressibleNS2D => (
                make_grid(2, 64, 1.0, 0.025, 21).expect("valid default grid"),
                vec![("eta", [0.01, 0.1]), ("zeta", [0.01, 0.1])],
                64,
                16,
                4,
            ),
        };
        ExperimentConfig {
            family,
            grid,
            ic: IcGeneratorSpec::default(),
            delta_ranges: ranges.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            pool_size: pool,
            test_size: test,
            initial_size: 8,
            batch_size: 8,
            rounds,
            surrogate: SurrogateConfig::default(),
            warm_start: false,
            policy: Policy::TopK,
            beta: 1.0,
            normalize: true,
            seeds: (0..5).collect(),
            solver: SolverConfig::default(),
            residual: ResidualConfig::default(),
            max_test_retries: 64,
            workers: None,
            output_dir: None,
        }
    }

    /// Parses a JSON document. Missing keys take the defaults of the
    /// document's `family` (Burgers when absent); unknown keys are rejected.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let user: Value = serde_json::from_str(text).map_err(|e| Error::config("<document>", e.to_string()))?;
        let Value::Object(user) = user else {
            return Err(Error::config("<document>", "expected a JSON object"));
        };
        let family = match user.get("family") {
            None => Family::Burgers1D,
            Some(v) => serde_json::from_value(v.clone())
                .map_err(|_| Error::config("family", format!("unknown family {v}, expected \"burgers1d\" or \"ns2d\"")))?,
        };
        let Value::Object(base) = serde_json::to_value(Self::defaults(family))? else {
            unreachable!("config serializes to an object")
        };
        for key in user.keys() {
            if !base.contains_key(key) {
                return Err(Error::config(key.clone(), "unknown key"));
            }
        }
        // decode one key at a time so a type error names its field
        for (key, value) in &user {
            let mut probe = base.clone();
            probe.insert(key.clone(), value.clone());
            if let Err(e) = serde_json::from_value::<ExperimentConfig>(Value::Object(probe)) {
                return Err(Error::config(key.clone(), e.to_string()));
            }
        }
        let mut merged: Map<String, Value> = base;
        merged.extend(user);
        let config: ExperimentConfig =
            serde_json::from_value(Value::Object(merged)).map_err(|e| Error::config("<document>", e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Coefficient ranges in the family's coefficient order.
    pub fn ranges(&self) -> Vec<[f64; 2]> {
        self.family
            .coefficient_names()
            .iter()
            .map(|n| self.delta_ranges.get(*n).copied().unwrap_or([0.0, 1.0]))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let family = self.family;
        if self.grid.dim() != family.dim() {
            return Err(Error::config(
                "grid.dim",
                format!("{} needs dim {}, got {}", family.name(), family.dim(), self.grid.dim()),
            ));
        }
        self.ic.validate()?;
        self.solver.validate()?;
        let names = family.coefficient_names();
        for key in self.delta_ranges.keys() {
            if !names.contains(&key.as_str()) {
                return Err(Error::config(
                    format!("delta_ranges.{key}"),
                    format!("{} has coefficients {names:?}", family.name()),
                ));
            }
        }
        for name in names {
            let field = format!("delta_ranges.{name}");
            let Some(&[lo, hi]) = self.delta_ranges.get(*name) else {
                return Err(Error::config(field, "missing range"));
            };
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(Error::config(field, "bounds must be finite"));
            }
            if lo >= hi {
                return Err(Error::config(
                    field,
                    format!("inverted or empty range [{lo}, {hi}]: lower bound must be below upper bound"),
                ));
            }
            if lo <= 0.0 {
                return Err(Error::config(field, format!("coefficients must be positive, got lower bound {lo}")));
            }
        }
        for (field, v) in [
            ("pool_size", self.pool_size),
            ("test_size", self.test_size),
            ("initial_size", self.initial_size),
            ("batch_size", self.batch_size),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        let needed = self.initial_size + self.rounds * self.batch_size;
        if needed > self.pool_size {
            return Err(Error::config(
                "pool_size",
                format!(
                    "initial_size + rounds * batch_size = {needed} exceeds pool_size {}",
                    self.pool_size
                ),
            ));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::config("beta", format!("must be positive, got {}", self.beta)));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "need at least one seed"));
        }
        let mut unique = self.seeds.clone();
        unique.sort_unstable();
        unique.dedup();
        if unique.len() != self.seeds.len() {
            return Err(Error::config("seeds", "seeds must be distinct"));
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers", "must be at least 1"));
        }
        if let Some(w) = &self.residual.channel_weights {
            let eqs = residual_equations(family);
            if w.len() != eqs || w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                return Err(Error::config(
                    "residual.channel_weights",
                    format!("need {eqs} nonnegative weights with a positive sum"),
                ));
            }
        }
        match &self.surrogate {
            SurrogateConfig::SpectralRidge(c) => {
                if !(c.ridge.is_finite() && c.ridge >= 0.0) {
                    return Err(Error::config("surrogate.ridge", "must be finite and nonnegative"));
                }
                if c.degree > 2 {
                    return Err(Error::config("surrogate.degree", "must be 0, 1 or 2"));
                }
                if c.k_max == Some(0) {
                    return Err(Error::config("surrogate.k_max", "must be at least 1"));
                }
            }
            SurrogateConfig::StencilNet(c) => {
                if family != Family::Burgers1D {
                    return Err(Error::config("surrogate.kind", "stencil_net supports burgers1d only"));
                }
                if c.hidden == 0 || c.batch_size == 0 {
                    return Err(Error::config("surrogate", "hidden and batch_size must be positive"));
                }
                if !(c.learning_rate.is_finite() && c.learning_rate > 0.0) {
                    return Err(Error::config("surrogate.learning_rate", "must be positive"));
                }
                if !(0.0..1.0).contains(&c.momentum) {
                    return Err(Error::config("surrogate.momentum", "must lie in [0, 1)"));
                }
            }
        }
        Ok(())
    }
}

/// Residual equations scored for a family: Burgers 1, NS continuity + 2 momentum.
pub fn residual_equations(family: Family) -> usize {
    match family {
        Family::Burgers1D => 1,
        Family::CompressibleNS2D => 3,
    }
}
