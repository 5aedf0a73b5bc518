//! Run configuration.
//!
//! A run is described by one TOML file:
//!
//! ```toml
//! # Offspring law: explicit (k, p_k) pairs, or a zeta tail.
//! [model.offspring]
//! support = [[1, 0.5], [2, 0.5]]   # tail = "finite" (default)
//! # tail = "zeta"
//! # beta = 2.0
//!
//! # Step law; centred automatically.
//! [model.step]
//! kind = "normal"          # normal | two_point | rademacher | uniform | lattice | tilted_polynomial
//! sigma = 1.0              # normal
//! # lo = -1.0, hi = 1.0    # uniform, and two_point with q = P(X = hi)
//! # atoms = [[-1.0, 0.5], [1.0, 0.5]]   # lattice
//!
//! [query]
//! x = 1.0
//! a = 0.2
//! n = 10                   # simulate, pmf
//! replicates = 100000      # simulate
//! seed = 42                # simulate (overridden by --seed)
//! population_cap = 10000000
//! expect_regime = "THM1_L_INF"   # optional; mismatch exits with code 3
//!
//! [rate]                   # optional tables for `rate`
//! x_min = 0.0
//! x_max = 2.0
//! x_step = 0.1
//! a_values = [0.2, 0.3]
//!
//! [output]
//! dir = "out"              # overridden by --out
//! replicates_csv = false   # per-replicate CSV from `simulate`
//! ```
//!
//! Every field is optional at parse time; each command checks the fields it
//! needs and names a missing one by its dotted path (e.g. `query.x`).

use brw_core::model::{validate_model, CheckedModel, OffspringLaw, StepLaw};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("missing required field {0}")]
    Missing(&'static str),
    #[error("invalid value for {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<QuerySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<RateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offspring: Option<OffspringSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<StepSection>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffspringSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<Vec<(u64, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuerySection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicates: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population_cap: Option<usize>,
    /// Regime label the run must land in; a mismatch exits with code 3.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_regime: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicates_csv: Option<bool>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &str) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.to_string(), source })?;
        Self::from_toml_str(&text)
    }

    fn query(&self) -> Option<&QuerySection> {
        self.query.as_ref()
    }

    pub fn x(&self) -> Result<f64, ConfigError> {
        self.query().and_then(|q| q.x).ok_or(ConfigError::Missing("query.x"))
    }

    pub fn a(&self) -> Result<f64, ConfigError> {
        self.query().and_then(|q| q.a).ok_or(ConfigError::Missing("query.a"))
    }

    pub fn n(&self) -> Result<u32, ConfigError> {
        self.query().and_then(|q| q.n).ok_or(ConfigError::Missing("query.n"))
    }

    pub fn replicates(&self) -> Result<u64, ConfigError> {
        let r = self.query().and_then(|q| q.replicates).ok_or(ConfigError::Missing("query.replicates"))?;
        if r == 0 {
            return Err(ConfigError::Invalid { field: "query.replicates", reason: "must be at least 1".into() });
        }
        Ok(r)
    }

    pub fn seed(&self) -> Result<u64, ConfigError> {
        self.query().and_then(|q| q.seed).ok_or(ConfigError::Missing("query.seed"))
    }

    pub fn population_cap(&self) -> usize {
        self.query()
            .and_then(|q| q.population_cap)
            .unwrap_or(brw_core::sim::DEFAULT_POPULATION_CAP)
    }

    pub fn expect_regime(&self) -> Option<&str> {
        self.query().and_then(|q| q.expect_regime.as_deref())
    }

    /// Sets `query.seed`, creating the section if needed.
    pub fn set_seed(&mut self, seed: u64) {
        self.query.get_or_insert_with(QuerySection::default).seed = Some(seed);
    }

    pub fn set_output_dir(&mut self, dir: &str) {
        self.output.get_or_insert_with(OutputSection::default).dir = Some(dir.to_string());
    }

    pub fn output_dir(&self) -> String {
        self.output.as_ref().and_then(|o| o.dir.clone()).unwrap_or_else(|| ".".into())
    }

    pub fn replicates_csv(&self) -> bool {
        self.output.as_ref().and_then(|o| o.replicates_csv).unwrap_or(false)
    }

    /// The x values of the `I(x)` table.
    pub fn x_grid(&self) -> Result<Vec<f64>, ConfigError> {
        let r = self.rate.clone().unwrap_or_default();
        let (lo, hi, step) = (r.x_min.unwrap_or(0.0), r.x_max.unwrap_or(2.0), r.x_step.unwrap_or(0.1));
        if !(step > 0.0 && hi >= lo) {
            return Err(ConfigError::Invalid { field: "rate.x_step", reason: "need x_step > 0 and x_max >= x_min".into() });
        }
        let count = ((hi - lo) / step + 1e-9).floor() as usize;
        Ok((0..=count).map(|i| lo + step * i as f64).collect())
    }

    /// The a values of the deviation table (defaults to `query.a`).
    pub fn a_values(&self) -> Result<Vec<f64>, ConfigError> {
        match self.rate.as_ref().and_then(|r| r.a_values.clone()) {
            Some(v) if !v.is_empty() => Ok(v),
            _ => Ok(vec![self.a()?]),
        }
    }

    pub fn offspring_law(&self) -> Result<OffspringLaw, ConfigError> {
        let o = self
            .model
            .as_ref()
            .and_then(|m| m.offspring.as_ref())
            .ok_or(ConfigError::Missing("model.offspring"))?;
        match o.tail.as_deref().unwrap_or("finite") {
            "finite" => {
                let support = o.support.clone().ok_or(ConfigError::Missing("model.offspring.support"))?;
                Ok(OffspringLaw::finite(&support))
            }
            "zeta" => {
                let beta = o.beta.ok_or(ConfigError::Missing("model.offspring.beta"))?;
                let mut law = OffspringLaw::zeta(beta);
                law.support = o.support.clone().unwrap_or_default();
                Ok(law)
            }
            other => Err(ConfigError::Invalid {
                field: "model.offspring.tail",
                reason: format!("unknown tail {other:?} (expected \"finite\" or \"zeta\")"),
            }),
        }
    }

    pub fn step_law(&self) -> Result<StepLaw, ConfigError> {
        let s = self
            .model
            .as_ref()
            .and_then(|m| m.step.as_ref())
            .ok_or(ConfigError::Missing("model.step"))?;
        let kind = s.kind.as_deref().ok_or(ConfigError::Missing("model.step.kind"))?;
        let invalid = |e: brw_core::model::ModelError| ConfigError::Invalid { field: "model.step", reason: e.to_string() };
        match kind {
            "normal" => StepLaw::normal(s.sigma.ok_or(ConfigError::Missing("model.step.sigma"))?).map_err(invalid),
            "rademacher" => Ok(StepLaw::rademacher()),
            "uniform" => StepLaw::uniform(
                s.lo.ok_or(ConfigError::Missing("model.step.lo"))?,
                s.hi.ok_or(ConfigError::Missing("model.step.hi"))?,
            )
            .map_err(invalid),
            "two_point" => StepLaw::two_point(
                s.lo.ok_or(ConfigError::Missing("model.step.lo"))?,
                s.hi.ok_or(ConfigError::Missing("model.step.hi"))?,
                s.q.ok_or(ConfigError::Missing("model.step.q"))?,
            )
            .map_err(invalid),
            "lattice" => {
                StepLaw::lattice(&s.atoms.clone().ok_or(ConfigError::Missing("model.step.atoms"))?).map_err(invalid)
            }
            "tilted_polynomial" => Ok(StepLaw::tilted_polynomial()),
            other => Err(ConfigError::Invalid { field: "model.step.kind", reason: format!("unknown step law {other:?}") }),
        }
    }

    pub fn checked_model(&self) -> Result<CheckedModel, ConfigError> {
        validate_model(&self.offspring_law()?, &self.step_law()?)
            .map_err(|e| ConfigError::Invalid { field: "model", reason: e.to_string() })
    }
}
