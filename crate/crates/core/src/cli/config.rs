//! Resolved run configuration. Built from defaults, then command-line flags,
//! then an optional JSON config file whose keys take precedence.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::eventlog::ColumnMap;
use crate::analytic::{Model1Params, Model2Params};
use crate::domain::{ExperimentCalendar, InclusionPolicy, Weekday};
use crate::error::{Error, Result};
use crate::metrics::TestKind;
use crate::power::{default_fractions, PowerConfig, DEFAULT_ALPHA, DEFAULT_REPETITIONS};
use crate::simulate::{EffectMode, EffectSpec, NoiseShape, Seed, SimOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Open,
    Bounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Model1,
    Model2,
    Toy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub k: u32,
    pub start_dow: Weekday,
    pub d: u32,
    pub policies: Vec<PolicyKind>,
    pub test: TestKind,
    pub alpha: f64,
    pub repetitions: usize,
    pub fractions: Vec<f64>,
    pub seed: u64,
    pub model: ModelKind,
    /// Model 1 daily activity probability.
    pub p: f64,
    /// Model 1 users per arm.
    pub n_per_arm: usize,
    /// Model 2 arrivals per day per arm.
    pub ns: u32,
    pub tau: f64,
    pub tau_prime: f64,
    pub sigma: f64,
    pub c: f64,
    pub user_sigma: f64,
    pub noise: NoiseShape,
    pub effect_mode: EffectMode,
    /// Activity probabilities tabulated by `analytic`.
    pub p_grid: Vec<f64>,
    pub format: Option<Format>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub columns: ColumnMap,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            k: 14,
            start_dow: Weekday::Monday,
            d: 7,
            policies: vec![PolicyKind::Open, PolicyKind::Bounded],
            test: TestKind::Z,
            alpha: DEFAULT_ALPHA,
            repetitions: DEFAULT_REPETITIONS,
            fractions: default_fractions(),
            seed: 0,
            model: ModelKind::Model1,
            p: 0.5,
            n_per_arm: 1000,
            ns: 100,
            tau: 0.0,
            tau_prime: 0.0,
            sigma: 1.0,
            c: 0.0,
            user_sigma: 0.0,
            noise: NoiseShape::Normal,
            effect_mode: EffectMode::Absolute,
            p_grid: (1..=19).map(|i| i as f64 / 20.0).collect(),
            format: None,
            input: None,
            output: None,
            columns: ColumnMap::default(),
        }
    }
}

/// Recursively overlays `top` onto `base`; objects merge key by key, any other
/// value replaces.
pub fn deep_merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (key, value) in t {
                match b.get_mut(&key) {
                    Some(slot) => deep_merge(slot, value),
                    None => {
                        b.insert(key, value);
                    }
                }
            }
        }
        (slot, value) => *slot = value,
    }
}

impl RunConfig {
    /// Defaults, overlaid by `flags` (a JSON object of explicitly given
    /// options), overlaid by the JSON config file if any. Validates the result.
    pub fn resolve(flags: Map<String, Value>, config_file: Option<&Path>) -> Result<Self> {
        let mut merged =
            serde_json::to_value(Self::default()).map_err(|e| Error::Contract(e.to_string()))?;
        deep_merge(&mut merged, Value::Object(flags));
        if let Some(path) = config_file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let file: Value = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            if !file.is_object() {
                return Err(Error::Config(format!(
                    "{}: config file must hold a JSON object",
                    path.display()
                )));
            }
            deep_merge(&mut merged, file);
        }
        let config: Self =
            serde_json::from_value(merged).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let calendar = self.calendar()?;
        if self.policies.is_empty() {
            return Err(Error::Config("at least one policy is required".into()));
        }
        for policy in self.policies() {
            policy.validate(&calendar)?;
        }
        self.power_config().validate()?;
        if self.n_per_arm == 0 {
            return Err(Error::Config("n_per_arm must be >= 1".into()));
        }
        if self.p_grid.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
            return Err(Error::Config("p_grid values must be in (0, 1]".into()));
        }
        self.model1_params()?.validate()?;
        self.model2_params()?.validate()?;
        self.sim_options().validate(self.c)?;
        Ok(())
    }

    pub fn calendar(&self) -> Result<ExperimentCalendar> {
        ExperimentCalendar::new(self.k, self.start_dow)
    }

    pub fn policy(&self, kind: PolicyKind) -> InclusionPolicy {
        match kind {
            PolicyKind::Open => InclusionPolicy::Open,
            PolicyKind::Bounded => InclusionPolicy::Bounded { d: self.d },
        }
    }

    /// Requested policies in request order, duplicates removed.
    pub fn policies(&self) -> Vec<InclusionPolicy> {
        let mut out: Vec<InclusionPolicy> = Vec::new();
        for &kind in &self.policies {
            let policy = self.policy(kind);
            if !out.contains(&policy) {
                out.push(policy);
            }
        }
        out
    }

    pub fn model1_params(&self) -> Result<Model1Params> {
        Ok(Model1Params {
            p: self.p,
            tau: self.tau,
            tau_prime: self.tau_prime,
            sigma: self.sigma,
            c: self.c,
            calendar: self.calendar()?,
            d: self.d,
        })
    }

    pub fn model2_params(&self) -> Result<Model2Params> {
        Ok(Model2Params {
            ns: self.ns,
            tau: self.tau,
            tau_prime: self.tau_prime,
            sigma: self.sigma,
            c: self.c,
            calendar: self.calendar()?,
            d: self.d,
        })
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            user_sigma: self.user_sigma,
            noise: self.noise,
        }
    }

    pub fn effect_spec(&self) -> EffectSpec {
        EffectSpec {
            mode: self.effect_mode,
            tau: self.tau,
            tau_prime: self.tau_prime,
        }
    }

    pub fn power_config(&self) -> PowerConfig {
        PowerConfig {
            fractions: self.fractions.clone(),
            repetitions: self.repetitions,
            alpha: self.alpha,
            seed: Seed(self.seed),
            test: self.test,
        }
    }
}
