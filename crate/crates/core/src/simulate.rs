//! Monte-Carlo populations for both models and treatment-effect injection
//! into existing activity logs.
//!
//! Every user draws from its own RNG stream, seeded from `(base seed, stream
//! tag, arm, user index)`. Output therefore does not depend on thread count or
//! scheduling, and parallel generation is identical to sequential generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{Model1Params, Model2Params};
use crate::domain::{ExperimentCalendar, UserTrace, Variant};
use crate::error::{Error, Result};

const STREAM_MODEL1: u64 = 0x6d31;
const STREAM_MODEL2: u64 = 0x6d32;
const STREAM_ASSIGN: u64 = 0x6173;

/// Base seed of a simulation or resampling run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl Seed {
    /// Pure function of the base seed and the path components.
    pub fn derive(self, path: &[u64]) -> u64 {
        path.iter()
            .fold(splitmix64(self.0), |acc, &x| splitmix64(acc ^ splitmix64(x)))
    }

    pub fn rng(self, path: &[u64]) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.derive(path))
    }
}

fn arm_tag(v: Variant) -> u64 {
    match v {
        Variant::Treatment => 1,
        Variant::Control => 0,
    }
}

/// How the treatment effect is specified for injection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectMode {
    #[default]
    Absolute,
    /// `tau` and `tau_prime` are fractions of the realized control-arm mean.
    RelativeLift,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EffectSpec {
    pub mode: EffectMode,
    pub tau: f64,
    /// Extra effect on weekend days.
    pub tau_prime: f64,
}

/// Per-day outcome noise shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseShape {
    /// `level + Normal(0, sigma^2)`.
    #[default]
    Normal,
    /// `level * exp(sigma Z - sigma^2 / 2)`: mean-preserving, right-skewed.
    LogNormal,
}

/// Optional departures from the analytic models.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SimOptions {
    /// Standard deviation of the per-user control level around `c`.
    pub user_sigma: f64,
    pub noise: NoiseShape,
}

impl SimOptions {
    pub fn validate(&self, c: f64) -> Result<()> {
        if !(self.user_sigma.is_finite() && self.user_sigma >= 0.0) {
            return Err(Error::Config(format!(
                "user_sigma={} must be finite and >= 0",
                self.user_sigma
            )));
        }
        if self.noise == NoiseShape::LogNormal && !(c > 0.0) {
            return Err(Error::Config("lognormal noise needs a positive control level c".into()));
        }
        Ok(())
    }
}

/// Outcome generator shared by both models.
struct OutcomeModel {
    c: f64,
    tau: f64,
    tau_prime: f64,
    sigma: f64,
    options: SimOptions,
    calendar: ExperimentCalendar,
}

impl OutcomeModel {
    fn user_level(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.options.user_sigma > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            self.c + self.options.user_sigma * z
        } else {
            self.c
        }
    }

    fn outcome(&self, level: f64, variant: Variant, t: u32, rng: &mut ChaCha8Rng) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        let control = match self.options.noise {
            NoiseShape::Normal => level + self.sigma * z,
            NoiseShape::LogNormal => {
                level * (self.sigma * z - 0.5 * self.sigma * self.sigma).exp()
            }
        };
        match variant {
            Variant::Control => control,
            Variant::Treatment => {
                let weekend = if self.calendar.is_weekend_day(t) { self.tau_prime } else { 0.0 };
                control + self.tau + weekend
            }
        }
    }
}

/// Model 1: each user is active on each day with probability `p`,
/// independently. Users who are never active are emitted with no active days.
/// Treatment users come first, then control.
pub fn simulate_model1(
    params: &Model1Params,
    n_per_arm: usize,
    seed: Seed,
    options: SimOptions,
) -> Result<Vec<UserTrace>> {
    params.validate()?;
    options.validate(params.c)?;
    if n_per_arm == 0 {
        return Err(Error::Config("n_per_arm must be >= 1".into()));
    }
    let model = OutcomeModel {
        c: params.c,
        tau: params.tau,
        tau_prime: params.tau_prime,
        sigma: params.sigma,
        options,
        calendar: params.calendar,
    };
    let k = params.calendar.k();
    let mut traces = Vec::with_capacity(2 * n_per_arm);
    for variant in [Variant::Treatment, Variant::Control] {
        let arm: Vec<UserTrace> = (0..n_per_arm)
            .into_par_iter()
            .map(|i| {
                let mut rng = seed.rng(&[STREAM_MODEL1, arm_tag(variant), i as u64]);
                let level = model.user_level(&mut rng);
                let mut trace = UserTrace::inactive(
                    format!("m1-{}-{i:06}", variant.code().to_ascii_lowercase()),
                    variant,
                    k,
                );
                for t in 1..=k {
                    if rng.random::<f64>() < params.p {
                        let y = model.outcome(level, variant, t, &mut rng);
                        trace.set_outcome(t, y);
                    }
                }
                trace
            })
            .collect();
        traces.extend(arm);
    }
    Ok(traces)
}

/// Model 2: `ns` users per arm arrive on each day and are active on every day
/// from arrival to the end of the window.
pub fn simulate_model2(params: &Model2Params, seed: Seed, options: SimOptions) -> Result<Vec<UserTrace>> {
    params.validate()?;
    options.validate(params.c)?;
    let model = OutcomeModel {
        c: params.c,
        tau: params.tau,
        tau_prime: params.tau_prime,
        sigma: params.sigma,
        options,
        calendar: params.calendar,
    };
    let k = params.calendar.k();
    let ns = params.ns as usize;
    let mut traces = Vec::with_capacity(2 * ns * k as usize);
    for variant in [Variant::Treatment, Variant::Control] {
        let arm: Vec<UserTrace> = (0..ns * k as usize)
            .into_par_iter()
            .map(|idx| {
                let arrival = (idx / ns) as u32 + 1;
                let j = idx % ns;
                let mut rng = seed.rng(&[STREAM_MODEL2, arm_tag(variant), idx as u64]);
                let level = model.user_level(&mut rng);
                let mut trace = UserTrace::inactive(
                    format!(
                        "m2-{}-d{arrival:02}-{j:05}",
                        variant.code().to_ascii_lowercase()
                    ),
                    variant,
                    k,
                );
                for t in arrival..=k {
                    let y = model.outcome(level, variant, t, &mut rng);
                    trace.set_outcome(t, y);
                }
                trace
            })
            .collect();
        traces.extend(arm);
    }
    Ok(traces)
}

/// Randomly assigns each user to treatment or control with probability 1/2
/// and adds the effect to treatment outcomes on active days (plus
/// `tau_prime` on weekend days). Control outcomes and all presence patterns
/// are left untouched.
pub fn inject_effect(
    traces: &[UserTrace],
    spec: EffectSpec,
    calendar: &ExperimentCalendar,
    assignment_seed: Seed,
) -> Result<Vec<UserTrace>> {
    if traces.is_empty() {
        return Err(Error::InsufficientData("no users to assign".into()));
    }
    if !(spec.tau.is_finite() && spec.tau_prime.is_finite()) {
        return Err(Error::Config("effect sizes must be finite".into()));
    }
    let assigned: Vec<Variant> = (0..traces.len())
        .map(|i| {
            if assignment_seed.rng(&[STREAM_ASSIGN, i as u64]).random::<bool>() {
                Variant::Treatment
            } else {
                Variant::Control
            }
        })
        .collect();

    let scale = match spec.mode {
        EffectMode::Absolute => 1.0,
        EffectMode::RelativeLift => {
            let (sum, n) = traces
                .iter()
                .zip(&assigned)
                .filter(|(_, v)| **v == Variant::Control)
                .flat_map(|(t, _)| t.active_days())
                .fold((0.0, 0usize), |(s, n), (_, y)| (s + y, n + 1));
            if n == 0 {
                return Err(Error::InsufficientData(
                    "relative lift needs at least one active control user-day".into(),
                ));
            }
            sum / n as f64
        }
    };
    let (tau, tau_prime) = (spec.tau * scale, spec.tau_prime * scale);

    Ok(traces
        .iter()
        .zip(assigned)
        .map(|(trace, variant)| {
            let mut out = trace.clone();
            out.variant = variant;
            if variant == Variant::Treatment {
                for (i, y) in out.outcomes_mut().iter_mut().enumerate() {
                    if let Some(y) = y {
                        let t = i as u32 + 1;
                        *y += tau + if calendar.is_weekend_day(t) { tau_prime } else { 0.0 };
                    }
                }
            }
            out
        })
        .collect())
}
