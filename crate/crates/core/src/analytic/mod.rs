//! Closed-form bias and variance of the open and bounded estimators under the
//! two population models, plus an exhaustive enumeration oracle.
//!
//! *Model 1* (fixed target population): every user is active on each day
//! independently with probability `p`.
//!
//! *Model 2* (evolving target population): `ns` new users per arm arrive each
//! day and stay active every day after arrival.
//!
//! In both models the treatment adds `tau` on every active day and a further
//! `tau_prime` on weekend days; control outcomes are `c` plus Normal(0, sigma^2)
//! noise. The true average effect is `tau + (2/7) tau_prime`, and all biases
//! are reported against it.

mod model1;
mod model2;
mod oracle;
mod toy;

pub use model1::{model1_bias, model1_bias_coefficient, model1_cohort_size, model1_report, model1_variance_coeffs};
pub use model2::{model2_bias, model2_report, model2_variance, model2_variance_coeffs, Model2VarianceCoeffs};
pub use oracle::{enumeration_oracle, EffectModel, OracleExpectation, MAX_ENUMERATION_DAYS};
pub use toy::{toy_even_day_ratio, TOY_DAYS, TOY_EFFECT_DAYS, TOY_WINDOW};

use serde::{Deserialize, Serialize};

use crate::domain::{ExperimentCalendar, InclusionPolicy};
use crate::error::{Error, Result};

/// Share of weekend days in the population: the weight of `tau_prime` in the
/// true average treatment effect.
pub const WEEKEND_SHARE: f64 = 2.0 / 7.0;

/// Parameters of the fixed-population, random-engagement model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Model1Params {
    /// Daily activity probability.
    pub p: f64,
    pub tau: f64,
    pub tau_prime: f64,
    pub sigma: f64,
    pub c: f64,
    pub calendar: ExperimentCalendar,
    /// Bounded observation window.
    pub d: u32,
}

impl Default for Model1Params {
    fn default() -> Self {
        Self {
            p: 0.5,
            tau: 0.0,
            tau_prime: 0.0,
            sigma: 1.0,
            c: 0.0,
            calendar: ExperimentCalendar::two_weeks(),
            d: 7,
        }
    }
}

impl Model1Params {
    /// `p` must lie in `(0, 1]`; `p = 1` is the degenerate always-active case.
    pub fn validate(&self) -> Result<()> {
        validate_p(self.p)?;
        validate_effects(self.tau, self.tau_prime, self.sigma, self.c)?;
        InclusionPolicy::Bounded { d: self.d }.validate(&self.calendar)
    }
}

/// Parameters of the evolving-population, always-present model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Model2Params {
    /// New users per day per arm.
    pub ns: u32,
    pub tau: f64,
    pub tau_prime: f64,
    pub sigma: f64,
    pub c: f64,
    pub calendar: ExperimentCalendar,
    pub d: u32,
}

impl Default for Model2Params {
    fn default() -> Self {
        Self {
            ns: 100,
            tau: 0.0,
            tau_prime: 0.0,
            sigma: 1.0,
            c: 0.0,
            calendar: ExperimentCalendar::two_weeks(),
            d: 7,
        }
    }
}

impl Model2Params {
    pub fn validate(&self) -> Result<()> {
        if self.ns == 0 {
            return Err(Error::Config("ns must be >= 1".into()));
        }
        validate_effects(self.tau, self.tau_prime, self.sigma, self.c)?;
        InclusionPolicy::Bounded { d: self.d }.validate(&self.calendar)
    }
}

pub(crate) fn validate_p(p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("activity probability p={p} must be in (0, 1]")))
    }
}

fn validate_effects(tau: f64, tau_prime: f64, sigma: f64, c: f64) -> Result<()> {
    if !(tau.is_finite() && tau_prime.is_finite() && c.is_finite()) {
        return Err(Error::Config("effects and control level must be finite".into()));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::Config(format!("sigma={sigma} must be finite and >= 0")));
    }
    Ok(())
}

/// Bias and expected variance of one policy's estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasVarianceReport {
    pub policy: InclusionPolicy,
    /// Expected estimate minus `tau + (2/7) tau_prime`.
    pub bias: f64,
    pub variance: f64,
    /// Weight of `sigma^2` in the variance.
    pub eta: f64,
    /// Weight of `tau_prime^2` in the variance.
    pub zeta: f64,
}

/// Binomial probability mass `C(n, j) p^j (1-p)^(n-j)`.
pub(crate) fn binom_pmf(n: u32, j: u32, p: f64) -> f64 {
    use statrs::function::factorial::ln_binomial;
    let coef = ln_binomial(n as u64, j as u64).exp().round();
    coef * p.powi(j as i32) * (1.0 - p).powi((n - j) as i32)
}
