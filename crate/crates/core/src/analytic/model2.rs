//! Model 2 closed forms. Presence is deterministic after arrival, so each
//! daily cohort has a fixed active-day count and weekend share; the estimator's
//! expectation and variance are finite sums over cohorts.

use serde::{Deserialize, Serialize};

use super::{BiasVarianceReport, Model2Params, WEEKEND_SHARE};
use crate::domain::{ExperimentCalendar, InclusionPolicy};
use crate::error::{Error, Result};

/// Variance per `1 / ns`: `Var(delta) = (sigma2 sigma^2 + tau_prime2 tau_prime^2) / ns`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Model2VarianceCoeffs {
    pub sigma2: f64,
    pub tau_prime2: f64,
}

/// `(active days, weekend share)` for each admitted arrival day.
fn cohorts(policy: InclusionPolicy, calendar: &ExperimentCalendar) -> Result<Vec<(u32, f64)>> {
    let admitted = policy.admission_deadline(calendar)?;
    if admitted == 0 {
        return Err(Error::InsufficientData(format!(
            "{policy} admits no arrival day for k={}",
            calendar.k()
        )));
    }
    let k = calendar.k();
    Ok((1..=admitted)
        .map(|i| {
            let end = match policy {
                InclusionPolicy::Open => k,
                InclusionPolicy::Bounded { d } => i + d - 1,
            };
            let n = end - i + 1;
            (n, calendar.weekend_days_between(i, end) as f64 / n as f64)
        })
        .collect())
}

fn mean_share(cohorts: &[(u32, f64)]) -> f64 {
    cohorts.iter().map(|c| c.1).sum::<f64>() / cohorts.len() as f64
}

/// Bias per unit of `tau_prime`.
///
/// Bounded with a one-week window is exactly unbiased: every admitted user is
/// observed on 5 weekdays and 2 weekend days. Other bounded windows return
/// [`Error::ClosedFormUnavailable`]. Open is `mean_i n_weekend(i) / (k + 1 - i)
/// - 2/7` over arrival days `i`.
pub fn model2_bias(policy: InclusionPolicy, calendar: &ExperimentCalendar) -> Result<f64> {
    match policy {
        InclusionPolicy::Bounded { d: 7 } => {
            cohorts(policy, calendar)?;
            Ok(0.0)
        }
        InclusionPolicy::Bounded { d } => {
            policy.validate(calendar)?;
            Err(Error::ClosedFormUnavailable(format!(
                "model 2 bounded bias with d={d} (only one-week windows are covered)"
            )))
        }
        InclusionPolicy::Open => Ok(mean_share(&cohorts(policy, calendar)?) - WEEKEND_SHARE),
    }
}

/// With `a` admitted cohorts of `ns` users per arm, each arm's expected sample
/// variance is `sigma^2 mean_i(1/n_i)` plus, in treatment only,
/// `tau_prime^2 mean_i (share_i - mean share)^2`; both are divided by the arm
/// size `a ns`.
pub fn model2_variance_coeffs(
    policy: InclusionPolicy,
    calendar: &ExperimentCalendar,
) -> Result<Model2VarianceCoeffs> {
    let cohorts = cohorts(policy, calendar)?;
    let a = cohorts.len() as f64;
    let inverse_days = cohorts.iter().map(|c| 1.0 / c.0 as f64).sum::<f64>() / a;
    let share = mean_share(&cohorts);
    let share_spread = cohorts.iter().map(|c| (c.1 - share).powi(2)).sum::<f64>() / a;
    Ok(Model2VarianceCoeffs {
        sigma2: 2.0 * inverse_days / a,
        tau_prime2: share_spread / a,
    })
}

pub fn model2_variance(policy: InclusionPolicy, params: &Model2Params) -> Result<f64> {
    params.validate()?;
    let coeffs = model2_variance_coeffs(policy, &params.calendar)?;
    Ok((coeffs.sigma2 * params.sigma.powi(2) + coeffs.tau_prime2 * params.tau_prime.powi(2))
        / params.ns as f64)
}

pub fn model2_report(params: &Model2Params, policy: InclusionPolicy) -> Result<BiasVarianceReport> {
    params.validate()?;
    let bias = params.tau_prime * model2_bias(policy, &params.calendar)?;
    let coeffs = model2_variance_coeffs(policy, &params.calendar)?;
    let ns = params.ns as f64;
    let (eta, zeta) = (coeffs.sigma2 / ns, coeffs.tau_prime2 / ns);
    Ok(BiasVarianceReport {
        policy,
        bias,
        variance: eta * params.sigma.powi(2) + zeta * params.tau_prime.powi(2),
        eta,
        zeta,
    })
}
