//! Model 1 closed forms for the two-week, one-week-window regime.
//!
//! Users are grouped into cells by first active day and by how many of the
//! remaining weekday and weekend days in their interval they are active. Each
//! cell has a fixed active-day count `n` and weekend share `w / n`; the bias is
//! the cell-weighted mean share minus 2/7, and the variance coefficients follow
//! from `E[1/n]` and the variance of the share.

use super::{binom_pmf, validate_p, BiasVarianceReport, Model1Params, WEEKEND_SHARE};
use crate::domain::{ExperimentCalendar, InclusionPolicy, Weekday};
use crate::error::{Error, Result};

/// Expected size of the cohort whose first active day is `i`.
pub fn model1_cohort_size(n_total: f64, p: f64, i: u32) -> f64 {
    n_total * (1.0 - p).powi(i as i32 - 1) * p
}

/// One group of admitted users sharing an active-day count and weekend share.
#[derive(Debug, Clone, Copy)]
struct Cell {
    prob: f64,
    active_days: u32,
    weekend_share: f64,
}

fn check_regime(policy: InclusionPolicy, calendar: &ExperimentCalendar) -> Result<()> {
    let supported = match policy {
        // 14 consecutive days always hold 10 weekdays and 4 weekend days.
        InclusionPolicy::Open => calendar.k() == 14,
        InclusionPolicy::Bounded { d } => {
            calendar.k() == 14 && d == 7 && calendar.start_dow() == Weekday::Monday
        }
    };
    if supported {
        Ok(())
    } else {
        Err(Error::ClosedFormUnavailable(format!(
            "model 1 {policy} with k={} starting {}",
            calendar.k(),
            calendar.start_dow()
        )))
    }
}

/// Cells with unconditional probabilities; their total is the admission
/// probability.
fn cells(policy: InclusionPolicy, p: f64) -> Vec<Cell> {
    let q = 1.0 - p;
    let mut out = Vec::new();
    match policy {
        InclusionPolicy::Open => {
            for weekdays in 0..=10u32 {
                for weekends in 0..=4u32 {
                    if weekdays + weekends == 0 {
                        continue;
                    }
                    let n = weekdays + weekends;
                    out.push(Cell {
                        prob: binom_pmf(10, weekdays, p) * binom_pmf(4, weekends, p),
                        active_days: n,
                        weekend_share: weekends as f64 / n as f64,
                    });
                }
            }
        }
        InclusionPolicy::Bounded { .. } => {
            // Monday start: first days 1..=5 are weekdays and the window holds
            // 4 more weekdays and both weekend days; first days 6 and 7 are
            // weekend days and the window holds 5 weekdays and 1 more weekend day.
            for first in 1..=7u32 {
                let cohort = q.powi(first as i32 - 1) * p;
                let (first_is_weekend, weekdays, weekends) =
                    if first <= 5 { (0, 4, 2) } else { (1, 5, 1) };
                for j in 0..=weekdays {
                    for w in 0..=weekends {
                        let n = 1 + j + w;
                        out.push(Cell {
                            prob: cohort * binom_pmf(weekdays, j, p) * binom_pmf(weekends, w, p),
                            active_days: n,
                            weekend_share: (first_is_weekend + w) as f64 / n as f64,
                        });
                    }
                }
            }
        }
    }
    out
}

struct Moments {
    admission: f64,
    mean_share: f64,
    share_variance: f64,
    mean_inverse_days: f64,
}

fn moments(policy: InclusionPolicy, p: f64) -> Moments {
    let cells = cells(policy, p);
    let admission: f64 = cells.iter().map(|c| c.prob).sum();
    let mean_share = cells.iter().map(|c| c.prob * c.weekend_share).sum::<f64>() / admission;
    let share_variance = cells
        .iter()
        .map(|c| c.prob * (c.weekend_share - mean_share).powi(2))
        .sum::<f64>()
        / admission;
    let mean_inverse_days =
        cells.iter().map(|c| c.prob / c.active_days as f64).sum::<f64>() / admission;
    Moments {
        admission,
        mean_share,
        share_variance,
        mean_inverse_days,
    }
}

/// Bias per unit of `tau_prime`.
pub fn model1_bias_coefficient(
    policy: InclusionPolicy,
    p: f64,
    calendar: &ExperimentCalendar,
) -> Result<f64> {
    validate_p(p)?;
    policy.validate(calendar)?;
    check_regime(policy, calendar)?;
    Ok(moments(policy, p).mean_share - WEEKEND_SHARE)
}

/// Expected estimate minus `tau + (2/7) tau_prime`.
///
/// Covers `k = 14` (open, any start weekday) and `k = 14, d = 7` with a Monday
/// start (bounded). Anything else returns [`Error::ClosedFormUnavailable`].
pub fn model1_bias(
    policy: InclusionPolicy,
    p: f64,
    tau_prime: f64,
    calendar: &ExperimentCalendar,
) -> Result<f64> {
    Ok(tau_prime * model1_bias_coefficient(policy, p, calendar)?)
}

/// `(eta, zeta)` such that `E[Var(delta)] = eta sigma^2 + zeta tau_prime^2`
/// for `n_per_arm` users randomized into each arm.
///
/// `eta` carries both arms' noise; only the treatment arm carries the weekend
/// interaction, so `zeta` has a single `1 / E[N]` term.
pub fn model1_variance_coeffs(
    policy: InclusionPolicy,
    p: f64,
    calendar: &ExperimentCalendar,
    n_per_arm: f64,
) -> Result<(f64, f64)> {
    validate_p(p)?;
    policy.validate(calendar)?;
    check_regime(policy, calendar)?;
    if !(n_per_arm > 0.0) {
        return Err(Error::Config(format!("n_per_arm={n_per_arm} must be > 0")));
    }
    let m = moments(policy, p);
    let expected_n = n_per_arm * m.admission;
    Ok((
        2.0 * m.mean_inverse_days / expected_n,
        m.share_variance / expected_n,
    ))
}

pub fn model1_report(
    params: &Model1Params,
    policy: InclusionPolicy,
    n_per_arm: f64,
) -> Result<BiasVarianceReport> {
    params.validate()?;
    let bias = model1_bias(policy, params.p, params.tau_prime, &params.calendar)?;
    let (eta, zeta) = model1_variance_coeffs(policy, params.p, &params.calendar, n_per_arm)?;
    Ok(BiasVarianceReport {
        policy,
        bias,
        variance: eta * params.sigma.powi(2) + zeta * params.tau_prime.powi(2),
        eta,
        zeta,
    })
}
