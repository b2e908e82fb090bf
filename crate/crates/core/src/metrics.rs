//! Double-average metric, group aggregation, delta estimation and the
//! significance test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::erf::erfc;

use crate::domain::{
    trace_interval, ExperimentCalendar, InclusionInterval, InclusionPolicy, UserTrace, Variant,
};
use crate::error::{Error, Result};

/// Which reference distribution the test statistic is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    /// Normal approximation.
    #[default]
    Z,
    /// Student t with Welch–Satterthwaite degrees of freedom.
    Welch,
}

/// Count, mean and unbiased sample variance of per-user metrics in one arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub n: usize,
    /// `None` when the group is empty.
    pub mean: Option<f64>,
    /// `None` when `n < 2`.
    pub sample_variance: Option<f64>,
}

impl GroupSummary {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                n,
                mean: None,
                sample_variance: None,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sample_variance = (n >= 2).then(|| {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
        });
        Self {
            n,
            mean: Some(mean),
            sample_variance,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

/// Per-policy treatment-effect estimate with its test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisResult {
    pub policy: InclusionPolicy,
    pub delta: f64,
    pub variance: f64,
    pub n_treatment: usize,
    pub n_control: usize,
    pub mean_treatment: f64,
    pub mean_control: f64,
    pub statistic: f64,
    pub p_value: f64,
    pub test: TestKind,
    /// Welch degrees of freedom; `None` for the z-test.
    pub df: Option<f64>,
}

impl AnalysisResult {
    pub fn standard_error(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn is_significant(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Sum of outcomes over active days in `interval`, divided by the number of
/// those days.
pub fn user_metric(trace: &UserTrace, interval: &InclusionInterval) -> Result<f64> {
    let (sum, days) = interval
        .days()
        .filter_map(|t| trace.outcome(t))
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if days == 0 {
        return Err(Error::Contract(format!(
            "user '{}' has no active day in interval [{}, {}]",
            trace.user_id, interval.start, interval.end
        )));
    }
    Ok(sum / days as f64)
}

/// Per-user metric for each trace admitted by `policy`, in input order.
/// Excluded users map to `None`.
pub fn included_metrics(
    traces: &[UserTrace],
    policy: InclusionPolicy,
    calendar: &ExperimentCalendar,
) -> Result<Vec<Option<(Variant, f64)>>> {
    policy.validate(calendar)?;
    traces
        .iter()
        .map(|trace| {
            trace_interval(trace, policy, calendar)?
                .map(|iv| user_metric(trace, &iv).map(|m| (trace.variant, m)))
                .transpose()
        })
        .collect()
}

pub fn group_summary(
    traces: &[UserTrace],
    variant: Variant,
    policy: InclusionPolicy,
    calendar: &ExperimentCalendar,
) -> Result<GroupSummary> {
    let values: Vec<f64> = included_metrics(traces, policy, calendar)?
        .into_iter()
        .flatten()
        .filter(|(v, _)| *v == variant)
        .map(|(_, m)| m)
        .collect();
    Ok(GroupSummary::from_values(&values))
}

/// Two-sided p-value for `statistic` under the chosen reference distribution.
fn two_sided_p(statistic: f64, df: Option<f64>) -> f64 {
    let a = statistic.abs();
    if a.is_nan() {
        return 1.0;
    }
    if a.is_infinite() {
        return 0.0;
    }
    let p = match df {
        Some(df) if df.is_finite() && df > 0.0 => {
            let t = StudentsT::new(0.0, 1.0, df).expect("df > 0");
            2.0 * t.sf(a)
        }
        _ => erfc(a / std::f64::consts::SQRT_2),
    };
    p.clamp(0.0, 1.0)
}

fn welch_df(var_t: f64, n_t: usize, var_c: f64, n_c: usize) -> f64 {
    let a = var_t / n_t as f64;
    let b = var_c / n_c as f64;
    let denom = a * a / (n_t - 1) as f64 + b * b / (n_c - 1) as f64;
    if denom == 0.0 {
        // Both arms constant: the statistic is degenerate anyway.
        (n_t + n_c - 2) as f64
    } else {
        (a + b) * (a + b) / denom
    }
}

/// Delta, variance and test from already-computed per-user metrics.
pub fn compare_groups(
    policy: InclusionPolicy,
    treatment: &[f64],
    control: &[f64],
    test: TestKind,
) -> Result<AnalysisResult> {
    let t = GroupSummary::from_values(treatment);
    let c = GroupSummary::from_values(control);
    for (name, g) in [("treatment", &t), ("control", &c)] {
        if g.n < 2 {
            return Err(Error::InsufficientData(format!(
                "{name} group has {} included users under {policy}; need at least 2",
                g.n
            )));
        }
    }
    let (mean_t, var_t) = (t.mean.unwrap(), t.sample_variance.unwrap());
    let (mean_c, var_c) = (c.mean.unwrap(), c.sample_variance.unwrap());
    let delta = mean_t - mean_c;
    let variance = var_t / t.n as f64 + var_c / c.n as f64;

    let statistic = if variance > 0.0 {
        delta / variance.sqrt()
    } else if delta == 0.0 {
        0.0
    } else {
        delta.signum() * f64::INFINITY
    };
    let df = match test {
        TestKind::Z => None,
        TestKind::Welch => Some(welch_df(var_t, t.n, var_c, c.n)),
    };
    Ok(AnalysisResult {
        policy,
        delta,
        variance,
        n_treatment: t.n,
        n_control: c.n,
        mean_treatment: mean_t,
        mean_control: mean_c,
        statistic,
        p_value: two_sided_p(statistic, df),
        test,
        df,
    })
}

/// Splits `(variant, metric)` pairs into treatment and control vectors,
/// preserving order.
pub fn split_by_variant<'a>(
    metrics: impl IntoIterator<Item = &'a (Variant, f64)>,
) -> (Vec<f64>, Vec<f64>) {
    let mut treatment = Vec::new();
    let mut control = Vec::new();
    for &(v, m) in metrics {
        match v {
            Variant::Treatment => treatment.push(m),
            Variant::Control => control.push(m),
        }
    }
    (treatment, control)
}

/// Difference in double-average means between treatment and control under
/// `policy`, with the two-sample variance and a two-sided test.
pub fn delta_estimate(
    traces: &[UserTrace],
    policy: InclusionPolicy,
    calendar: &ExperimentCalendar,
    test: TestKind,
) -> Result<AnalysisResult> {
    let metrics = included_metrics(traces, policy, calendar)?;
    let (treatment, control) = split_by_variant(metrics.iter().flatten());
    compare_groups(policy, &treatment, &control, test)
}

/// Mean over included users of (active weekend days) / (active days) inside
/// each user's interval.
pub fn weekend_ratio_gamma(
    traces: &[UserTrace],
    policy: InclusionPolicy,
    calendar: &ExperimentCalendar,
) -> Result<f64> {
    let mut total = 0.0;
    let mut users = 0usize;
    for trace in traces {
        let Some(iv) = trace_interval(trace, policy, calendar)? else {
            continue;
        };
        let (weekend, active) = iv
            .days()
            .filter(|&t| trace.is_present(t))
            .fold((0u32, 0u32), |(w, a), t| {
                (w + calendar.is_weekend_day(t) as u32, a + 1)
            });
        if active == 0 {
            return Err(Error::Contract(format!(
                "user '{}' included with no active days",
                trace.user_id
            )));
        }
        total += weekend as f64 / active as f64;
        users += 1;
    }
    if users == 0 {
        return Err(Error::InsufficientData(format!(
            "no users included under {policy}"
        )));
    }
    Ok(total / users as f64)
}
