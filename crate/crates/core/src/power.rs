//! Power and point-estimate curves over a sweep of user sample fractions.
//!
//! For each fraction and repetition a uniform subset of users is drawn without
//! replacement and analyzed. Per-user metrics do not depend on which other
//! users are drawn, so they are computed once per policy and subsets only
//! select among them.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{ExperimentCalendar, InclusionPolicy, UserTrace, Variant};
use crate::error::{Error, Result};
use crate::metrics::{compare_groups, included_metrics, TestKind};
use crate::simulate::Seed;

pub const DEFAULT_REPETITIONS: usize = 500;
pub const DEFAULT_ALPHA: f64 = 0.05;
const STREAM_SUBSAMPLE: u64 = 0x7373;

/// Fractions 0.1, 0.2, ..., 1.0.
pub fn default_fractions() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerConfig {
    pub fractions: Vec<f64>,
    pub repetitions: usize,
    pub alpha: f64,
    pub seed: Seed,
    pub test: TestKind,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self {
            fractions: default_fractions(),
            repetitions: DEFAULT_REPETITIONS,
            alpha: DEFAULT_ALPHA,
            seed: Seed(0),
            test: TestKind::Z,
        }
    }
}

impl PowerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions < 2 {
            return Err(Error::Config("repetitions must be >= 2".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha={} must be in (0, 1)", self.alpha)));
        }
        if self.fractions.is_empty() {
            return Err(Error::Config("at least one sample fraction is required".into()));
        }
        for f in &self.fractions {
            if !(*f > 0.0 && *f <= 1.0) {
                return Err(Error::Config(format!("fraction {f} must be in (0, 1]")));
            }
        }
        if self.fractions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("fractions must be strictly increasing".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCurvePoint {
    pub fraction: f64,
    /// Users drawn per repetition.
    pub sample_size: usize,
    /// Repetitions actually run; 1 for the full-sample point.
    pub repetitions: usize,
    /// Share of repetitions with `p < alpha`.
    pub power: f64,
    pub est_p05: Option<f64>,
    pub est_p50: Option<f64>,
    pub est_p95: Option<f64>,
    pub n_effective_treatment: f64,
    pub n_effective_control: f64,
    /// Repetitions where an arm had fewer than 2 included users.
    pub degenerate_repetitions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCurve {
    pub policy: InclusionPolicy,
    pub points: Vec<PowerCurvePoint>,
    pub repetitions: usize,
    pub alpha: f64,
}

/// Percentile with linear interpolation between order statistics.
/// `sorted` must be ascending and non-empty.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// One repetition's outcome: `None` delta when an arm was too small.
#[derive(Clone, Copy)]
struct Draw {
    delta: Option<f64>,
    significant: bool,
    n_treatment: usize,
    n_control: usize,
}

fn analyze_subset(
    metrics: &[Option<(Variant, f64)>],
    subset: &[usize],
    policy: InclusionPolicy,
    config: &PowerConfig,
) -> Result<Draw> {
    let mut treatment = Vec::new();
    let mut control = Vec::new();
    for &(v, m) in subset.iter().filter_map(|&i| metrics[i].as_ref()) {
        match v {
            Variant::Treatment => treatment.push(m),
            Variant::Control => control.push(m),
        }
    }
    let (n_treatment, n_control) = (treatment.len(), control.len());
    match compare_groups(policy, &treatment, &control, config.test) {
        Ok(r) => Ok(Draw {
            delta: Some(r.delta),
            significant: r.is_significant(config.alpha),
            n_treatment,
            n_control,
        }),
        Err(Error::InsufficientData(_)) => Ok(Draw {
            delta: None,
            significant: false,
            n_treatment,
            n_control,
        }),
        Err(e) => Err(e),
    }
}

fn summarize(fraction: f64, sample_size: usize, draws: &[Draw]) -> PowerCurvePoint {
    let reps = draws.len();
    let mut deltas: Vec<f64> = draws.iter().filter_map(|d| d.delta).collect();
    deltas.sort_by(f64::total_cmp);
    let pct = |q| (!deltas.is_empty()).then(|| percentile(&deltas, q));
    PowerCurvePoint {
        fraction,
        sample_size,
        repetitions: reps,
        power: draws.iter().filter(|d| d.significant).count() as f64 / reps as f64,
        est_p05: pct(0.05),
        est_p50: pct(0.50),
        est_p95: pct(0.95),
        n_effective_treatment: draws.iter().map(|d| d.n_treatment as f64).sum::<f64>() / reps as f64,
        n_effective_control: draws.iter().map(|d| d.n_control as f64).sum::<f64>() / reps as f64,
        degenerate_repetitions: draws.iter().filter(|d| d.delta.is_none()).count(),
    }
}

/// Sorted user indices for fraction number `fi`, repetition `rep`.
fn subset_indices(n_users: usize, fraction: f64, fi: usize, rep: usize, seed: Seed) -> Vec<usize> {
    let size = sample_size(n_users, fraction);
    if size == n_users {
        return (0..n_users).collect();
    }
    let mut rng = seed.rng(&[STREAM_SUBSAMPLE, fi as u64, fraction.to_bits(), rep as u64]);
    let mut idx = index::sample(&mut rng, n_users, size).into_vec();
    idx.sort_unstable();
    idx
}

fn sample_size(n_users: usize, fraction: f64) -> usize {
    ((fraction * n_users as f64).ceil() as usize).min(n_users)
}

/// Curves for several policies evaluated on the same subsets.
pub fn policy_curves(
    dataset: &[UserTrace],
    policies: &[InclusionPolicy],
    calendar: &ExperimentCalendar,
    config: &PowerConfig,
) -> Result<Vec<PowerCurve>> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::InsufficientData("empty dataset".into()));
    }
    let metrics = policies
        .iter()
        .map(|&p| included_metrics(dataset, p, calendar))
        .collect::<Result<Vec<_>>>()?;
    let n = dataset.len();

    let mut points: Vec<Vec<PowerCurvePoint>> = vec![Vec::new(); policies.len()];
    for (fi, &fraction) in config.fractions.iter().enumerate() {
        let size = sample_size(n, fraction);
        let reps = if fraction == 1.0 { 1 } else { config.repetitions };
        // draws[rep][policy]
        let draws: Vec<Vec<Draw>> = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let subset = subset_indices(n, fraction, fi, rep, config.seed);
                policies
                    .iter()
                    .zip(&metrics)
                    .map(|(&policy, m)| analyze_subset(m, &subset, policy, config))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        for (pi, out) in points.iter_mut().enumerate() {
            let per_policy: Vec<Draw> = draws
                .iter()
                .map(|d| d[pi])
                .collect();
            out.push(summarize(fraction, size, &per_policy));
        }
    }
    Ok(policies
        .iter()
        .zip(points)
        .map(|(&policy, points)| PowerCurve {
            policy,
            points,
            repetitions: config.repetitions,
            alpha: config.alpha,
        })
        .collect())
}

/// Power and point-estimate band at each sample fraction for one policy.
/// The full-sample fraction is evaluated once.
pub fn power_curve(
    dataset: &[UserTrace],
    policy: InclusionPolicy,
    calendar: &ExperimentCalendar,
    config: &PowerConfig,
) -> Result<PowerCurve> {
    Ok(policy_curves(dataset, &[policy], calendar, config)?.remove(0))
}

/// Open and bounded curves computed on identical subsets, so differences
/// between them carry no subsampling noise.
pub fn compare_policies(
    dataset: &[UserTrace],
    d: u32,
    calendar: &ExperimentCalendar,
    config: &PowerConfig,
) -> Result<(PowerCurve, PowerCurve)> {
    let mut out = policy_curves(
        dataset,
        &[InclusionPolicy::Open, InclusionPolicy::Bounded { d }],
        calendar,
        config,
    )?;
    let bounded = out.pop().unwrap();
    let open = out.pop().unwrap();
    Ok((open, bounded))
}

/// Number of adjacent pairs where `values` decreases.
pub fn count_inversions(values: &[f64]) -> usize {
    values.windows(2).filter(|w| w[1] < w[0]).count()
}
