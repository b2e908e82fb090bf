//! The four subcommands. Each returns its payload as bytes so the caller
//! decides where it goes; nothing here reads the clock or the environment.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use super::config::{Format, ModelKind, RunConfig};
use super::eventlog::{read_event_log, write_jsonl, IngestSummary, Ingested};
use crate::analytic::{
    enumeration_oracle, model1_bias_coefficient, model1_variance_coeffs, model2_bias,
    model2_variance_coeffs, toy_even_day_ratio, EffectModel, MAX_ENUMERATION_DAYS, TOY_DAYS,
    TOY_EFFECT_DAYS, TOY_WINDOW, WEEKEND_SHARE,
};
use crate::domain::{trace_interval, ExperimentCalendar, InclusionPolicy, UserTrace, Variant};
use crate::error::{Error, Result};
use crate::metrics::{delta_estimate, included_metrics, weekend_ratio_gamma, AnalysisResult};
use crate::power::{policy_curves, PowerCurve};
use crate::simulate::{inject_effect, simulate_model1, simulate_model2, Seed};

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const SCHEMA_VERSION: u32 = 1;

/// Warnings raised while running a command, emitted on stderr by the caller.
pub type Warnings = Vec<Value>;

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value).map_err(|e| Error::Contract(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

/// CSV table preceded by a `#` line carrying the tool version and config.
fn to_csv<T: Serialize>(config: &RunConfig, rows: &[T]) -> Result<Vec<u8>> {
    let config_json = serde_json::to_string(config).map_err(|e| Error::Contract(e.to_string()))?;
    let mut out = format!("# {TOOL} {VERSION} config={config_json}\n").into_bytes();
    let mut writer = csv::Writer::from_writer(&mut out);
    for row in rows {
        writer.serialize(row).map_err(|e| Error::Contract(e.to_string()))?;
    }
    writer.flush().map_err(|e| Error::Io(e.to_string()))?;
    drop(writer);
    Ok(out)
}

/// The config as embedded in outputs, with the format resolved.
fn resolved(config: &RunConfig, default: Format) -> (RunConfig, Format) {
    let mut config = config.clone();
    let format = *config.format.get_or_insert(default);
    (config, format)
}

fn ingest(config: &RunConfig) -> Result<Ingested> {
    let path = config
        .input
        .as_deref()
        .ok_or_else(|| Error::Config("an input event log is required".into()))?;
    read_event_log(path, &config.calendar()?, &config.columns)
}

fn reject_warning(summary: &IngestSummary) -> Option<Value> {
    (summary.rejected.total() > 0).then(|| {
        json!({
            "warning": "rejected_rows",
            "rejected": summary.rejected.total(),
            "rows": summary.rows,
            "reasons": summary.rejected,
        })
    })
}

/// Population for `simulate` and model-driven `power`. An absolute effect is
/// generated directly; a relative lift is injected into a null population
/// after random assignment.
pub fn build_population(config: &RunConfig) -> Result<Vec<UserTrace>> {
    let seed = Seed(config.seed);
    let options = config.sim_options();
    let relative = config.effect_mode == crate::simulate::EffectMode::RelativeLift;
    let null = |mut c: RunConfig| {
        if relative {
            c.tau = 0.0;
            c.tau_prime = 0.0;
        }
        c
    };
    let base = null(config.clone());
    let traces = match config.model {
        ModelKind::Model1 => simulate_model1(&base.model1_params()?, config.n_per_arm, seed, options)?,
        ModelKind::Model2 => simulate_model2(&base.model2_params()?, seed, options)?,
        ModelKind::Toy => {
            return Err(Error::Config("the toy model has no simulator; use model1 or model2".into()))
        }
    };
    if relative {
        inject_effect(&traces, config.effect_spec(), &config.calendar()?, seed)
    } else {
        Ok(traces)
    }
}

fn model_params(config: &RunConfig) -> Result<Value> {
    let mut params = match config.model {
        ModelKind::Model1 => serde_json::to_value(config.model1_params()?),
        ModelKind::Model2 => serde_json::to_value(config.model2_params()?),
        ModelKind::Toy => Ok(Value::Null),
    }
    .map_err(|e| Error::Contract(e.to_string()))?;
    if let Value::Object(map) = &mut params {
        if config.model == ModelKind::Model1 {
            map.insert("n_per_arm".into(), json!(config.n_per_arm));
        }
        map.insert("user_sigma".into(), json!(config.user_sigma));
        map.insert("noise".into(), json!(config.noise));
        map.insert("effect_mode".into(), json!(config.effect_mode));
    }
    Ok(params)
}

/// `<output>.meta.json`
pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Writes the event log and its metadata sidecar; returns a short summary.
pub fn cmd_simulate(config: &RunConfig) -> Result<Vec<u8>> {
    let output = config
        .output
        .as_deref()
        .ok_or_else(|| Error::Config("simulate needs --output".into()))?;
    let traces = build_population(config)?;
    let file = File::create(output).map_err(|e| Error::Io(format!("{}: {e}", output.display())))?;
    let rows = write_jsonl(&traces, file)?;

    let meta = json!({
        "schema": SCHEMA_VERSION,
        "model": config.model,
        "params": model_params(config)?,
        "seed": config.seed,
        "tool": TOOL,
        "tool_version": VERSION,
        "config": config,
    });
    let meta_path = sidecar_path(output);
    std::fs::write(&meta_path, to_json(&meta)?)
        .map_err(|e| Error::Io(format!("{}: {e}", meta_path.display())))?;

    to_json(&json!({
        "tool": TOOL,
        "version": VERSION,
        "users": traces.len(),
        "rows": rows,
        "output": output,
        "metadata": meta_path,
    }))
}

#[derive(Debug, Clone, Serialize)]
pub struct PolicyAnalysis {
    pub policy: InclusionPolicy,
    pub included_users: usize,
    /// Mean weekend share of active days among included users.
    pub gamma: f64,
    pub result: AnalysisResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyzeReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: RunConfig,
    pub ingestion: IngestSummary,
    pub analyses: Vec<PolicyAnalysis>,
}

#[derive(Serialize)]
struct AnalyzeRow<'a> {
    policy: String,
    delta: f64,
    variance: f64,
    std_error: f64,
    statistic: f64,
    p_value: f64,
    df: Option<f64>,
    test: &'a str,
    n_treatment: usize,
    n_control: usize,
    mean_treatment: f64,
    mean_control: f64,
    gamma: f64,
}

pub fn analyze_traces(traces: &[UserTrace], config: &RunConfig) -> Result<Vec<PolicyAnalysis>> {
    let calendar = config.calendar()?;
    config
        .policies()
        .into_iter()
        .map(|policy| {
            let result = delta_estimate(traces, policy, &calendar, config.test)?;
            Ok(PolicyAnalysis {
                policy,
                included_users: result.n_treatment + result.n_control,
                gamma: weekend_ratio_gamma(traces, policy, &calendar)?,
                result,
            })
        })
        .collect()
}

pub fn cmd_analyze(config: &RunConfig) -> Result<(Vec<u8>, Warnings)> {
    let ingested = ingest(config)?;
    let warnings = reject_warning(&ingested.summary).into_iter().collect();
    let analyses = analyze_traces(&ingested.traces, config)?;
    let (config, format) = resolved(config, Format::Json);
    let payload = match format {
        Format::Json => to_json(&AnalyzeReport {
            tool: TOOL,
            version: VERSION,
            config,
            ingestion: ingested.summary,
            analyses,
        })?,
        Format::Csv => {
            let rows: Vec<AnalyzeRow> = analyses
                .iter()
                .map(|a| AnalyzeRow {
                    policy: a.policy.to_string(),
                    delta: a.result.delta,
                    variance: a.result.variance,
                    std_error: a.result.standard_error(),
                    statistic: a.result.statistic,
                    p_value: a.result.p_value,
                    df: a.result.df,
                    test: match a.result.test {
                        crate::metrics::TestKind::Z => "z",
                        crate::metrics::TestKind::Welch => "welch",
                    },
                    n_treatment: a.result.n_treatment,
                    n_control: a.result.n_control,
                    mean_treatment: a.result.mean_treatment,
                    mean_control: a.result.mean_control,
                    gamma: a.gamma,
                })
                .collect();
            to_csv(&config, &rows)?
        }
    };
    Ok((payload, warnings))
}

#[derive(Serialize)]
struct PowerRow {
    policy: String,
    fraction: f64,
    power: f64,
    p05: Option<f64>,
    p50: Option<f64>,
    p95: Option<f64>,
    n_eff: f64,
    n_eff_treatment: f64,
    n_eff_control: f64,
    degenerate: usize,
}

#[derive(Serialize)]
struct PowerReport<'a> {
    tool: &'static str,
    version: &'static str,
    config: RunConfig,
    source: &'a str,
    ingestion: Option<IngestSummary>,
    curves: Vec<PowerCurve>,
}

/// Paired power curves, from `--input` if given, otherwise from the
/// configured model.
pub fn cmd_power(config: &RunConfig) -> Result<(Vec<u8>, Warnings)> {
    let (traces, ingestion, source) = if config.input.is_some() {
        let ingested = ingest(config)?;
        (ingested.traces, Some(ingested.summary), "input")
    } else {
        let source = match config.model {
            ModelKind::Model1 => "model1",
            ModelKind::Model2 => "model2",
            ModelKind::Toy => "toy",
        };
        (build_population(config)?, None, source)
    };
    let warnings = ingestion.as_ref().and_then(reject_warning).into_iter().collect();
    let curves = policy_curves(
        &traces,
        &config.policies(),
        &config.calendar()?,
        &config.power_config(),
    )?;
    let (config, format) = resolved(config, Format::Json);
    let payload = match format {
        Format::Json => to_json(&PowerReport {
            tool: TOOL,
            version: VERSION,
            config,
            source,
            ingestion,
            curves,
        })?,
        Format::Csv => {
            let rows: Vec<PowerRow> = curves
                .iter()
                .flat_map(|c| {
                    c.points.iter().map(|p| PowerRow {
                        policy: c.policy.to_string(),
                        fraction: p.fraction,
                        power: p.power,
                        p05: p.est_p05,
                        p50: p.est_p50,
                        p95: p.est_p95,
                        n_eff: p.n_effective_treatment + p.n_effective_control,
                        n_eff_treatment: p.n_effective_treatment,
                        n_eff_control: p.n_effective_control,
                        degenerate: p.degenerate_repetitions,
                    })
                })
                .collect();
            to_csv(&config, &rows)?
        }
    };
    Ok((payload, warnings))
}

/// Row status in analytic tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowSource {
    /// Closed form with an enumeration cross-check.
    Checked,
    /// Closed form only; the calendar is too long to enumerate.
    ClosedForm,
    /// The closed form does not cover this regime; values come from enumeration.
    OracleOnly,
    Unavailable,
}

fn row_source(closed: bool, oracle: bool) -> RowSource {
    match (closed, oracle) {
        (true, true) => RowSource::Checked,
        (true, false) => RowSource::ClosedForm,
        (false, true) => RowSource::OracleOnly,
        (false, false) => RowSource::Unavailable,
    }
}

/// Swallows only "not covered" errors so other failures still surface.
fn optional<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::ClosedFormUnavailable(_) | Error::EnumerationTooLarge { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Bias is per unit of `tau_prime`; `eta` and `zeta` are for `n_per_arm`
/// users per arm.
#[derive(Debug, Clone, Serialize)]
pub struct Model1Row {
    pub policy: String,
    pub p: f64,
    pub n_per_arm: usize,
    pub bias: Option<f64>,
    pub eta: Option<f64>,
    pub zeta: Option<f64>,
    pub oracle_bias: Option<f64>,
    pub oracle_eta: Option<f64>,
    pub oracle_zeta: Option<f64>,
    pub source: RowSource,
}

/// Bias is per unit of `tau_prime`; variance coefficients are per `1 / ns`.
#[derive(Debug, Clone, Serialize)]
pub struct Model2Row {
    pub policy: String,
    pub k: u32,
    pub bias: Option<f64>,
    pub sigma2_coeff: Option<f64>,
    pub tau_prime2_coeff: Option<f64>,
    pub oracle_bias: Option<f64>,
    pub oracle_sigma2_coeff: Option<f64>,
    pub oracle_tau_prime2_coeff: Option<f64>,
    pub source: RowSource,
}

#[derive(Debug, Clone, Serialize)]
pub struct ToyRow {
    pub policy: String,
    pub p: f64,
    pub even_day_ratio: f64,
    pub oracle_even_day_ratio: f64,
}

fn weekend_days(calendar: &ExperimentCalendar) -> Vec<u32> {
    (1..=calendar.k()).filter(|&t| calendar.is_weekend_day(t)).collect()
}

pub fn model1_table(config: &RunConfig) -> Result<Vec<Model1Row>> {
    let calendar = config.calendar()?;
    let weekends = weekend_days(&calendar);
    let n = config.n_per_arm as f64;
    let mut rows = Vec::new();
    for policy in config.policies() {
        for &p in &config.p_grid {
            let bias = optional(model1_bias_coefficient(policy, p, &calendar))?;
            let coeffs = optional(model1_variance_coeffs(policy, p, &calendar, n))?;
            let effect = EffectModel {
                c: 0.0,
                tau: 0.0,
                tau_prime: 1.0,
            };
            let oracle = optional(enumeration_oracle(&calendar, policy, p, &weekends, effect))?;
            rows.push(Model1Row {
                policy: policy.to_string(),
                p,
                n_per_arm: config.n_per_arm,
                bias,
                eta: coeffs.map(|c| c.0),
                zeta: coeffs.map(|c| c.1),
                oracle_bias: oracle.map(|o| o.expected_ratio - WEEKEND_SHARE),
                oracle_eta: oracle.map(|o| o.eta(n)),
                oracle_zeta: oracle.map(|o| o.zeta(n)),
                source: row_source(bias.is_some(), oracle.is_some()),
            });
        }
    }
    Ok(rows)
}

/// Model 2 moments from one deterministic user per arrival day, run through
/// the ordinary inclusion and metric code: `(bias, sigma2, tau_prime2)`.
fn model2_direct(policy: InclusionPolicy, calendar: &ExperimentCalendar) -> Result<(f64, f64, f64)> {
    let k = calendar.k();
    let traces: Vec<UserTrace> = (1..=k)
        .map(|arrival| {
            let mut t = UserTrace::inactive(format!("cohort-{arrival}"), Variant::Treatment, k);
            for day in arrival..=k {
                t.set_outcome(day, if calendar.is_weekend_day(day) { 1.0 } else { 0.0 });
            }
            t
        })
        .collect();
    let shares: Vec<f64> = included_metrics(&traces, policy, calendar)?
        .into_iter()
        .flatten()
        .map(|(_, m)| m)
        .collect();
    let mut inverse_days = Vec::new();
    for t in &traces {
        if let Some(iv) = trace_interval(t, policy, calendar)? {
            let n = iv.days().filter(|&d| t.is_present(d)).count();
            inverse_days.push(1.0 / n as f64);
        }
    }
    let a = shares.len() as f64;
    if a == 0.0 {
        return Err(Error::InsufficientData(format!("{policy} admits no arrival day")));
    }
    let mean = shares.iter().sum::<f64>() / a;
    let spread = shares.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / a;
    let sigma2 = 2.0 * inverse_days.iter().sum::<f64>() / a / a;
    Ok((mean - WEEKEND_SHARE, sigma2, spread / a))
}

pub fn model2_table(config: &RunConfig) -> Result<Vec<Model2Row>> {
    let calendar = config.calendar()?;
    let mut rows = Vec::new();
    for policy in config.policies() {
        let bias = optional(model2_bias(policy, &calendar))?;
        let coeffs = model2_variance_coeffs(policy, &calendar)?;
        let oracle = (calendar.k() <= MAX_ENUMERATION_DAYS)
            .then(|| model2_direct(policy, &calendar))
            .transpose()?;
        rows.push(Model2Row {
            policy: policy.to_string(),
            k: calendar.k(),
            bias,
            sigma2_coeff: Some(coeffs.sigma2),
            tau_prime2_coeff: Some(coeffs.tau_prime2),
            oracle_bias: oracle.map(|o| o.0),
            oracle_sigma2_coeff: oracle.map(|o| o.1),
            oracle_tau_prime2_coeff: oracle.map(|o| o.2),
            source: row_source(bias.is_some(), oracle.is_some()),
        });
    }
    Ok(rows)
}

/// The four-day toy. Always uses its own calendar and two-day window.
pub fn toy_table(config: &RunConfig) -> Result<Vec<ToyRow>> {
    let calendar = ExperimentCalendar::new(TOY_DAYS, crate::domain::Weekday::Monday)?;
    let effect = EffectModel {
        c: 0.0,
        tau: 0.0,
        tau_prime: 1.0,
    };
    let mut rows = Vec::new();
    for kind in &config.policies {
        let policy = match kind {
            super::config::PolicyKind::Open => InclusionPolicy::Open,
            super::config::PolicyKind::Bounded => InclusionPolicy::Bounded { d: TOY_WINDOW },
        };
        for &p in &config.p_grid {
            let oracle = enumeration_oracle(&calendar, policy, p, &TOY_EFFECT_DAYS, effect)?;
            rows.push(ToyRow {
                policy: policy.to_string(),
                p,
                even_day_ratio: toy_even_day_ratio(policy, p)?,
                oracle_even_day_ratio: oracle.expected_ratio,
            });
        }
    }
    Ok(rows)
}

#[derive(Serialize)]
struct AnalyticReport<'a, T> {
    tool: &'static str,
    version: &'static str,
    config: RunConfig,
    model: ModelKind,
    rows: &'a [T],
}

fn emit_table<T: Serialize>(config: &RunConfig, rows: &[T]) -> Result<Vec<u8>> {
    let (config, format) = resolved(config, Format::Csv);
    match format {
        Format::Csv => to_csv(&config, rows),
        Format::Json => to_json(&AnalyticReport {
            tool: TOOL,
            version: VERSION,
            model: config.model,
            config,
            rows,
        }),
    }
}

/// Closed-form tables with enumeration cross-check columns. CSV by default.
pub fn cmd_analytic(config: &RunConfig) -> Result<Vec<u8>> {
    match config.model {
        ModelKind::Model1 => emit_table(config, &model1_table(config)?),
        ModelKind::Model2 => emit_table(config, &model2_table(config)?),
        ModelKind::Toy => emit_table(config, &toy_table(config)?),
    }
}
