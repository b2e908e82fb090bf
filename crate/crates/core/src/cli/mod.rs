//! Command-line front end: argument parsing, config resolution, output and
//! exit codes.
//!
//! Exit codes: 0 success, 1 usage or configuration, 2 data or I/O,
//! 3 insufficient data. Errors and warnings are single-line JSON on stderr.

pub mod commands;
pub mod config;
pub mod eventlog;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use crate::domain::Weekday;
use crate::error::Error;
use crate::metrics::TestKind;
use crate::simulate::{EffectMode, NoiseShape};
use config::{Format, ModelKind, PolicyKind, RunConfig};

pub const SEED_ENV: &str = "OCE_INCLUSION_SEED";

#[derive(Debug, Parser)]
#[command(name = "oce-inclusion", version, about = "Open vs bounded data inclusion for online controlled experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a population and write a JSONL event log plus metadata sidecar.
    Simulate(Options),
    /// Analyze an event log under each requested policy.
    Analyze(Options),
    /// Power and estimate-band curves over sample fractions.
    Power(Options),
    /// Closed-form bias and variance tables with enumeration cross-checks.
    Analytic(Options),
}

impl Command {
    fn options(&self) -> &Options {
        match self {
            Command::Simulate(o) | Command::Analyze(o) | Command::Power(o) | Command::Analytic(o) => o,
        }
    }
}

fn parse_weekday(s: &str) -> Result<Weekday, String> {
    s.parse::<Weekday>().map_err(|e| e.to_string())
}

fn parse_column(s: &str) -> Result<(String, String), String> {
    let (key, name) = s
        .split_once('=')
        .ok_or_else(|| format!("expected FIELD=HEADER, got '{s}'"))?;
    match key {
        "user_id" | "day" | "variant" | "value" => Ok((key.to_string(), name.to_string())),
        _ => Err(format!("unknown field '{key}' (user_id, day, variant, value)")),
    }
}

/// Every flag is optional; unset flags fall back to the config file or the
/// built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct Options {
    /// JSON config file; its keys override flags.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Input event log (.jsonl, or .csv with a header row).
    #[arg(long, short = 'i', value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Output file; stdout when omitted (required for simulate).
    #[arg(long, short = 'o', value_name = "FILE")]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub policy: Vec<PolicyKind>,
    /// Bounded observation window in days.
    #[arg(long)]
    pub d: Option<u32>,
    /// Experiment length in days.
    #[arg(long)]
    pub k: Option<u32>,
    /// Weekday of day 1.
    #[arg(long, value_parser = parse_weekday)]
    pub start_dow: Option<Weekday>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Comma-separated sample fractions in (0, 1], increasing.
    #[arg(long, value_delimiter = ',')]
    pub fractions: Vec<f64>,
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub test: Option<TestArg>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    /// Model 1 daily activity probability.
    #[arg(long)]
    pub p: Option<f64>,
    /// Model 1 users per arm.
    #[arg(long)]
    pub n_per_arm: Option<usize>,
    /// Model 2 arrivals per day per arm.
    #[arg(long)]
    pub ns: Option<u32>,
    #[arg(long, allow_hyphen_values = true)]
    pub tau: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub tau_prime: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Control level.
    #[arg(long, allow_hyphen_values = true)]
    pub c: Option<f64>,
    #[arg(long)]
    pub user_sigma: Option<f64>,
    #[arg(long, value_enum)]
    pub noise: Option<NoiseArg>,
    #[arg(long, value_enum)]
    pub effect_mode: Option<EffectModeArg>,
    /// Comma-separated activity probabilities for analytic tables.
    #[arg(long, value_delimiter = ',')]
    pub p_grid: Vec<f64>,
    /// CSV column mapping, e.g. `--column user_id=uid`.
    #[arg(long = "column", value_parser = parse_column, value_name = "FIELD=HEADER")]
    pub columns: Vec<(String, String)>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum TestArg {
    Z,
    Welch,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum NoiseArg {
    Normal,
    Lognormal,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum EffectModeArg {
    Absolute,
    RelativeLift,
}

impl Options {
    /// Explicitly given flags as a JSON object keyed like [`RunConfig`].
    pub fn to_overrides(&self) -> Map<String, Value> {
        let mut m = Map::new();
        let mut set = |key: &str, value: Value| {
            m.insert(key.to_string(), value);
        };
        macro_rules! opt {
            ($key:literal, $v:expr) => {
                if let Some(v) = $v {
                    set($key, json!(v));
                }
            };
        }
        opt!("input", &self.input);
        opt!("output", &self.output);
        opt!("d", self.d);
        opt!("k", self.k);
        opt!("start_dow", self.start_dow);
        opt!("alpha", self.alpha);
        opt!("repetitions", self.reps);
        opt!("seed", self.seed);
        opt!("format", self.format);
        opt!("model", self.model);
        opt!("p", self.p);
        opt!("n_per_arm", self.n_per_arm);
        opt!("ns", self.ns);
        opt!("tau", self.tau);
        opt!("tau_prime", self.tau_prime);
        opt!("sigma", self.sigma);
        opt!("c", self.c);
        opt!("user_sigma", self.user_sigma);
        opt!(
            "test",
            self.test.map(|t| match t {
                TestArg::Z => TestKind::Z,
                TestArg::Welch => TestKind::Welch,
            })
        );
        opt!(
            "noise",
            self.noise.map(|n| match n {
                NoiseArg::Normal => NoiseShape::Normal,
                NoiseArg::Lognormal => NoiseShape::LogNormal,
            })
        );
        opt!(
            "effect_mode",
            self.effect_mode.map(|e| match e {
                EffectModeArg::Absolute => EffectMode::Absolute,
                EffectModeArg::RelativeLift => EffectMode::RelativeLift,
            })
        );
        if !self.policy.is_empty() {
            set("policies", json!(self.policy));
        }
        if !self.fractions.is_empty() {
            set("fractions", json!(self.fractions));
        }
        if !self.p_grid.is_empty() {
            set("p_grid", json!(self.p_grid));
        }
        if !self.columns.is_empty() {
            let cols: Map<String, Value> =
                self.columns.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
            set("columns", Value::Object(cols));
        }
        m
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::ClosedFormUnavailable(_) | Error::EnumerationTooLarge { .. } => 1,
        Error::Data(_) | Error::Io(_) | Error::Contract(_) => 2,
        Error::InsufficientData(_) => 3,
    }
}

fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::Config(_) => "config",
        Error::ClosedFormUnavailable(_) => "closed_form_unavailable",
        Error::EnumerationTooLarge { .. } => "enumeration_too_large",
        Error::Data(_) => "data",
        Error::Io(_) => "io",
        Error::Contract(_) => "contract",
        Error::InsufficientData(_) => "insufficient_data",
    }
}

fn error_line(kind: &str, message: &str, code: i32) -> String {
    json!({"error": {"kind": kind, "message": message, "exit_code": code}}).to_string()
}

/// Runs one command; payload goes to `--output` or `stdout`.
pub fn execute(command: &Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), Error> {
    let options = command.options();
    let config = RunConfig::resolve(options.to_overrides(), options.config.as_deref())?;
    let (payload, warnings) = match command {
        Command::Simulate(_) => (commands::cmd_simulate(&config)?, Vec::new()),
        Command::Analyze(_) => commands::cmd_analyze(&config)?,
        Command::Power(_) => commands::cmd_power(&config)?,
        Command::Analytic(_) => (commands::cmd_analytic(&config)?, Vec::new()),
    };
    for w in warnings {
        let _ = writeln!(stderr, "{w}");
    }
    let to_file = config.output.as_ref().filter(|_| !matches!(command, Command::Simulate(_)));
    match to_file {
        Some(path) => std::fs::write(path, &payload)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?,
        None => stdout
            .write_all(&payload)
            .map_err(|e| Error::Io(e.to_string()))?,
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            let text = e.to_string();
            let message = text.lines().next().unwrap_or_default().trim_start_matches("error: ");
            let _ = writeln!(stderr, "{}", error_line("usage", message, 1));
            return 1;
        }
    };
    match execute(&cli.command, stdout, stderr) {
        Ok(()) => 0,
        Err(err) => {
            let code = exit_code(&err);
            let _ = writeln!(stderr, "{}", error_line(error_kind(&err), &err.to_string(), code));
            code
        }
    }
}
