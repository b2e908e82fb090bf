//! Event-log wire format and ingestion.
//!
//! The canonical log is JSONL with one record per user-day. CSV is accepted on
//! input; columns are located by header name. Rows for the same `(user, day)`
//! are summed before analysis.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::domain::{ExperimentCalendar, UserTrace, Variant};
use crate::error::{Error, Result};

/// Share of rejected rows above which ingestion fails.
pub const MAX_REJECT_SHARE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLogRecord {
    pub user_id: String,
    pub day: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<Variant>,
    pub value: f64,
}

/// CSV header names for each record field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ColumnMap {
    pub user_id: String,
    pub day: String,
    pub variant: String,
    pub value: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            user_id: "user_id".into(),
            day: "day".into(),
            variant: "variant".into(),
            value: "value".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectCounts {
    pub missing_variant: usize,
    pub variant_conflict: usize,
    pub day_out_of_range: usize,
    pub non_numeric_value: usize,
    pub malformed: usize,
}

impl RejectCounts {
    pub fn total(&self) -> usize {
        self.missing_variant
            + self.variant_conflict
            + self.day_out_of_range
            + self.non_numeric_value
            + self.malformed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub rows: usize,
    pub accepted_rows: usize,
    pub rejected: RejectCounts,
    pub user_days: usize,
    pub users: usize,
    pub treatment_users: usize,
    pub control_users: usize,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    /// One trace per user, ordered by user id.
    pub traces: Vec<UserTrace>,
    pub summary: IngestSummary,
}

enum Reject {
    MissingVariant,
    DayOutOfRange,
    NonNumeric,
    Malformed,
}

/// One parsed row before variant and range checks.
struct RawRow {
    user_id: String,
    day: i64,
    variant: Option<String>,
    value: Option<f64>,
}

#[derive(Default)]
struct Aggregator {
    users: BTreeMap<String, (Variant, BTreeMap<u32, f64>)>,
    rows: usize,
    accepted: usize,
    rejected: RejectCounts,
}

impl Aggregator {
    fn reject(&mut self, why: Reject) {
        let r = &mut self.rejected;
        match why {
            Reject::MissingVariant => r.missing_variant += 1,
            Reject::DayOutOfRange => r.day_out_of_range += 1,
            Reject::NonNumeric => r.non_numeric_value += 1,
            Reject::Malformed => r.malformed += 1,
        }
    }

    fn push(&mut self, row: std::result::Result<RawRow, Reject>, k: u32) {
        self.rows += 1;
        let row = match row {
            Ok(r) => r,
            Err(why) => return self.reject(why),
        };
        let variant = match row.variant.as_deref().map(str::trim) {
            None | Some("") => return self.reject(Reject::MissingVariant),
            Some("T") => Variant::Treatment,
            Some("C") => Variant::Control,
            Some(_) => return self.reject(Reject::Malformed),
        };
        if row.day < 1 || row.day > k as i64 {
            return self.reject(Reject::DayOutOfRange);
        }
        let Some(value) = row.value.filter(|v| v.is_finite()) else {
            return self.reject(Reject::NonNumeric);
        };
        let entry = self
            .users
            .entry(row.user_id)
            .or_insert_with(|| (variant, BTreeMap::new()));
        if entry.0 != variant {
            self.rejected.variant_conflict += 1;
            return;
        }
        *entry.1.entry(row.day as u32).or_insert(0.0) += value;
        self.accepted += 1;
    }

    fn finish(self, k: u32) -> Result<Ingested> {
        if self.rows == 0 {
            return Err(Error::InsufficientData("event log has no rows".into()));
        }
        let rejected = self.rejected.total();
        if rejected as f64 > MAX_REJECT_SHARE * self.rows as f64 {
            return Err(Error::Data(format!(
                "{rejected} of {} rows rejected ({:?})",
                self.rows, self.rejected
            )));
        }
        let mut user_days = 0;
        let traces: Vec<UserTrace> = self
            .users
            .into_iter()
            .map(|(id, (variant, days))| {
                let mut trace = UserTrace::inactive(id, variant, k);
                user_days += days.len();
                for (day, value) in days {
                    trace.set_outcome(day, value);
                }
                trace
            })
            .collect();
        let treatment_users = traces.iter().filter(|t| t.variant == Variant::Treatment).count();
        Ok(Ingested {
            summary: IngestSummary {
                rows: self.rows,
                accepted_rows: self.accepted,
                rejected: self.rejected,
                user_days,
                users: traces.len(),
                treatment_users,
                control_users: traces.len() - treatment_users,
            },
            traces,
        })
    }
}

fn parse_number(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok()
}

fn json_row(line: &str) -> std::result::Result<RawRow, Reject> {
    let Ok(Value::Object(obj)) = serde_json::from_str::<Value>(line) else {
        return Err(Reject::Malformed);
    };
    let user_id = match obj.get("user_id") {
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => return Err(Reject::Malformed),
    };
    let day = obj.get("day").and_then(Value::as_i64).ok_or(Reject::Malformed)?;
    let variant = match obj.get("variant") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(Reject::Malformed),
    };
    let value = match obj.get("value") {
        Some(Value::Number(n)) => n.as_f64(),
        Some(Value::String(s)) => parse_number(s),
        _ => None,
    };
    Ok(RawRow {
        user_id,
        day,
        variant,
        value,
    })
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

/// Reads a JSONL event log; blank lines are skipped.
pub fn read_jsonl(path: &Path, calendar: &ExperimentCalendar) -> Result<Ingested> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut agg = Aggregator::default();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        agg.push(json_row(&line), calendar.k());
    }
    agg.finish(calendar.k())
}

/// Reads a CSV event log with a header row. The variant column may be absent,
/// in which case every row is rejected for a missing variant.
pub fn read_csv(path: &Path, calendar: &ExperimentCalendar, columns: &ColumnMap) -> Result<Ingested> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| io_err(path, e))?;
    let headers = reader.headers().map_err(|e| io_err(path, e))?.clone();
    let find = |name: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
    let (Some(uid), Some(day), Some(value)) =
        (find(&columns.user_id), find(&columns.day), find(&columns.value))
    else {
        return Err(Error::Data(format!(
            "CSV header must contain columns '{}', '{}' and '{}'",
            columns.user_id, columns.day, columns.value
        )));
    };
    let variant = find(&columns.variant);

    let mut agg = Aggregator::default();
    for record in reader.records() {
        let row = match record {
            Err(_) => Err(Reject::Malformed),
            Ok(r) => match (r.get(uid), r.get(day), r.get(value)) {
                (Some(u), Some(d), Some(v)) if !u.trim().is_empty() => match d.trim().parse::<i64>() {
                    Ok(d) => Ok(RawRow {
                        user_id: u.trim().to_string(),
                        day: d,
                        variant: variant.and_then(|i| r.get(i)).map(str::to_string),
                        value: parse_number(v),
                    }),
                    Err(_) => Err(Reject::Malformed),
                },
                _ => Err(Reject::Malformed),
            },
        };
        agg.push(row, calendar.k());
    }
    agg.finish(calendar.k())
}

/// Dispatches on the file extension: `.csv` is CSV, anything else JSONL.
pub fn read_event_log(
    path: &Path,
    calendar: &ExperimentCalendar,
    columns: &ColumnMap,
) -> Result<Ingested> {
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        read_csv(path, calendar, columns)
    } else {
        read_jsonl(path, calendar)
    }
}

/// One record per active user-day, in trace order then day order.
pub fn write_jsonl<W: Write>(traces: &[UserTrace], out: W) -> Result<usize> {
    let mut out = BufWriter::new(out);
    let mut rows = 0;
    for trace in traces {
        for (day, value) in trace.active_days() {
            let record = EventLogRecord {
                user_id: trace.user_id.clone(),
                day,
                variant: Some(trace.variant),
                value,
            };
            serde_json::to_writer(&mut out, &record).map_err(|e| Error::Io(e.to_string()))?;
            out.write_all(b"\n").map_err(|e| Error::Io(e.to_string()))?;
            rows += 1;
        }
    }
    out.flush().map_err(|e| Error::Io(e.to_string()))?;
    Ok(rows)
}
