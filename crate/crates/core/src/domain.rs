//! Domain types: experiment calendar, variants, user traces, and the
//! open/bounded inclusion rules that decide which user-days are analyzed.
//!
//! Day indices are 1-based throughout (`1..=k`).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Day of the week. Used only to anchor day 1 of the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weekday {
    #[default]
    Monday,
    Tuesday,
    Wednesday,
    Thursday,
    Friday,
    Saturday,
    Sunday,
}

impl Weekday {
    pub const ALL: [Weekday; 7] = [
        Weekday::Monday,
        Weekday::Tuesday,
        Weekday::Wednesday,
        Weekday::Thursday,
        Weekday::Friday,
        Weekday::Saturday,
        Weekday::Sunday,
    ];

    /// Monday = 0 .. Sunday = 6.
    pub fn index(self) -> u32 {
        self as u32
    }

    pub fn from_index(i: u32) -> Weekday {
        Self::ALL[(i % 7) as usize]
    }

    pub fn is_weekend(self) -> bool {
        matches!(self, Weekday::Saturday | Weekday::Sunday)
    }
}

impl fmt::Display for Weekday {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Weekday::Monday => "monday",
            Weekday::Tuesday => "tuesday",
            Weekday::Wednesday => "wednesday",
            Weekday::Thursday => "thursday",
            Weekday::Friday => "friday",
            Weekday::Saturday => "saturday",
            Weekday::Sunday => "sunday",
        };
        f.write_str(s)
    }
}

impl FromStr for Weekday {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Weekday::ALL
            .iter()
            .copied()
            .find(|d| {
                let name = d.to_string();
                name == lower || name[..3] == lower
            })
            .ok_or_else(|| Error::Config(format!("unknown weekday '{s}'")))
    }
}

/// A day within the experiment window, `1..=k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DayIndex(u32);

impl DayIndex {
    /// Validated against the calendar length.
    pub fn new(value: u32, calendar: &ExperimentCalendar) -> Result<Self> {
        if value == 0 || value > calendar.k() {
            return Err(Error::Config(format!(
                "day {value} outside experiment window 1..={}",
                calendar.k()
            )));
        }
        Ok(DayIndex(value))
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

impl fmt::Display for DayIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Experiment length and the weekday of day 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExperimentCalendar {
    k: u32,
    start_dow: Weekday,
}

impl ExperimentCalendar {
    pub fn new(k: u32, start_dow: Weekday) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("experiment length k must be >= 1".into()));
        }
        Ok(Self { k, start_dow })
    }

    /// The common two-week, Monday-start configuration.
    pub fn two_weeks() -> Self {
        Self {
            k: 14,
            start_dow: Weekday::Monday,
        }
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn start_dow(&self) -> Weekday {
        self.start_dow
    }

    /// Weekday on which day `t` falls. `t` is not range-checked.
    pub fn weekday_of(&self, t: u32) -> Weekday {
        Weekday::from_index(self.start_dow.index() + t + 6)
    }

    /// Saturday or Sunday, given the start weekday. `t` is not range-checked.
    pub fn is_weekend_day(&self, t: u32) -> bool {
        self.weekday_of(t).is_weekend()
    }

    pub fn is_weekend(&self, t: DayIndex) -> bool {
        self.is_weekend_day(t.get())
    }

    /// Number of weekend days in the closed range `[from, to]`.
    pub fn weekend_days_between(&self, from: u32, to: u32) -> u32 {
        (from..=to).filter(|&t| self.is_weekend_day(t)).count() as u32
    }

    pub fn days(&self) -> impl Iterator<Item = DayIndex> {
        (1..=self.k).map(DayIndex)
    }
}

impl Default for ExperimentCalendar {
    fn default() -> Self {
        Self::two_weeks()
    }
}

/// Which user-days enter the analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InclusionPolicy {
    /// Every active user, from the first active day to the end of the window.
    Open,
    /// Users first active by day `k - d`, each observed for exactly `d` days.
    Bounded { d: u32 },
}

impl InclusionPolicy {
    pub fn validate(&self, calendar: &ExperimentCalendar) -> Result<()> {
        match *self {
            InclusionPolicy::Open => Ok(()),
            InclusionPolicy::Bounded { d } if d >= 1 && d <= calendar.k() => Ok(()),
            InclusionPolicy::Bounded { d } => Err(Error::Config(format!(
                "bounded observation length d={d} impossible for k={}",
                calendar.k()
            ))),
        }
    }

    /// Last day on which a newly active user is admitted: `k - d` or `k`.
    pub fn admission_deadline(&self, calendar: &ExperimentCalendar) -> Result<u32> {
        self.validate(calendar)?;
        Ok(match *self {
            InclusionPolicy::Open => calendar.k(),
            InclusionPolicy::Bounded { d } => calendar.k() - d,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            InclusionPolicy::Open => "open",
            InclusionPolicy::Bounded { .. } => "bounded",
        }
    }
}

impl fmt::Display for InclusionPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InclusionPolicy::Open => f.write_str("open"),
            InclusionPolicy::Bounded { d } => write!(f, "bounded(d={d})"),
        }
    }
}

/// Arm assignment of a user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "T")]
    Treatment,
    #[serde(rename = "C")]
    Control,
}

impl Variant {
    pub fn flipped(self) -> Variant {
        match self {
            Variant::Treatment => Variant::Control,
            Variant::Control => Variant::Treatment,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Variant::Treatment => "T",
            Variant::Control => "C",
        }
    }
}

/// One user's day-indexed activity and outcomes.
///
/// Presence on day `t` is exactly "an outcome is recorded for day `t`", so the
/// two can never disagree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserTrace {
    pub user_id: String,
    pub variant: Variant,
    outcomes: Vec<Option<f64>>,
}

impl UserTrace {
    /// A trace with no active days over a `k`-day window.
    pub fn inactive(user_id: impl Into<String>, variant: Variant, k: u32) -> Self {
        Self {
            user_id: user_id.into(),
            variant,
            outcomes: vec![None; k as usize],
        }
    }

    /// Builds a trace from a day-indexed outcome vector (index 0 is day 1).
    pub fn from_outcomes(
        user_id: impl Into<String>,
        variant: Variant,
        outcomes: Vec<Option<f64>>,
    ) -> Self {
        Self {
            user_id: user_id.into(),
            variant,
            outcomes,
        }
    }

    /// Window length the trace was built for.
    pub fn len(&self) -> u32 {
        self.outcomes.len() as u32
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn set_outcome(&mut self, day: u32, value: f64) {
        self.outcomes[(day - 1) as usize] = Some(value);
    }

    pub fn outcome(&self, day: u32) -> Option<f64> {
        self.outcomes.get((day as usize).wrapping_sub(1)).copied().flatten()
    }

    pub fn is_present(&self, day: u32) -> bool {
        self.outcome(day).is_some()
    }

    pub fn outcomes(&self) -> &[Option<f64>] {
        &self.outcomes
    }

    pub fn outcomes_mut(&mut self) -> &mut [Option<f64>] {
        &mut self.outcomes
    }

    /// `(day, value)` for every active day, in day order.
    pub fn active_days(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.outcomes
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (i as u32 + 1, v)))
    }

    pub fn active_day_count(&self) -> usize {
        self.outcomes.iter().filter(|v| v.is_some()).count()
    }

    pub fn first_active_day(&self) -> Option<DayIndex> {
        first_active_day(self)
    }
}

/// Closed day range `[start, end]` analyzed for one user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InclusionInterval {
    pub start: DayIndex,
    pub end: DayIndex,
}

impl InclusionInterval {
    pub fn contains(&self, t: u32) -> bool {
        self.start.get() <= t && t <= self.end.get()
    }

    pub fn days(&self) -> std::ops::RangeInclusive<u32> {
        self.start.get()..=self.end.get()
    }

    pub fn span(&self) -> u32 {
        self.end.get() - self.start.get() + 1
    }
}

/// `min{t : presence(t)}`, or `None` for a user with no activity.
pub fn first_active_day(trace: &UserTrace) -> Option<DayIndex> {
    trace
        .outcomes
        .iter()
        .position(Option::is_some)
        .map(|i| DayIndex(i as u32 + 1))
}

/// Interval analyzed for a user first active on `t0`, or `None` if the policy
/// excludes the user.
pub fn inclusion_interval(
    policy: InclusionPolicy,
    t0: DayIndex,
    calendar: &ExperimentCalendar,
) -> Result<Option<InclusionInterval>> {
    let deadline = policy.admission_deadline(calendar)?;
    let k = calendar.k();
    if t0.get() == 0 || t0.get() > k {
        return Err(Error::Config(format!(
            "first active day {t0} outside 1..={k}"
        )));
    }
    if t0.get() > deadline {
        return Ok(None);
    }
    let end = match policy {
        InclusionPolicy::Open => k,
        InclusionPolicy::Bounded { d } => t0.get() + d - 1,
    };
    Ok(Some(InclusionInterval {
        start: t0,
        end: DayIndex(end),
    }))
}

/// Interval for a trace, combining [`first_active_day`] and [`inclusion_interval`].
pub fn trace_interval(
    trace: &UserTrace,
    policy: InclusionPolicy,
    calendar: &ExperimentCalendar,
) -> Result<Option<InclusionInterval>> {
    match trace.first_active_day() {
        Some(t0) => inclusion_interval(policy, t0, calendar),
        None => {
            policy.validate(calendar)?;
            Ok(None)
        }
    }
}
