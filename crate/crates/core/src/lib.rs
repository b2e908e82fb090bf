//! Open vs bounded data inclusion for double-average metrics in online
//! controlled experiments.

pub mod analytic;
pub mod cli;
pub mod domain;
pub mod error;
pub mod metrics;
pub mod power;
pub mod simulate;

pub use domain::{
    first_active_day, inclusion_interval, DayIndex, ExperimentCalendar, InclusionInterval,
    InclusionPolicy, UserTrace, Variant, Weekday,
};
pub use error::{Error, Result};
