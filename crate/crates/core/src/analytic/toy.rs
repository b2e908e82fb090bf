//! Four-day toy experiment with an extra effect on even days and a two-day
//! bounded window. Small enough to enumerate by hand; shows where the bounded
//! bias comes from.

use super::validate_p;
use crate::domain::InclusionPolicy;
use crate::error::Result;

pub const TOY_DAYS: u32 = 4;
pub const TOY_WINDOW: u32 = 2;
pub const TOY_EFFECT_DAYS: [u32; 2] = [2, 4];

/// Expected share of active even days among analyzed active days.
///
/// Open is exactly 1/2. Bounded admits users first active on day 1 or 2 and
/// observes two days:
///
/// ```text
/// (p^2/2 + p(1-p)^2 + p^2(1-p)/2) / (1 - (1-p)^2) = (1 - p + p^2/2) / (2 - p)
/// ```
///
/// which is 1/2 at both ends of `(0, 1]` and dips to `sqrt(2) - 1` at
/// `p = 2 - sqrt(2)`.
pub fn toy_even_day_ratio(policy: InclusionPolicy, p: f64) -> Result<f64> {
    validate_p(p)?;
    Ok(match policy {
        InclusionPolicy::Open => 0.5,
        InclusionPolicy::Bounded { .. } => (1.0 - p + 0.5 * p * p) / (2.0 - p),
    })
}
