//! Crossing-count alarms.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{count_outside, UsageMap};
use crate::pca::{PcaModel, Point2D};
use crate::rqa::sliding_rqa;
use crate::timeseries::{TimeSeries, MINUTES_PER_DAY};

/// Working days in a monitored week (closed on Sundays).
pub const WORKING_DAYS_PER_WEEK: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Period {
    Daily,
    Weekly,
}

impl Period {
    pub fn days(self) -> usize {
        match self {
            Period::Daily => 1,
            Period::Weekly => WORKING_DAYS_PER_WEEK,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Period::Daily => "daily",
            Period::Weekly => "weekly",
        }
    }
}

impl core::str::FromStr for Period {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "daily" => Ok(Period::Daily),
            "weekly" => Ok(Period::Weekly),
            _ => Err(Error::InvalidParameter { name: "period", reason: "expected `daily` or `weekly`" }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlarmPolicy {
    pub period: Period,
    pub threshold_crossings: u64,
    pub quantile: f64,
    pub runs: usize,
    pub model_id: u64,
    pub map_id: u64,
}

impl AlarmPolicy {
    pub fn validate(&self) -> Result<()> {
        check_quantile(self.quantile)?;
        if self.runs == 0 {
            return Err(Error::InvalidParameter { name: "runs", reason: "must be at least 1" });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlarmReport {
    pub crossings: u64,
    pub threshold: u64,
    pub triggered: bool,
    pub windows_evaluated: u64,
}

fn check_quantile(q: f64) -> Result<()> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidParameter { name: "quantile", reason: "must be in (0, 1)" });
    }
    Ok(())
}

/// Nearest-rank quantile: the `ceil(q * n)`-th smallest count.
pub fn threshold_from_quantile(counts: &[u64], quantile: f64) -> Result<u64> {
    check_quantile(quantile)?;
    if counts.is_empty() {
        return Err(Error::Empty);
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    // Smallest rank k with k / n >= q, compared in floating point so that
    // e.g. q = 0.7, n = 10 gives 7 rather than 8.
    let rank = (1..=n).find(|&k| k as f64 / n as f64 >= quantile).unwrap_or(n);
    Ok(sorted[rank - 1])
}

/// Fraction of counts strictly above the threshold.
pub fn alarm_rate(counts: &[u64], threshold: u64) -> Result<f64> {
    if counts.is_empty() {
        return Err(Error::Empty);
    }
    Ok(counts.iter().filter(|&&c| c > threshold).count() as f64 / counts.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DayScore {
    pub crossings: u64,
    pub windows: u64,
}

fn check_binding(model: &PcaModel, map: &UsageMap) -> Result<()> {
    match map.model_id() {
        Some(id) if id == model.id() => Ok(()),
        other => Err(Error::ModelMismatch { map_model: other.unwrap_or(0), model: model.id() }),
    }
}

/// Projections of every sliding window of one analysis unit.
pub fn project_windows(model: &PcaModel, day: &TimeSeries) -> Result<Vec<Point2D>> {
    let features = sliding_rqa(day, model.rqa_params())?;
    features.rows().iter().map(|row| model.project(&row.features)).collect()
}

/// Crossings of one independent analysis unit (normally one day).
pub fn score_day(model: &PcaModel, map: &UsageMap, day: &TimeSeries) -> Result<DayScore> {
    check_binding(model, map)?;
    let points = project_windows(model, day)?;
    Ok(DayScore { crossings: count_outside(map, &points) as u64, windows: points.len() as u64 })
}

/// Scores one policy period of aggregate demand.
///
/// Weekly input must consist of whole days; each day is scored on its own
/// and the crossings are summed, so no window spans midnight.
pub fn evaluate(map: &UsageMap, model: &PcaModel, policy: &AlarmPolicy, aggregate: &TimeSeries) -> Result<AlarmReport> {
    policy.validate()?;
    check_binding(model, map)?;
    if policy.model_id != model.id() {
        return Err(Error::ModelMismatch { map_model: policy.model_id, model: model.id() });
    }
    if policy.map_id != map.id() {
        return Err(Error::Mismatch(alloc::format!(
            "policy was calibrated on map {:016x}, got map {:016x}",
            policy.map_id,
            map.id()
        )));
    }
    let window = model.rqa_params().window;
    if aggregate.len() < window {
        return Err(Error::TooShort { needed: window, got: aggregate.len() });
    }

    let mut total = DayScore { crossings: 0, windows: 0 };
    match policy.period {
        Period::Daily => total = score_day(model, map, aggregate)?,
        Period::Weekly => {
            if !aggregate.len().is_multiple_of(MINUTES_PER_DAY) || aggregate.step() != 1 {
                return Err(Error::Mismatch(alloc::format!(
                    "weekly evaluation needs whole 1-minute days, got {} samples",
                    aggregate.len()
                )));
            }
            for (d, chunk) in aggregate.values().chunks(MINUTES_PER_DAY).enumerate() {
                let day = TimeSeries::new(
                    aggregate.label(),
                    aggregate.start_minute() + (d * MINUTES_PER_DAY) as i64,
                    1,
                    chunk.to_vec(),
                )?;
                let s = score_day(model, map, &day)?;
                total.crossings += s.crossings;
                total.windows += s.windows;
            }
        }
    }
    Ok(AlarmReport {
        crossings: total.crossings,
        threshold: policy.threshold_crossings,
        triggered: total.crossings > policy.threshold_crossings,
        windows_evaluated: total.windows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nearest_rank() {
        let counts: Vec<u64> = (1..=100).collect();
        assert_eq!(threshold_from_quantile(&counts, 0.9).unwrap(), 90);
        assert_eq!(threshold_from_quantile(&[0; 17], 0.9).unwrap(), 0);
        let ten: Vec<u64> = (1..=10).rev().collect();
        assert_eq!(threshold_from_quantile(&ten, 0.7).unwrap(), 7);
        assert_eq!(threshold_from_quantile(&[5], 0.01).unwrap(), 5);
        assert_eq!(threshold_from_quantile(&[], 0.9), Err(Error::Empty));
        assert!(threshold_from_quantile(&[1], 1.0).is_err());
        assert!(threshold_from_quantile(&[1], 0.0).is_err());
    }

    #[test]
    fn rates() {
        let counts: Vec<u64> = (1..=100).collect();
        assert!((alarm_rate(&counts, 90).unwrap() - 0.10).abs() < 1e-15);
        assert_eq!(alarm_rate(&counts, 100).unwrap(), 0.0);
        assert_eq!(alarm_rate(&counts, 1000).unwrap(), 0.0);
        assert_eq!(alarm_rate(&[], 3), Err(Error::Empty));
    }

    #[test]
    fn period_parsing() {
        assert_eq!("weekly".parse::<Period>().unwrap(), Period::Weekly);
        assert_eq!(Period::Weekly.days(), 6);
        assert!("monthly".parse::<Period>().is_err());
    }

    proptest! {
        #[test]
        fn nearest_rank_guarantee(counts in prop::collection::vec(0u64..500, 1..300), q in 0.01f64..0.99) {
            let t = threshold_from_quantile(&counts, q).unwrap();
            let rate = alarm_rate(&counts, t).unwrap();
            prop_assert!(rate <= 1.0 - q + 1.0 / counts.len() as f64 + 1e-12);
            prop_assert!(counts.contains(&t));
        }

        #[test]
        fn rate_is_monotone(counts in prop::collection::vec(0u64..500, 1..100), t in 0u64..500, dt in 0u64..100) {
            prop_assert!(alarm_rate(&counts, t + dt).unwrap() <= alarm_rate(&counts, t).unwrap());
        }
    }
}
