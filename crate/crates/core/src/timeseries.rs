//! Uniformly sampled current signals and the day-level preprocessing applied
//! before any recurrence analysis.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};

pub const MINUTES_PER_DAY: usize = 1440;

/// Minutes per day as a signed offset, for timestamp arithmetic.
const DAY: i64 = MINUTES_PER_DAY as i64;

/// A current signal in amps on a regular grid.
///
/// Timestamps are implicit: sample `k` sits at `start_minute + k * step`,
/// where `start_minute` counts minutes since 1970-01-01T00:00 (timezone-naive).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    label: String,
    start_minute: i64,
    step: u32,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(label: impl Into<String>, start_minute: i64, step: u32, values: Vec<f64>) -> Result<Self> {
        if step == 0 {
            return Err(Error::InvalidParameter { name: "step", reason: "must be at least 1 minute" });
        }
        if values.is_empty() {
            return Err(Error::TooShort { needed: 1, got: 0 });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidReading { index, value });
        }
        Ok(TimeSeries { label: label.into(), start_minute, step, values })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn start_minute(&self) -> i64 {
        self.start_minute
    }

    pub fn step(&self) -> u32 {
        self.step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, k: usize) -> i64 {
        self.start_minute + k as i64 * i64::from(self.step)
    }

    pub fn end_minute(&self) -> i64 {
        self.timestamp(self.len() - 1)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_start(mut self, start_minute: i64) -> Self {
        self.start_minute = start_minute;
        self
    }
}

/// Day index (days since 1970-01-01) of a minute timestamp.
pub fn day_of_minute(minute: i64) -> i64 {
    minute.div_euclid(DAY)
}

/// Weekday of a day index, Monday = 0 through Sunday = 6.
pub fn weekday_of_day(day: i64) -> u8 {
    // 1970-01-01 was a Thursday.
    (day + 3).rem_euclid(7) as u8
}

/// Days on which the business is closed and whose data is dropped.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WorkCalendar {
    closed_weekdays: u8,
    closed_dates: Vec<i64>,
}

impl WorkCalendar {
    /// Weekday indices use Monday = 0 through Sunday = 6.
    pub fn new(closed_weekdays: &[u8], closed_dates: &[i64]) -> Result<Self> {
        let mut cal = WorkCalendar::default();
        for &wd in closed_weekdays {
            if wd > 6 {
                return Err(Error::InvalidParameter { name: "closed_weekdays", reason: "weekday index must be in 0..=6" });
            }
            cal.closed_weekdays |= 1 << wd;
        }
        cal.closed_dates = closed_dates.to_vec();
        cal.closed_dates.sort_unstable();
        cal.closed_dates.dedup();
        Ok(cal)
    }

    /// Closed on Sundays only.
    pub fn sundays_closed() -> Self {
        WorkCalendar { closed_weekdays: 1 << 6, closed_dates: Vec::new() }
    }

    pub fn closed_weekdays(&self) -> impl Iterator<Item = u8> + '_ {
        (0..7u8).filter(move |wd| self.closed_weekdays & (1 << wd) != 0)
    }

    pub fn closed_dates(&self) -> &[i64] {
        &self.closed_dates
    }

    pub fn is_closed(&self, day: i64) -> bool {
        self.closed_weekdays & (1 << weekday_of_day(day)) != 0 || self.closed_dates.binary_search(&day).is_ok()
    }
}

/// Resamples onto a whole-minute grid by linear interpolation.
///
/// The output spans the first to the last input sample; samples already on
/// the grid are copied exactly and nothing is extrapolated.
pub fn interpolate_to_minutes(ts: &TimeSeries) -> Result<TimeSeries> {
    if ts.len() < 2 {
        return Err(Error::TooShort { needed: 2, got: ts.len() });
    }
    if ts.step == 1 {
        return Ok(ts.clone());
    }
    let step = ts.step as usize;
    let n = (ts.len() - 1) * step + 1;
    let mut values = Vec::with_capacity(n);
    for pair in ts.values.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        values.push(a);
        for j in 1..step {
            let t = j as f64 / step as f64;
            values.push(a + (b - a) * t);
        }
    }
    values.push(ts.values[ts.len() - 1]);
    debug_assert_eq!(values.len(), n);
    Ok(TimeSeries { label: ts.label.clone(), start_minute: ts.start_minute, step: 1, values })
}

/// Splits a 1-minute series into whole calendar days, dropping closed days
/// and any partial day at either end.
pub fn filter_closed_days(ts: &TimeSeries, cal: &WorkCalendar) -> Result<Vec<TimeSeries>> {
    if ts.step != 1 {
        return Err(Error::InvalidParameter { name: "step", reason: "closed-day filtering needs a 1-minute series" });
    }
    let start = ts.start_minute;
    let end_exclusive = start + ts.len() as i64;
    let mut day = start.div_euclid(DAY);
    if day * DAY < start {
        day += 1;
    }
    let mut out = Vec::new();
    while (day + 1) * DAY <= end_exclusive {
        if !cal.is_closed(day) {
            let offset = (day * DAY - start) as usize;
            out.push(TimeSeries {
                label: ts.label.clone(),
                start_minute: day * DAY,
                step: 1,
                values: ts.values[offset..offset + MINUTES_PER_DAY].to_vec(),
            });
        }
        day += 1;
    }
    Ok(out)
}

/// Pointwise sum of equally long 1-minute series, labelled `"aggregate"`.
///
/// Inputs are folded in ascending label order (ties broken by the values
/// themselves), so the result does not depend on the order given.
pub fn sum_signals(series: &[TimeSeries]) -> Result<TimeSeries> {
    let first = series.first().ok_or(Error::Empty)?;
    for s in series {
        if s.step != 1 {
            return Err(Error::Mismatch(alloc::format!("`{}` has step {}, expected 1", s.label, s.step)));
        }
        if s.len() != first.len() {
            return Err(Error::Mismatch(alloc::format!(
                "`{}` has {} samples, `{}` has {}",
                s.label,
                s.len(),
                first.label,
                first.len()
            )));
        }
    }
    let mut order: Vec<&TimeSeries> = series.iter().collect();
    order.sort_by(|a, b| a.label.cmp(&b.label).then_with(|| cmp_values(&a.values, &b.values)));

    let mut values = alloc::vec![0.0; first.len()];
    for s in order {
        for (acc, v) in values.iter_mut().zip(&s.values) {
            *acc += v;
        }
    }
    Ok(TimeSeries { label: String::from("aggregate"), start_minute: first.start_minute, step: 1, values })
}

fn cmp_values(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn series(values: Vec<f64>, step: u32) -> TimeSeries {
        TimeSeries::new("dev", 0, step, values).unwrap()
    }

    #[test]
    fn rejects_negative_and_nan() {
        assert!(matches!(TimeSeries::new("x", 0, 1, vec![1.0, -0.1]), Err(Error::InvalidReading { index: 1, .. })));
        assert!(TimeSeries::new("x", 0, 1, vec![f64::NAN]).is_err());
        assert!(TimeSeries::new("x", 0, 0, vec![1.0]).is_err());
        assert!(TimeSeries::new("x", 0, 1, vec![]).is_err());
    }

    #[test]
    fn interpolates_linearly() {
        let out = interpolate_to_minutes(&series(vec![0.0, 5.0], 5)).unwrap();
        assert_eq!(out.step(), 1);
        assert_eq!(out.values(), &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn interpolation_keeps_constant_segments() {
        let ts = TimeSeries::new("dev", 1, 5, vec![4.0, 4.0]).unwrap();
        let out = interpolate_to_minutes(&ts).unwrap();
        assert_eq!(out.start_minute(), 1);
        assert_eq!(out.end_minute(), 6);
        assert!(out.values().iter().all(|&v| v == 4.0));
    }

    #[test]
    fn interpolation_needs_two_samples() {
        assert_eq!(interpolate_to_minutes(&series(vec![1.0], 5)), Err(Error::TooShort { needed: 2, got: 1 }));
    }

    #[test]
    fn weekday_arithmetic() {
        assert_eq!(weekday_of_day(0), 3); // Thursday
        assert_eq!(weekday_of_day(3), 6); // 1970-01-04, Sunday
        assert_eq!(weekday_of_day(-1), 2);
    }

    #[test]
    fn drops_sundays() {
        // Day 4 is a Monday.
        let week = TimeSeries::new("dev", 4 * DAY, 1, vec![1.0; 7 * MINUTES_PER_DAY]).unwrap();
        let days = filter_closed_days(&week, &WorkCalendar::sundays_closed()).unwrap();
        assert_eq!(days.len(), 6);
        assert!(days.iter().all(|d| d.len() == MINUTES_PER_DAY));
        assert!(days.iter().all(|d| weekday_of_day(day_of_minute(d.start_minute())) != 6));

        let two = TimeSeries::new("dev", 4 * DAY, 1, vec![1.0; 14 * MINUTES_PER_DAY]).unwrap();
        assert_eq!(filter_closed_days(&two, &WorkCalendar::sundays_closed()).unwrap().len(), 12);
    }

    #[test]
    fn all_days_closed() {
        let cal = WorkCalendar::new(&[0, 1, 2, 3, 4, 5, 6], &[]).unwrap();
        let week = TimeSeries::new("dev", 0, 1, vec![1.0; 7 * MINUTES_PER_DAY]).unwrap();
        assert!(filter_closed_days(&week, &cal).unwrap().is_empty());
    }

    #[test]
    fn closed_dates_and_partial_days() {
        let cal = WorkCalendar::new(&[], &[2]).unwrap();
        // Starts mid-day 0, ends mid-day 4: whole days 1, 2, 3 with 2 closed.
        let ts = TimeSeries::new("dev", 600, 1, vec![0.5; 4 * MINUTES_PER_DAY]).unwrap();
        let days = filter_closed_days(&ts, &cal).unwrap();
        let starts: Vec<i64> = days.iter().map(|d| d.start_minute()).collect();
        assert_eq!(starts, vec![DAY, 3 * DAY]);
        assert!(WorkCalendar::new(&[7], &[]).is_err());
    }

    #[test]
    fn sums_pointwise() {
        let a = TimeSeries::new("a", 0, 1, vec![1.0, 2.0]).unwrap();
        let b = TimeSeries::new("b", 0, 1, vec![3.0, 4.0]).unwrap();
        let zero = TimeSeries::new("z", 0, 1, vec![0.0, 0.0]).unwrap();
        let s = sum_signals(&[a.clone(), b]).unwrap();
        assert_eq!(s.values(), &[4.0, 6.0]);
        assert_eq!(s.label(), "aggregate");
        assert_eq!(sum_signals(&[a.clone(), zero]).unwrap().values(), a.values());
    }

    #[test]
    fn sum_rejects_mismatch() {
        let a = TimeSeries::new("a", 0, 1, vec![1.0; MINUTES_PER_DAY]).unwrap();
        let b = TimeSeries::new("b", 0, 1, vec![1.0; MINUTES_PER_DAY - 1]).unwrap();
        assert!(matches!(sum_signals(&[a.clone(), b]), Err(Error::Mismatch(_))));
        let c = TimeSeries::new("c", 0, 5, vec![1.0; MINUTES_PER_DAY]).unwrap();
        assert!(matches!(sum_signals(&[a, c]), Err(Error::Mismatch(_))));
        assert_eq!(sum_signals(&[]), Err(Error::Empty));
    }

    proptest! {
        #[test]
        fn interpolation_is_idempotent(values in prop::collection::vec(0.0f64..20.0, 2..40), step in 1u32..7) {
            let once = interpolate_to_minutes(&series(values.clone(), step)).unwrap();
            let twice = interpolate_to_minutes(&once).unwrap();
            prop_assert_eq!(&once, &twice);
            // On-grid samples survive untouched.
            for (k, v) in values.iter().enumerate() {
                prop_assert_eq!(once.values()[k * step as usize], *v);
            }
        }

        #[test]
        fn sum_is_order_independent(
            rows in prop::collection::vec(prop::collection::vec(0.0f64..10.0, 16), 1..6),
            seed in any::<u64>(),
        ) {
            let series: Vec<TimeSeries> = rows
                .iter()
                .enumerate()
                .map(|(i, v)| TimeSeries::new(alloc::format!("d{}", i % 3), 0, 1, v.clone()).unwrap())
                .collect();
            let mut shuffled = series.clone();
            // Deterministic rotation + reversal driven by the seed.
            let k = (seed as usize) % shuffled.len();
            shuffled.rotate_left(k);
            if seed & 1 == 1 {
                shuffled.reverse();
            }
            let a = sum_signals(&series).unwrap();
            let b = sum_signals(&shuffled).unwrap();
            prop_assert!(a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}
