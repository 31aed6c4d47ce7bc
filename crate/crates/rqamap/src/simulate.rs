//! Bootstrap simulation of crossing counts from historical day profiles.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rqamap_core::{score_day, sum_signals, PcaModel, Period, TimeSeries, UsageMap, MINUTES_PER_DAY};

use crate::error::{Error, Result};

/// Historical single-day profiles per device label.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileLibrary {
    profiles: BTreeMap<String, Vec<TimeSeries>>,
}

impl ProfileLibrary {
    pub fn new(profiles: BTreeMap<String, Vec<TimeSeries>>) -> Result<Self> {
        for (label, days) in &profiles {
            Self::check(label, days)?;
        }
        Ok(ProfileLibrary { profiles })
    }

    fn check(label: &str, days: &[TimeSeries]) -> Result<()> {
        if days.is_empty() {
            return Err(Error::EmptyLibrary(label.to_string()));
        }
        if let Some(d) = days.iter().find(|d| d.step() != 1 || d.len() != MINUTES_PER_DAY) {
            return Err(Error::Invalid(format!(
                "`{label}` profile has {} samples at step {}, expected one 1-minute day",
                d.len(),
                d.step()
            )));
        }
        Ok(())
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.profiles.keys().map(String::as_str)
    }

    pub fn days(&self, label: &str) -> Result<&[TimeSeries]> {
        self.profiles.get(label).map(Vec::as_slice).ok_or_else(|| Error::MissingLabel(label.to_string()))
    }

    /// Replaces (or adds) one device's profiles, e.g. with a fault-injected set.
    pub fn with_profiles(mut self, label: &str, days: Vec<TimeSeries>) -> Result<Self> {
        Self::check(label, &days)?;
        self.profiles.insert(label.to_string(), days);
        Ok(self)
    }
}

/// Crossing counts of `runs` simulated periods.
///
/// Each run draws, uniformly with replacement, one day per entry of
/// `devices` for every day of the period (labels may repeat), sums each
/// day's draws and scores the day on its own. Run `r` uses the seed
/// `seed ^ r`, so results do not depend on the thread count.
pub fn simulate_counts(
    lib: &ProfileLibrary,
    model: &PcaModel,
    map: &UsageMap,
    period: Period,
    devices: &[String],
    runs: usize,
    seed: u64,
) -> Result<Vec<u64>> {
    if runs == 0 {
        return Err(Error::Invalid("runs must be at least 1".into()));
    }
    if devices.is_empty() {
        return Err(Error::Invalid("device list is empty".into()));
    }
    let pools: Vec<&[TimeSeries]> = devices.iter().map(|d| lib.days(d)).collect::<Result<_>>()?;
    (0..runs)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ r as u64);
            let draws: Vec<Vec<usize>> =
                pools.iter().map(|pool| (0..period.days()).map(|_| rng.random_range(0..pool.len())).collect()).collect();
            let mut crossings = 0;
            for d in 0..period.days() {
                let day: Vec<TimeSeries> = pools.iter().zip(&draws).map(|(pool, idx)| pool[idx[d]].clone()).collect();
                crossings += score_day(model, map, &sum_signals(&day)?)?.crossings;
            }
            Ok(crossings)
        })
        .collect()
}
