//! Synthetic device profiles and frequency-domain fault injection.
//!
//! Devices are modelled as noisy on/off square waves, one independent draw of
//! phase and activity per day. A faulty machine is produced by scaling the
//! spectral magnitudes of a band of frequencies inside each day's active
//! stretch, keeping phases, RMS level and on/off timing.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rqamap_core::{TimeSeries, MINUTES_PER_DAY};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shipped archetype configuration.
pub const DEFAULT_DEVICES_TOML: &str = include_str!("../config/devices.toml");

/// Meter interval the faulty signal is re-sampled at, in minutes.
const METER_INTERVAL: usize = 5;

/// On-samples are never pushed down to the on/off threshold itself.
const ON_FLOOR_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviceSpec {
    pub label: String,
    pub amplitude_amps: f64,
    pub duty_cycle: f64,
    pub cycle_period_min: usize,
    pub noise_sd_amps: f64,
    pub active_probability_per_day: f64,
}

impl DeviceSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(format!("device `{}`: {m}", self.label)));
        if !(self.amplitude_amps.is_finite() && self.amplitude_amps > 0.0) {
            return bad("amplitude_amps must be positive");
        }
        if !(self.duty_cycle > 0.0 && self.duty_cycle <= 1.0) {
            return bad("duty_cycle must be in (0, 1]");
        }
        if self.cycle_period_min < 2 {
            return bad("cycle_period_min must be at least 2");
        }
        if !(self.noise_sd_amps.is_finite() && self.noise_sd_amps >= 0.0) {
            return bad("noise_sd_amps must be non-negative");
        }
        if !(self.active_probability_per_day > 0.0 && self.active_probability_per_day <= 1.0) {
            return bad("active_probability_per_day must be in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceEntry {
    amplitude_amps: f64,
    duty_cycle: f64,
    cycle_period_min: usize,
    noise_sd_amps: f64,
    active_probability_per_day: f64,
}

/// Parses an archetype file: one TOML table per device label.
pub fn parse_device_config(text: &str) -> Result<Vec<DeviceSpec>> {
    let entries: BTreeMap<String, DeviceEntry> = toml::from_str(text)?;
    if entries.is_empty() {
        return Err(Error::Invalid("device config defines no devices".into()));
    }
    entries
        .into_iter()
        .map(|(label, e)| {
            let spec = DeviceSpec {
                label,
                amplitude_amps: e.amplitude_amps,
                duty_cycle: e.duty_cycle,
                cycle_period_min: e.cycle_period_min,
                noise_sd_amps: e.noise_sd_amps,
                active_probability_per_day: e.active_probability_per_day,
            };
            spec.validate()?;
            Ok(spec)
        })
        .collect()
}

pub fn load_device_config(path: &Path) -> Result<Vec<DeviceSpec>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_device_config(&text)
}

pub fn default_devices() -> Vec<DeviceSpec> {
    parse_device_config(DEFAULT_DEVICES_TOML).expect("shipped device config is valid")
}

/// Per-device seed derived from a master seed, so devices are independent.
pub fn device_seed(master: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3);
    }
    master ^ h
}

/// `days` whole days of 1-minute readings starting at minute 0.
pub fn generate_device(spec: &DeviceSpec, days: usize, seed: u64) -> Result<TimeSeries> {
    spec.validate()?;
    if days == 0 {
        return Err(Error::Invalid("days must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = if spec.noise_sd_amps > 0.0 {
        Some(Normal::new(0.0, spec.noise_sd_amps).map_err(|e| Error::Invalid(e.to_string()))?)
    } else {
        None
    };
    let period = spec.cycle_period_min;
    let nominal_on = ((spec.duty_cycle * period as f64).round() as usize).clamp(1, period);
    let jitter = nominal_on / 10;

    let mut values = Vec::with_capacity(days * MINUTES_PER_DAY);
    for _ in 0..days {
        if !rng.random_bool(spec.active_probability_per_day) {
            values.extend(std::iter::repeat_n(0.0, MINUTES_PER_DAY));
            continue;
        }
        let phase = rng.random_range(0..period);
        let mut on_len = nominal_on;
        for m in 0..MINUTES_PER_DAY {
            let pos = (m + phase) % period;
            if (pos == 0 || m == 0) && nominal_on < period && jitter > 0 {
                let delta = rng.random_range(0..=2 * jitter) as isize - jitter as isize;
                on_len = (nominal_on as isize + delta).clamp(1, period as isize - 1) as usize;
            }
            let mut v = if pos < on_len { spec.amplitude_amps } else { 0.0 };
            if let Some(n) = &noise {
                v += n.sample(&mut rng);
            }
            values.push(v.max(0.0));
        }
    }
    Ok(TimeSeries::new(spec.label.clone(), 0, 1, values)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FaultSpec {
    /// Band edges in cycles per day.
    pub band_low_cyc_per_day: f64,
    pub band_high_cyc_per_day: f64,
    /// Magnitude multiplier for bins inside the band.
    pub gain: f64,
    /// Allowed relative RMS change per on-segment.
    pub rms_tolerance: f64,
}

impl FaultSpec {
    pub fn new(band_low: f64, band_high: f64, gain: f64, rms_tolerance: f64) -> Result<Self> {
        let spec = FaultSpec { band_low_cyc_per_day: band_low, band_high_cyc_per_day: band_high, gain, rms_tolerance };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.band_low_cyc_per_day > 0.0 && self.band_high_cyc_per_day > self.band_low_cyc_per_day) {
            return Err(Error::Invalid("fault band needs 0 < low < high".into()));
        }
        if !(self.gain.is_finite() && self.gain > 0.0) || self.gain == 1.0 {
            return Err(Error::Invalid("fault gain must be positive and different from 1".into()));
        }
        if !(self.rms_tolerance > 0.0 && self.rms_tolerance < 1.0) {
            return Err(Error::Invalid("rms_tolerance must be in (0, 1)".into()));
        }
        Ok(())
    }

    /// The default cleaner fault: +50 % magnitude around its 48 cycles/day switching rate.
    pub fn default_cleaner() -> Self {
        FaultSpec { band_low_cyc_per_day: 40.0, band_high_cyc_per_day: 56.0, gain: 1.5, rms_tolerance: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaultOutcome {
    pub series: TimeSeries,
    /// On-segments shorter than 4 samples, left untouched.
    pub skipped_segments: usize,
    /// Segments whose RMS could not be brought within tolerance.
    pub rms_violations: usize,
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Frequency in cycles/day of DFT bin `k` of an `n`-sample, 1-minute segment.
fn bin_frequency(k: usize, n: usize) -> f64 {
    let folded = k.min(n - k);
    folded as f64 * MINUTES_PER_DAY as f64 / n as f64
}

/// Scales the magnitudes of the in-band bins of `segment` by `gain` (phases
/// kept, DC untouched) and rescales the result to the input RMS.
pub fn apply_band_gain(segment: &[f64], fault: &FaultSpec) -> Vec<f64> {
    let n = segment.len();
    if n == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::<f64>::new();
    let mut spectrum: Vec<Complex<f64>> = segment.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut spectrum);
    for (k, c) in spectrum.iter_mut().enumerate().skip(1) {
        let f = bin_frequency(k, n);
        if f >= fault.band_low_cyc_per_day && f <= fault.band_high_cyc_per_day {
            *c *= fault.gain;
        }
    }
    planner.plan_fft_inverse(n).process(&mut spectrum);
    let mut out: Vec<f64> = spectrum.iter().map(|c| c.re / n as f64).collect();
    let (before, after) = (rms(segment), rms(&out));
    if after > 0.0 {
        let s = before / after;
        out.iter_mut().for_each(|v| *v *= s);
    }
    out
}

/// Linear interpolation through `anchors` (sorted sample indices of `x`).
fn reinterpolate(x: &[f64], anchors: &[usize]) -> Vec<f64> {
    let mut out = x.to_vec();
    for pair in anchors.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        for (k, slot) in out.iter_mut().enumerate().take(b).skip(a + 1) {
            let t = (k - a) as f64 / (b - a) as f64;
            *slot = x[a] + (x[b] - x[a]) * t;
        }
    }
    out
}

/// Injects a frequency fault into every day of a whole-day 1-minute series.
///
/// Per day, the on-segment runs from the first to the last sample above
/// `on_threshold`. Its in-band spectrum is scaled, the day is reduced to
/// 5-minute readings (starting at a seeded offset) and linearly interpolated
/// back, samples that were off are restored, and on-samples are rescaled so
/// the segment keeps its RMS. The on/off mask is therefore unchanged.
pub fn make_faulty(ts: &TimeSeries, fault: &FaultSpec, seed: u64, on_threshold: f64) -> Result<FaultOutcome> {
    fault.validate()?;
    if ts.step() != 1 || !ts.len().is_multiple_of(MINUTES_PER_DAY) {
        return Err(Error::Invalid("fault injection needs whole 1-minute days".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let floor = on_threshold + ON_FLOOR_MARGIN;
    let mut out = Vec::with_capacity(ts.len());
    let (mut skipped, mut violations) = (0, 0);

    for day in ts.values().chunks(MINUTES_PER_DAY) {
        let offset = rng.random_range(0..METER_INTERVAL);
        let on: Vec<bool> = day.iter().map(|&v| v > on_threshold).collect();
        let segment = on.iter().position(|&b| b).map(|first| (first, on.iter().rposition(|&b| b).unwrap_or(first)));
        let Some((first, last)) = segment else {
            out.extend_from_slice(day);
            continue;
        };
        if last + 1 - first < 4 {
            skipped += 1;
            out.extend_from_slice(day);
            continue;
        }
        let original = &day[first..=last];
        let mut modified = day.to_vec();
        modified[first..=last].copy_from_slice(&apply_band_gain(original, fault));

        let mut anchors: Vec<usize> = std::iter::once(0)
            .chain((offset..MINUTES_PER_DAY).step_by(METER_INTERVAL))
            .chain(std::iter::once(MINUTES_PER_DAY - 1))
            .collect();
        anchors.dedup();
        let mut faulty = reinterpolate(&modified, &anchors);

        for (k, v) in faulty.iter_mut().enumerate() {
            *v = if on[k] { v.max(floor) } else { day[k] };
        }

        let target = rms(original);
        let n = original.len() as f64;
        let off_energy: f64 = (first..=last).filter(|&k| !on[k]).map(|k| day[k] * day[k]).sum();
        for _ in 0..3 {
            let on_energy: f64 = (first..=last).filter(|&k| on[k]).map(|k| faulty[k] * faulty[k]).sum();
            let wanted = target * target * n - off_energy;
            if on_energy <= 0.0 || wanted <= 0.0 {
                break;
            }
            let s = (wanted / on_energy).sqrt();
            for k in (first..=last).filter(|&k| on[k]) {
                faulty[k] = (faulty[k] * s).max(floor);
            }
        }
        if (rms(&faulty[first..=last]) - target).abs() > fault.rms_tolerance * target {
            violations += 1;
        }
        out.extend(faulty);
    }
    let series = TimeSeries::new(ts.label(), ts.start_minute(), 1, out)?;
    Ok(FaultOutcome { series, skipped_segments: skipped, rms_violations: violations })
}
