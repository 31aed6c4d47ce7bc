//! CSV formats: raw meter readings, day libraries, feature rows, and the
//! plotting exports.
//!
//! Readings use a `timestamp,amps` header with ISO-8601 timestamps at minute
//! precision (`2017-01-02T08:05`, seconds allowed only as `:00`).

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use chrono::{NaiveDate, NaiveDateTime, TimeDelta};
use rqamap_core::{
    Point2D, RecurrenceMatrix, RqaFeatureSeries, RqaFeatures, RqaParams, RqaRow, TimeSeries, MINUTES_PER_DAY,
};

use crate::error::{Error, Result};

const READINGS_HEADER: &str = "timestamp,amps";
const FEATURES_HEADER: &str = "window_end,rec,det,ent,lam,tt,is_on,label";

fn epoch() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(1970, 1, 1).and_then(|d| d.and_hms_opt(0, 0, 0)).expect("valid epoch")
}

/// Minutes since 1970-01-01T00:00.
pub fn to_minute(t: NaiveDateTime) -> i64 {
    (t - epoch()).num_minutes()
}

pub fn from_minute(minute: i64) -> NaiveDateTime {
    epoch() + TimeDelta::minutes(minute)
}

/// Days since 1970-01-01.
pub fn day_number(date: NaiveDate) -> i64 {
    to_minute(date.and_hms_opt(0, 0, 0).expect("midnight")) / MINUTES_PER_DAY as i64
}

pub fn format_minute(minute: i64) -> String {
    from_minute(minute).format("%Y-%m-%dT%H:%M").to_string()
}

pub fn parse_timestamp(s: &str) -> Option<i64> {
    const FORMATS: [&str; 4] = ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M"];
    let t = FORMATS.iter().find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())?;
    use chrono::Timelike;
    if t.second() != 0 || t.nanosecond() != 0 {
        return None;
    }
    Some(to_minute(t))
}

/// `(minute, amps)` rows in file order, after header and row validation.
fn read_readings(reader: impl BufRead) -> Result<Vec<(i64, f64)>> {
    let mut lines = reader.lines();
    let header = loop {
        match lines.next() {
            None => return Err(Error::EmptyFile),
            Some(line) => {
                let line = line.map_err(|e| Error::io("<input>", e))?;
                if !line.trim().is_empty() {
                    break line;
                }
            }
        }
    };
    let normalized: Vec<String> =
        header.trim_start_matches('\u{feff}').split(',').map(|f| f.trim().to_ascii_lowercase()).collect();
    if normalized.join(",") != READINGS_HEADER {
        return Err(Error::MalformedRow { row: 0, reason: format!("expected header `{READINGS_HEADER}`") });
    }

    let mut rows: Vec<(i64, f64)> = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 1;
        let line = line.map_err(|e| Error::io("<input>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(Error::MalformedRow { row, reason: format!("expected 2 fields, found {}", fields.len()) });
        }
        let minute = parse_timestamp(fields[0])
            .ok_or_else(|| Error::MalformedRow { row, reason: format!("bad timestamp `{}`", fields[0]) })?;
        let amps: f64 =
            fields[1].parse().map_err(|_| Error::MalformedRow { row, reason: format!("bad current `{}`", fields[1]) })?;
        if !amps.is_finite() || amps < 0.0 {
            return Err(Error::MalformedRow { row, reason: format!("current must be finite and >= 0, got {amps}") });
        }
        if rows.last().is_some_and(|&(prev, _)| minute <= prev) {
            return Err(Error::NonMonotone { row });
        }
        rows.push((minute, amps));
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile);
    }
    Ok(rows)
}

/// Most frequent gap between consecutive rows; the smallest wins ties.
fn modal_gap(rows: &[(i64, f64)]) -> i64 {
    let mut freq: BTreeMap<i64, usize> = BTreeMap::new();
    for w in rows.windows(2) {
        *freq.entry(w[1].0 - w[0].0).or_insert(0) += 1;
    }
    let mut best = (1, 0);
    for (&gap, &n) in &freq {
        if n > best.1 {
            best = (gap, n);
        }
    }
    best.0
}

/// Reads a meter CSV into a regular series whose step is the modal gap.
///
/// Rows that do not sit on the `start + k * step` grid are resampled onto it
/// by linear interpolation.
pub fn parse_csv(reader: impl BufRead, label: &str) -> Result<TimeSeries> {
    let rows = read_readings(reader)?;
    let step = modal_gap(&rows);
    let start = rows[0].0;
    let end = rows[rows.len() - 1].0;
    let mut values = Vec::with_capacity(((end - start) / step + 1) as usize);
    let mut j = 0;
    let mut t = start;
    while t <= end {
        while rows[j + 1..].first().is_some_and(|&(m, _)| m <= t) {
            j += 1;
        }
        let (t0, v0) = rows[j];
        let v = if t0 == t {
            v0
        } else {
            let (t1, v1) = rows[j + 1];
            v0 + (v1 - v0) * ((t - t0) as f64 / (t1 - t0) as f64)
        };
        values.push(v);
        t += step;
    }
    let step = u32::try_from(step).map_err(|_| Error::Invalid(format!("sampling gap of {step} minutes")))?;
    Ok(TimeSeries::new(label, start, step, values)?)
}

pub fn write_series_csv(mut w: impl Write, series: &[TimeSeries]) -> std::io::Result<()> {
    writeln!(w, "{READINGS_HEADER}")?;
    for s in series {
        for (k, v) in s.values().iter().enumerate() {
            writeln!(w, "{},{}", format_minute(s.timestamp(k)), v)?;
        }
    }
    Ok(())
}

/// Reads a day library: whole 1-minute days from midnight, closed days simply
/// absent.
pub fn read_days(reader: impl BufRead, label: &str) -> Result<Vec<TimeSeries>> {
    let rows = read_readings(reader)?;
    let day_len = MINUTES_PER_DAY as i64;
    let mut days = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        let day = rows[i].0.div_euclid(day_len);
        let date = format_minute(day * day_len)[..10].to_string();
        let mut values = Vec::with_capacity(MINUTES_PER_DAY);
        while i < rows.len() && rows[i].0.div_euclid(day_len) == day {
            let expected = day * day_len + values.len() as i64;
            if rows[i].0 != expected {
                return Err(Error::IncompleteDay {
                    date,
                    reason: format!("missing reading at {}", format_minute(expected)),
                });
            }
            values.push(rows[i].1);
            i += 1;
        }
        if values.len() != MINUTES_PER_DAY {
            return Err(Error::IncompleteDay { date, reason: format!("{} of {MINUTES_PER_DAY} minutes", values.len()) });
        }
        days.push(TimeSeries::new(label, day * day_len, 1, values)?);
    }
    Ok(days)
}

/// Writes feature rows; `window_end` is offset by `1440 * day` for the `day`-th
/// series so rows from different days stay distinguishable.
pub fn write_features_csv(mut w: impl Write, series: &[RqaFeatureSeries]) -> std::io::Result<()> {
    writeln!(w, "{FEATURES_HEADER}")?;
    for (day, s) in series.iter().enumerate() {
        let offset = day * MINUTES_PER_DAY;
        for row in s.rows() {
            let f = &row.features;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                row.window_end + offset,
                f.rec,
                f.det,
                f.ent,
                f.lam,
                f.tt,
                row.is_on,
                s.label()
            )?;
        }
    }
    Ok(())
}

/// Reads feature rows back, grouped by label and split wherever consecutive
/// window ends do not advance by `params.step`.
pub fn read_features_csv(reader: impl BufRead, params: &RqaParams) -> Result<BTreeMap<String, Vec<RqaFeatureSeries>>> {
    let mut lines = reader.lines();
    let header = lines.next().ok_or(Error::EmptyFile)?.map_err(|e| Error::io("<input>", e))?;
    if header.trim() != FEATURES_HEADER {
        return Err(Error::MalformedRow { row: 0, reason: format!("expected header `{FEATURES_HEADER}`") });
    }
    let mut rows: BTreeMap<String, Vec<RqaRow>> = BTreeMap::new();
    for (i, line) in lines.enumerate() {
        let row = i + 1;
        let line = line.map_err(|e| Error::io("<input>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 8 {
            return Err(Error::MalformedRow { row, reason: format!("expected 8 fields, found {}", fields.len()) });
        }
        let bad = |what: &str| Error::MalformedRow { row, reason: format!("bad {what}") };
        let window_end: usize = fields[0].parse().map_err(|_| bad("window_end"))?;
        let mut v = [0.0; 5];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = fields[k + 1].parse().map_err(|_| bad("feature value"))?;
        }
        let is_on = match fields[6] {
            "true" | "1" => true,
            "false" | "0" => false,
            _ => return Err(bad("is_on")),
        };
        rows.entry(fields[7].to_string()).or_default().push(RqaRow {
            window_end,
            features: RqaFeatures::from_array(v),
            is_on,
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile);
    }
    let mut out = BTreeMap::new();
    for (label, rows) in rows {
        let mut runs: Vec<RqaFeatureSeries> = Vec::new();
        let mut current: Vec<RqaRow> = Vec::new();
        for r in rows {
            if current.last().is_some_and(|p| r.window_end != p.window_end + params.step) {
                runs.push(RqaFeatureSeries::new(&label, params.window, params.step, std::mem::take(&mut current))?);
            }
            current.push(r);
        }
        runs.push(RqaFeatureSeries::new(&label, params.window, params.step, current)?);
        out.insert(label, runs);
    }
    Ok(out)
}

/// Dense 0/1 grid, one matrix row per line.
pub fn write_recurrence_csv(mut w: impl Write, r: &RecurrenceMatrix) -> std::io::Result<()> {
    for i in 0..r.size() {
        let line: Vec<&str> = r.row(i).iter().map(|&b| if b { "1" } else { "0" }).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn write_projections_csv(mut w: impl Write, projections: &BTreeMap<String, Vec<Point2D>>) -> std::io::Result<()> {
    writeln!(w, "c1,c2,label")?;
    for (label, pts) in projections {
        for p in pts {
            writeln!(w, "{},{},{}", p.c1, p.c2, label)?;
        }
    }
    Ok(())
}

pub fn write_cells_csv(mut w: impl Write, centers: &[Point2D]) -> std::io::Result<()> {
    writeln!(w, "c1,c2")?;
    for p in centers {
        writeln!(w, "{},{}", p.c1, p.c2)?;
    }
    Ok(())
}

pub fn write_counts_csv(mut w: impl Write, counts: &[u64]) -> std::io::Result<()> {
    writeln!(w, "run,count")?;
    for (run, c) in counts.iter().enumerate() {
        writeln!(w, "{run},{c}")?;
    }
    Ok(())
}
