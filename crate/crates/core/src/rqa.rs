//! Recurrence quantification of sliding windows.
//!
//! All point counts exclude the line of identity. Diagonal lines are taken
//! from the upper triangle only (the matrix is symmetric); vertical lines are
//! taken per column over the whole height, with the diagonal cell splitting a
//! column into an upper and a lower candidate run.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recurrence::{distance_matrix, recurrence_matrix, RecurrenceMatrix};
use crate::timeseries::TimeSeries;

/// The five measures of one window: REC, DET and LAM in percent, ENT in
/// bits, TT in minutes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RqaFeatures {
    pub rec: f64,
    pub det: f64,
    pub ent: f64,
    pub lam: f64,
    pub tt: f64,
}

impl RqaFeatures {
    pub fn to_array(&self) -> [f64; 5] {
        [self.rec, self.det, self.ent, self.lam, self.tt]
    }

    pub fn from_array(v: [f64; 5]) -> Self {
        RqaFeatures { rec: v[0], det: v[1], ent: v[2], lam: v[3], tt: v[4] }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Histogram of line lengths at or above `lmin`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineLengthDistribution {
    lmin: usize,
    counts: BTreeMap<usize, usize>,
}

impl LineLengthDistribution {
    fn new(lmin: usize) -> Self {
        LineLengthDistribution { lmin, counts: BTreeMap::new() }
    }

    fn record(&mut self, len: usize) {
        if len >= self.lmin {
            *self.counts.entry(len).or_insert(0) += 1;
        }
    }

    pub fn lmin(&self) -> usize {
        self.lmin
    }

    pub fn counts(&self) -> &BTreeMap<usize, usize> {
        &self.counts
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn lines(&self) -> usize {
        self.counts.values().sum()
    }

    /// Recurrence points covered by the counted lines.
    pub fn points(&self) -> usize {
        self.counts.iter().map(|(len, n)| len * n).sum()
    }

    /// Shannon entropy in bits of the normalized length histogram; 0 when empty.
    pub fn entropy(&self) -> f64 {
        let total = self.lines() as f64;
        self.counts
            .values()
            .map(|&n| {
                let p = n as f64 / total;
                -p * libm::log2(p)
            })
            .sum()
    }

    /// Mean counted line length; 0 when empty.
    pub fn mean_length(&self) -> f64 {
        match self.lines() {
            0 => 0.0,
            lines => self.points() as f64 / lines as f64,
        }
    }
}

fn check_lmin(lmin: usize) -> Result<()> {
    if lmin < 2 {
        return Err(Error::InvalidParameter { name: "lmin", reason: "minimum line length must be at least 2" });
    }
    Ok(())
}

/// Maximal diagonal runs above the main diagonal.
pub fn diagonal_lines(r: &RecurrenceMatrix, lmin: usize) -> Result<LineLengthDistribution> {
    check_lmin(lmin)?;
    let n = r.size();
    let mut dist = LineLengthDistribution::new(lmin);
    for offset in 1..n {
        let mut run = 0;
        for i in 0..n - offset {
            if r.get(i, i + offset) {
                run += 1;
            } else {
                dist.record(run);
                run = 0;
            }
        }
        dist.record(run);
    }
    Ok(dist)
}

/// Maximal vertical runs per column, skipping the main-diagonal cell.
pub fn vertical_lines(r: &RecurrenceMatrix, lmin: usize) -> Result<LineLengthDistribution> {
    check_lmin(lmin)?;
    let n = r.size();
    let mut dist = LineLengthDistribution::new(lmin);
    for col in 0..n {
        let mut run = 0;
        for row in 0..n {
            if row != col && r.get(row, col) {
                run += 1;
            } else {
                dist.record(run);
                run = 0;
            }
        }
        dist.record(run);
    }
    Ok(dist)
}

/// RQA measures of an already thresholded window.
pub fn features_of_matrix(r: &RecurrenceMatrix, lmin: usize) -> Result<RqaFeatures> {
    let diagonal = diagonal_lines(r, lmin)?;
    let vertical = vertical_lines(r, lmin)?;
    let w = r.size() as f64;
    let points = r.off_diagonal_points();
    if points == 0 {
        return Ok(RqaFeatures::default());
    }
    let points = points as f64;
    Ok(RqaFeatures {
        rec: 100.0 * points / (w * (w - 1.0)),
        // Upper-triangle lines are mirrored below the diagonal.
        det: 100.0 * (2 * diagonal.points()) as f64 / points,
        ent: diagonal.entropy(),
        lam: 100.0 * vertical.points() as f64 / points,
        tt: vertical.mean_length(),
    })
}

pub fn rqa_features(window: &[f64], epsilon: f64, lmin: usize) -> Result<RqaFeatures> {
    let dm = distance_matrix(window)?;
    let r = recurrence_matrix(&dm, epsilon)?;
    features_of_matrix(&r, lmin)
}

/// Reusable buffers for many windows of one size. Produces exactly the same
/// values as [`rqa_features`] without building the intermediate matrices.
struct WindowScratch {
    size: usize,
    cells: Vec<bool>,
    diagonal: Vec<usize>,
    vertical: Vec<usize>,
}

impl WindowScratch {
    fn new(size: usize) -> Self {
        WindowScratch {
            size,
            cells: alloc::vec![false; size * size],
            diagonal: alloc::vec![0; size + 1],
            vertical: alloc::vec![0; size + 1],
        }
    }

    fn features(&mut self, window: &[f64], epsilon: f64, lmin: usize) -> RqaFeatures {
        let n = self.size;
        debug_assert_eq!(window.len(), n);
        let mut upper = 0usize;
        for i in 0..n {
            self.cells[i * n + i] = true;
            for j in (i + 1)..n {
                let r = (window[i] - window[j]).abs() <= epsilon;
                self.cells[i * n + j] = r;
                self.cells[j * n + i] = r;
                upper += r as usize;
            }
        }
        if upper == 0 {
            return RqaFeatures::default();
        }
        self.diagonal.fill(0);
        self.vertical.fill(0);
        let record = |hist: &mut [usize], run: usize| {
            if run >= lmin {
                hist[run] += 1;
            }
        };
        for offset in 1..n {
            let mut run = 0;
            for i in 0..n - offset {
                if self.cells[i * n + i + offset] {
                    run += 1;
                } else {
                    record(&mut self.diagonal, run);
                    run = 0;
                }
            }
            record(&mut self.diagonal, run);
        }
        // Column j equals row j by symmetry.
        for j in 0..n {
            let row = &self.cells[j * n..(j + 1) * n];
            let mut run = 0;
            for (k, &r) in row.iter().enumerate() {
                if k != j && r {
                    run += 1;
                } else {
                    record(&mut self.vertical, run);
                    run = 0;
                }
            }
            record(&mut self.vertical, run);
        }

        let summary = |hist: &[usize]| {
            let lines: usize = hist.iter().sum();
            let points: usize = hist.iter().enumerate().map(|(len, c)| len * c).sum();
            (lines, points)
        };
        let (diag_lines, diag_points) = summary(&self.diagonal);
        let (vert_lines, vert_points) = summary(&self.vertical);
        let entropy: f64 = self
            .diagonal
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / diag_lines as f64;
                -p * libm::log2(p)
            })
            .sum();
        let points = (2 * upper) as f64;
        let w = n as f64;
        RqaFeatures {
            rec: 100.0 * points / (w * (w - 1.0)),
            det: 100.0 * (2 * diag_points) as f64 / points,
            ent: entropy,
            lam: 100.0 * vert_points as f64 / points,
            tt: if vert_lines == 0 { 0.0 } else { vert_points as f64 / vert_lines as f64 },
        }
    }
}

/// Parameters of the sliding-window analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RqaParams {
    /// Recurrence threshold in amps.
    pub epsilon: f64,
    /// Window size `W` in minutes.
    pub window: usize,
    pub lmin: usize,
    /// Window stride in minutes.
    pub step: usize,
    /// A window is "on" when its mean current exceeds this, in amps.
    pub on_threshold: f64,
}

impl Default for RqaParams {
    fn default() -> Self {
        RqaParams { epsilon: 6.0, window: 80, lmin: 2, step: 1, on_threshold: 0.5 }
    }
}

impl RqaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::InvalidParameter { name: "epsilon", reason: "must be finite and non-negative" });
        }
        if self.window < 2 {
            return Err(Error::InvalidParameter { name: "window", reason: "must be at least 2" });
        }
        check_lmin(self.lmin)?;
        if self.step == 0 {
            return Err(Error::InvalidParameter { name: "step", reason: "must be at least 1" });
        }
        if !(self.on_threshold.is_finite() && self.on_threshold >= 0.0) {
            return Err(Error::InvalidParameter { name: "on_threshold", reason: "must be finite and non-negative" });
        }
        Ok(())
    }

    /// Rows produced for a series of `len` samples.
    pub fn windows_for(&self, len: usize) -> usize {
        if len < self.window {
            0
        } else {
            (len - self.window) / self.step + 1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RqaRow {
    /// Exclusive end of the trailing window `[end - W, end)`.
    pub window_end: usize,
    pub features: RqaFeatures,
    pub is_on: bool,
}

/// Window-by-window RQA of one device signal.
#[derive(Debug, Clone, PartialEq)]
pub struct RqaFeatureSeries {
    label: String,
    window_size: usize,
    step: usize,
    rows: Vec<RqaRow>,
}

impl RqaFeatureSeries {
    pub fn new(label: impl Into<String>, window_size: usize, step: usize, rows: Vec<RqaRow>) -> Result<Self> {
        if window_size < 2 || step == 0 {
            return Err(Error::InvalidParameter { name: "window_size", reason: "window must be >= 2 and step >= 1" });
        }
        for pair in rows.windows(2) {
            if pair[1].window_end != pair[0].window_end + step {
                return Err(Error::InvalidParameter { name: "rows", reason: "window ends must advance by the step" });
            }
        }
        Ok(RqaFeatureSeries { label: label.into(), window_size, step, rows })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn window_size(&self) -> usize {
        self.window_size
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn rows(&self) -> &[RqaRow] {
        &self.rows
    }

    pub fn on_rows(&self) -> impl Iterator<Item = &RqaRow> {
        self.rows.iter().filter(|r| r.is_on)
    }
}

/// Trailing windows ending at `W, W + step, ...` over a 1-minute series.
pub fn sliding_rqa(day: &TimeSeries, params: &RqaParams) -> Result<RqaFeatureSeries> {
    params.validate()?;
    if day.step() != 1 {
        return Err(Error::InvalidParameter { name: "step", reason: "sliding RQA needs a 1-minute series" });
    }
    let values = day.values();
    let w = params.window;
    if values.len() < w {
        return Err(Error::TooShort { needed: w, got: values.len() });
    }
    let mut rows = Vec::with_capacity(params.windows_for(values.len()));
    let mut scratch = WindowScratch::new(w);
    let mut end = w;
    while end <= values.len() {
        let window = &values[end - w..end];
        let mean = window.iter().sum::<f64>() / w as f64;
        rows.push(RqaRow {
            window_end: end,
            features: scratch.features(window, params.epsilon, params.lmin),
            is_on: mean > params.on_threshold,
        });
        end += params.step;
    }
    Ok(RqaFeatureSeries { label: String::from(day.label()), window_size: w, step: params.step, rows })
}
