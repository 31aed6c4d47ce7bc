//! Recurrence-quantification energy disaggregation and anomaly monitoring.
//!
//! The pipeline runs per device and for the aggregate signal:
//!
//! ```text
//! 1-minute day series -> sliding W x W recurrence windows -> [REC, DET, ENT, LAM, TT]
//!   -> PCA fitted on per-state mean features -> 2-D points
//!   -> density-grid usage map -> crossings per period -> alarm threshold
//! ```
//!
//! This crate is `no_std` and only needs `alloc`. File formats, synthetic data,
//! bootstrap simulation and the command line live in the `rqamap` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod alarm;
mod error;
mod fnv;
pub mod map;
pub mod pca;
pub mod recurrence;
pub mod rqa;
pub mod timeseries;

pub use alarm::{
    alarm_rate, evaluate, score_day, threshold_from_quantile, AlarmPolicy, AlarmReport, DayScore,
    Period,
};
pub use error::{Error, Result};
pub use map::{build_map, count_outside, GridSpec, MapOptions, Mask, UsageMap};
pub use pca::{fit, FitOptions, PcaModel, Point2D, FEATURE_DIM};
pub use recurrence::{distance_matrix, recurrence_matrix, DistanceMatrix, RecurrenceMatrix};
pub use rqa::{
    diagonal_lines, rqa_features, sliding_rqa, vertical_lines, LineLengthDistribution, RqaFeatureSeries,
    RqaFeatures, RqaParams, RqaRow,
};
pub use timeseries::{
    filter_closed_days, interpolate_to_minutes, sum_signals, TimeSeries, WorkCalendar, MINUTES_PER_DAY,
};
