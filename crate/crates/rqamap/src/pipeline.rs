//! End-to-end training: per-device and aggregate features, PCA fit, usage map.

use std::collections::BTreeMap;

use rayon::prelude::*;
use rqamap_core::pca::fit;
use rqamap_core::{
    build_map, sliding_rqa, sum_signals, FitOptions, MapOptions, PcaModel, Point2D, RqaFeatureSeries, RqaParams,
    TimeSeries, UsageMap,
};

use crate::error::{Error, Result};

pub const AGGREGATE: &str = "aggregate";

/// Sliding-window features of every day, in day order.
pub fn day_features(days: &[TimeSeries], params: &RqaParams) -> Result<Vec<RqaFeatureSeries>> {
    Ok(days.par_iter().map(|d| sliding_rqa(d, params)).collect::<Result<Vec<_>, _>>()?)
}

/// Day-by-day sum of aligned device days (same number of days per device).
pub fn aggregate_days(devices: &BTreeMap<String, Vec<TimeSeries>>) -> Result<Vec<TimeSeries>> {
    let n = devices.values().next().map_or(0, Vec::len);
    if n == 0 || devices.values().any(|d| d.len() != n) {
        return Err(Error::Invalid("training devices must cover the same, non-zero number of days".into()));
    }
    (0..n)
        .map(|i| {
            let day: Vec<TimeSeries> = devices.values().map(|d| d[i].clone()).collect();
            Ok(sum_signals(&day)?)
        })
        .collect()
}

/// Projections of every on-window, per state.
pub fn project_on_windows(
    model: &PcaModel,
    features: &BTreeMap<String, Vec<RqaFeatureSeries>>,
) -> Result<BTreeMap<String, Vec<Point2D>>> {
    features
        .iter()
        .map(|(label, series)| {
            let pts = series
                .iter()
                .flat_map(|s| s.on_rows())
                .map(|row| model.project(&row.features))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((label.clone(), pts))
        })
        .collect()
}

/// Fits a model on feature series and builds its map from the on-window projections.
pub fn fit_and_map(
    features: &BTreeMap<String, Vec<RqaFeatureSeries>>,
    params: RqaParams,
    fit_options: FitOptions,
    map_options: &MapOptions,
) -> Result<(PcaModel, UsageMap, BTreeMap<String, Vec<Point2D>>)> {
    let model = fit(features, params, fit_options)?;
    let projections = project_on_windows(&model, features)?;
    let mut map = build_map(&projections, map_options)?;
    map.bind_model(model.id());
    Ok((model, map, projections))
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: PcaModel,
    pub map: UsageMap,
    pub features: BTreeMap<String, Vec<RqaFeatureSeries>>,
    pub projections: BTreeMap<String, Vec<Point2D>>,
}

/// Trains on aligned device days; the aggregate state is their daily sum.
pub fn train(
    devices: &BTreeMap<String, Vec<TimeSeries>>,
    params: RqaParams,
    fit_options: FitOptions,
    map_options: &MapOptions,
) -> Result<Trained> {
    if devices.contains_key(AGGREGATE) {
        return Err(Error::Invalid(format!("`{AGGREGATE}` is reserved for the summed signal")));
    }
    let mut features = BTreeMap::new();
    for (label, days) in devices {
        features.insert(label.clone(), day_features(days, &params)?);
    }
    features.insert(AGGREGATE.to_string(), day_features(&aggregate_days(devices)?, &params)?);
    let (model, map, projections) = fit_and_map(&features, params, fit_options, map_options)?;
    Ok(Trained { model, map, features, projections })
}
