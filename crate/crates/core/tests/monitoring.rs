//! Library-level pipeline on hand-built square waves: calendar filtering,
//! summing, features, PCA, map and alarms.

use std::collections::BTreeMap;

use rqamap_core::{
    build_map, evaluate, filter_closed_days, fit, score_day, sliding_rqa, sum_signals, AlarmPolicy, Error, FitOptions,
    MapOptions, Period, RqaParams, TimeSeries, WorkCalendar, MINUTES_PER_DAY,
};

/// `days` whole days of an on/off square wave starting on Monday 2017-01-02.
fn square(label: &str, days: usize, amps: f64, period: usize, on: usize, shift: usize) -> TimeSeries {
    let start = 17168 * MINUTES_PER_DAY as i64;
    let values = (0..days * MINUTES_PER_DAY).map(|t| if (t + shift) % period < on { amps } else { 0.0 }).collect();
    TimeSeries::new(label, start, 1, values).unwrap()
}

struct Setup {
    params: RqaParams,
    days: BTreeMap<String, Vec<TimeSeries>>,
    aggregate: Vec<TimeSeries>,
}

fn setup() -> Setup {
    let cal = WorkCalendar::sundays_closed();
    let mut days = BTreeMap::new();
    for (label, amps, period, on, shift) in
        [("cleaner", 8.0, 30, 15, 0), ("dryer", 9.0, 240, 170, 7), ("iron", 7.0, 20, 8, 3), ("press", 6.0, 40, 20, 11)]
    {
        days.insert(label.to_string(), filter_closed_days(&square(label, 7, amps, period, on, shift), &cal).unwrap());
    }
    let aggregate: Vec<TimeSeries> = (0..6)
        .map(|i| sum_signals(&days.values().map(|d| d[i].clone()).collect::<Vec<_>>()).unwrap())
        .collect();
    Setup { params: RqaParams { step: 5, ..RqaParams::default() }, days, aggregate }
}

#[test]
fn sundays_are_dropped_and_days_align() {
    let s = setup();
    for days in s.days.values() {
        assert_eq!(days.len(), 6);
        assert_eq!(days[0].start_minute(), s.aggregate[0].start_minute());
    }
    assert_eq!(s.aggregate[0].label(), "aggregate");
}

#[test]
fn trained_map_scores_its_own_days_and_rejects_foreign_models() {
    let s = setup();
    let mut features = BTreeMap::new();
    for (label, days) in &s.days {
        features.insert(label.clone(), days.iter().map(|d| sliding_rqa(d, &s.params).unwrap()).collect::<Vec<_>>());
    }
    features.insert("aggregate".to_string(), s.aggregate.iter().map(|d| sliding_rqa(d, &s.params).unwrap()).collect());
    let model = fit(&features, s.params, FitOptions::default()).unwrap();

    let projections: BTreeMap<String, Vec<_>> = features
        .iter()
        .map(|(l, series)| {
            let pts = series.iter().flat_map(|f| f.on_rows()).map(|r| model.project(&r.features).unwrap()).collect();
            (l.clone(), pts)
        })
        .collect();
    let mut map = build_map(&projections, &MapOptions::default()).unwrap();
    assert!(matches!(score_day(&model, &map, &s.aggregate[0]), Err(Error::ModelMismatch { .. })));
    map.bind_model(model.id());

    let daily = score_day(&model, &map, &s.aggregate[0]).unwrap();
    assert_eq!(daily.windows as usize, (MINUTES_PER_DAY - s.params.window) / s.params.step + 1);

    let week: Vec<f64> = s.aggregate.iter().flat_map(|d| d.values().iter().copied()).collect();
    let week = TimeSeries::new("aggregate", s.aggregate[0].start_minute(), 1, week).unwrap();
    let per_day: u64 = s.aggregate.iter().map(|d| score_day(&model, &map, d).unwrap().crossings).sum();
    let policy = AlarmPolicy {
        period: Period::Weekly,
        threshold_crossings: per_day,
        quantile: 0.9,
        runs: 1,
        model_id: model.id(),
        map_id: map.id(),
    };
    let report = evaluate(&map, &model, &policy, &week).unwrap();
    assert_eq!(report.crossings, per_day);
    assert!(!report.triggered, "crossings equal to the threshold do not alarm");
    let strict = AlarmPolicy { threshold_crossings: per_day.saturating_sub(1), ..policy };
    assert_eq!(evaluate(&map, &model, &strict, &week).unwrap().triggered, per_day > 0);

    let other = AlarmPolicy { map_id: map.id() ^ 1, ..policy };
    assert!(evaluate(&map, &model, &other, &week).is_err());
}

#[test]
fn fit_needs_five_states() {
    let s = setup();
    let mut features = BTreeMap::new();
    for (label, days) in s.days.iter().take(3) {
        features.insert(label.clone(), vec![sliding_rqa(&days[0], &s.params).unwrap()]);
    }
    assert!(matches!(
        fit(&features, s.params, FitOptions::default()),
        Err(Error::StateCount { expected: 5, got: 3 })
    ));
}
