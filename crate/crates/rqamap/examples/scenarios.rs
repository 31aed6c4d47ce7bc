//! Trains on six synthetic weeks and prints the daily and weekly alarm rates
//! of the baseline, extra-iron and faulty-cleaner scenarios.

use std::collections::BTreeMap;
use std::time::Instant;

use chrono::NaiveDate;
use rqamap::csv_io::day_number;
use rqamap::pipeline::train;
use rqamap::simulate::{simulate_counts, ProfileLibrary};
use rqamap::synth::{default_devices, device_seed, generate_device, make_faulty, FaultSpec};
use rqamap_core::{alarm_rate, filter_closed_days, threshold_from_quantile, FitOptions, MapOptions, Period, RqaParams, WorkCalendar};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map_or(Ok(2018), |s| s.parse())?;
    let t0 = Instant::now();
    let start = day_number(NaiveDate::from_ymd_opt(2017, 1, 2).unwrap()) * 1440;
    let params = RqaParams::default();
    let mut devices = BTreeMap::new();
    for spec in default_devices() {
        let ts = generate_device(&spec, 42, device_seed(seed, &spec.label))?.with_start(start);
        devices.insert(spec.label.clone(), filter_closed_days(&ts, &WorkCalendar::sundays_closed())?);
    }
    let trained = train(&devices, params, FitOptions::default(), &MapOptions::default())?;
    println!("trained in {:?}; eigenvalues {:?}", t0.elapsed(), trained.model.eigenvalues());
    for (l, p) in &trained.projections {
        println!("  {l}: {} on-windows", p.len());
    }
    let lib = ProfileLibrary::new(devices.clone())?;
    let base: Vec<String> = ["cleaner", "dryer", "iron", "table_press"].map(String::from).to_vec();
    let mut extra = base.clone();
    extra.push("iron".into());

    let cal = simulate_counts(&lib, &trained.model, &trained.map, Period::Daily, &base, 100, seed ^ 1)?;
    let thr = threshold_from_quantile(&cal, 0.9)?;
    let fresh = simulate_counts(&lib, &trained.model, &trained.map, Period::Daily, &base, 200, seed ^ 2)?;
    let more = simulate_counts(&lib, &trained.model, &trained.map, Period::Daily, &extra, 200, seed ^ 3)?;
    let mut c = cal.clone();
    c.sort();
    println!("daily cal counts {:?}", &c[..]);
    println!("daily thr {thr} baseline {:.3} extra iron {:.3} ({:?})", alarm_rate(&fresh, thr)?, alarm_rate(&more, thr)?, t0.elapsed());

    let fault = FaultSpec::default_cleaner();
    let faulty: Vec<_> = devices["cleaner"]
        .iter()
        .enumerate()
        .map(|(i, d)| make_faulty(d, &fault, seed ^ i as u64, params.on_threshold).map(|o| o.series))
        .collect::<Result<_, _>>()?;
    let flib = lib.clone().with_profiles("cleaner", faulty)?;
    let wcal = simulate_counts(&lib, &trained.model, &trained.map, Period::Weekly, &base, 100, seed ^ 4)?;
    let wthr = threshold_from_quantile(&wcal, 0.9)?;
    let wfresh = simulate_counts(&lib, &trained.model, &trained.map, Period::Weekly, &base, 200, seed ^ 5)?;
    let wfault = simulate_counts(&flib, &trained.model, &trained.map, Period::Weekly, &base, 200, seed ^ 6)?;
    let mut c = wcal.clone();
    c.sort();
    println!("weekly cal counts {:?}", &c[..]);
    println!("weekly thr {wthr} baseline {:.3} faulty {:.3} ({:?})", alarm_rate(&wfresh, wthr)?, alarm_rate(&wfault, wthr)?, t0.elapsed());
    Ok(())
}
