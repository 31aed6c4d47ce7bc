//! The `rqamap` command line.
//!
//! Every subcommand turns input files into output files and writes a run
//! manifest next to them. Exit status: 0 success, 1 usage error, 2 data or
//! validation error, 3 when `evaluate` raised an alarm.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use rqamap_core::pca::fit;
use rqamap_core::{
    alarm_rate, build_map, distance_matrix, evaluate, filter_closed_days, interpolate_to_minutes, recurrence_matrix,
    threshold_from_quantile, AlarmPolicy, FitOptions, MapOptions, Period, RqaFeatureSeries, RqaParams, TimeSeries,
    WorkCalendar,
};
use serde_json::json;

use crate::csv_io::{
    day_number, format_minute, parse_csv, read_days, read_features_csv, write_cells_csv, write_counts_csv,
    write_features_csv, write_projections_csv, write_recurrence_csv, write_series_csv,
};
use crate::error::{Error, Result};
use crate::formats::{format_id, map_from_json, map_to_json, model_from_json, model_to_json, policy_from_json, policy_to_json, report_line};
use crate::manifest::{manifest_path, read_manifest_of, RunManifest};
use crate::pipeline::{aggregate_days, day_features, project_on_windows, AGGREGATE};
use crate::simulate::{simulate_counts, ProfileLibrary};
use crate::synth::{default_devices, device_seed, generate_device, load_device_config, make_faulty, FaultSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_ALARM: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "rqamap", version, about = "RQA usage maps and crossing-count alarms for current signals")]
#[command(arg_required_else_help = true)]
struct Cli {
    /// Cap on worker threads (default: one per core)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic per-device day libraries
    Synth(SynthArgs),
    /// Resample a meter CSV to 1-minute working days
    Ingest(IngestArgs),
    /// Sliding-window RQA features of day libraries
    Features(FeaturesArgs),
    /// Fit the PCA model on feature files
    Fit(FitArgs),
    /// Build the usage map of a model
    Map(MapArgs),
    /// Bootstrap a crossing-count threshold into an alarm policy
    Calibrate(CalibrateArgs),
    /// Score aggregate days against a policy (exit 3 on alarm)
    Evaluate(EvaluateArgs),
    /// Bootstrap crossing counts of a device mix
    Simulate(SimulateArgs),
}

/// Sliding-window parameters. Unset values come from the input manifest when
/// there is one, otherwise from the defaults.
#[derive(Debug, Clone, Default, Args)]
struct RqaArgs {
    /// Recurrence threshold in amps [default: 6]
    #[arg(long)]
    epsilon: Option<f64>,
    /// Window length in samples [default: 80]
    #[arg(long)]
    window: Option<usize>,
    /// Minimum diagonal and vertical line length [default: 2]
    #[arg(long)]
    lmin: Option<usize>,
    /// Stride between windows [default: 1]
    #[arg(long)]
    step: Option<usize>,
    /// Window mean above which the device counts as on [default: 0.5]
    #[arg(long)]
    on_threshold: Option<f64>,
}

impl RqaArgs {
    /// Explicit flags win over `base`; with `strict`, they must agree with it.
    fn resolve(&self, base: RqaParams, strict: bool) -> Result<RqaParams> {
        let mut p = base;
        let set = |name: &str, differs: bool| {
            if strict && differs {
                return Err(Error::Invalid(format!("--{name} differs from the value the input was computed with")));
            }
            Ok(())
        };
        if let Some(v) = self.epsilon {
            set("epsilon", v != p.epsilon)?;
            p.epsilon = v;
        }
        if let Some(v) = self.window {
            set("window", v != p.window)?;
            p.window = v;
        }
        if let Some(v) = self.lmin {
            set("lmin", v != p.lmin)?;
            p.lmin = v;
        }
        if let Some(v) = self.step {
            set("step", v != p.step)?;
            p.step = v;
        }
        if let Some(v) = self.on_threshold {
            set("on-threshold", v != p.on_threshold)?;
            p.on_threshold = v;
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Args)]
struct CalendarArgs {
    /// Closed weekday, 0 = Monday .. 6 = Sunday; repeatable [default: 6]
    #[arg(long = "closed-weekday")]
    closed_weekdays: Vec<u8>,
    /// Closed date (YYYY-MM-DD); repeatable
    #[arg(long = "closed-date", value_parser = parse_date)]
    closed_dates: Vec<NaiveDate>,
    /// Treat every weekday as open
    #[arg(long, conflicts_with = "closed_weekdays")]
    open_all_week: bool,
}

impl CalendarArgs {
    fn calendar(&self) -> Result<WorkCalendar> {
        let weekdays: Vec<u8> = match (self.open_all_week, self.closed_weekdays.is_empty()) {
            (true, _) => Vec::new(),
            (false, true) => vec![6],
            (false, false) => self.closed_weekdays.clone(),
        };
        let dates: Vec<i64> = self.closed_dates.iter().map(|&d| day_number(d)).collect();
        Ok(WorkCalendar::new(&weekdays, &dates)?)
    }

    fn to_json(&self) -> serde_json::Value {
        let cal = self.calendar().ok();
        json!({
            "closed_weekdays": cal.as_ref().map(|c| c.closed_weekdays().collect::<Vec<_>>()),
            "closed_dates": self.closed_dates.iter().map(|d| d.to_string()).collect::<Vec<_>>(),
        })
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Calendar days to generate, closed days included
    #[arg(long, default_value_t = 42)]
    days: usize,
    /// First day (a Monday keeps weeks aligned)
    #[arg(long, default_value = "2017-01-02", value_parser = parse_date)]
    start: NaiveDate,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Device TOML (default: the built-in four-device workshop)
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    calendar: CalendarArgs,
    /// Also write `<label>_faulty.csv` and `aggregate_faulty.csv` with a band-gain fault on this device
    #[arg(long)]
    fault: Option<String>,
    /// Fault band lower edge in cycles per day
    #[arg(long, default_value_t = 40.0)]
    fault_band_low: f64,
    /// Fault band upper edge in cycles per day
    #[arg(long, default_value_t = 56.0)]
    fault_band_high: f64,
    #[arg(long, default_value_t = 1.5)]
    fault_gain: f64,
    /// Allowed relative RMS change of a faulty on-segment
    #[arg(long, default_value_t = 0.05)]
    rms_tolerance: f64,
    /// On/off threshold the fault must preserve
    #[arg(long, default_value_t = 0.5)]
    on_threshold: f64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Meter CSV with `timestamp,current_amps` rows
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    label: String,
    #[command(flatten)]
    calendar: CalendarArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FeaturesArgs {
    /// Day library as `label=path`; repeatable
    #[arg(long = "library", value_parser = parse_library_entry, required = true)]
    libraries: Vec<(String, PathBuf)>,
    /// Also compute the summed `aggregate` state (libraries must cover the same days)
    #[arg(long)]
    aggregate: bool,
    #[command(flatten)]
    rqa: RqaArgs,
    #[arg(long)]
    out: PathBuf,
    /// Write the recurrence matrix of one window as a 0/1 grid
    #[arg(long)]
    recurrence_out: Option<PathBuf>,
    /// Day of the first library used by --recurrence-out
    #[arg(long, default_value_t = 0)]
    recurrence_day: usize,
    /// Window end (exclusive sample index) used by --recurrence-out [default: window]
    #[arg(long)]
    recurrence_end: Option<usize>,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Feature CSV; repeatable
    #[arg(long = "features", required = true)]
    features: Vec<PathBuf>,
    /// Scale each feature to unit variance before the eigen-decomposition
    #[arg(long)]
    standardize: bool,
    #[command(flatten)]
    rqa: RqaArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MapArgs {
    #[arg(long)]
    model: PathBuf,
    /// Feature CSV; repeatable
    #[arg(long = "features", required = true)]
    features: Vec<PathBuf>,
    /// Grid cells per axis
    #[arg(long, default_value_t = 100)]
    cells: usize,
    /// Share of each device's points its hot-spot must cover
    #[arg(long, default_value_t = 0.95)]
    mass_quantile: f64,
    /// Bounding-box margin as a fraction of each axis span
    #[arg(long, default_value_t = 0.05)]
    margin: f64,
    /// Grow the map by one cell in every direction
    #[arg(long)]
    dilate: bool,
    #[arg(long)]
    out: PathBuf,
    /// Write every on-window projection as `c1,c2,label`
    #[arg(long)]
    projections_out: Option<PathBuf>,
    /// Write the centers of the kept cells as `c1,c2`
    #[arg(long)]
    cells_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulationArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    map: PathBuf,
    /// Day library as `label=path`; repeatable
    #[arg(long = "library", value_parser = parse_library_entry, required = true)]
    libraries: Vec<(String, PathBuf)>,
    /// Devices drawn per simulated day, comma separated; labels may repeat
    /// [default: every library once]
    #[arg(long, value_delimiter = ',')]
    devices: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[command(flatten)]
    sim: SimulationArgs,
    /// `daily` or `weekly` (six working days)
    #[arg(long, default_value = "daily")]
    period: Period,
    #[arg(long, default_value_t = 0.9)]
    quantile: f64,
    #[arg(long, default_value_t = 100)]
    runs: usize,
    #[arg(long)]
    out: PathBuf,
    /// Write the simulated counts as `run,count`
    #[arg(long)]
    counts_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    sim: SimulationArgs,
    /// `daily` or `weekly` [default: the policy's period, else daily]
    #[arg(long)]
    period: Option<Period>,
    #[arg(long, default_value_t = 200)]
    runs: usize,
    /// Policy whose threshold the alarm rate is reported against
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Counts CSV `run,count`
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    policy: PathBuf,
    /// Aggregate day library; weekly policies take consecutive groups of six days
    #[arg(long)]
    input: PathBuf,
    /// Label of the input rows
    #[arg(long, default_value = AGGREGATE)]
    label: String,
    /// Report file, one JSON line per period (default: standard output)
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_date(s: &str) -> std::result::Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| format!("`{s}`: {e}"))
}

fn parse_library_entry(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((label, path)) if !label.is_empty() && !path.is_empty() => Ok((label.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected `label=path`, got `{s}`")),
    }
}

/// Runs the command line `argv` (program name first) and returns the exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() || e.kind() == clap::error::ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                EXIT_USAGE
            } else {
                EXIT_OK
            };
        }
    };
    let outcome = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => Err(Error::Invalid(format!("thread pool: {e}"))),
        },
        None => dispatch(cli.command),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Ingest(a) => ingest(a),
        Command::Features(a) => features(a),
        Command::Fit(a) => fit_cmd(a),
        Command::Map(a) => map_cmd(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Simulate(a) => simulate(a),
    }
    .map(|code| code.unwrap_or(EXIT_OK))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_library(entries: &[(String, PathBuf)]) -> Result<BTreeMap<String, Vec<TimeSeries>>> {
    let mut lib = BTreeMap::new();
    for (label, path) in entries {
        if lib.insert(label.clone(), read_days(open(path)?, label)?).is_some() {
            return Err(Error::Invalid(format!("library label `{label}` given twice")));
        }
    }
    Ok(lib)
}

fn library_json(entries: &[(String, PathBuf)]) -> serde_json::Value {
    entries.iter().map(|(l, p)| (l.clone(), json!(p.display().to_string()))).collect::<serde_json::Map<_, _>>().into()
}

fn synth(a: SynthArgs) -> Result<Option<i32>> {
    let specs = match &a.config {
        Some(path) => load_device_config(path)?,
        None => default_devices(),
    };
    let calendar = a.calendar.calendar()?;
    let start = day_number(a.start) * MINUTES_PER_DAY_I64;
    let fault = FaultSpec::new(a.fault_band_low, a.fault_band_high, a.fault_gain, a.rms_tolerance)?;
    if let Some(label) = &a.fault {
        if !specs.iter().any(|s| &s.label == label) {
            return Err(Error::MissingLabel(label.clone()));
        }
    }
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;

    let mut manifest = RunManifest::new(
        "synth",
        json!({
            "days": a.days,
            "start": a.start.to_string(),
            "devices": specs,
            "calendar": a.calendar.to_json(),
            "fault": a.fault.as_ref().map(|label| json!({"label": label, "spec": fault, "on_threshold": a.on_threshold})),
        }),
    )
    .seed(a.seed);
    if let Some(path) = &a.config {
        manifest = manifest.input(path);
    }

    let mut devices = BTreeMap::new();
    for spec in &specs {
        let series = generate_device(spec, a.days, device_seed(a.seed, &spec.label))?.with_start(start);
        let days = filter_closed_days(&series, &calendar)?;
        let path = a.out_dir.join(format!("{}.csv", spec.label));
        write_file(&path, |w| write_series_csv(w, &days))?;
        manifest = manifest.output(&path);
        devices.insert(spec.label.clone(), days);
    }
    let path = a.out_dir.join(format!("{AGGREGATE}.csv"));
    let summed = aggregate(&devices)?;
    write_file(&path, |w| write_series_csv(w, &summed))?;
    manifest = manifest.output(&path);

    if let Some(label) = &a.fault {
        let seed = device_seed(a.seed, &format!("{label}/fault"));
        let mut faulty = Vec::new();
        let mut violations = 0;
        for (i, day) in devices[label].iter().enumerate() {
            let outcome = make_faulty(day, &fault, seed ^ i as u64, a.on_threshold)?;
            violations += outcome.rms_violations;
            faulty.push(outcome.series);
        }
        if violations > 0 {
            eprintln!("note: {violations} faulty segments exceed the RMS tolerance");
        }
        let path = a.out_dir.join(format!("{label}_faulty.csv"));
        write_file(&path, |w| write_series_csv(w, &faulty))?;
        manifest = manifest.output(&path);
        devices.insert(label.clone(), faulty);
        let path = a.out_dir.join(format!("{AGGREGATE}_faulty.csv"));
        let summed = aggregate(&devices)?;
    write_file(&path, |w| write_series_csv(w, &summed))?;
        manifest = manifest.output(&path);
    }
    manifest.write(&a.out_dir.join("manifest.json"))?;
    Ok(None)
}

fn aggregate(devices: &BTreeMap<String, Vec<TimeSeries>>) -> Result<Vec<TimeSeries>> {
    Ok(aggregate_days(devices)?.into_iter().map(|d| d.with_label(AGGREGATE)).collect())
}

const MINUTES_PER_DAY_I64: i64 = rqamap_core::MINUTES_PER_DAY as i64;

fn ingest(a: IngestArgs) -> Result<Option<i32>> {
    let raw = parse_csv(open(&a.input)?, &a.label)?;
    let minutes = interpolate_to_minutes(&raw)?;
    let days = filter_closed_days(&minutes, &a.calendar.calendar()?)?;
    if days.is_empty() {
        return Err(Error::Invalid("no complete working day in the input".into()));
    }
    write_file(&a.out, |w| write_series_csv(w, &days))?;
    RunManifest::new(
        "ingest",
        json!({"label": a.label, "calendar": a.calendar.to_json(), "input_step": raw.step(), "days_written": days.len()}),
    )
    .input(&a.input)
    .output(&a.out)
    .write(&manifest_path(&a.out))?;
    Ok(None)
}

fn features(a: FeaturesArgs) -> Result<Option<i32>> {
    let params = a.rqa.resolve(RqaParams::default(), false)?;
    let lib = load_library(&a.libraries)?;
    if a.aggregate && lib.contains_key(AGGREGATE) {
        return Err(Error::Invalid(format!("`{AGGREGATE}` is reserved for the summed signal")));
    }

    let mut all: Vec<RqaFeatureSeries> = Vec::new();
    for days in lib.values() {
        all.extend(day_features(days, &params)?);
    }
    if a.aggregate {
        all.extend(day_features(&aggregate(&lib)?, &params)?);
    }
    write_file(&a.out, |w| write_features_csv(w, &all))?;

    let mut manifest = RunManifest::new(
        "features",
        json!({"rqa": params, "aggregate": a.aggregate, "library": library_json(&a.libraries)}),
    );
    for (_, path) in &a.libraries {
        manifest = manifest.input(path);
    }
    manifest = manifest.output(&a.out);

    if let Some(path) = &a.recurrence_out {
        let (label, _) = &a.libraries[0];
        let day = lib[label]
            .get(a.recurrence_day)
            .ok_or_else(|| Error::Invalid(format!("`{label}` has no day {}", a.recurrence_day)))?;
        let end = a.recurrence_end.unwrap_or(params.window);
        if end < params.window || end > day.len() {
            return Err(Error::Invalid(format!("window end {end} outside {}..={}", params.window, day.len())));
        }
        let r = recurrence_matrix(&distance_matrix(&day.values()[end - params.window..end])?, params.epsilon)?;
        write_file(path, |w| write_recurrence_csv(w, &r))?;
        manifest = manifest.output(path);
    }
    manifest.write(&manifest_path(&a.out))?;
    Ok(None)
}

/// Reads feature files; their manifests, when present, fix the window parameters.
fn load_features(paths: &[PathBuf], rqa: &RqaArgs) -> Result<(RqaParams, BTreeMap<String, Vec<RqaFeatureSeries>>)> {
    let mut recorded: Option<RqaParams> = None;
    for path in paths {
        let Some(m) = read_manifest_of(path)? else { continue };
        let Some(p) = m.params.get("rqa") else { continue };
        let p: RqaParams = serde_json::from_value(p.clone())?;
        if recorded.is_some_and(|r| r != p) {
            return Err(Error::Invalid("feature files were computed with different window parameters".into()));
        }
        recorded = Some(p);
    }
    let params = match recorded {
        Some(p) => rqa.resolve(p, true)?,
        None => rqa.resolve(RqaParams::default(), false)?,
    };
    let mut features: BTreeMap<String, Vec<RqaFeatureSeries>> = BTreeMap::new();
    for path in paths {
        for (label, series) in read_features_csv(open(path)?, &params)? {
            features.entry(label).or_default().extend(series);
        }
    }
    Ok((params, features))
}

fn fit_cmd(a: FitArgs) -> Result<Option<i32>> {
    let (params, features) = load_features(&a.features, &a.rqa)?;
    let model = fit(&features, params, FitOptions { standardize: a.standardize })?;
    write_text(&a.out, &model_to_json(&model)?)?;
    let mut manifest = RunManifest::new(
        "fit",
        json!({"rqa": params, "standardize": a.standardize, "model_id": format_id(model.id())}),
    );
    for path in &a.features {
        manifest = manifest.input(path);
    }
    manifest.output(&a.out).write(&manifest_path(&a.out))?;
    Ok(None)
}

fn map_cmd(a: MapArgs) -> Result<Option<i32>> {
    let model = model_from_json(&read_text(&a.model)?)?;
    let options = MapOptions {
        cells_per_axis: a.cells,
        mass_quantile: a.mass_quantile,
        margin_fraction: a.margin,
        dilate: a.dilate,
    };
    let mut features: BTreeMap<String, Vec<RqaFeatureSeries>> = BTreeMap::new();
    for path in &a.features {
        for (label, series) in read_features_csv(open(path)?, model.rqa_params())? {
            features.entry(label).or_default().extend(series);
        }
    }
    let projections = project_on_windows(&model, &features)?;
    let mut map = build_map(&projections, &options)?;
    map.bind_model(model.id());
    write_text(&a.out, &map_to_json(&map)?)?;

    let mut manifest = RunManifest::new(
        "map",
        json!({
            "cells": a.cells,
            "mass_quantile": a.mass_quantile,
            "margin": a.margin,
            "dilate": a.dilate,
            "model_id": format_id(model.id()),
            "map_id": format_id(map.id()),
        }),
    )
    .input(&a.model);
    for path in &a.features {
        manifest = manifest.input(path);
    }
    manifest = manifest.output(&a.out);
    if let Some(path) = &a.projections_out {
        write_file(path, |w| write_projections_csv(w, &projections))?;
        manifest = manifest.output(path);
    }
    if let Some(path) = &a.cells_out {
        write_file(path, |w| write_cells_csv(w, &map.kept_cell_centers()))?;
        manifest = manifest.output(path);
    }
    manifest.write(&manifest_path(&a.out))?;
    Ok(None)
}

struct Simulation {
    model: rqamap_core::PcaModel,
    map: rqamap_core::UsageMap,
    lib: ProfileLibrary,
    devices: Vec<String>,
}

fn load_simulation(a: &SimulationArgs) -> Result<Simulation> {
    let model = model_from_json(&read_text(&a.model)?)?;
    let map = map_from_json(&read_text(&a.map)?)?;
    let lib = ProfileLibrary::new(load_library(&a.libraries)?)?;
    let devices = if a.devices.is_empty() { lib.labels().map(String::from).collect() } else { a.devices.clone() };
    Ok(Simulation { model, map, lib, devices })
}

fn simulation_manifest(command: &str, a: &SimulationArgs, sim: &Simulation, extra: serde_json::Value) -> RunManifest {
    let mut params = json!({"devices": sim.devices, "library": library_json(&a.libraries)});
    if let (Some(p), serde_json::Value::Object(extra)) = (params.as_object_mut(), extra) {
        p.extend(extra);
    }
    let mut m = RunManifest::new(command, params).seed(a.seed).input(&a.model).input(&a.map);
    for (_, path) in &a.libraries {
        m = m.input(path);
    }
    m
}

fn calibrate(a: CalibrateArgs) -> Result<Option<i32>> {
    let sim = load_simulation(&a.sim)?;
    let counts = simulate_counts(&sim.lib, &sim.model, &sim.map, a.period, &sim.devices, a.runs, a.sim.seed)?;
    let policy = AlarmPolicy {
        period: a.period,
        threshold_crossings: threshold_from_quantile(&counts, a.quantile)?,
        quantile: a.quantile,
        runs: a.runs,
        model_id: sim.model.id(),
        map_id: sim.map.id(),
    };
    write_text(&a.out, &policy_to_json(&policy)?)?;
    let mut manifest = simulation_manifest(
        "calibrate",
        &a.sim,
        &sim,
        json!({"period": a.period, "quantile": a.quantile, "runs": a.runs}),
    )
    .output(&a.out);
    if let Some(path) = &a.counts_out {
        write_file(path, |w| write_counts_csv(w, &counts))?;
        manifest = manifest.output(path);
    }
    manifest.write(&manifest_path(&a.out))?;
    Ok(None)
}

fn simulate(a: SimulateArgs) -> Result<Option<i32>> {
    let sim = load_simulation(&a.sim)?;
    let policy = a.policy.as_deref().map(|p| read_text(p).and_then(|t| policy_from_json(&t))).transpose()?;
    let period = match (a.period, &policy) {
        (Some(p), Some(pol)) if p != pol.period => {
            return Err(Error::Invalid(format!("--period {} but the policy is {}", p.as_str(), pol.period.as_str())))
        }
        (Some(p), _) => p,
        (None, Some(pol)) => pol.period,
        (None, None) => Period::Daily,
    };
    let counts = simulate_counts(&sim.lib, &sim.model, &sim.map, period, &sim.devices, a.runs, a.sim.seed)?;
    write_file(&a.out, |w| write_counts_csv(w, &counts))?;
    let mut manifest = simulation_manifest("simulate", &a.sim, &sim, json!({"period": period, "runs": a.runs}));
    if let (Some(pol), Some(path)) = (&policy, &a.policy) {
        let rate = alarm_rate(&counts, pol.threshold_crossings)?;
        println!("{}", json!({"runs": a.runs, "threshold": pol.threshold_crossings, "alarm_rate": rate}));
        manifest = manifest.input(path);
    }
    manifest.output(&a.out).write(&manifest_path(&a.out))?;
    Ok(None)
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<Option<i32>> {
    let model = model_from_json(&read_text(&a.model)?)?;
    let map = map_from_json(&read_text(&a.map)?)?;
    let policy = policy_from_json(&read_text(&a.policy)?)?;
    let days = read_days(open(&a.input)?, &a.label)?;
    let per = policy.period.days();
    if !days.len().is_multiple_of(per) {
        return Err(Error::Invalid(format!(
            "{} days do not split into {} periods of {per} days",
            days.len(),
            policy.period.as_str()
        )));
    }
    let mut lines = Vec::new();
    let mut triggered = false;
    for group in days.chunks(per) {
        let values: Vec<f64> = group.iter().flat_map(|d| d.values().iter().copied()).collect();
        let start = group[0].start_minute();
        let series = TimeSeries::new(&a.label, start, 1, values)?;
        let report = evaluate(&map, &model, &policy, &series)?;
        triggered |= report.triggered;
        lines.push(report_line(policy.period, &format_minute(start)[..10], &report)?);
    }
    let text: String = lines.iter().map(|l| format!("{l}\n")).collect();
    match &a.out {
        Some(path) => {
            write_text(path, &text)?;
            RunManifest::new("evaluate", json!({"label": a.label, "periods": lines.len()}))
                .input(&a.model)
                .input(&a.map)
                .input(&a.policy)
                .input(&a.input)
                .output(path)
                .write(&manifest_path(path))?;
        }
        None => print!("{text}"),
    }
    Ok(Some(if triggered { EXIT_ALARM } else { EXIT_OK }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn library_entries() {
        assert_eq!(parse_library_entry("iron=a/b.csv").unwrap(), ("iron".to_string(), PathBuf::from("a/b.csv")));
        assert!(parse_library_entry("iron").is_err());
        assert!(parse_library_entry("=x").is_err());
    }

    #[test]
    fn explicit_flags_must_match_recorded_params() {
        let args = RqaArgs { window: Some(60), ..Default::default() };
        let recorded = RqaParams::default();
        assert!(args.resolve(recorded, true).is_err());
        assert_eq!(args.resolve(recorded, false).unwrap().window, 60);
        let same = RqaArgs { window: Some(80), ..Default::default() };
        assert_eq!(same.resolve(recorded, true).unwrap(), recorded);
    }

    #[test]
    fn usage_errors_exit_1() {
        assert_eq!(run(Vec::<String>::new()), EXIT_USAGE);
        assert_eq!(run(["rqamap"]), EXIT_USAGE);
        assert_eq!(run(["rqamap", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["rqamap", "fit", "--bogus"]), EXIT_USAGE);
        assert_eq!(run(["rqamap", "--help"]), EXIT_OK);
    }

    #[test]
    fn calendar_defaults_to_sundays() {
        let c = CalendarArgs { closed_weekdays: vec![], closed_dates: vec![], open_all_week: false };
        assert_eq!(c.calendar().unwrap().closed_weekdays().collect::<Vec<_>>(), [6]);
        let open = CalendarArgs { open_all_week: true, ..c };
        assert_eq!(open.calendar().unwrap().closed_weekdays().count(), 0);
    }
}
