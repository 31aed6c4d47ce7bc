//! JSON files for models, maps and alarm policies, and the per-period report line.
//!
//! Every file carries a `version` tag and is rejected on mismatch. Ids are
//! 16-digit hex strings of the content hash.

use std::collections::BTreeMap;

use rqamap_core::{AlarmPolicy, AlarmReport, GridSpec, Mask, PcaModel, Period, RqaParams, UsageMap};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MODEL_VERSION: &str = "pca-v1";
pub const MAP_VERSION: &str = "map-v1";
pub const POLICY_VERSION: &str = "policy-v1";

pub fn format_id(id: u64) -> String {
    format!("{id:016x}")
}

pub fn parse_id(s: &str) -> Result<u64> {
    u64::from_str_radix(s, 16).map_err(|_| Error::Invalid(format!("bad id `{s}`")))
}

fn check_version(expected: &'static str, found: &str) -> Result<()> {
    if found != expected {
        return Err(Error::Version { expected, found: found.to_string() });
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    version: String,
    id: String,
    psi: [f64; 5],
    basis: [[f64; 2]; 5],
    eigenvalues: [f64; 5],
    labels: Vec<String>,
    rqa_params: RqaParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scale: Option<[f64; 5]>,
}

pub fn model_to_json(model: &PcaModel) -> Result<String> {
    let file = ModelFile {
        version: MODEL_VERSION.into(),
        id: format_id(model.id()),
        psi: *model.psi(),
        basis: *model.basis(),
        eigenvalues: *model.eigenvalues(),
        labels: model.labels().to_vec(),
        rqa_params: *model.rqa_params(),
        scale: model.scale().copied(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn model_from_json(text: &str) -> Result<PcaModel> {
    let f: ModelFile = serde_json::from_str(text)?;
    check_version(MODEL_VERSION, &f.version)?;
    let model = PcaModel::from_parts(f.psi, f.basis, f.eigenvalues, f.labels, f.rqa_params, f.scale)?;
    if parse_id(&f.id)? != model.id() {
        return Err(Error::Invalid(format!("model id {} does not match its content", f.id)));
    }
    Ok(model)
}

#[derive(Debug, Serialize, Deserialize)]
struct MapFile {
    version: String,
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    model_id: Option<String>,
    grid: GridSpec,
    mass_quantile: f64,
    #[serde(default)]
    dilated: bool,
    mask: String,
    per_device_masks: BTreeMap<String, String>,
}

pub fn map_to_json(map: &UsageMap) -> Result<String> {
    let file = MapFile {
        version: MAP_VERSION.into(),
        id: format_id(map.id()),
        model_id: map.model_id().map(format_id),
        grid: *map.grid(),
        mass_quantile: map.mass_quantile(),
        dilated: map.dilated(),
        mask: map.mask().to_rle(),
        per_device_masks: map.per_device_masks().iter().map(|(k, m)| (k.clone(), m.to_rle())).collect(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn map_from_json(text: &str) -> Result<UsageMap> {
    let f: MapFile = serde_json::from_str(text)?;
    check_version(MAP_VERSION, &f.version)?;
    let n = f.grid.cells_per_axis;
    let per_device = f
        .per_device_masks
        .iter()
        .map(|(k, rle)| Ok((k.clone(), Mask::from_rle(n, rle)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let mask = Mask::from_rle(n, &f.mask)?;
    let model_id = f.model_id.as_deref().map(parse_id).transpose()?;
    let map = UsageMap::from_parts(f.grid, per_device, mask, f.mass_quantile, f.dilated, model_id)?;
    if parse_id(&f.id)? != map.id() {
        return Err(Error::Invalid(format!("map id {} does not match its content", f.id)));
    }
    Ok(map)
}

#[derive(Debug, Serialize, Deserialize)]
struct PolicyFile {
    version: String,
    period: Period,
    threshold_crossings: u64,
    quantile: f64,
    runs: usize,
    model_id: String,
    map_id: String,
}

pub fn policy_to_json(policy: &AlarmPolicy) -> Result<String> {
    let file = PolicyFile {
        version: POLICY_VERSION.into(),
        period: policy.period,
        threshold_crossings: policy.threshold_crossings,
        quantile: policy.quantile,
        runs: policy.runs,
        model_id: format_id(policy.model_id),
        map_id: format_id(policy.map_id),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn policy_from_json(text: &str) -> Result<AlarmPolicy> {
    let f: PolicyFile = serde_json::from_str(text)?;
    check_version(POLICY_VERSION, &f.version)?;
    let policy = AlarmPolicy {
        period: f.period,
        threshold_crossings: f.threshold_crossings,
        quantile: f.quantile,
        runs: f.runs,
        model_id: parse_id(&f.model_id)?,
        map_id: parse_id(&f.map_id)?,
    };
    policy.validate()?;
    Ok(policy)
}

#[derive(Debug, Serialize)]
struct ReportLine<'a> {
    period: &'a str,
    period_start: &'a str,
    #[serde(flatten)]
    report: &'a AlarmReport,
}

/// One compact JSON record per evaluated period.
pub fn report_line(period: Period, period_start: &str, report: &AlarmReport) -> Result<String> {
    Ok(serde_json::to_string(&ReportLine { period: period.as_str(), period_start, report })?)
}
