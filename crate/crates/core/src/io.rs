//! On-disk dataset layout: one CSV per trace plus `manifest.toml`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::forward::{Channel, RunDataset, ScanAxis, StageKind, Trace};
use crate::resonator::CavityParams;
use crate::state::SixteenParams;

pub const MANIFEST: &str = "manifest.toml";
pub const CONFIG_COPY: &str = "config.toml";
const TRACE_HEADER: [&str; 4] = ["sample_index", "detuning", "value", "noise_sigma"];

/// Writes through a sibling temporary file and a rename, so readers never
/// see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Format {
            path: path.display().to_string(),
            reason: "not a file path".into(),
        })?
        .to_string_lossy();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

/// Renders several files fully in memory first, then writes each atomically.
pub fn write_all(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    files
        .iter()
        .map(|(name, bytes)| {
            let p = dir.join(name);
            write_atomic(&p, bytes)?;
            Ok(p)
        })
        .collect()
}

pub fn trace_file_name(stage: StageKind, channel: Channel) -> String {
    format!("{}_{}.csv", stage.tag(), channel.tag())
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

pub fn trace_to_csv(trace: &Trace) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRACE_HEADER)?;
    for i in 0..trace.len() {
        w.write_record([
            trace.samples[i].to_string(),
            trace.detunings[i].to_string(),
            trace.values[i].to_string(),
            trace.noise_sigma[i].to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn trace_from_csv(path: &Path, stage: StageKind, channel: Channel) -> Result<Trace> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.iter().ne(TRACE_HEADER) {
        return Err(format_err(path, format!("expected header {}", TRACE_HEADER.join(","))));
    }
    let mut t = Trace {
        stage,
        channel,
        samples: Vec::new(),
        detunings: Vec::new(),
        values: Vec::new(),
        noise_sigma: Vec::new(),
    };
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| format_err(path, format!("row {}: bad {what}", line + 2));
        t.samples.push(rec[0].trim().parse().map_err(|_| bad("sample_index"))?);
        t.detunings.push(rec[1].trim().parse().map_err(|_| bad("detuning"))?);
        t.values.push(rec[2].trim().parse().map_err(|_| bad("value"))?);
        t.noise_sigma.push(rec[3].trim().parse().map_err(|_| bad("noise_sigma"))?);
    }
    Ok(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavityManifest {
    pub label: String,
    pub d: f64,
    pub bandwidth_hz: f64,
    pub center_sample: f64,
    pub samples_per_bandwidth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub stage: StageKind,
    pub channel: Channel,
    pub file: String,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub analysis_freq_hz: f64,
    pub analysis_freq_bandwidths: f64,
    pub relative_noise: f64,
    pub power_scale: f64,
    pub parked_detuning: f64,
    pub cavity1: CavityManifest,
    pub cavity2: CavityManifest,
    pub traces: Vec<TraceEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<SixteenParams>,
    #[serde(default, skip_serializing_if = "toml::Table::is_empty")]
    pub metadata: toml::Table,
}

impl DatasetManifest {
    pub fn from_dataset(ds: &RunDataset) -> Self {
        let cav = |k: usize| CavityManifest {
            label: ds.cavities[k].label.clone(),
            d: ds.cavities[k].d,
            bandwidth_hz: ds.cavities[k].bandwidth_hz,
            center_sample: ds.axes[k].center_sample,
            samples_per_bandwidth: ds.axes[k].samples_per_bandwidth,
        };
        Self {
            seed: ds.seed,
            analysis_freq_hz: ds.analysis_freq_hz,
            analysis_freq_bandwidths: ds.analysis_freq,
            relative_noise: ds.relative_noise,
            power_scale: ds.power_scale,
            parked_detuning: ds.parked_detuning,
            cavity1: cav(0),
            cavity2: cav(1),
            traces: ds
                .traces
                .iter()
                .map(|t| TraceEntry {
                    stage: t.stage,
                    channel: t.channel,
                    file: trace_file_name(t.stage, t.channel),
                    points: t.len(),
                })
                .collect(),
            ground_truth: ds.ground_truth,
            metadata: ds.metadata.clone(),
        }
    }
}

/// Every file of a dataset directory, rendered in memory.
pub fn render_dataset(ds: &RunDataset, config: Option<&RunConfig>) -> Result<Vec<(String, Vec<u8>)>> {
    let mut files = Vec::new();
    for t in &ds.traces {
        files.push((trace_file_name(t.stage, t.channel), trace_to_csv(t)?));
    }
    if let Some(cfg) = config {
        files.push((CONFIG_COPY.to_string(), cfg.to_toml()?.into_bytes()));
    }
    let manifest = toml::to_string(&DatasetManifest::from_dataset(ds))?;
    files.push((MANIFEST.to_string(), manifest.into_bytes()));
    Ok(files)
}

/// Writes the traces, an optional config copy and the manifest (last).
pub fn write_dataset(dir: &Path, ds: &RunDataset, config: Option<&RunConfig>) -> Result<Vec<PathBuf>> {
    write_all(dir, &render_dataset(ds, config)?)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => {
            Error::IncompleteDataset(format!("{} not found", path.display()))
        }
        _ => Error::Io(e),
    })?;
    toml::from_str(&text).map_err(|e| format_err(&path, e.to_string()))
}

/// The configuration copied next to the dataset, if present.
pub fn read_config_copy(dir: &Path) -> Result<Option<RunConfig>> {
    let path = dir.join(CONFIG_COPY);
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(RunConfig::from_toml(&fs::read_to_string(path)?)?))
}

/// Loads a dataset directory. A trace listed in the manifest but absent on
/// disk is an incomplete dataset.
pub fn read_dataset(dir: &Path) -> Result<RunDataset> {
    let m = read_manifest(dir)?;
    let mut traces = Vec::new();
    for e in &m.traces {
        let path = dir.join(&e.file);
        if !path.exists() {
            return Err(Error::IncompleteDataset(format!("{} is missing", path.display())));
        }
        let t = trace_from_csv(&path, e.stage, e.channel)?;
        if t.len() != e.points {
            return Err(format_err(&path, format!("expected {} points, found {}", e.points, t.len())));
        }
        traces.push(t);
    }
    let cavity = |c: &CavityManifest| CavityParams {
        label: c.label.clone(),
        d: c.d,
        bandwidth_hz: c.bandwidth_hz,
    };
    let axis = |c: &CavityManifest| ScanAxis {
        center_sample: c.center_sample,
        samples_per_bandwidth: c.samples_per_bandwidth,
    };
    Ok(RunDataset {
        traces,
        cavities: [cavity(&m.cavity1), cavity(&m.cavity2)],
        axes: [axis(&m.cavity1), axis(&m.cavity2)],
        analysis_freq: m.analysis_freq_bandwidths,
        analysis_freq_hz: m.analysis_freq_hz,
        parked_detuning: m.parked_detuning,
        relative_noise: m.relative_noise,
        power_scale: m.power_scale,
        seed: m.seed,
        ground_truth: m.ground_truth,
        metadata: m.metadata,
    })
}
