//! End-to-end steps behind the command-line front end. Each step renders its
//! outputs in memory; callers write them with [`crate::io::write_all`].

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::forward::{
    compare_with_analytic, max_abs_z, median_stderr, monte_carlo_oracle, synthesize_run,
    OracleComparison, Trace,
};
use crate::io::{read_config_copy, read_dataset, render_dataset, trace_file_name, MANIFEST};
use crate::state::{CovarianceDocument, SixteenParams, PARAM_NAMES};
use crate::tomography::{
    calibrate_run, calibration_sensitivity, fit_covariance, predict_traces, CavityCalibration,
    FitResult, SensitivityRow,
};
use crate::witness::{DuanConvention, DuanResult, ParamCovariance, PptEntry, WitnessReport};

pub const REPORT: &str = "report.toml";
pub const TIMING: &str = "timing.toml";

pub type Files = Vec<(String, Vec<u8>)>;

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Dataset files for `config`; `seed` overrides the configured seed.
pub fn simulate(config: &RunConfig, seed: Option<u64>) -> Result<Files> {
    let mut config = config.clone();
    if let Some(s) = seed {
        config.seed = s;
    }
    let truth = config.ground_truth()?;
    let ds = synthesize_run(&truth, &config, config.seed)?;
    render_dataset(&ds, Some(&config))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub cavity1: CavityCalibration,
    pub cavity2: CavityCalibration,
}

pub fn calibrate(dataset_dir: &Path) -> Result<(CalibrationReport, Files)> {
    let ds = read_dataset(dataset_dir)?.without_ground_truth();
    let [cavity1, cavity2] = calibrate_run(&ds)?;
    let rep = CalibrationReport { cavity1, cavity2 };
    let text = toml::to_string(&rep)?;
    Ok((rep, vec![("calibration.toml".into(), text.into_bytes())]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub seed: u64,
    pub dataset: String,
    pub manifest_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_sha256: Option<String>,
    pub duan_convention: DuanConvention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub chi_square: f64,
    pub dof: usize,
    pub reduced_chi_square: f64,
    pub condition_number: f64,
    pub physical: bool,
    pub min_symplectic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterRow {
    pub name: String,
    pub value: f64,
    pub sigma: f64,
    pub raw_sigma: f64,
    pub calibration_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub provenance: Provenance,
    pub fit: FitSummary,
    pub calibrations: Vec<CavityCalibration>,
    pub parameters: Vec<ParameterRow>,
    pub duan: DuanResult,
    pub ppt: Vec<PptEntry>,
    pub sensitivity: Vec<SensitivityRow>,
    /// Row-major 16×16, reduced-chi-square scaled.
    pub param_covariance: Vec<Vec<f64>>,
}

impl PipelineReport {
    pub fn params(&self) -> SixteenParams {
        SixteenParams::from_array(std::array::from_fn(|k| self.parameters[k].value))
    }

    pub fn covariance(&self) -> ParamCovariance {
        ParamCovariance::from_fn(|i, j| self.param_covariance[i][j])
    }

    /// The fit as far as it can be rebuilt from the report.
    pub fn fit_result(&self) -> Result<FitResult> {
        if self.parameters.len() != 16 || self.calibrations.len() != 2 || self.param_covariance.len() != 16 {
            return Err(Error::Format {
                path: REPORT.into(),
                reason: "expected 16 parameters, 2 calibrations and a 16×16 covariance".into(),
            });
        }
        Ok(FitResult {
            params: self.params(),
            param_sigmas: std::array::from_fn(|k| self.parameters[k].sigma),
            raw_sigmas: std::array::from_fn(|k| self.parameters[k].raw_sigma),
            calibration_sigmas: std::array::from_fn(|k| self.parameters[k].calibration_sigma),
            param_covariance: self.covariance(),
            chi_square: self.fit.chi_square,
            dof: self.fit.dof,
            reduced_chi_square: self.fit.reduced_chi_square,
            physicality: crate::state::Physicality {
                physical: self.fit.physical,
                min_symplectic: self.fit.min_symplectic,
            },
            calibrations: [self.calibrations[0], self.calibrations[1]],
            condition_number: self.fit.condition_number,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub read_s: f64,
    pub calibrate_s: f64,
    pub fit_s: f64,
    pub witness_s: f64,
    pub sensitivity_s: f64,
}

pub struct FitOutput {
    pub report: PipelineReport,
    pub files: Files,
    pub timing: Timing,
}

impl FitOutput {
    pub fn timing_file(&self) -> Result<(String, Vec<u8>)> {
        Ok((TIMING.into(), toml::to_string(&self.timing)?.into_bytes()))
    }
}

/// Calibration, joint fit, witnesses and the calibration-sensitivity table
/// for a dataset directory. Ground truth in the manifest is never used.
pub fn fit(dataset_dir: &Path, convention: Option<DuanConvention>) -> Result<FitOutput> {
    let t0 = Instant::now();
    let ds = read_dataset(dataset_dir)?.without_ground_truth();
    let config = read_config_copy(dataset_dir)?;
    let manifest_sha256 = sha256_hex(&fs::read(dataset_dir.join(MANIFEST))?);
    let config_sha256 = config
        .as_ref()
        .map(|c| c.to_toml().map(|t| sha256_hex(t.as_bytes())))
        .transpose()?;
    let convention = convention
        .or(config.as_ref().map(|c| c.witness.duan_convention))
        .unwrap_or_default();
    let t1 = Instant::now();
    let cals = calibrate_run(&ds)?;
    let t2 = Instant::now();
    let fit = fit_covariance(&ds, [&cals[0], &cals[1]], ds.analysis_freq)?;
    let t3 = Instant::now();
    let witnesses = WitnessReport::evaluate(&fit.params, convention, Some(&fit.param_covariance))?;
    let t4 = Instant::now();
    let sensitivity = calibration_sensitivity(&ds, [&cals[0], &cals[1]])?;
    let t5 = Instant::now();

    let values = fit.params.to_array();
    let report = PipelineReport {
        provenance: Provenance {
            version: env!("CARGO_PKG_VERSION").into(),
            seed: ds.seed,
            dataset: dataset_dir.display().to_string(),
            manifest_sha256,
            config_sha256,
            duan_convention: convention,
        },
        fit: FitSummary {
            chi_square: fit.chi_square,
            dof: fit.dof,
            reduced_chi_square: fit.reduced_chi_square,
            condition_number: fit.condition_number,
            physical: fit.physicality.physical,
            min_symplectic: fit.physicality.min_symplectic,
        },
        calibrations: fit.calibrations.to_vec(),
        parameters: (0..16)
            .map(|k| ParameterRow {
                name: PARAM_NAMES[k].into(),
                value: values[k],
                sigma: fit.param_sigmas[k],
                raw_sigma: fit.raw_sigmas[k],
                calibration_sigma: fit.calibration_sigmas[k],
            })
            .collect(),
        duan: witnesses.duan,
        ppt: witnesses.ppt.entries.clone(),
        sensitivity,
        param_covariance: (0..16)
            .map(|i| (0..16).map(|j| fit.param_covariance[(i, j)]).collect())
            .collect(),
    };

    let cm = |doc: CovarianceDocument| toml::to_string(&doc).map(String::into_bytes);
    let files = vec![
        (REPORT.into(), toml::to_string(&report)?.into_bytes()),
        ("cm_sym_antisym.toml".into(), cm(fit.covariance_sa().to_document())?),
        ("cm_sideband.toml".into(), cm(fit.covariance_sideband()?.to_document())?),
        ("witness.csv".into(), witnesses.ppt_csv()?.into_bytes()),
    ];
    let secs = |a: Instant, b: Instant| (b - a).as_secs_f64();
    Ok(FitOutput {
        report,
        files,
        timing: Timing {
            read_s: secs(t0, t1),
            calibrate_s: secs(t1, t2),
            fit_s: secs(t2, t3),
            witness_s: secs(t3, t4),
            sensitivity_s: secs(t4, t5),
        },
    })
}

pub fn read_report(report_dir: &Path) -> Result<PipelineReport> {
    let path = report_dir.join(REPORT);
    let text = fs::read_to_string(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::IncompleteDataset(format!("{} not found", path.display())),
        _ => Error::Io(e),
    })?;
    toml::from_str(&text).map_err(|e| Error::Format {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn plot_csv(measured: &Trace, fitted: &Trace) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sample_index", "detuning", "measured", "fitted", "residual"])?;
    for i in 0..measured.len() {
        w.write_record([
            measured.samples[i].to_string(),
            measured.detunings[i].to_string(),
            measured.values[i].to_string(),
            fitted.values[i].to_string(),
            (measured.values[i] - fitted.values[i]).to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Plot data for a fit: `(detuning, measured, fitted)` per trace, the
/// bipartition bar data, and optionally an SVG rendering.
pub fn report(report_dir: &Path, dataset_dir: Option<&Path>, svg: bool) -> Result<Files> {
    let rep = read_report(report_dir)?;
    let dataset_dir = dataset_dir.map(Path::to_path_buf).unwrap_or_else(|| rep.provenance.dataset.clone().into());
    let ds = read_dataset(&dataset_dir)?.without_ground_truth();
    let fit = rep.fit_result()?;
    let fitted = predict_traces(&ds, &fit)?;

    let mut files = Files::new();
    for (m, f) in ds.traces.iter().zip(&fitted) {
        files.push((format!("plot_{}", trace_file_name(m.stage, m.channel)), plot_csv(m, f)?));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["bipartition", "min_eigenvalue", "sigma"])?;
    for e in &rep.ppt {
        w.write_record([
            e.bipartition.clone(),
            e.min_eigenvalue.to_string(),
            e.uncertainty.map(|s| s.to_string()).unwrap_or_default(),
        ])?;
    }
    files.push(("bipartitions.csv".into(), w.into_inner().map_err(|e| Error::Io(e.into_error()))?));
    if svg {
        files.push(("report.svg".into(), render_svg(&rep, &ds.traces, &fitted).into_bytes()));
    }
    Ok(files)
}

/// Two panels: the both-scanned beam-1 variance (measured and fitted) and
/// the seven PPT minima against the separability bound.
fn render_svg(rep: &PipelineReport, measured: &[Trace], fitted: &[Trace]) -> String {
    let (w, h) = (640.0, 520.0);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);

    let idx = measured
        .iter()
        .position(|t| t.channel == crate::forward::Channel::Var1)
        .unwrap_or(0);
    if let (Some(m), Some(f)) = (measured.get(idx), fitted.get(idx)) {
        let (x0, y0, pw, ph) = (50.0, 20.0, 570.0, 200.0);
        let xs = &m.detunings;
        let (xmin, xmax) = bounds(xs);
        let (ymin, ymax) = bounds(m.values.iter().chain(&f.values).copied().collect::<Vec<_>>().as_slice());
        let px = |x: f64| x0 + (x - xmin) / (xmax - xmin).max(1e-300) * pw;
        let py = |y: f64| y0 + ph - (y - ymin) / (ymax - ymin).max(1e-300) * ph;
        let _ = writeln!(s, r#"<rect x="{x0}" y="{y0}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
        let _ = writeln!(s, r#"<text x="{x0}" y="{}">{} {} (measured grey, fitted red)</text>"#, y0 - 5.0, m.stage.tag(), m.channel.tag());
        for (vals, colour) in [(&m.values, "#999999"), (&f.values, "#cc0000")] {
            let pts: Vec<String> = xs.iter().zip(vals.iter()).map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y))).collect();
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{colour}" stroke-width="1" points="{}"/>"#, pts.join(" "));
        }
        let _ = writeln!(s, r#"<text x="{x0}" y="{}">Δ from {xmin:.2} to {xmax:.2}</text>"#, y0 + ph + 14.0);
    }

    let (x0, y0, pw, ph) = (50.0, 270.0, 570.0, 200.0);
    let top = rep.ppt.iter().map(|e| e.min_eigenvalue).fold(1.2, f64::max);
    let py = |y: f64| y0 + ph - y / top * ph;
    let _ = writeln!(s, r#"<rect x="{x0}" y="{y0}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    let bw = pw / rep.ppt.len().max(1) as f64;
    for (i, e) in rep.ppt.iter().enumerate() {
        let x = x0 + i as f64 * bw + 0.15 * bw;
        let y = py(e.min_eigenvalue.max(0.0));
        let fill = if e.entangled { "#3366cc" } else { "#bbbbbb" };
        let _ = writeln!(s, r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#, 0.7 * bw, y0 + ph - y);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#, x + 0.35 * bw, y0 + ph + 14.0, e.bipartition);
    }
    let _ = writeln!(s, r#"<line x1="{x0}" x2="{}" y1="{:.2}" y2="{:.2}" stroke="black" stroke-dasharray="4 3"/>"#, x0 + pw, py(1.0), py(1.0));
    let _ = writeln!(s, r#"<text x="{x0}" y="{}">PPT minimum symplectic eigenvalue; Duan sum {:.4}</text>"#, y0 - 5.0, rep.duan.sum);
    s.push_str("</svg>\n");
    s
}

fn bounds(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(*x), hi.max(*x)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub n_samples: usize,
    pub grid_points: usize,
    pub seed: u64,
    pub max_abs_z: f64,
    pub median_stderr: f64,
}

/// Monte Carlo oracle against the analytic spectra for the configured state.
pub fn oracle(config: &RunConfig, n_samples: Option<usize>, seed: Option<u64>) -> Result<(OracleSummary, Vec<OracleComparison>, Files)> {
    let n = n_samples.unwrap_or(config.oracle.n_samples);
    let seed = seed.unwrap_or(config.seed);
    let params = config.ground_truth()?;
    let stage = config.oracle_stage()?;
    let cav = config.cavities();
    let omega = config.analysis.freq_bandwidths;
    let rep = monte_carlo_oracle(&params, &stage, [&cav[0], &cav[1]], omega, n, seed)?;
    let cmp = compare_with_analytic(&params, &stage, [&cav[0], &cav[1]], omega, &rep)?;
    let summary = OracleSummary {
        n_samples: n,
        grid_points: stage.len(),
        seed,
        max_abs_z: max_abs_z(&cmp),
        median_stderr: median_stderr(&rep),
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["channel", "detuning", "analytic", "oracle", "stderr", "z"])?;
    for c in &cmp {
        for i in 0..c.z.len() {
            w.write_record([
                c.channel.tag().to_string(),
                c.detunings[i].to_string(),
                c.analytic[i].to_string(),
                c.oracle[i].to_string(),
                c.stderr[i].to_string(),
                c.z[i].to_string(),
            ])?;
        }
    }
    let files = vec![
        ("oracle.csv".into(), w.into_inner().map_err(|e| Error::Io(e.into_error()))?),
        ("oracle.toml".into(), toml::to_string(&summary)?.into_bytes()),
    ];
    Ok((summary, cmp, files))
}
