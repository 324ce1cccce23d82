//! Inversion of a measurement run into the sixteen covariance parameters:
//! per-cavity DC calibration, then a joint weighted linear least-squares fit
//! over every AC trace.

mod calibrate;

use nalgebra::{DMatrix, DVector, SMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{Channel, RunDataset, StageKind, Trace};
use crate::par;
use crate::resonator::{cross_coeffs, single_beam_coeffs, CavityParams};
use crate::state::{
    build_sa_covariance, is_physical, to_sideband_basis, Beam, CovarianceMatrix, Physicality,
    SixteenParams, PARAM_NAMES,
};
use crate::witness::ParamCovariance;

pub use calibrate::{calibrate_dc, CavityCalibration};

/// Tolerance of the physicality flag on fitted matrices.
pub const PHYSICAL_TOL: f64 = 1e-9;
/// Columns whose normalized singular value falls below this are unresolved.
pub const RANK_TOL: f64 = 1e-10;

/// Origin of one design-matrix row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowTag {
    pub stage: StageKind,
    pub channel: Channel,
    pub sample: usize,
}

/// `A x ≈ b` with per-row weights `1/σ²`.
#[derive(Debug, Clone)]
pub struct DesignSystem {
    pub matrix: DMatrix<f64>,
    pub observations: DVector<f64>,
    pub weights: DVector<f64>,
    pub rows: Vec<RowTag>,
}

fn ac_channels(stage: StageKind) -> impl Iterator<Item = Channel> {
    stage
        .channels()
        .iter()
        .copied()
        .filter(|c| !matches!(c, Channel::Dc1 | Channel::Dc2))
}

fn row_detunings(
    trace: &Trace,
    sample: usize,
    cals: [&CavityCalibration; 2],
    parked: f64,
) -> [f64; 2] {
    [Beam::One, Beam::Two].map(|b| {
        if trace.stage.is_scanned(b) {
            cals[b.index()].detuning(sample)
        } else {
            parked
        }
    })
}

/// Cavities as seen by the fit: the dataset's bandwidths with calibrated `d`.
fn calibrated_cavities(dataset: &RunDataset, cals: [&CavityCalibration; 2]) -> [CavityParams; 2] {
    [0, 1].map(|k| CavityParams {
        d: cals[k].d,
        ..dataset.cavities[k].clone()
    })
}

/// Design system with observations expressed in units of `shot_noise`.
///
/// Each variance row fills its beam's `(α, β, γ, δ)` columns and moves `c_v`
/// to the observation; correlation rows fill the eight cross columns.
pub fn assemble_design_scaled(
    dataset: &RunDataset,
    cals: [&CavityCalibration; 2],
    analysis_freq: f64,
    shot_noise: f64,
) -> Result<DesignSystem> {
    let cavities = calibrated_cavities(dataset, cals);
    let mut traces = Vec::new();
    for stage in dataset.stages() {
        for channel in ac_channels(stage) {
            let t = dataset.trace(stage, channel).ok_or_else(|| {
                Error::IncompleteDataset(format!("stage {} lacks {}", stage.tag(), channel.tag()))
            })?;
            t.check_lengths()?;
            traces.push(t);
        }
    }
    if !traces.iter().any(|t| t.stage == StageKind::BothScanned) {
        return Err(Error::IncompleteDataset("no both-scanned stage".into()));
    }

    let blocks = par::map_slice(&traces, |t| -> Result<Vec<([f64; 16], f64, f64, RowTag)>> {
        (0..t.len())
            .map(|i| {
                let [d1, d2] = row_detunings(t, t.samples[i], cals, dataset.parked_detuning);
                let mut row = [0.0; 16];
                let value = t.values[i] / shot_noise;
                let sigma = t.noise_sigma[i] / shot_noise;
                let obs = match t.channel {
                    Channel::Var1 | Channel::Var2 => {
                        let beam = if t.channel == Channel::Var1 { Beam::One } else { Beam::Two };
                        let d = if beam == Beam::One { d1 } else { d2 };
                        let c = single_beam_coeffs(d, analysis_freq, &cavities[beam.index()])?;
                        row[4 * beam.index()..4 * beam.index() + 4].copy_from_slice(&c.as_array());
                        value - c.c_v
                    }
                    Channel::CorrRe | Channel::CorrIm => {
                        let k = cross_coeffs(d1, &cavities[0], d2, &cavities[1], analysis_freq)?;
                        let r = if t.channel == Channel::CorrRe { k.real_row() } else { k.imag_row() };
                        row[8..].copy_from_slice(&r);
                        value
                    }
                    Channel::Dc1 | Channel::Dc2 => unreachable!("DC traces are not AC rows"),
                };
                let w = if sigma > 0.0 { 1.0 / (sigma * sigma) } else { 0.0 };
                Ok((
                    row,
                    obs,
                    w,
                    RowTag {
                        stage: t.stage,
                        channel: t.channel,
                        sample: t.samples[i],
                    },
                ))
            })
            .collect()
    });

    let mut rows = Vec::new();
    for b in blocks {
        rows.extend(b?);
    }
    let n = rows.len();
    let matrix = DMatrix::from_fn(n, 16, |i, j| rows[i].0[j]);
    Ok(DesignSystem {
        matrix,
        observations: DVector::from_iterator(n, rows.iter().map(|r| r.1)),
        weights: DVector::from_iterator(n, rows.iter().map(|r| r.2)),
        rows: rows.into_iter().map(|r| r.3).collect(),
    })
}

pub fn assemble_design(
    dataset: &RunDataset,
    cals: [&CavityCalibration; 2],
    analysis_freq: f64,
) -> Result<DesignSystem> {
    assemble_design_scaled(dataset, cals, analysis_freq, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: SixteenParams,
    /// Total sigmas: statistical (scaled by the reduced chi-square) plus
    /// calibration.
    pub param_sigmas: [f64; 16],
    /// Sigmas from the stated noise alone.
    pub raw_sigmas: [f64; 16],
    /// Contribution of the DC calibration uncertainty alone.
    pub calibration_sigmas: [f64; 16],
    #[serde(skip, default = "ParamCovariance::zeros")]
    pub param_covariance: ParamCovariance,
    pub chi_square: f64,
    pub dof: usize,
    pub reduced_chi_square: f64,
    pub physicality: Physicality,
    pub calibrations: [CavityCalibration; 2],
    pub condition_number: f64,
}

impl FitResult {
    pub fn covariance_sa(&self) -> CovarianceMatrix {
        build_sa_covariance(&self.params)
    }

    pub fn covariance_sideband(&self) -> Result<CovarianceMatrix> {
        to_sideband_basis(&self.covariance_sa())
    }
}

/// Weighted least squares through a column-scaled Householder QR of the
/// whitened design matrix.
pub fn solve_design(system: &DesignSystem) -> Result<(SixteenParams, ParamCovariance, f64, f64)> {
    let n = system.matrix.nrows();
    if n < 16 {
        return Err(Error::IncompleteDataset(format!("{n} rows for 16 parameters")));
    }
    let sw = system.weights.map(f64::sqrt);
    let mut a = system.matrix.clone();
    for (i, mut row) in a.row_iter_mut().enumerate() {
        row *= sw[i];
    }
    let b = system.observations.component_mul(&sw);
    let norms: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    let zero_cols: Vec<&'static str> = norms
        .iter()
        .enumerate()
        .filter(|(_, n)| **n == 0.0)
        .map(|(k, _)| PARAM_NAMES[k])
        .collect();
    if !zero_cols.is_empty() {
        return Err(Error::DegenerateDesign {
            unresolved: zero_cols,
        });
    }
    for (k, mut col) in a.column_iter_mut().enumerate() {
        col /= norms[k];
    }

    let qr = a.clone().qr();
    let r = qr.r();
    let svd = r.clone().svd(false, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= RANK_TOL * smax {
        let v_t = svd.v_t.as_ref().expect("requested V");
        let mut unresolved = Vec::new();
        for (s, row) in svd.singular_values.iter().zip(v_t.row_iter()) {
            if *s <= RANK_TOL * smax {
                for (k, v) in row.iter().enumerate() {
                    if v.abs() > 0.1 && !unresolved.contains(&PARAM_NAMES[k]) {
                        unresolved.push(PARAM_NAMES[k]);
                    }
                }
            }
        }
        return Err(Error::DegenerateDesign { unresolved });
    }
    let qtb = qr.q().transpose() * &b;
    let y = r
        .solve_upper_triangular(&qtb)
        .ok_or(Error::DegenerateDesign { unresolved: vec![] })?;
    let x: Vec<f64> = (0..16).map(|k| y[k] / norms[k]).collect();

    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(16, 16))
        .ok_or(Error::DegenerateDesign { unresolved: vec![] })?;
    let scaled_cov = &r_inv * r_inv.transpose();
    let cov = ParamCovariance::from_fn(|i, j| scaled_cov[(i, j)] / (norms[i] * norms[j]));

    let chi2 = (&a * &y - &b).norm_squared();
    Ok((
        SixteenParams::from_array(x.try_into().expect("16 parameters")),
        cov,
        chi2,
        smax / smin,
    ))
}

fn solve_params(dataset: &RunDataset, cals: [&CavityCalibration; 2], analysis_freq: f64) -> Result<[f64; 16]> {
    Ok(solve_design(&assemble_design(dataset, cals, analysis_freq)?)?.0.to_array())
}

/// Derivatives of the fitted parameters with respect to each cavity's
/// `(d, center_sample, samples_per_bandwidth)`, by central differences.
fn calibration_jacobian(
    dataset: &RunDataset,
    cals: [&CavityCalibration; 2],
    analysis_freq: f64,
) -> Result<SMatrix<f64, 16, 6>> {
    let columns = par::map_range(6, |col| -> Result<[f64; 16]> {
        let (k, i) = (col / 3, col % 3);
        let c = cals[k];
        let h = [1e-4, 1e-2, 1e-4 * c.samples_per_bandwidth][i];
        let shifted = |sign: f64| {
            let mut moved = [*cals[0], *cals[1]];
            let m = &mut moved[k];
            match i {
                0 => m.d += sign * h,
                1 => m.center_sample += sign * h,
                _ => m.samples_per_bandwidth += sign * h,
            }
            solve_params(dataset, [&moved[0], &moved[1]], analysis_freq)
        };
        // forward difference when d sits at the edge of its range
        let (lo, span) = if i == 0 && c.d < h { (shifted(0.0)?, h) } else { (shifted(-1.0)?, 2.0 * h) };
        let hi = shifted(1.0)?;
        Ok(std::array::from_fn(|j| (hi[j] - lo[j]) / span))
    });
    let mut jac = SMatrix::<f64, 16, 6>::zeros();
    for (col, values) in columns.into_iter().enumerate() {
        for (j, v) in values?.into_iter().enumerate() {
            jac[(j, col)] = v;
        }
    }
    Ok(jac)
}

/// Weighted linear fit of all AC traces given both cavity calibrations.
///
/// The parameter covariance adds the calibration covariances, mapped through
/// the fit's sensitivity to each calibration constant.
pub fn fit_covariance(
    dataset: &RunDataset,
    cals: [&CavityCalibration; 2],
    analysis_freq: f64,
) -> Result<FitResult> {
    let system = assemble_design(dataset, cals, analysis_freq)?;
    let (params, raw_cov, chi_square, condition_number) = solve_design(&system)?;
    let dof = system.rows.len() - 16;
    let reduced = if dof > 0 { chi_square / dof as f64 } else { f64::NAN };
    let jac = calibration_jacobian(dataset, cals, analysis_freq)?;
    let mut cal_cov = SMatrix::<f64, 6, 6>::zeros();
    for k in 0..2 {
        for i in 0..3 {
            for j in 0..3 {
                cal_cov[(3 * k + i, 3 * k + j)] = cals[k].covariance[i][j];
            }
        }
    }
    let cal_part: ParamCovariance = jac * cal_cov * jac.transpose();
    let param_covariance = raw_cov * reduced + cal_part;
    let sigmas = |c: &ParamCovariance| std::array::from_fn(|k| c[(k, k)].max(0.0).sqrt());
    let physicality = is_physical(&to_sideband_basis(&build_sa_covariance(&params))?, PHYSICAL_TOL);
    Ok(FitResult {
        params,
        param_sigmas: sigmas(&param_covariance),
        raw_sigmas: sigmas(&raw_cov),
        calibration_sigmas: sigmas(&cal_part),
        param_covariance,
        chi_square,
        dof,
        reduced_chi_square: reduced,
        physicality,
        calibrations: [*cals[0], *cals[1]],
        condition_number,
    })
}

/// Calibrates both cavities from the both-scanned DC traces.
pub fn calibrate_run(dataset: &RunDataset) -> Result<[CavityCalibration; 2]> {
    let get = |c: Channel| {
        dataset.trace(StageKind::BothScanned, c).ok_or_else(|| {
            Error::IncompleteDataset(format!("missing both-scanned {} trace", c.tag()))
        })
    };
    let (t1, t2) = (get(Channel::Dc1)?, get(Channel::Dc2)?);
    Ok([calibrate_dc(t1)?, calibrate_dc(t2)?])
}

/// DC calibration followed by the joint AC fit. Never reads ground truth.
pub fn fit_run(dataset: &RunDataset) -> Result<FitResult> {
    let cals = calibrate_run(dataset)?;
    fit_covariance(dataset, [&cals[0], &cals[1]], dataset.analysis_freq)
}

/// Model traces for every trace of `dataset` at the fitted parameters, on
/// the calibrated detuning axes. DC traces use the calibrated dip model.
pub fn predict_traces(dataset: &RunDataset, fit: &FitResult) -> Result<Vec<Trace>> {
    let cals = [&fit.calibrations[0], &fit.calibrations[1]];
    let system = assemble_design(dataset, cals, dataset.analysis_freq)?;
    let x = DVector::from_column_slice(&fit.params.to_array());
    let model = &system.matrix * x;
    let mut out = Vec::new();
    for t in &dataset.traces {
        let values: Vec<f64> = match t.channel {
            Channel::Dc1 | Channel::Dc2 => {
                let c = cals[usize::from(t.channel == Channel::Dc2)];
                t.samples
                    .iter()
                    .map(|&s| {
                        let u = 4.0 * c.detuning(s).powi(2);
                        c.power_scale * (c.d + u) / (1.0 + u)
                    })
                    .collect()
            }
            _ => {
                let start = system
                    .rows
                    .iter()
                    .position(|r| r.stage == t.stage && r.channel == t.channel)
                    .expect("every AC trace has rows");
                (0..t.len())
                    .map(|i| {
                        let k = start + i;
                        model[k] + (t.values[i] - system.observations[k])
                    })
                    .collect()
            }
        };
        out.push(Trace {
            values,
            noise_sigma: vec![0.0; t.len()],
            ..t.clone()
        });
    }
    Ok(out)
}

/// Shift of every fitted parameter under one calibration perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub perturbation: String,
    pub shifts: [f64; 16],
}

/// Refits with each calibration constant perturbed in turn: the scan scale
/// by +1 %, the center by +1 sample, and `d` by +0.01.
pub fn calibration_sensitivity(
    dataset: &RunDataset,
    cals: [&CavityCalibration; 2],
) -> Result<Vec<SensitivityRow>> {
    let base = solve_params(dataset, cals, dataset.analysis_freq)?;
    let mut rows = Vec::new();
    for k in 0..2 {
        let perturbations: [(&str, fn(&mut CavityCalibration)); 3] = [
            ("samples_per_bandwidth+1%", |c| c.samples_per_bandwidth *= 1.01),
            ("center_sample+1", |c| c.center_sample += 1.0),
            ("d+0.01", |c| c.d += 0.01),
        ];
        for (name, apply) in perturbations {
            let mut moved = [*cals[0], *cals[1]];
            apply(&mut moved[k]);
            let p = solve_params(dataset, [&moved[0], &moved[1]], dataset.analysis_freq)?;
            rows.push(SensitivityRow {
                perturbation: format!("cavity{} {name}", k + 1),
                shifts: std::array::from_fn(|j| p[j] - base[j]),
            });
        }
    }
    Ok(rows)
}
