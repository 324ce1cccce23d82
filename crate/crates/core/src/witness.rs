//! Entanglement witnesses: the Duan sum and the PPT minimum symplectic
//! eigenvalue over the seven bipartitions of the four sideband modes.

use nalgebra::SMatrix;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::par;
use crate::state::{
    build_sa_covariance, enumerate_bipartitions, partial_transpose, symplectic_eigenvalues,
    to_sideband_basis, Bipartition, CovarianceMatrix, SixteenParams,
};

pub type ParamCovariance = SMatrix<f64, 16, 16>;

/// Which per-beam quadratures enter the Duan sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DuanConvention {
    /// Symmetric-mode quadratures `(p_s, q_s)`.
    #[default]
    Symmetric,
    /// Antisymmetric-mode quadratures `(p_a, q_a)`.
    Antisymmetric,
}

impl DuanConvention {
    pub fn tag(self) -> &'static str {
        match self {
            DuanConvention::Symmetric => "symmetric",
            DuanConvention::Antisymmetric => "antisymmetric",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DuanResult {
    pub convention: DuanConvention,
    pub var_p_minus: f64,
    pub var_q_plus: f64,
    pub sum: f64,
    pub entangled: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<f64>,
}

/// `Δ²p₋ + Δ²q₊` with `p₋ = (p₁ - p₂)/√2`, `q₊ = (q₁ + q₂)/√2`.
pub fn duan_value(p: &SixteenParams, convention: DuanConvention) -> DuanResult {
    let (var_p_minus, var_q_plus) = duan_pair(p, convention);
    let sum = var_p_minus + var_q_plus;
    DuanResult {
        convention,
        var_p_minus,
        var_q_plus,
        sum,
        entangled: sum < 2.0,
        uncertainty: None,
    }
}

fn duan_pair(p: &SixteenParams, convention: DuanConvention) -> (f64, f64) {
    match convention {
        DuanConvention::Symmetric => (
            0.5 * (p.alpha1 + p.alpha2) - p.mu,
            0.5 * (p.beta1 + p.beta2) + p.nu,
        ),
        DuanConvention::Antisymmetric => (
            0.5 * (p.beta1 + p.beta2) - p.nu,
            0.5 * (p.alpha1 + p.alpha2) + p.mu,
        ),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PptEntry {
    pub bipartition: String,
    pub min_eigenvalue: f64,
    pub entangled: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<f64>,
}

/// PPT minima in [`enumerate_bipartitions`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PptResult {
    pub entries: Vec<PptEntry>,
}

fn ppt_minima(v: &CovarianceMatrix, parts: &[Bipartition]) -> Result<Vec<f64>> {
    par::map_slice(parts, |b| -> Result<f64> {
        Ok(symplectic_eigenvalues(&partial_transpose(v, b)?)?[0])
    })
    .into_iter()
    .collect()
}

/// Minimum PT-symplectic eigenvalue for each of the seven bipartitions of a
/// sideband-basis covariance matrix.
pub fn ppt_report(v: &CovarianceMatrix) -> Result<PptResult> {
    let parts = enumerate_bipartitions();
    let minima = ppt_minima(v, &parts)?;
    Ok(PptResult {
        entries: parts
            .iter()
            .zip(minima)
            .map(|(b, m)| PptEntry {
                bipartition: b.label(),
                min_eigenvalue: m,
                entangled: m < 1.0,
                uncertainty: None,
            })
            .collect(),
    })
}

/// Witness whose uncertainty is propagated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Witness {
    Duan(DuanConvention),
    /// One value per bipartition, in canonical order.
    Ppt,
}

fn witness_values(p: &SixteenParams, witness: Witness) -> Result<Vec<f64>> {
    match witness {
        Witness::Duan(c) => Ok(vec![duan_value(p, c).sum]),
        Witness::Ppt => {
            let sb = to_sideband_basis(&build_sa_covariance(p))?;
            ppt_minima(&sb, &enumerate_bipartitions())
        }
    }
}

/// First-order propagation of the parameter covariance through `witness`,
/// with a central-difference Jacobian (step `max(1e-6, 1e-4·|p|)`).
///
/// Returns `INFINITY` for outputs whose covariance or Jacobian is not finite.
pub fn propagate_uncertainty(
    params: &SixteenParams,
    covariance: &ParamCovariance,
    witness: Witness,
) -> Result<Vec<f64>> {
    let base = witness_values(params, witness)?;
    let m = base.len();
    if covariance.iter().any(|c| !c.is_finite()) {
        return Ok(vec![f64::INFINITY; m]);
    }
    let x = params.to_array();
    let columns = par::map_range(16, |k| {
        let h = (1e-4 * x[k].abs()).max(1e-6);
        let shifted = |sign: f64| {
            let mut y = x;
            y[k] += sign * h;
            witness_values(&SixteenParams::from_array(y), witness)
        };
        match (shifted(1.0), shifted(-1.0)) {
            (Ok(up), Ok(down)) => up
                .iter()
                .zip(&down)
                .map(|(u, d)| (u - d) / (2.0 * h))
                .collect(),
            _ => vec![f64::NAN; m],
        }
    });
    Ok((0..m)
        .map(|i| {
            let g: Vec<f64> = columns.iter().map(|c| c[i]).collect();
            if g.iter().any(|v| !v.is_finite()) {
                return f64::INFINITY;
            }
            let mut var = 0.0;
            for a in 0..16 {
                for b in 0..16 {
                    var += g[a] * covariance[(a, b)] * g[b];
                }
            }
            var.max(0.0).sqrt()
        })
        .collect())
}

/// Duan and PPT results for one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub duan: DuanResult,
    pub ppt: PptResult,
}

impl WitnessReport {
    pub fn evaluate(
        params: &SixteenParams,
        convention: DuanConvention,
        covariance: Option<&ParamCovariance>,
    ) -> Result<Self> {
        let mut duan = duan_value(params, convention);
        let sb = to_sideband_basis(&build_sa_covariance(params))?;
        let mut ppt = ppt_report(&sb)?;
        if let Some(cov) = covariance {
            duan.uncertainty = Some(propagate_uncertainty(params, cov, Witness::Duan(convention))?[0]);
            let sig = propagate_uncertainty(params, cov, Witness::Ppt)?;
            for (e, s) in ppt.entries.iter_mut().zip(sig) {
                e.uncertainty = Some(s);
            }
        }
        Ok(Self { duan, ppt })
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// One row per bipartition: `bipartition,min_eigenvalue,sigma,entangled`.
    pub fn ppt_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["bipartition", "min_eigenvalue", "sigma", "entangled"])?;
        for e in &self.ppt.entries {
            w.write_record([
                e.bipartition.clone(),
                format!("{:e}", e.min_eigenvalue),
                e.uncertainty.map(|s| format!("{s:e}")).unwrap_or_default(),
                e.entangled.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}
