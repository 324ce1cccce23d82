//! Monte Carlo oracle: samples quadrature vectors from the covariance matrix
//! and estimates the spectra from demodulated photocurrents, bypassing the
//! analytic coefficient formulas.

use nalgebra::SVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::{correlation_spectrum, variance_spectrum, Channel, ScanStage, StageKind};
use crate::error::{Error, Result};
use crate::par;
use crate::resonator::{gain_pair, CavityParams, GainPair};
use crate::state::{build_sa_covariance, is_physical, Beam, SixteenParams};

const PHYSICAL_TOL: f64 = 1e-9;

/// Demodulated photocurrent pair of both beams for one realization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemodSample {
    pub cos: [f64; 2],
    pub sin: [f64; 2],
}

/// Projects an SA-basis quadrature vector onto each beam's cos/sin
/// photocurrents (signal part only, without the vacuum port).
pub fn demodulate(x: &SVector<f64, 8>, gains: [&GainPair; 2]) -> DemodSample {
    let mut cos = [0.0; 2];
    let mut sin = [0.0; 2];
    for b in 0..2 {
        let (ps, qs, pa, qa) = (x[2 * b], x[2 * b + 1], x[4 + 2 * b], x[5 + 2 * b]);
        let g = gains[b];
        cos[b] = g.x_plus() * ps + g.x_minus() * qs + g.y_minus() * pa - g.y_plus() * qa;
        sin[b] = g.y_plus() * ps + g.y_minus() * qs - g.x_minus() * pa + g.x_plus() * qa;
    }
    DemodSample { cos, sin }
}

/// An estimated channel with per-point standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleEstimate {
    pub channel: Channel,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Stationarity residuals `<c1 c2> - <s1 s2>` and `<s1 c2> + <c1 s2>` with
/// their standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stationarity {
    pub cc_minus_ss: f64,
    pub cc_minus_ss_stderr: f64,
    pub sc_plus_cs: f64,
    pub sc_plus_cs_stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub stage: StageKind,
    pub detunings: Vec<f64>,
    pub n_samples: usize,
    /// Var1, Var2, CorrRe, CorrIm.
    pub estimates: Vec<OracleEstimate>,
    pub stationarity: Vec<Stationarity>,
}

impl OracleReport {
    pub fn estimate(&self, channel: Channel) -> Option<&OracleEstimate> {
        self.estimates.iter().find(|e| e.channel == channel)
    }
}

#[derive(Default, Clone, Copy)]
struct Moments {
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.sum += v;
        self.sum_sq += v * v;
    }

    fn mean_stderr(&self, n: usize) -> (f64, f64) {
        let n = n as f64;
        let mean = self.sum / n;
        let var = (self.sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
        (mean, (var / n).sqrt())
    }
}

const N_STATS: usize = 6;

/// Estimates Var1, Var2, CorrRe and CorrIm over the stage grid from
/// `n_samples` draws per point.
pub fn monte_carlo_oracle(
    params: &SixteenParams,
    stage: &ScanStage,
    cavities: [&CavityParams; 2],
    analysis_freq: f64,
    n_samples: usize,
    seed: u64,
) -> Result<OracleReport> {
    if n_samples < 1000 {
        return Err(Error::config("oracle.n_samples", "must be >= 1000"));
    }
    let cov = build_sa_covariance(params);
    let check = is_physical(&cov, PHYSICAL_TOL);
    if !check.physical {
        return Err(if cov.entries().cholesky().is_none() {
            Error::NotPositiveDefinite
        } else {
            Error::Unphysical {
                min_symplectic: check.min_symplectic,
            }
        });
    }
    let chol = cov
        .entries()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite)?;
    let l = chol.l();

    let per_point = par::map_range(stage.len(), |i| -> Result<[(f64, f64); N_STATS]> {
        let g1 = gain_pair(stage.detuning1[i], analysis_freq, cavities[0])?;
        let g2 = gain_pair(stage.detuning2[i], analysis_freq, cavities[1])?;
        let vac = [
            (1.0 - g1.g_plus.norm_sqr() - g1.g_minus.norm_sqr()).max(0.0).sqrt(),
            (1.0 - g2.g_plus.norm_sqr() - g2.g_minus.norm_sqr()).max(0.0).sqrt(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stage.samples[i] as u64);
        let mut acc = [Moments::default(); N_STATS];
        for _ in 0..n_samples {
            let z = SVector::<f64, 8>::from_fn(|_, _| StandardNormal.sample(&mut rng));
            let x = l * z;
            let mut d = demodulate(&x, [&g1, &g2]);
            for b in 0..2 {
                let zc: f64 = StandardNormal.sample(&mut rng);
                let zs: f64 = StandardNormal.sample(&mut rng);
                d.cos[b] += vac[b] * zc;
                d.sin[b] += vac[b] * zs;
            }
            let [c1, c2] = d.cos;
            let [s1, s2] = d.sin;
            acc[0].push(0.5 * (c1 * c1 + s1 * s1));
            acc[1].push(0.5 * (c2 * c2 + s2 * s2));
            acc[2].push(0.5 * (c1 * c2 + s1 * s2));
            acc[3].push(0.5 * (s1 * c2 - c1 * s2));
            acc[4].push(c1 * c2 - s1 * s2);
            acc[5].push(s1 * c2 + c1 * s2);
        }
        Ok(acc.map(|m| m.mean_stderr(n_samples)))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let column = |k: usize, channel| OracleEstimate {
        channel,
        values: per_point.iter().map(|p| p[k].0).collect(),
        stderr: per_point.iter().map(|p| p[k].1).collect(),
    };
    Ok(OracleReport {
        stage: stage.kind,
        detunings: stage.scanned_detunings().to_vec(),
        n_samples,
        estimates: vec![
            column(0, Channel::Var1),
            column(1, Channel::Var2),
            column(2, Channel::CorrRe),
            column(3, Channel::CorrIm),
        ],
        stationarity: per_point
            .iter()
            .map(|p| Stationarity {
                cc_minus_ss: p[4].0,
                cc_minus_ss_stderr: p[4].1,
                sc_plus_cs: p[5].0,
                sc_plus_cs_stderr: p[5].1,
            })
            .collect(),
    })
}

/// Per-point z-scores `(analytic - oracle) / stderr` for every channel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleComparison {
    pub channel: Channel,
    pub detunings: Vec<f64>,
    pub analytic: Vec<f64>,
    pub oracle: Vec<f64>,
    pub stderr: Vec<f64>,
    pub z: Vec<f64>,
}

impl OracleComparison {
    pub fn max_abs_z(&self) -> f64 {
        self.z.iter().fold(0.0, |m, z| m.max(z.abs()))
    }
}

pub fn compare_with_analytic(
    params: &SixteenParams,
    stage: &ScanStage,
    cavities: [&CavityParams; 2],
    analysis_freq: f64,
    report: &OracleReport,
) -> Result<Vec<OracleComparison>> {
    let v1 = variance_spectrum(params, Beam::One, stage, cavities[0], analysis_freq)?;
    let v2 = variance_spectrum(params, Beam::Two, stage, cavities[1], analysis_freq)?;
    let (re, im) = correlation_spectrum(params, stage, cavities, analysis_freq)?;
    [v1, v2, re, im]
        .into_iter()
        .map(|analytic| {
            let est = report.estimate(analytic.channel).ok_or_else(|| {
                Error::IncompleteDataset(format!("oracle lacks {}", analytic.channel.tag()))
            })?;
            let z = analytic
                .values
                .iter()
                .zip(&est.values)
                .zip(&est.stderr)
                .map(|((a, o), s)| if *s > 0.0 { (a - o) / s } else { 0.0 })
                .collect();
            Ok(OracleComparison {
                channel: analytic.channel,
                detunings: report.detunings.clone(),
                analytic: analytic.values,
                oracle: est.values.clone(),
                stderr: est.stderr.clone(),
                z,
            })
        })
        .collect()
}

/// Largest |z| over a set of comparisons.
pub fn max_abs_z(comparisons: &[OracleComparison]) -> f64 {
    comparisons.iter().map(OracleComparison::max_abs_z).fold(0.0, f64::max)
}

/// Median standard error over every channel and point.
pub fn median_stderr(report: &OracleReport) -> f64 {
    let mut all: Vec<f64> = report
        .estimates
        .iter()
        .flat_map(|e| e.stderr.iter().copied())
        .collect();
    all.sort_by(f64::total_cmp);
    all[all.len() / 2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resonator::FAR_DETUNING;
    use crate::state::{make_state, StateRecipe};

    fn cavs() -> [CavityParams; 2] {
        [
            CavityParams::new("AC1", 0.38, 3.2e6).unwrap(),
            CavityParams::new("AC2", 0.47, 3.2e6).unwrap(),
        ]
    }

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|i| -6.0 + 12.0 * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn vacuum_is_flat() {
        let [c1, c2] = cavs();
        let stage = ScanStage::from_grid(StageKind::BothScanned, &grid(21), FAR_DETUNING).unwrap();
        let rep = monte_carlo_oracle(&SixteenParams::vacuum(), &stage, [&c1, &c2], 3.125, 20_000, 5).unwrap();
        for ch in [Channel::Var1, Channel::Var2] {
            let e = rep.estimate(ch).unwrap();
            for (v, s) in e.values.iter().zip(&e.stderr) {
                assert!((v - 1.0).abs() < 4.0 * s, "{v} ± {s}");
            }
        }
    }

    #[test]
    fn single_point_example() {
        let [c1, c2] = cavs();
        let p = SixteenParams {
            alpha1: 1.2,
            beta1: 0.85,
            ..SixteenParams::vacuum()
        };
        let stage = ScanStage::from_grid(StageKind::BothScanned, &[0.5], FAR_DETUNING).unwrap();
        let rep = monte_carlo_oracle(&p, &stage, [&c1, &c2], 3.125, 100_000, 9).unwrap();
        let cmp = compare_with_analytic(&p, &stage, [&c1, &c2], 3.125, &rep).unwrap();
        assert!(cmp[0].max_abs_z() < 3.0, "{:?}", cmp[0]);
    }

    #[test]
    fn dual_tms_matches_and_is_stationary() {
        let [c1, c2] = cavs();
        let p = make_state(&StateRecipe::dual_tms(0.5, 1.0)).unwrap();
        let stage = ScanStage::from_grid(StageKind::BothScanned, &grid(21), FAR_DETUNING).unwrap();
        let rep = monte_carlo_oracle(&p, &stage, [&c1, &c2], 3.125, 100_000, 2).unwrap();
        let cmp = compare_with_analytic(&p, &stage, [&c1, &c2], 3.125, &rep).unwrap();
        assert!(max_abs_z(&cmp) < 4.0);
        // negative CorrRe dips flank the both-on-resonance point
        assert!(cmp[2].analytic[9] < -0.3 && cmp[2].analytic[11] < -0.3);
        for s in &rep.stationarity {
            assert!(s.cc_minus_ss.abs() < 4.0 * s.cc_minus_ss_stderr);
            assert!(s.sc_plus_cs.abs() < 4.0 * s.sc_plus_cs_stderr);
        }
    }

    #[test]
    fn stderr_scales_with_root_n() {
        let [c1, c2] = cavs();
        let p = make_state(&StateRecipe::dual_tms(0.3, 0.9)).unwrap();
        let stage = ScanStage::from_grid(StageKind::BothScanned, &grid(21), FAR_DETUNING).unwrap();
        let a = median_stderr(&monte_carlo_oracle(&p, &stage, [&c1, &c2], 3.125, 20_000, 1).unwrap());
        let b = median_stderr(&monte_carlo_oracle(&p, &stage, [&c1, &c2], 3.125, 40_000, 1).unwrap());
        let ratio = b / a;
        assert!((ratio - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.1 * std::f64::consts::FRAC_1_SQRT_2);
    }

    #[test]
    fn rejects_unphysical_and_small_n() {
        let [c1, c2] = cavs();
        let stage = ScanStage::from_grid(StageKind::BothScanned, &grid(3), FAR_DETUNING).unwrap();
        let bad = SixteenParams {
            alpha1: -0.1,
            ..SixteenParams::vacuum()
        };
        assert!(matches!(
            monte_carlo_oracle(&bad, &stage, [&c1, &c2], 3.125, 1000, 0),
            Err(Error::NotPositiveDefinite)
        ));
        let squeezed_both = SixteenParams {
            alpha1: 0.1,
            beta1: 0.1,
            ..SixteenParams::vacuum()
        };
        assert!(matches!(
            monte_carlo_oracle(&squeezed_both, &stage, [&c1, &c2], 3.125, 1000, 0),
            Err(Error::Unphysical { .. })
        ));
        assert!(monte_carlo_oracle(&SixteenParams::vacuum(), &stage, [&c1, &c2], 3.125, 10, 0).is_err());
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let [c1, c2] = cavs();
        let p = make_state(&StateRecipe::dual_tms(0.3, 0.9)).unwrap();
        let stage = ScanStage::from_grid(StageKind::OnlyCavity2, &grid(7), FAR_DETUNING).unwrap();
        let a = monte_carlo_oracle(&p, &stage, [&c1, &c2], 3.125, 2000, 4).unwrap();
        let b = par::sequential(|| monte_carlo_oracle(&p, &stage, [&c1, &c2], 3.125, 2000, 4).unwrap());
        assert_eq!(a, b);
    }
}
