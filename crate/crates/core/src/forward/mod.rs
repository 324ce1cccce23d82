//! Measurement-record synthesis: DC dips, single-beam noise spectra and
//! two-beam correlation spectra over the three scan stages.

mod oracle;
mod spectra;
mod synth;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::resonator::{CavityParams, FAR_DETUNING};
use crate::state::{Beam, SixteenParams};

pub use oracle::{
    compare_with_analytic, demodulate, max_abs_z, median_stderr, monte_carlo_oracle, DemodSample, OracleComparison,
    OracleEstimate, OracleReport, Stationarity,
};
pub use spectra::{correlation_spectrum, dc_dip, variance_spectrum};
pub use synth::{point_normal, synthesize_run, WEIGHT_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    /// Both cavities scanned synchronously.
    BothScanned,
    /// Cavity 1 scanned, cavity 2 parked off resonance.
    OnlyCavity1,
    /// Cavity 2 scanned, cavity 1 parked off resonance.
    OnlyCavity2,
}

impl StageKind {
    pub const ALL: [StageKind; 3] = [
        StageKind::BothScanned,
        StageKind::OnlyCavity1,
        StageKind::OnlyCavity2,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            StageKind::BothScanned => "both",
            StageKind::OnlyCavity1 => "only1",
            StageKind::OnlyCavity2 => "only2",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.tag() == tag)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Channels recorded in this stage.
    pub fn channels(self) -> &'static [Channel] {
        use Channel::*;
        match self {
            StageKind::BothScanned => &[Dc1, Dc2, Var1, Var2, CorrRe, CorrIm],
            StageKind::OnlyCavity1 => &[Var1, CorrRe],
            StageKind::OnlyCavity2 => &[Var2, CorrRe],
        }
    }

    pub fn is_scanned(self, beam: Beam) -> bool {
        !matches!(
            (self, beam),
            (StageKind::OnlyCavity1, Beam::Two) | (StageKind::OnlyCavity2, Beam::One)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Dc1,
    Dc2,
    Var1,
    Var2,
    CorrRe,
    CorrIm,
}

impl Channel {
    pub const ALL: [Channel; 6] = [
        Channel::Dc1,
        Channel::Dc2,
        Channel::Var1,
        Channel::Var2,
        Channel::CorrRe,
        Channel::CorrIm,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Channel::Dc1 => "dc1",
            Channel::Dc2 => "dc2",
            Channel::Var1 => "var1",
            Channel::Var2 => "var2",
            Channel::CorrRe => "corr_re",
            Channel::CorrIm => "corr_im",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.tag() == tag)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn dc(beam: Beam) -> Self {
        match beam {
            Beam::One => Channel::Dc1,
            Beam::Two => Channel::Dc2,
        }
    }

    pub fn var(beam: Beam) -> Self {
        match beam {
            Beam::One => Channel::Var1,
            Beam::Two => Channel::Var2,
        }
    }
}

/// Linear map from the raw scan-sample axis to detuning:
/// `Δ(s) = (s - center_sample) / samples_per_bandwidth`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanAxis {
    pub center_sample: f64,
    pub samples_per_bandwidth: f64,
}

impl ScanAxis {
    pub fn detuning(&self, sample: f64) -> f64 {
        (sample - self.center_sample) / self.samples_per_bandwidth
    }

    /// Axis that places `n_samples` points evenly over `[lo, hi]`.
    pub fn spanning(n_samples: usize, lo: f64, hi: f64) -> Self {
        let spb = (n_samples.max(2) - 1) as f64 / (hi - lo);
        Self {
            center_sample: -lo * spb,
            samples_per_bandwidth: spb,
        }
    }
}

/// One acquisition: the sample axis and each cavity's detuning per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanStage {
    pub kind: StageKind,
    pub samples: Vec<usize>,
    pub detuning1: Vec<f64>,
    pub detuning2: Vec<f64>,
    pub parked_detuning: f64,
}

impl ScanStage {
    /// Stage over samples `0..n_samples`, scanned cavities following their
    /// axes and parked cavities held at `parked_detuning`.
    pub fn from_axes(
        kind: StageKind,
        n_samples: usize,
        axes: [&ScanAxis; 2],
        parked_detuning: f64,
    ) -> Result<Self> {
        let samples: Vec<usize> = (0..n_samples).collect();
        let along = |beam: Beam| -> Vec<f64> {
            if kind.is_scanned(beam) {
                samples
                    .iter()
                    .map(|&s| axes[beam.index()].detuning(s as f64))
                    .collect()
            } else {
                vec![parked_detuning; n_samples]
            }
        };
        let stage = Self {
            kind,
            detuning1: along(Beam::One),
            detuning2: along(Beam::Two),
            samples,
            parked_detuning,
        };
        stage.validate()?;
        Ok(stage)
    }

    /// Stage on an explicit detuning grid shared by every scanned cavity.
    pub fn from_grid(kind: StageKind, grid: &[f64], parked_detuning: f64) -> Result<Self> {
        let n = grid.len();
        let pick = |beam: Beam| {
            if kind.is_scanned(beam) {
                grid.to_vec()
            } else {
                vec![parked_detuning; n]
            }
        };
        let stage = Self {
            kind,
            samples: (0..n).collect(),
            detuning1: pick(Beam::One),
            detuning2: pick(Beam::Two),
            parked_detuning,
        };
        stage.validate()?;
        Ok(stage)
    }

    fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::config("scan.n_samples", "stage has no samples"));
        }
        for beam in [Beam::One, Beam::Two] {
            if self.kind.is_scanned(beam) {
                let d = self.detunings(beam);
                if d.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::config(
                        "scan",
                        "detuning grid must be strictly increasing",
                    ));
                }
            }
        }
        if self.kind != StageKind::BothScanned && self.parked_detuning < FAR_DETUNING {
            return Err(Error::config(
                "scan.parked_detuning",
                format!("must be >= {FAR_DETUNING}"),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn detunings(&self, beam: Beam) -> &[f64] {
        match beam {
            Beam::One => &self.detuning1,
            Beam::Two => &self.detuning2,
        }
    }

    /// Detunings of the cavity being scanned (cavity 1 when both are).
    pub fn scanned_detunings(&self) -> &[f64] {
        match self.kind {
            StageKind::OnlyCavity2 => &self.detuning2,
            _ => &self.detuning1,
        }
    }
}

/// One recorded spectrum versus scan sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub stage: StageKind,
    pub channel: Channel,
    pub samples: Vec<usize>,
    pub detunings: Vec<f64>,
    pub values: Vec<f64>,
    pub noise_sigma: Vec<f64>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_lengths(&self) -> Result<()> {
        let n = self.values.len();
        if self.samples.len() != n || self.detunings.len() != n || self.noise_sigma.len() != n {
            return Err(Error::IncompleteDataset(format!(
                "{} {} has mismatched column lengths",
                self.stage.tag(),
                self.channel.tag()
            )));
        }
        Ok(())
    }

    /// Indices of variance points more than 5σ below zero.
    pub fn suspicious_points(&self) -> Vec<usize> {
        if !matches!(self.channel, Channel::Var1 | Channel::Var2) {
            return Vec::new();
        }
        self.values
            .iter()
            .zip(&self.noise_sigma)
            .enumerate()
            .filter(|(_, (v, s))| **v < -5.0 * **s)
            .map(|(i, _)| i)
            .collect()
    }
}

/// A complete synthetic or recorded measurement run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunDataset {
    pub traces: Vec<Trace>,
    pub cavities: [CavityParams; 2],
    pub axes: [ScanAxis; 2],
    /// Analysis frequency in cavity bandwidths.
    pub analysis_freq: f64,
    pub analysis_freq_hz: f64,
    pub parked_detuning: f64,
    pub relative_noise: f64,
    pub power_scale: f64,
    pub seed: u64,
    pub ground_truth: Option<SixteenParams>,
    pub metadata: toml::Table,
}

impl RunDataset {
    pub fn trace(&self, stage: StageKind, channel: Channel) -> Option<&Trace> {
        self.traces
            .iter()
            .find(|t| t.stage == stage && t.channel == channel)
    }

    pub fn stages(&self) -> Vec<StageKind> {
        let mut s: Vec<StageKind> = self.traces.iter().map(|t| t.stage).collect();
        s.sort();
        s.dedup();
        s
    }

    pub fn without_ground_truth(&self) -> Self {
        Self {
            ground_truth: None,
            ..self.clone()
        }
    }

    /// Copy keeping only traces from `stages`.
    pub fn restricted_to(&self, stages: &[StageKind]) -> Self {
        Self {
            traces: self
                .traces
                .iter()
                .filter(|t| stages.contains(&t.stage))
                .cloned()
                .collect(),
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_spanning_grid() {
        let axis = ScanAxis::spanning(2001, -6.0, 6.0);
        assert!((axis.detuning(0.0) + 6.0).abs() < 1e-12);
        assert!((axis.detuning(1000.0)).abs() < 1e-12);
        assert!((axis.detuning(2000.0) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn stage_validation() {
        let grid = [-1.0, 0.0, 1.0];
        assert!(ScanStage::from_grid(StageKind::OnlyCavity1, &grid, 10.0).is_err());
        assert!(ScanStage::from_grid(StageKind::BothScanned, &[0.0, 0.0], 50.0).is_err());
        let s = ScanStage::from_grid(StageKind::OnlyCavity2, &grid, 50.0).unwrap();
        assert_eq!(s.detuning1, vec![50.0; 3]);
        assert_eq!(s.scanned_detunings(), &grid);
    }

    #[test]
    fn channel_matrix_has_ten_traces() {
        let n: usize = StageKind::ALL.iter().map(|s| s.channels().len()).sum();
        assert_eq!(n, 10);
    }
}
