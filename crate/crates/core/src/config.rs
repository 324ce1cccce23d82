//! Run configuration (TOML).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{ScanAxis, ScanStage, StageKind};
use crate::resonator::{CavityParams, FAR_DETUNING};
use crate::state::{make_state, SixteenParams, StateRecipe};
use crate::witness::DuanConvention;

/// Tolerance on the Hz ↔ bandwidth-unit duplication.
pub const UNIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Relative σ of the multiplicative noise added to every trace point.
    pub relative_noise: f64,
    #[serde(default = "default_power")]
    pub power_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    pub analysis: AnalysisConfig,
    pub cavity1: CavityConfig,
    pub cavity2: CavityConfig,
    pub scan: ScanConfig,
    pub state: StateSpec,
    #[serde(default)]
    pub witness: WitnessConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    /// Free-form experiment annotations (pump ratio, temperature, finesse...),
    /// carried into manifests and reports untouched.
    #[serde(default, skip_serializing_if = "toml::Table::is_empty")]
    pub metadata: toml::Table,
}

fn default_power() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub freq_hz: f64,
    /// The same frequency in cavity bandwidths; must equal
    /// `freq_hz / bandwidth_hz` for both cavities.
    pub freq_bandwidths: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityConfig {
    pub label: String,
    pub d: f64,
    pub bandwidth_hz: f64,
    pub center_sample: f64,
    pub samples_per_bandwidth: f64,
}

impl CavityConfig {
    pub fn params(&self) -> CavityParams {
        CavityParams {
            d: self.d,
            bandwidth_hz: self.bandwidth_hz,
            label: self.label.clone(),
        }
    }

    pub fn axis(&self) -> ScanAxis {
        ScanAxis {
            center_sample: self.center_sample,
            samples_per_bandwidth: self.samples_per_bandwidth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub n_samples: usize,
    #[serde(default = "default_parked")]
    pub parked_detuning: f64,
    #[serde(default = "default_stages")]
    pub stages: Vec<StageKind>,
}

fn default_parked() -> f64 {
    FAR_DETUNING
}

fn default_stages() -> Vec<StageKind> {
    StageKind::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateSpec {
    Recipe(StateRecipe),
    Params(SixteenParams),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessConfig {
    #[serde(default)]
    pub duan_convention: DuanConvention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub n_samples: usize,
    pub grid_points: usize,
    pub grid_min: f64,
    pub grid_max: f64,
    #[serde(default = "default_oracle_stage")]
    pub stage: StageKind,
}

fn default_oracle_stage() -> StageKind {
    StageKind::BothScanned
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            n_samples: 100_000,
            grid_points: 21,
            grid_min: -6.0,
            grid_max: 6.0,
            stage: StageKind::BothScanned,
        }
    }
}

impl Default for RunConfig {
    /// Two 3.2 MHz cavities with d = 0.38 and 0.47, 10 MHz analysis
    /// frequency, 2001 samples over ±6 bandwidths, 1 % noise.
    fn default() -> Self {
        let n = 2001;
        let axis = ScanAxis::spanning(n, -6.0, 6.0);
        let cavity = |label: &str, d| CavityConfig {
            label: label.into(),
            d,
            bandwidth_hz: 3.2e6,
            center_sample: axis.center_sample,
            samples_per_bandwidth: axis.samples_per_bandwidth,
        };
        Self {
            seed: 1,
            relative_noise: 0.01,
            power_scale: 1.0,
            out_dir: None,
            analysis: AnalysisConfig {
                freq_hz: 10e6,
                freq_bandwidths: 10e6 / 3.2e6,
            },
            cavity1: cavity("AC1", 0.38),
            cavity2: cavity("AC2", 0.47),
            scan: ScanConfig {
                n_samples: n,
                parked_detuning: FAR_DETUNING,
                stages: default_stages(),
            },
            state: StateSpec::Recipe(StateRecipe {
                r_inner: 0.6,
                r_outer: 0.45,
                efficiency_a: 0.91,
                efficiency_b: 0.91,
                phase_a: 0.15,
                phase_b: -0.1,
                local_r_a: 0.1,
                local_r_b: 0.05,
                local_angle_a: 0.8,
                local_angle_b: -0.4,
            }),
            witness: WitnessConfig::default(),
            oracle: OracleConfig::default(),
            metadata: toml::Table::new(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.relative_noise >= 0.0 && self.relative_noise.is_finite()) {
            return Err(Error::config("relative_noise", "must be >= 0"));
        }
        if !(self.power_scale > 0.0 && self.power_scale.is_finite()) {
            return Err(Error::config("power_scale", "must be > 0"));
        }
        if !(self.analysis.freq_hz > 0.0) {
            return Err(Error::config("analysis.freq_hz", "must be > 0"));
        }
        for (name, cav) in [("cavity1", &self.cavity1), ("cavity2", &self.cavity2)] {
            cav.params().validate().map_err(|e| match e {
                Error::Config { reason, .. } => Error::config(name, reason),
                other => other,
            })?;
            if !(cav.samples_per_bandwidth > 0.0) {
                return Err(Error::config(
                    format!("{name}.samples_per_bandwidth"),
                    "must be > 0",
                ));
            }
            let omega = self.analysis.freq_hz / cav.bandwidth_hz;
            if (omega - self.analysis.freq_bandwidths).abs() > UNIT_TOLERANCE {
                return Err(Error::config(
                    "analysis.freq_bandwidths",
                    format!(
                        "{} does not match freq_hz / {name}.bandwidth_hz = {omega}",
                        self.analysis.freq_bandwidths
                    ),
                ));
            }
        }
        if self.scan.n_samples < 17 {
            return Err(Error::config("scan.n_samples", "need at least 17 samples"));
        }
        if self.scan.parked_detuning < FAR_DETUNING {
            return Err(Error::config(
                "scan.parked_detuning",
                format!("must be >= {FAR_DETUNING}"),
            ));
        }
        if !self.scan.stages.contains(&StageKind::BothScanned) {
            return Err(Error::config(
                "scan.stages",
                "the both-scanned stage is required",
            ));
        }
        if self.oracle.n_samples < 1000 {
            return Err(Error::config("oracle.n_samples", "must be >= 1000"));
        }
        if self.oracle.grid_points < 2 || !(self.oracle.grid_max > self.oracle.grid_min) {
            return Err(Error::config("oracle", "grid needs >= 2 increasing points"));
        }
        if let StateSpec::Recipe(r) = &self.state {
            r.validate()
                .map_err(|e| Error::config("state", e.to_string()))?;
        }
        Ok(())
    }

    pub fn cavities(&self) -> [CavityParams; 2] {
        [self.cavity1.params(), self.cavity2.params()]
    }

    pub fn axes(&self) -> [ScanAxis; 2] {
        [self.cavity1.axis(), self.cavity2.axis()]
    }

    /// Ground-truth parameters of the configured state.
    pub fn ground_truth(&self) -> Result<SixteenParams> {
        match &self.state {
            StateSpec::Recipe(r) => make_state(r),
            StateSpec::Params(p) => Ok(*p),
        }
    }

    pub fn stages(&self) -> Result<Vec<ScanStage>> {
        let axes = self.axes();
        let mut kinds = self.scan.stages.clone();
        kinds.sort();
        kinds.dedup();
        kinds
            .into_iter()
            .map(|k| {
                ScanStage::from_axes(
                    k,
                    self.scan.n_samples,
                    [&axes[0], &axes[1]],
                    self.scan.parked_detuning,
                )
            })
            .collect()
    }

    pub fn oracle_stage(&self) -> Result<ScanStage> {
        let o = &self.oracle;
        let grid: Vec<f64> = (0..o.grid_points)
            .map(|i| o.grid_min + (o.grid_max - o.grid_min) * i as f64 / (o.grid_points - 1) as f64)
            .collect();
        ScanStage::from_grid(o.stage, &grid, self.scan.parked_detuning)
    }
}
