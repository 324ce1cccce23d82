use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{correlation_spectrum, dc_dip, variance_spectrum, Channel, RunDataset, Trace};
use crate::config::RunConfig;
use crate::error::Result;
use crate::par;
use crate::state::{Beam, SixteenParams};

/// Relative σ recorded on noiseless traces so that weights stay finite.
pub const WEIGHT_FLOOR: f64 = 1e-6;

/// Standard normal deviate keyed by `(seed, stream, index)`.
///
/// Each call repositions a ChaCha8 keystream, so the value does not depend
/// on how many other deviates were drawn or in which order.
pub fn point_normal(seed: u64, stream: u64, index: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(u128::from(index) * 64);
    StandardNormal.sample(&mut rng)
}

fn stream_id(trace: &Trace) -> u64 {
    (trace.stage.index() * 16 + trace.channel.index()) as u64
}

/// Every configured stage's traces for `params`, with multiplicative
/// Gaussian noise of relative σ `config.relative_noise`.
pub fn synthesize_run(params: &SixteenParams, config: &RunConfig, seed: u64) -> Result<RunDataset> {
    config.validate()?;
    let cavities = config.cavities();
    let omega = config.analysis.freq_bandwidths;
    let rel = config.relative_noise;

    let mut traces = Vec::new();
    for stage in config.stages()? {
        let var = [
            variance_spectrum(params, Beam::One, &stage, &cavities[0], omega)?,
            variance_spectrum(params, Beam::Two, &stage, &cavities[1], omega)?,
        ];
        let (re, im) = correlation_spectrum(params, &stage, [&cavities[0], &cavities[1]], omega)?;
        let corr_scale: Vec<f64> = var[0]
            .values
            .iter()
            .zip(&var[1].values)
            .map(|(a, b)| (a * b).abs().sqrt())
            .collect();
        for &channel in stage.kind.channels() {
            let (mut trace, scale) = match channel {
                Channel::Dc1 | Channel::Dc2 => {
                    let beam = if channel == Channel::Dc1 { Beam::One } else { Beam::Two };
                    let t = dc_dip(&stage, beam, &cavities[beam.index()], config.power_scale);
                    let s = t.values.iter().map(|v| v.abs()).collect();
                    (t, s)
                }
                Channel::Var1 | Channel::Var2 => {
                    let t = var[usize::from(channel == Channel::Var2)].clone();
                    let s = t.values.iter().map(|v| v.abs()).collect();
                    (t, s)
                }
                Channel::CorrRe => (re.clone(), corr_scale.clone()),
                Channel::CorrIm => (im.clone(), corr_scale.clone()),
            };
            add_noise(&mut trace, &scale, rel, seed);
            traces.push(trace);
        }
    }

    Ok(RunDataset {
        traces,
        cavities,
        axes: config.axes(),
        analysis_freq: omega,
        analysis_freq_hz: config.analysis.freq_hz,
        parked_detuning: config.scan.parked_detuning,
        relative_noise: rel,
        power_scale: config.power_scale,
        seed,
        ground_truth: Some(*params),
        metadata: config.metadata.clone(),
    })
}

fn add_noise(trace: &mut Trace, scale: &[f64], rel: f64, seed: u64) {
    let stream = stream_id(trace);
    trace.noise_sigma = scale
        .iter()
        .map(|s| if rel > 0.0 { rel * s } else { WEIGHT_FLOOR * s.max(WEIGHT_FLOOR) })
        .collect();
    if rel == 0.0 {
        return;
    }
    let samples = trace.samples.clone();
    let z = par::map_slice(&samples, |&s| point_normal(seed, stream, s as u64));
    for ((v, sigma), z) in trace.values.iter_mut().zip(&trace.noise_sigma).zip(z) {
        *v += sigma * z;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::StageKind;

    fn small_config(rel: f64) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.relative_noise = rel;
        cfg.scan.n_samples = 401;
        let axis = crate::forward::ScanAxis::spanning(401, -6.0, 6.0);
        for c in [&mut cfg.cavity1, &mut cfg.cavity2] {
            c.center_sample = axis.center_sample;
            c.samples_per_bandwidth = axis.samples_per_bandwidth;
        }
        cfg
    }

    #[test]
    fn point_normal_is_position_keyed() {
        let a: Vec<f64> = (0..50).map(|i| point_normal(7, 3, i)).collect();
        let b: Vec<f64> = (0..50).rev().map(|i| point_normal(7, 3, i)).collect();
        assert!(a.iter().eq(b.iter().rev()));
        assert_ne!(point_normal(7, 3, 0), point_normal(7, 4, 0));
        assert_ne!(point_normal(7, 3, 0), point_normal(8, 3, 0));
        let mean = (0..20_000).map(|i| point_normal(1, 0, i)).sum::<f64>() / 20_000.0;
        let var = (0..20_000).map(|i| point_normal(1, 0, i).powi(2)).sum::<f64>() / 20_000.0;
        assert!(mean.abs() < 0.03 && (var - 1.0).abs() < 0.05, "{mean} {var}");
    }

    #[test]
    fn noiseless_equals_analytic() {
        let cfg = small_config(0.0);
        let p = cfg.ground_truth().unwrap();
        let run = synthesize_run(&p, &cfg, 3).unwrap();
        assert_eq!(run.traces.len(), 10);
        let stage = &cfg.stages().unwrap()[0];
        let v1 = variance_spectrum(&p, Beam::One, stage, &cfg.cavities()[0], 3.125).unwrap();
        assert_eq!(run.trace(StageKind::BothScanned, Channel::Var1).unwrap().values, v1.values);
        assert!(run.traces.iter().all(|t| t.noise_sigma.iter().all(|s| *s > 0.0)));
    }

    #[test]
    fn same_seed_same_data() {
        let cfg = small_config(0.01);
        let p = cfg.ground_truth().unwrap();
        let a = synthesize_run(&p, &cfg, 11).unwrap();
        let b = par::sequential(|| synthesize_run(&p, &cfg, 11).unwrap());
        assert_eq!(a, b);
        let c = synthesize_run(&p, &cfg, 12).unwrap();
        assert_ne!(a.traces[2].values, c.traces[2].values);
    }

    #[test]
    fn noise_averages_to_analytic() {
        let cfg = small_config(0.01);
        let p = cfg.ground_truth().unwrap();
        let clean = synthesize_run(&p, &small_config(0.0), 0).unwrap();
        let n = 200;
        let mut sums = vec![vec![0.0; 401]; clean.traces.len()];
        for seed in 0..n {
            let run = synthesize_run(&p, &cfg, seed).unwrap();
            for (acc, t) in sums.iter_mut().zip(&run.traces) {
                for (a, v) in acc.iter_mut().zip(&t.values) {
                    *a += v / n as f64;
                }
            }
        }
        let noisy = synthesize_run(&p, &cfg, 0).unwrap();
        for ((acc, t), tn) in sums.iter().zip(&clean.traces).zip(&noisy.traces) {
            for ((m, (truth, _)), s) in acc.iter().zip(t.values.iter().zip(&t.noise_sigma)).zip(&tn.noise_sigma) {
                let se = s / (n as f64).sqrt();
                assert!((m - truth).abs() < 5.0 * se, "{:?} {m} {truth}", t.channel);
            }
        }
    }

    /// Centers of the regions where the discrete curvature exceeds 10 % of
    /// its maximum; regions closer than one bandwidth are merged.
    fn feature_centers(detunings: &[f64], values: &[f64]) -> Vec<f64> {
        let curv: Vec<f64> = values.windows(3).map(|w| (w[0] - 2.0 * w[1] + w[2]).abs()).collect();
        let max = curv.iter().cloned().fold(0.0, f64::max);
        let mut clusters: Vec<Vec<f64>> = Vec::new();
        for (i, c) in curv.iter().enumerate() {
            if *c > 0.1 * max {
                let d = detunings[i + 1];
                match clusters.last_mut() {
                    Some(cl) if d - cl[cl.len() - 1] < 1.0 => cl.push(d),
                    _ => clusters.push(vec![d]),
                }
            }
        }
        clusters.iter().map(|c| 0.5 * (c[0] + c[c.len() - 1])).collect()
    }

    #[test]
    fn trace_topology() {
        let cfg = RunConfig {
            relative_noise: 0.0,
            ..RunConfig::default()
        };
        let p = cfg.ground_truth().unwrap();
        let run = synthesize_run(&p, &cfg, 0).unwrap();
        let omega = cfg.analysis.freq_bandwidths;
        let near = |got: Vec<f64>, want: &[f64]| {
            assert_eq!(got.len(), want.len(), "{got:?}");
            for (g, w) in got.iter().zip(want) {
                assert!((g - w).abs() < 0.5, "{got:?}");
            }
        };
        // three resonance crossings: the carrier and both sidebands
        for ch in [Channel::Var1, Channel::Var2, Channel::CorrRe] {
            let t = run.trace(StageKind::BothScanned, ch).unwrap();
            near(feature_centers(&t.detunings, &t.values), &[-omega, 0.0, omega]);
        }
        let dc = run.trace(StageKind::BothScanned, Channel::Dc1).unwrap();
        near(feature_centers(&dc.detunings, &dc.values), &[0.0]);
        // the parked cavity's variance is flat across the other's scan
        let stage = &cfg.stages().unwrap()[1];
        let parked = variance_spectrum(&p, Beam::Two, stage, &cfg.cavities()[1], omega).unwrap();
        let spread = parked.values.iter().fold(0.0f64, |m, v| m.max((v - parked.values[0]).abs()));
        assert!(spread < 1e-12);
    }
}
