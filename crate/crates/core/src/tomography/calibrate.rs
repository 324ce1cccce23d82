use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{Channel, ScanAxis, Trace};

const MAX_ITERATIONS: usize = 200;

/// DC-derived constants of one cavity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityCalibration {
    pub center_sample: f64,
    pub samples_per_bandwidth: f64,
    pub d: f64,
    pub power_scale: f64,
    pub residual_rms: f64,
    /// Covariance of `(d, center_sample, samples_per_bandwidth)`, scaled by
    /// the reduced chi-square of the dip fit.
    #[serde(default)]
    pub covariance: [[f64; 3]; 3],
}

impl CavityCalibration {
    pub fn axis(&self) -> ScanAxis {
        ScanAxis {
            center_sample: self.center_sample,
            samples_per_bandwidth: self.samples_per_bandwidth,
        }
    }

    pub fn detuning(&self, sample: usize) -> f64 {
        self.axis().detuning(sample as f64)
    }
}

/// `[P0, d, center, width]`
type Theta = Vector4<f64>;

fn model(theta: &Theta, s: f64) -> (f64, Vector4<f64>) {
    let (p0, d, c, w) = (theta[0], theta[1], theta[2], theta[3]);
    let x = (s - c) / w;
    let u = 4.0 * x * x;
    let den = 1.0 + u;
    let shape = (d + u) / den;
    // ∂shape/∂u = (1 - d)/den²
    let ds_du = (1.0 - d) / (den * den);
    let du_dc = -8.0 * x / w;
    let du_dw = -8.0 * x * x / w;
    let grad = Vector4::new(shape, p0 / den, p0 * ds_du * du_dc, p0 * ds_du * du_dw);
    (p0 * shape, grad)
}

fn initial_guess(trace: &Trace) -> Result<Theta> {
    let v = &trace.values;
    let s = &trace.samples;
    let (imin, &vmin) = v
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
        .ok_or_else(|| Error::NoDipFound("empty trace".into()))?;
    let mut sorted = v.clone();
    sorted.sort_by(f64::total_cmp);
    let baseline = sorted[(sorted.len() * 9) / 10];
    let depth = baseline - vmin;
    let sigma = trace.noise_sigma[imin].abs();
    if !(depth > 0.0) || depth < 5.0 * sigma {
        return Err(Error::NoDipFound(format!(
            "depth {depth:.3e} below 5σ = {:.3e}",
            5.0 * sigma
        )));
    }
    let half = vmin + 0.5 * depth;
    let left = (0..imin).rev().find(|&i| v[i] >= half);
    let right = (imin + 1..v.len()).find(|&i| v[i] >= half);
    let (Some(l), Some(r)) = (left, right) else {
        return Err(Error::NoDipFound("no half-depth crossings".into()));
    };
    let cross = |a: usize, b: usize| {
        let t = (half - v[a]) / (v[b] - v[a]);
        s[a] as f64 + t * (s[b] as f64 - s[a] as f64)
    };
    let width = cross(r - 1, r) - cross(l + 1, l);
    if !(width > 0.0) {
        return Err(Error::NoDipFound("degenerate dip width".into()));
    }
    Ok(Theta::new(
        baseline,
        (vmin / baseline).clamp(0.0, 0.99),
        s[imin] as f64,
        width,
    ))
}

/// Fits `P(s) = P0 (d + 4Δ²)/(1 + 4Δ²)`, `Δ = (s - center)/width`, to a DC
/// trace by Levenberg–Marquardt with weights `1/σ²`.
pub fn calibrate_dc(trace: &Trace) -> Result<CavityCalibration> {
    if !matches!(trace.channel, Channel::Dc1 | Channel::Dc2) {
        return Err(Error::IncompleteDataset(format!(
            "calibration needs a DC trace, got {}",
            trace.channel.tag()
        )));
    }
    trace.check_lengths()?;
    let mut theta = initial_guess(trace)?;
    let weights: Vec<f64> = trace
        .noise_sigma
        .iter()
        .map(|s| if *s > 0.0 { 1.0 / (s * s) } else { 1.0 })
        .collect();

    let chi2 = |th: &Theta| -> f64 {
        trace
            .samples
            .iter()
            .zip(&trace.values)
            .zip(&weights)
            .map(|((&s, &v), &w)| w * (v - model(th, s as f64).0).powi(2))
            .sum()
    };

    let mut lambda = 1e-3;
    let mut current = chi2(&theta);
    let mut converged = false;
    for _ in 0..MAX_ITERATIONS {
        let mut jtj = Matrix4::zeros();
        let mut jtr = Vector4::zeros();
        for ((&s, &v), &w) in trace.samples.iter().zip(&trace.values).zip(&weights) {
            let (m, g) = model(&theta, s as f64);
            jtj += w * g * g.transpose();
            jtr += w * (v - m) * g;
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut a = jtj;
            for k in 0..4 {
                a[(k, k)] *= 1.0 + lambda;
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = theta + step;
            if trial[3] <= 0.0 || trial[0] <= 0.0 || !(0.0..1.0).contains(&trial[1]) {
                lambda *= 10.0;
                continue;
            }
            let next = chi2(&trial);
            if next <= current {
                let rel_step = step
                    .iter()
                    .zip(trial.iter())
                    .map(|(d, t)| (d / t.abs().max(1e-12)).abs())
                    .fold(0.0, f64::max);
                let rel_chi = (current - next) / current.max(f64::MIN_POSITIVE);
                theta = trial;
                current = next;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if rel_step < 1e-12 || rel_chi < 1e-15 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if converged || !improved {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::CalibrationDiverged {
            iterations: MAX_ITERATIONS,
        });
    }

    let mut jtj = Matrix4::zeros();
    for (&s, &w) in trace.samples.iter().zip(&weights) {
        let g = model(&theta, s as f64).1;
        jtj += w * g * g.transpose();
    }
    let dof = trace.len().saturating_sub(4).max(1) as f64;
    let cov = jtj
        .try_inverse()
        .map(|m| m * (current / dof))
        .unwrap_or_else(|| Matrix4::from_element(f64::INFINITY));

    let n = trace.len() as f64;
    let rss: f64 = trace
        .samples
        .iter()
        .zip(&trace.values)
        .map(|(&s, &v)| (v - model(&theta, s as f64).0).powi(2))
        .sum();
    Ok(CavityCalibration {
        power_scale: theta[0],
        d: theta[1],
        center_sample: theta[2],
        samples_per_bandwidth: theta[3],
        residual_rms: (rss / n).sqrt(),
        covariance: std::array::from_fn(|i| std::array::from_fn(|j| cov[(i + 1, j + 1)])),
    })
}
