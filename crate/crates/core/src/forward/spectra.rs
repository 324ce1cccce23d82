use super::{Channel, ScanStage, Trace};
use crate::error::Result;
use crate::par;
use crate::resonator::{
    cross_coeffs, reflection_amplitude, single_beam_coeffs, CavityParams,
};
use crate::state::{Beam, SixteenParams};

/// Single-beam resonator-detection spectrum
/// `S(Δ) = cα α + cβ β + cγ γ + cδ δ + cv` over the stage grid of `beam`.
pub fn variance_spectrum(
    params: &SixteenParams,
    beam: Beam,
    stage: &ScanStage,
    cavity: &CavityParams,
    analysis_freq: f64,
) -> Result<Trace> {
    let moments = params.beam(beam);
    let detunings = stage.detunings(beam).to_vec();
    let values = par::map_slice(&detunings, |&delta| -> Result<f64> {
        let c = single_beam_coeffs(delta, analysis_freq, cavity)?;
        Ok(c.as_array()
            .iter()
            .zip(moments.iter())
            .map(|(c, m)| c * m)
            .sum::<f64>()
            + c.c_v)
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    Ok(Trace {
        stage: stage.kind,
        channel: Channel::var(beam),
        samples: stage.samples.clone(),
        noise_sigma: vec![0.0; values.len()],
        detunings,
        values,
    })
}

/// Real and imaginary parts of the two-beam correlation spectrum.
pub fn correlation_spectrum(
    params: &SixteenParams,
    stage: &ScanStage,
    cavities: [&CavityParams; 2],
    analysis_freq: f64,
) -> Result<(Trace, Trace)> {
    let cross = params.cross();
    let pairs = par::map_range(stage.len(), |i| -> Result<(f64, f64)> {
        let k = cross_coeffs(
            stage.detuning1[i],
            cavities[0],
            stage.detuning2[i],
            cavities[1],
            analysis_freq,
        )?;
        let dot = |row: [f64; 8]| row.iter().zip(cross.iter()).map(|(a, b)| a * b).sum::<f64>();
        Ok((dot(k.real_row()), dot(k.imag_row())))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let (re, im): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let make = |channel, values: Vec<f64>| Trace {
        stage: stage.kind,
        channel,
        samples: stage.samples.clone(),
        detunings: stage.scanned_detunings().to_vec(),
        noise_sigma: vec![0.0; values.len()],
        values,
    };
    Ok((make(Channel::CorrRe, re), make(Channel::CorrIm, im)))
}

/// Reflected DC power `P(Δ) = P0 (d + 4Δ²)/(1 + 4Δ²)` on the stage's sample
/// axis for the cavity of `beam`.
pub fn dc_dip(stage: &ScanStage, beam: Beam, cavity: &CavityParams, power_scale: f64) -> Trace {
    let detunings = stage.detunings(beam).to_vec();
    let values: Vec<f64> = detunings
        .iter()
        .map(|&d| power_scale * reflection_amplitude(d, cavity.d).norm_sqr())
        .collect();
    Trace {
        stage: stage.kind,
        channel: Channel::dc(beam),
        samples: stage.samples.clone(),
        noise_sigma: vec![0.0; values.len()],
        detunings,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::StageKind;
    use crate::resonator::FAR_DETUNING;
    use proptest::prelude::*;

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
        let stage = ScanStage::from_grid(StageKind::BothScanned, &grid(201), FAR_DETUNING).unwrap();
        let vac = SixteenParams::vacuum();
        for (beam, cav) in [(Beam::One, &c1), (Beam::Two, &c2)] {
            let t = variance_spectrum(&vac, beam, &stage, cav, 3.125).unwrap();
            assert!(t.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
        }
        let (re, im) = correlation_spectrum(&vac, &stage, [&c1, &c2], 3.125).unwrap();
        assert!(re.values.iter().chain(&im.values).all(|v| *v == 0.0));
    }

    #[test]
    fn parked_cavity_reads_alpha() {
        let [c1, c2] = cavs();
        let p = SixteenParams {
            alpha2: 1.7,
            beta2: 3.1,
            gamma2: 0.4,
            delta2: -0.6,
            ..SixteenParams::vacuum()
        };
        let stage = ScanStage::from_grid(StageKind::OnlyCavity1, &grid(101), FAR_DETUNING).unwrap();
        let t = variance_spectrum(&p, Beam::Two, &stage, &c2, 3.125).unwrap();
        for v in &t.values {
            assert!((v - 1.7).abs() < 1e-3, "{v}");
        }
        let _ = c1;
    }

    #[test]
    fn only_cavity1_depends_on_four_cross_terms() {
        let [c1, c2] = cavs();
        let stage = ScanStage::from_grid(StageKind::OnlyCavity1, &grid(101), FAR_DETUNING).unwrap();
        let base = SixteenParams::vacuum();
        let bumped = SixteenParams {
            epsilon: 0.3,
            kappa: -0.2,
            nu: 0.4,
            tau: 0.1,
            ..base
        };
        let (r0, i0) = correlation_spectrum(&base, &stage, [&c1, &c2], 3.125).unwrap();
        let (r1, i1) = correlation_spectrum(&bumped, &stage, [&c1, &c2], 3.125).unwrap();
        // residual coupling through the parked cavity's |g-| ~ 1e-2
        for (a, b) in r0.values.iter().zip(&r1.values).chain(i0.values.iter().zip(&i1.values)) {
            assert!((a - b).abs() < 0.02);
        }
        let moved = SixteenParams { mu: 0.3, ..base };
        let (r2, _) = correlation_spectrum(&moved, &stage, [&c1, &c2], 3.125).unwrap();
        assert!(r2.values.iter().any(|v| v.abs() > 0.2));
    }

    #[test]
    fn dc_dip_shape() {
        let [c1, _] = cavs();
        let g = vec![-1e4, -0.5, 0.0, 0.5, 1e4];
        let stage = ScanStage::from_grid(StageKind::BothScanned, &g, FAR_DETUNING).unwrap();
        let t = dc_dip(&stage, Beam::One, &c1, 2.0);
        assert!((t.values[2] / 2.0 - 0.38).abs() < 1e-15);
        assert!((t.values[0] - 2.0).abs() < 1e-6);
        // half depth of 1 - |r|² sits at ±0.5
        let half = 1.0 - (1.0 - 0.38) / 2.0;
        assert!((t.values[1] / 2.0 - half).abs() < 1e-15);
        assert!((t.values[3] / 2.0 - half).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn variance_is_affine(a in proptest::array::uniform4(-2.0..2.0f64), b in proptest::array::uniform4(-2.0..2.0f64), delta in -5.0..5.0f64) {
            let [c1, _] = cavs();
            let stage = ScanStage::from_grid(StageKind::BothScanned, &[delta], FAR_DETUNING).unwrap();
            let mk = |x: [f64; 4]| SixteenParams { alpha1: x[0], beta1: x[1], gamma1: x[2], delta1: x[3], ..SixteenParams::default() };
            let sum: [f64; 4] = std::array::from_fn(|k| a[k] + b[k]);
            let f = |x| variance_spectrum(&mk(x), Beam::One, &stage, &c1, 3.125).unwrap().values[0];
            let zero = f([0.0; 4]);
            prop_assert!((f(sum) - (f(a) + f(b) - zero)).abs() < 1e-12);
            let cv = single_beam_coeffs(delta, 3.125, &c1).unwrap().c_v;
            prop_assert!((zero - cv).abs() < 1e-15);
        }
    }
}
