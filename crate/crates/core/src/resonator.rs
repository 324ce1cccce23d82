//! Analysis-cavity response in reflection.
//!
//! Detunings and analysis frequencies are always in units of the cavity
//! bandwidth.

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Detuning (bandwidths) at which a cavity counts as parked off resonance.
pub const FAR_DETUNING: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    /// Reflected power fraction at exact resonance, `|r(0)|²`.
    pub d: f64,
    /// Cavity bandwidth in Hz.
    pub bandwidth_hz: f64,
    pub label: String,
}

impl CavityParams {
    pub fn new(label: impl Into<String>, d: f64, bandwidth_hz: f64) -> Result<Self> {
        let c = Self {
            d,
            bandwidth_hz,
            label: label.into(),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.d) {
            return Err(Error::config(
                format!("{}.d", self.label),
                format!("{} outside [0, 1)", self.d),
            ));
        }
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return Err(Error::config(
                format!("{}.bandwidth_hz", self.label),
                "must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectionResponse {
    pub r: C64,
    /// Vacuum-port transmission, taken real and non-negative.
    pub t: C64,
    /// Carrier phase `arg r`.
    pub theta: f64,
}

/// `r(Δ) = -(√d + 2iΔ) / (1 - 2iΔ)`.
#[inline]
pub fn reflection_amplitude(detuning: f64, d: f64) -> C64 {
    -C64::new(d.sqrt(), 2.0 * detuning) / C64::new(1.0, -2.0 * detuning)
}

pub fn reflection(detuning: f64, cavity: &CavityParams) -> ReflectionResponse {
    let r = reflection_amplitude(detuning, cavity.d);
    let t = (1.0 - r.norm_sqr()).max(0.0).sqrt();
    ReflectionResponse {
        r,
        t: C64::new(t, 0.0),
        theta: r.arg(),
    }
}

/// `g± = X± + iY±`, the weights of the symmetric/antisymmetric quadratures
/// in the demodulated photocurrent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainPair {
    pub g_plus: C64,
    pub g_minus: C64,
}

impl GainPair {
    pub fn x_plus(&self) -> f64 {
        self.g_plus.re
    }
    pub fn y_plus(&self) -> f64 {
        self.g_plus.im
    }
    pub fn x_minus(&self) -> f64 {
        self.g_minus.re
    }
    pub fn y_minus(&self) -> f64 {
        self.g_minus.im
    }
}

/// ```text
/// g+ = ½ ( e* r(Δ+Ω) + e r*(Δ-Ω) )
/// g- = i/2 ( e* r(Δ+Ω) - e r*(Δ-Ω) ),   e = r(Δ)/|r(Δ)|
/// ```
pub fn gain_pair(detuning: f64, analysis_freq: f64, cavity: &CavityParams) -> Result<GainPair> {
    let carrier = reflection_amplitude(detuning, cavity.d);
    let norm = carrier.norm();
    if norm == 0.0 {
        return Err(Error::DegeneratePhase);
    }
    let e = carrier / norm;
    let upper = e.conj() * reflection_amplitude(detuning + analysis_freq, cavity.d);
    let lower = e * reflection_amplitude(detuning - analysis_freq, cavity.d).conj();
    Ok(GainPair {
        g_plus: 0.5 * (upper + lower),
        g_minus: C64::new(0.0, 0.5) * (upper - lower),
    })
}

/// Coefficients of the single-beam spectrum
/// `S = cα·α + cβ·β + cγ·γ + cδ·δ + cv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleBeamCoeffs {
    pub c_alpha: f64,
    pub c_beta: f64,
    pub c_gamma: f64,
    pub c_delta: f64,
    pub c_v: f64,
}

impl SingleBeamCoeffs {
    pub fn from_gains(g: &GainPair) -> Self {
        let c_alpha = g.g_plus.norm_sqr();
        let c_beta = g.g_minus.norm_sqr();
        let gd = 2.0 * g.g_plus.conj() * g.g_minus;
        Self {
            c_alpha,
            c_beta,
            c_gamma: gd.re,
            c_delta: gd.im,
            c_v: 1.0 - c_alpha - c_beta,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.c_alpha, self.c_beta, self.c_gamma, self.c_delta]
    }
}

pub fn single_beam_coeffs(
    detuning: f64,
    analysis_freq: f64,
    cavity: &CavityParams,
) -> Result<SingleBeamCoeffs> {
    Ok(SingleBeamCoeffs::from_gains(&gain_pair(
        detuning,
        analysis_freq,
        cavity,
    )?))
}

/// Coefficients of the two-beam correlation spectrum:
/// `cμ+icη = g+₁* g+₂`, `cε+icκ = g+₁* g-₂`, `cξ+icλ = g-₁* g+₂`,
/// `cν+icτ = g-₁* g-₂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossCoeffs {
    pub c_mu: f64,
    pub c_eta: f64,
    pub c_epsilon: f64,
    pub c_kappa: f64,
    pub c_xi: f64,
    pub c_lambda: f64,
    pub c_nu: f64,
    pub c_tau: f64,
}

impl CrossCoeffs {
    pub fn from_gains(g1: &GainPair, g2: &GainPair) -> Self {
        let mu = g1.g_plus.conj() * g2.g_plus;
        let eps = g1.g_plus.conj() * g2.g_minus;
        let xi = g1.g_minus.conj() * g2.g_plus;
        let nu = g1.g_minus.conj() * g2.g_minus;
        Self {
            c_mu: mu.re,
            c_eta: mu.im,
            c_epsilon: eps.re,
            c_kappa: eps.im,
            c_xi: xi.re,
            c_lambda: xi.im,
            c_nu: nu.re,
            c_tau: nu.im,
        }
    }

    /// Real-part row over `(μ, ν, ε, ξ, η, κ, λ, τ)`.
    pub fn real_row(&self) -> [f64; 8] {
        [
            self.c_mu,
            self.c_nu,
            self.c_epsilon,
            self.c_xi,
            self.c_eta,
            self.c_kappa,
            self.c_lambda,
            self.c_tau,
        ]
    }

    /// Imaginary-part row over `(μ, ν, ε, ξ, η, κ, λ, τ)`:
    /// `cμη - cημ + cεκ - cκε + cξλ - cλξ + cντ - cτν`.
    pub fn imag_row(&self) -> [f64; 8] {
        [
            -self.c_eta,
            -self.c_tau,
            -self.c_kappa,
            -self.c_lambda,
            self.c_mu,
            self.c_epsilon,
            self.c_xi,
            self.c_nu,
        ]
    }
}

pub fn cross_coeffs(
    detuning1: f64,
    cavity1: &CavityParams,
    detuning2: f64,
    cavity2: &CavityParams,
    analysis_freq: f64,
) -> Result<CrossCoeffs> {
    let g1 = gain_pair(detuning1, analysis_freq, cavity1)?;
    let g2 = gain_pair(detuning2, analysis_freq, cavity2)?;
    Ok(CrossCoeffs::from_gains(&g1, &g2))
}
