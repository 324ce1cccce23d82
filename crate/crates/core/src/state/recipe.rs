use serde::{Deserialize, Serialize};

use super::{to_sym_antisym_basis, Basis, CovarianceMatrix, Matrix8, SixteenParams};
use crate::error::{Error, Result};

/// Ground-truth state generator: two independent two-mode squeezers acting on
/// `(a+, b-)` and `(a-, b+)`, followed by per-beam phase rotation and loss.
///
/// The optional local squeezers correlate the two sidebands of one beam
/// (`a- ↔ a+`, `b- ↔ b+`) before the cross-beam squeezing; their angle sets
/// how much of the correlation lands in `gamma` rather than `alpha/beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateRecipe {
    /// Squeezing of the inner pair `(a+, b-)`.
    pub r_inner: f64,
    /// Squeezing of the outer pair `(a-, b+)`.
    pub r_outer: f64,
    pub efficiency_a: f64,
    pub efficiency_b: f64,
    /// Rotation (radians) applied to both sidebands of beam a.
    #[serde(default)]
    pub phase_a: f64,
    #[serde(default)]
    pub phase_b: f64,
    #[serde(default)]
    pub local_r_a: f64,
    #[serde(default)]
    pub local_r_b: f64,
    #[serde(default)]
    pub local_angle_a: f64,
    #[serde(default)]
    pub local_angle_b: f64,
}

impl Default for StateRecipe {
    fn default() -> Self {
        Self {
            r_inner: 0.0,
            r_outer: 0.0,
            efficiency_a: 1.0,
            efficiency_b: 1.0,
            phase_a: 0.0,
            phase_b: 0.0,
            local_r_a: 0.0,
            local_r_b: 0.0,
            local_angle_a: 0.0,
            local_angle_b: 0.0,
        }
    }
}

impl StateRecipe {
    pub fn dual_tms(r: f64, efficiency: f64) -> Self {
        Self {
            r_inner: r,
            r_outer: r,
            efficiency_a: efficiency,
            efficiency_b: efficiency,
            ..Self::default()
        }
    }

    /// Symmetric recipe whose Duan variances are exactly `var_p_minus` and
    /// `var_q_plus` (symmetric-quadrature convention) after loss `efficiency`.
    ///
    /// Both pairs share one squeezing `r` and both beams share one local
    /// squeezer, which makes `p₋ → e^{-r} p₋` and `q₊ → e^{-r} q₊` exact, so
    /// the lossless variances are `e^{-2r} e^{∓2 r_local}`.
    pub fn for_duan_target(var_p_minus: f64, var_q_plus: f64, efficiency: f64) -> Result<Self> {
        if !(efficiency > 0.0 && efficiency <= 1.0) {
            return Err(Error::InvalidRecipe(format!(
                "efficiency {efficiency} outside (0, 1]"
            )));
        }
        let vp = (var_p_minus - (1.0 - efficiency)) / efficiency;
        let vq = (var_q_plus - (1.0 - efficiency)) / efficiency;
        if vp <= 0.0 || vq <= 0.0 || vp * vq > 1.0 {
            return Err(Error::InvalidRecipe(format!(
                "Duan target ({var_p_minus}, {var_q_plus}) unreachable at efficiency {efficiency}"
            )));
        }
        let r = -0.25 * (vp * vq).ln();
        let local = 0.25 * (vq / vp).ln();
        let angle = if local > 0.0 { std::f64::consts::PI } else { 0.0 };
        Ok(Self {
            r_inner: r,
            r_outer: r,
            efficiency_a: efficiency,
            efficiency_b: efficiency,
            local_r_a: local.abs(),
            local_r_b: local.abs(),
            local_angle_a: angle,
            local_angle_b: angle,
            ..Self::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        for (name, e) in [("efficiency_a", self.efficiency_a), ("efficiency_b", self.efficiency_b)] {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::InvalidRecipe(format!("{name} = {e} outside [0, 1]")));
            }
        }
        for (name, r) in [
            ("r_inner", self.r_inner),
            ("r_outer", self.r_outer),
            ("local_r_a", self.local_r_a),
            ("local_r_b", self.local_r_b),
        ] {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::InvalidRecipe(format!("{name} = {r} must be >= 0")));
            }
        }
        for (name, x) in [
            ("phase_a", self.phase_a),
            ("phase_b", self.phase_b),
            ("local_angle_a", self.local_angle_a),
            ("local_angle_b", self.local_angle_b),
        ] {
            if !x.is_finite() {
                return Err(Error::InvalidRecipe(format!("{name} is not finite")));
            }
        }
        Ok(())
    }

    /// Covariance matrix in the sideband basis.
    pub fn sideband_covariance(&self) -> Result<CovarianceMatrix> {
        self.validate()?;
        // modes: 0 = a-, 1 = a+, 2 = b-, 3 = b+
        let local = rotation(1, self.local_angle_a)
            * two_mode_squeezer(0, 1, self.local_r_a)
            * rotation(3, self.local_angle_b)
            * two_mode_squeezer(2, 3, self.local_r_b);
        let cross = two_mode_squeezer(1, 2, self.r_inner) * two_mode_squeezer(0, 3, self.r_outer);
        let phases = rotation(0, self.phase_a)
            * rotation(1, self.phase_a)
            * rotation(2, self.phase_b)
            * rotation(3, self.phase_b);
        let s = phases * cross * local;
        let pure = s * s.transpose();

        let eff = |i: usize| {
            if i < 4 {
                self.efficiency_a
            } else {
                self.efficiency_b
            }
        };
        let mixed = Matrix8::from_fn(|i, j| {
            let (ei, ej) = (eff(i), eff(j));
            let loss = if i == j { 1.0 - ei } else { 0.0 };
            (ei * ej).sqrt() * pure[(i, j)] + loss
        });
        Ok(CovarianceMatrix::new(mixed, Basis::Sideband))
    }
}

/// Builds the recipe state and returns its sixteen parameters.
pub fn make_state(recipe: &StateRecipe) -> Result<SixteenParams> {
    let sa = to_sym_antisym_basis(&recipe.sideband_covariance()?)?;
    SixteenParams::from_sa_covariance(&sa)
}

fn two_mode_squeezer(i: usize, j: usize, r: f64) -> Matrix8 {
    let mut s = Matrix8::identity();
    let (c, sh) = (r.cosh(), r.sinh());
    for k in [i, j] {
        s[(2 * k, 2 * k)] = c;
        s[(2 * k + 1, 2 * k + 1)] = c;
    }
    s[(2 * i, 2 * j)] = sh;
    s[(2 * j, 2 * i)] = sh;
    s[(2 * i + 1, 2 * j + 1)] = -sh;
    s[(2 * j + 1, 2 * i + 1)] = -sh;
    s
}

fn rotation(mode: usize, theta: f64) -> Matrix8 {
    let mut s = Matrix8::identity();
    let (c, sn) = (theta.cos(), theta.sin());
    let (p, q) = (2 * mode, 2 * mode + 1);
    s[(p, p)] = c;
    s[(p, q)] = -sn;
    s[(q, p)] = sn;
    s[(q, q)] = c;
    s
}
