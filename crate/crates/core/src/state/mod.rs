//! Two-beam, four-sideband Gaussian states.
//!
//! Quadratures are in shot-noise units: vacuum variance is 1 and
//! `[p, q] = 2i`. Two quadrature bases are used:
//!
//! * [`Basis::SymAntisym`]: `(p1s, q1s, p2s, q2s, p1a, q1a, p2a, q2a)` with
//!   `p_s = (p_{+Ω} + p_{-Ω})/√2` and `p_a = (p_{+Ω} - p_{-Ω})/√2`.
//! * [`Basis::Sideband`]: `(p_{a,-Ω}, q_{a,-Ω}, p_{a,+Ω}, q_{a,+Ω},
//!   p_{b,-Ω}, q_{b,-Ω}, p_{b,+Ω}, q_{b,+Ω})`.
//!
//! Beam 1 is carrier `a`, beam 2 is carrier `b`.

mod recipe;
mod symplectic;

use nalgebra::SMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use recipe::{make_state, StateRecipe};
pub use symplectic::{
    clamp_to_physical, enumerate_bipartitions, is_physical, partial_transpose,
    symplectic_eigenvalues, symplectic_form, Bipartition, Physicality, SidebandMode,
};

pub type Matrix8 = SMatrix<f64, 8, 8>;

/// Names of the sixteen covariance parameters, in design-matrix column order.
pub const PARAM_NAMES: [&str; 16] = [
    "alpha1", "beta1", "gamma1", "delta1", "alpha2", "beta2", "gamma2", "delta2", "mu", "nu",
    "epsilon", "xi", "eta", "kappa", "lambda", "tau",
];

/// The sixteen independent second moments of a stationary two-beam state,
/// in the symmetric/antisymmetric basis.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SixteenParams {
    pub alpha1: f64,
    pub beta1: f64,
    pub gamma1: f64,
    pub delta1: f64,
    pub alpha2: f64,
    pub beta2: f64,
    pub gamma2: f64,
    pub delta2: f64,
    pub mu: f64,
    pub nu: f64,
    pub epsilon: f64,
    pub xi: f64,
    pub eta: f64,
    pub kappa: f64,
    pub lambda: f64,
    pub tau: f64,
}

impl SixteenParams {
    pub fn vacuum() -> Self {
        Self {
            alpha1: 1.0,
            beta1: 1.0,
            alpha2: 1.0,
            beta2: 1.0,
            ..Self::default()
        }
    }

    pub fn to_array(&self) -> [f64; 16] {
        [
            self.alpha1,
            self.beta1,
            self.gamma1,
            self.delta1,
            self.alpha2,
            self.beta2,
            self.gamma2,
            self.delta2,
            self.mu,
            self.nu,
            self.epsilon,
            self.xi,
            self.eta,
            self.kappa,
            self.lambda,
            self.tau,
        ]
    }

    pub fn from_array(a: [f64; 16]) -> Self {
        Self {
            alpha1: a[0],
            beta1: a[1],
            gamma1: a[2],
            delta1: a[3],
            alpha2: a[4],
            beta2: a[5],
            gamma2: a[6],
            delta2: a[7],
            mu: a[8],
            nu: a[9],
            epsilon: a[10],
            xi: a[11],
            eta: a[12],
            kappa: a[13],
            lambda: a[14],
            tau: a[15],
        }
    }

    /// `(alpha, beta, gamma, delta)` of one beam (1 or 2).
    pub fn beam(&self, beam: Beam) -> [f64; 4] {
        match beam {
            Beam::One => [self.alpha1, self.beta1, self.gamma1, self.delta1],
            Beam::Two => [self.alpha2, self.beta2, self.gamma2, self.delta2],
        }
    }

    /// The eight cross-beam moments `(mu, nu, epsilon, xi, eta, kappa, lambda, tau)`.
    pub fn cross(&self) -> [f64; 8] {
        [
            self.mu,
            self.nu,
            self.epsilon,
            self.xi,
            self.eta,
            self.kappa,
            self.lambda,
            self.tau,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Beam {
    One,
    Two,
}

impl Beam {
    pub fn index(self) -> usize {
        match self {
            Beam::One => 0,
            Beam::Two => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    SymAntisym,
    Sideband,
}

impl Basis {
    pub fn mode_order(self) -> [&'static str; 8] {
        match self {
            Basis::SymAntisym => ["p1s", "q1s", "p2s", "q2s", "p1a", "q1a", "p2a", "q2a"],
            Basis::Sideband => [
                "p_a-", "q_a-", "p_a+", "q_a+", "p_b-", "q_b-", "p_b+", "q_b+",
            ],
        }
    }
}

/// An 8×8 real symmetric covariance matrix tagged with its basis.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    entries: Matrix8,
    basis: Basis,
}

impl CovarianceMatrix {
    /// Wraps `entries`, symmetrising them as `(V + Vᵀ)/2`.
    pub fn new(entries: Matrix8, basis: Basis) -> Self {
        let entries = (entries + entries.transpose()) * 0.5;
        Self { entries, basis }
    }

    pub fn identity(basis: Basis) -> Self {
        Self {
            entries: Matrix8::identity(),
            basis,
        }
    }

    pub fn entries(&self) -> &Matrix8 {
        &self.entries
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            entries: self.entries * factor,
            basis: self.basis,
        }
    }

    pub(crate) fn expect_basis(&self, expected: Basis) -> Result<()> {
        if self.basis == expected {
            Ok(())
        } else {
            Err(Error::BasisMismatch {
                expected,
                found: self.basis,
            })
        }
    }

    /// Plain-data form used for serialization.
    pub fn to_document(&self) -> CovarianceDocument {
        CovarianceDocument {
            basis: self.basis,
            mode_order: self
                .basis
                .mode_order()
                .iter()
                .map(|s| s.to_string())
                .collect(),
            entries: (0..8)
                .map(|i| (0..8).map(|j| self.entries[(i, j)]).collect())
                .collect(),
        }
    }

    pub fn from_document(doc: &CovarianceDocument) -> Result<Self> {
        let bad = |reason: &str| Error::Format {
            path: "covariance document".into(),
            reason: reason.into(),
        };
        let expected: Vec<String> = doc
            .basis
            .mode_order()
            .iter()
            .map(|s| s.to_string())
            .collect();
        if doc.mode_order != expected {
            return Err(bad("mode_order does not match basis"));
        }
        if doc.entries.len() != 8 || doc.entries.iter().any(|r| r.len() != 8) {
            return Err(bad("entries must be 8 rows of 8 values"));
        }
        let m = Matrix8::from_fn(|i, j| doc.entries[i][j]);
        if m != m.transpose() {
            return Err(bad("entries are not symmetric"));
        }
        Ok(Self {
            entries: m,
            basis: doc.basis,
        })
    }
}

/// Serialized covariance matrix: basis tag, mode order and row-major entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceDocument {
    pub basis: Basis,
    pub mode_order: Vec<String>,
    pub entries: Vec<Vec<f64>>,
}

/// Assembles the 8×8 symmetric/antisymmetric covariance matrix
///
/// ```text
///       ⎛ V_s   C  ⎞
///   V = ⎝ Cᵀ   V_a ⎠
/// ```
///
/// with `V_s = [[α¹,γ¹,μ,ε],[γ¹,β¹,ξ,ν],[μ,ξ,α²,γ²],[ε,ν,γ²,β²]]`,
/// `C = [[δ¹,0,κ,-η],[0,δ¹,τ,-λ],[-λ,η,δ²,0],[-τ,κ,0,δ²]]` and
/// `V_a = [[β¹,-γ¹,ν,-ξ],[-γ¹,α¹,-ε,μ],[ν,-ε,β²,-γ²],[-ξ,μ,-γ²,α²]]`.
pub fn build_sa_covariance(p: &SixteenParams) -> CovarianceMatrix {
    let vs = [
        [p.alpha1, p.gamma1, p.mu, p.epsilon],
        [p.gamma1, p.beta1, p.xi, p.nu],
        [p.mu, p.xi, p.alpha2, p.gamma2],
        [p.epsilon, p.nu, p.gamma2, p.beta2],
    ];
    let c = [
        [p.delta1, 0.0, p.kappa, -p.eta],
        [0.0, p.delta1, p.tau, -p.lambda],
        [-p.lambda, p.eta, p.delta2, 0.0],
        [-p.tau, p.kappa, 0.0, p.delta2],
    ];
    let va = [
        [p.beta1, -p.gamma1, p.nu, -p.xi],
        [-p.gamma1, p.alpha1, -p.epsilon, p.mu],
        [p.nu, -p.epsilon, p.beta2, -p.gamma2],
        [-p.xi, p.mu, -p.gamma2, p.alpha2],
    ];
    let entries = Matrix8::from_fn(|i, j| match (i < 4, j < 4) {
        (true, true) => vs[i][j],
        (true, false) => c[i][j - 4],
        (false, true) => c[j][i - 4],
        (false, false) => va[i - 4][j - 4],
    });
    CovarianceMatrix {
        entries,
        basis: Basis::SymAntisym,
    }
}

/// Signed slots of each parameter in the symmetric/antisymmetric matrix
/// (upper triangle only).
const TEMPLATE_SLOTS: [&[(usize, usize, f64)]; 16] = [
    &[(0, 0, 1.0), (5, 5, 1.0)],
    &[(1, 1, 1.0), (4, 4, 1.0)],
    &[(0, 1, 1.0), (4, 5, -1.0)],
    &[(0, 4, 1.0), (1, 5, 1.0)],
    &[(2, 2, 1.0), (7, 7, 1.0)],
    &[(3, 3, 1.0), (6, 6, 1.0)],
    &[(2, 3, 1.0), (6, 7, -1.0)],
    &[(2, 6, 1.0), (3, 7, 1.0)],
    &[(0, 2, 1.0), (5, 7, 1.0)],
    &[(1, 3, 1.0), (4, 6, 1.0)],
    &[(0, 3, 1.0), (5, 6, -1.0)],
    &[(1, 2, 1.0), (4, 7, -1.0)],
    &[(0, 7, -1.0), (2, 5, 1.0)],
    &[(0, 6, 1.0), (3, 5, 1.0)],
    &[(1, 7, -1.0), (2, 4, -1.0)],
    &[(1, 6, 1.0), (3, 4, -1.0)],
];

impl SixteenParams {
    /// Least-squares projection of a symmetric/antisymmetric matrix onto the
    /// sixteen-parameter template: each parameter is the mean of its signed
    /// slots. Exact when [`template_residual`] is zero.
    pub fn from_sa_covariance(v: &CovarianceMatrix) -> Result<Self> {
        v.expect_basis(Basis::SymAntisym)?;
        let mut out = [0.0; 16];
        for (k, slots) in TEMPLATE_SLOTS.iter().enumerate() {
            out[k] = slots.iter().map(|&(i, j, s)| s * v.get(i, j)).sum::<f64>()
                / slots.len() as f64;
        }
        Ok(Self::from_array(out))
    }
}

/// Largest absolute deviation between `v` and the template matrix rebuilt
/// from its projected parameters.
pub fn template_residual(v: &CovarianceMatrix) -> Result<f64> {
    let p = SixteenParams::from_sa_covariance(v)?;
    let rebuilt = build_sa_covariance(&p);
    Ok((v.entries - rebuilt.entries).abs().max())
}

/// Orthogonal map taking symmetric/antisymmetric quadratures to sideband
/// quadratures: `x_sb = T · x_sa`.
pub fn sideband_transform() -> Matrix8 {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut t = Matrix8::zeros();
    for beam in 0..2 {
        for quad in 0..2 {
            let s = 2 * beam + quad;
            let a = 4 + 2 * beam + quad;
            let minus = 4 * beam + quad;
            let plus = 4 * beam + 2 + quad;
            t[(plus, s)] = h;
            t[(plus, a)] = h;
            t[(minus, s)] = h;
            t[(minus, a)] = -h;
        }
    }
    t
}

pub fn to_sideband_basis(v: &CovarianceMatrix) -> Result<CovarianceMatrix> {
    v.expect_basis(Basis::SymAntisym)?;
    let t = sideband_transform();
    Ok(CovarianceMatrix::new(
        t * v.entries * t.transpose(),
        Basis::Sideband,
    ))
}

pub fn to_sym_antisym_basis(v: &CovarianceMatrix) -> Result<CovarianceMatrix> {
    v.expect_basis(Basis::Sideband)?;
    let t = sideband_transform();
    Ok(CovarianceMatrix::new(
        t.transpose() * v.entries * t,
        Basis::SymAntisym,
    ))
}
