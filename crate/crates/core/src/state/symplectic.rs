use nalgebra::Schur;
use serde::{Deserialize, Serialize};

use super::{Basis, CovarianceMatrix, Matrix8};
use crate::error::{Error, Result};

/// Symplectic form: direct sum of four `[[0, 1], [-1, 0]]` blocks. Both bases
/// keep each `(p, q)` pair adjacent, so the same form serves both.
pub fn symplectic_form() -> Matrix8 {
    let mut j = Matrix8::zeros();
    for k in 0..4 {
        j[(2 * k, 2 * k + 1)] = 1.0;
        j[(2 * k + 1, 2 * k)] = -1.0;
    }
    j
}

const PAIRING_TOL: f64 = 1e-8;

/// Absolute values of the eigenvalues of `iJV`, sorted ascending (8 values).
///
/// For positive definite `V = L Lᵀ` these are the singular values of the
/// antisymmetric `Lᵀ J L`, read off a symmetric eigenproblem. Otherwise a
/// bounded real Schur decomposition of `JV` is used; `NaN`s are returned if
/// it does not converge.
fn abs_spectrum(v: &Matrix8) -> Vec<f64> {
    let j = symplectic_form();
    let mut mags: Vec<f64> = match v.cholesky() {
        Some(chol) => {
            let l = chol.l();
            let a = l.transpose() * j * l;
            (a.transpose() * a)
                .symmetric_eigenvalues()
                .iter()
                .map(|x| x.max(0.0).sqrt())
                .collect()
        }
        None => match Schur::try_new(j * v, f64::EPSILON, 10_000) {
            Some(schur) => schur.complex_eigenvalues().iter().map(|z| z.norm()).collect(),
            None => vec![f64::NAN; 8],
        },
    };
    mags.sort_by(f64::total_cmp);
    mags
}

fn pair_up(mags: &[f64]) -> Result<[f64; 4]> {
    let mut out = [0.0; 4];
    for k in 0..4 {
        let (a, b) = (mags[2 * k], mags[2 * k + 1]);
        if (a - b).abs() > PAIRING_TOL * a.max(b).max(1.0) {
            return Err(Error::SpectrumPairing(mags.to_vec()));
        }
        out[k] = 0.5 * (a + b);
    }
    Ok(out)
}

/// The four symplectic eigenvalues of `v`, ascending.
///
/// The spectrum of `iJV` is `±ν_k`; magnitudes are sorted and paired, and
/// each pair must agree to 1e-8 (relative above 1).
pub fn symplectic_eigenvalues(v: &CovarianceMatrix) -> Result<[f64; 4]> {
    if v.entries().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite);
    }
    pair_up(&abs_spectrum(v.entries()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Physicality {
    pub physical: bool,
    pub min_symplectic: f64,
}

/// Uncertainty-principle check: physical iff `v` is positive definite and its
/// smallest symplectic eigenvalue is at least `1 - tol`.
///
/// The minimum is always reported, even for indefinite input (then it is the
/// smallest `|λ(iJV)|`).
pub fn is_physical(v: &CovarianceMatrix, tol: f64) -> Physicality {
    let positive = v.entries().cholesky().is_some();
    let mags = abs_spectrum(v.entries());
    let min_symplectic = match pair_up(&mags) {
        Ok(nu) => nu[0],
        Err(_) => mags[0],
    };
    Physicality {
        physical: positive && min_symplectic >= 1.0 - tol,
        min_symplectic,
    }
}

/// Adds the smallest isotropic noise `t·I` that makes `v` physical.
///
/// Not part of the default fitting pipeline: fitted matrices are reported as
/// measured and only flagged.
pub fn clamp_to_physical(v: &CovarianceMatrix) -> CovarianceMatrix {
    if is_physical(v, 0.0).physical {
        return v.clone();
    }
    let with = |t: f64| CovarianceMatrix::new(v.entries() + Matrix8::identity() * t, v.basis());
    let (mut lo, mut hi) = (0.0, 1.0);
    while !is_physical(&with(hi), 0.0).physical {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if is_physical(&with(mid), 0.0).physical {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-15 * hi.max(1.0) {
            break;
        }
    }
    with(hi)
}

/// One of the four sideband modes, in [`Basis::Sideband`] order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SidebandMode {
    AMinus,
    APlus,
    BMinus,
    BPlus,
}

impl SidebandMode {
    pub const ALL: [SidebandMode; 4] = [
        SidebandMode::AMinus,
        SidebandMode::APlus,
        SidebandMode::BMinus,
        SidebandMode::BPlus,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            SidebandMode::AMinus => "a-",
            SidebandMode::APlus => "a+",
            SidebandMode::BMinus => "b-",
            SidebandMode::BPlus => "b+",
        }
    }
}

/// A split of the four sideband modes into two nonempty groups, stored as a
/// bit mask of `side_a` (bit k = mode k).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bipartition {
    side_a: u8,
}

impl Bipartition {
    pub fn new(side_a: &[SidebandMode]) -> Result<Self> {
        let mask = side_a.iter().fold(0u8, |m, s| m | (1 << s.index()));
        if mask == 0 || mask == 0b1111 {
            return Err(Error::config(
                "bipartition",
                "side_a must be a nonempty proper subset",
            ));
        }
        Ok(Self { side_a: mask })
    }

    pub fn side_a(&self) -> Vec<SidebandMode> {
        SidebandMode::ALL
            .into_iter()
            .filter(|m| self.side_a & (1 << m.index()) != 0)
            .collect()
    }

    pub fn side_b(&self) -> Vec<SidebandMode> {
        SidebandMode::ALL
            .into_iter()
            .filter(|m| self.side_a & (1 << m.index()) == 0)
            .collect()
    }

    /// The same partition with the sides exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            side_a: !self.side_a & 0b1111,
        }
    }

    /// Side-independent identity: the mask of whichever side holds `a-`.
    pub fn canonical_mask(&self) -> u8 {
        if self.side_a & 1 != 0 {
            self.side_a
        } else {
            !self.side_a & 0b1111
        }
    }

    /// e.g. `"a-,b+|a+,b-"`.
    pub fn label(&self) -> String {
        let join = |v: Vec<SidebandMode>| {
            v.iter()
                .map(|m| m.label())
                .collect::<Vec<_>>()
                .join(",")
        };
        format!("{}|{}", join(self.side_a()), join(self.side_b()))
    }
}

/// The seven bipartitions in canonical order: `{a-}`, `{a+}`, `{b-}`, `{b+}`
/// against the rest, then `(a-,a+|b-,b+)`, `(a-,b-|a+,b+)`, `(a-,b+|a+,b-)`.
pub fn enumerate_bipartitions() -> Vec<Bipartition> {
    use SidebandMode::*;
    let sides: [&[SidebandMode]; 7] = [
        &[AMinus],
        &[APlus],
        &[BMinus],
        &[BPlus],
        &[AMinus, APlus],
        &[AMinus, BMinus],
        &[AMinus, BPlus],
    ];
    sides
        .iter()
        .map(|s| Bipartition::new(s).expect("static partitions are valid"))
        .collect()
}

/// Partial transposition of the modes on `part.side_b`: flips the sign of
/// their `q` rows and columns.
pub fn partial_transpose(v: &CovarianceMatrix, part: &Bipartition) -> Result<CovarianceMatrix> {
    v.expect_basis(Basis::Sideband)?;
    let mut flip = [1.0; 8];
    for m in part.side_b() {
        flip[2 * m.index() + 1] = -1.0;
    }
    let e = v.entries();
    Ok(CovarianceMatrix::new(
        Matrix8::from_fn(|i, j| flip[i] * flip[j] * e[(i, j)]),
        Basis::Sideband,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{build_sa_covariance, to_sideband_basis, SixteenParams};
    use nalgebra::SymmetricEigen;
    use proptest::prelude::*;
    use std::collections::HashSet;

    /// Independent route: ν² are the eigenvalues of the symmetric matrix
    /// `V^{1/2} Jᵀ V J V^{1/2}`.
    fn oracle_symplectic(v: &Matrix8) -> Vec<f64> {
        let eig = SymmetricEigen::new(*v);
        let root = eig.eigenvectors
            * Matrix8::from_diagonal(&eig.eigenvalues.map(f64::sqrt))
            * eig.eigenvectors.transpose();
        let j = symplectic_form();
        let m = root * j.transpose() * v * j * root;
        let m = (m + m.transpose()) * 0.5;
        let mut nu: Vec<f64> = SymmetricEigen::new(m)
            .eigenvalues
            .iter()
            .map(|x| x.max(0.0).sqrt())
            .collect();
        nu.sort_by(f64::total_cmp);
        nu.chunks(2).map(|c| 0.5 * (c[0] + c[1])).collect()
    }

    fn tms_pair(i: usize, j: usize, r: f64) -> CovarianceMatrix {
        let mut m = Matrix8::identity();
        let (c, s) = ((2.0 * r).cosh(), (2.0 * r).sinh());
        for k in [i, j] {
            m[(2 * k, 2 * k)] = c;
            m[(2 * k + 1, 2 * k + 1)] = c;
        }
        m[(2 * i, 2 * j)] = s;
        m[(2 * j, 2 * i)] = s;
        m[(2 * i + 1, 2 * j + 1)] = -s;
        m[(2 * j + 1, 2 * i + 1)] = -s;
        CovarianceMatrix::new(m, Basis::Sideband)
    }

    #[test]
    fn vacuum_and_scaling() {
        let id = CovarianceMatrix::identity(Basis::Sideband);
        assert_eq!(symplectic_eigenvalues(&id).unwrap(), [1.0; 4]);
        let two = id.scaled(2.0);
        for nu in symplectic_eigenvalues(&two).unwrap() {
            assert!((nu - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pure_tms_has_unit_spectrum() {
        let v = tms_pair(0, 3, 0.5);
        for nu in symplectic_eigenvalues(&v).unwrap() {
            assert!((nu - 1.0).abs() < 1e-10, "{nu}");
        }
        for nu in oracle_symplectic(v.entries()) {
            assert!((nu - 1.0).abs() < 1e-7);
        }
    }

    #[test]
    fn indefinite_is_rejected() {
        let mut m = Matrix8::identity();
        m[(3, 3)] = -0.1;
        let v = CovarianceMatrix::new(m, Basis::Sideband);
        assert!(matches!(
            symplectic_eigenvalues(&v),
            Err(Error::NotPositiveDefinite)
        ));
        assert!(!is_physical(&v, 1e-9).physical);
    }

    #[test]
    fn physicality_gate() {
        let vac = is_physical(&CovarianceMatrix::identity(Basis::SymAntisym), 1e-9);
        assert!(vac.physical);
        assert_eq!(vac.min_symplectic, 1.0);
        let half = is_physical(&CovarianceMatrix::identity(Basis::SymAntisym).scaled(0.5), 1e-9);
        assert!(!half.physical);
        assert!((half.min_symplectic - 0.5).abs() < 1e-12);
    }

    #[test]
    fn clamp_reaches_the_boundary() {
        let v = CovarianceMatrix::identity(Basis::Sideband).scaled(0.7);
        let c = clamp_to_physical(&v);
        let nu = is_physical(&c, 1e-12);
        assert!(nu.physical);
        assert!((nu.min_symplectic - 1.0).abs() < 1e-9);
    }

    #[test]
    fn canonical_bipartitions() {
        let parts = enumerate_bipartitions();
        assert_eq!(parts.len(), 7);
        let ids: HashSet<u8> = parts.iter().map(|p| p.canonical_mask()).collect();
        assert_eq!(ids.len(), 7);
        for p in &parts {
            let mut all: Vec<usize> = p
                .side_a()
                .iter()
                .chain(p.side_b().iter())
                .map(|m| m.index())
                .collect();
            all.sort();
            assert_eq!(all, vec![0, 1, 2, 3]);
            assert_eq!(p.swapped().canonical_mask(), p.canonical_mask());
        }
        assert_eq!(parts[6].label(), "a-,b+|a+,b-");
        assert!(Bipartition::new(&[]).is_err());
        assert!(Bipartition::new(&SidebandMode::ALL).is_err());
    }

    #[test]
    fn partial_transpose_basics() {
        let vac = CovarianceMatrix::identity(Basis::Sideband);
        for p in enumerate_bipartitions() {
            assert_eq!(partial_transpose(&vac, &p).unwrap(), vac);
        }
        let v = tms_pair(1, 2, 0.4);
        let p = enumerate_bipartitions()[4];
        let twice = partial_transpose(&partial_transpose(&v, &p).unwrap(), &p).unwrap();
        assert_eq!(twice, v);
        assert!(partial_transpose(&CovarianceMatrix::identity(Basis::SymAntisym), &p).is_err());
    }

    fn random_state() -> impl Strategy<Value = CovarianceMatrix> {
        // random physical state: loss-free symplectic-ish mixing of thermal modes
        (proptest::array::uniform16(-0.4..0.4f64), proptest::array::uniform4(1.0..2.0f64)).prop_map(
            |(a, thermal)| {
                let mut p = SixteenParams::vacuum();
                let mut arr = p.to_array();
                for k in 0..16 {
                    arr[k] += a[k] * 0.3;
                }
                arr[0] += thermal[0];
                arr[1] += thermal[0];
                arr[4] += thermal[1];
                arr[5] += thermal[1];
                p = SixteenParams::from_array(arr);
                to_sideband_basis(&build_sa_covariance(&p)).unwrap()
            },
        )
    }

    proptest! {
        #[test]
        fn agrees_with_symmetric_oracle(v in random_state()) {
            prop_assume!(v.entries().cholesky().is_some());
            let nu = symplectic_eigenvalues(&v).unwrap();
            let oracle = oracle_symplectic(v.entries());
            for k in 0..4 {
                prop_assert!((nu[k] - oracle[k]).abs() < 1e-7 * nu[k].max(1.0));
            }
        }

        #[test]
        fn full_transpose_and_side_swap_preserve_spectrum(v in random_state()) {
            prop_assume!(v.entries().cholesky().is_some());
            let base = symplectic_eigenvalues(&v).unwrap();
            let mut full = v.entries().clone();
            for i in 0..8 {
                for j in 0..8 {
                    if (i % 2 == 1) != (j % 2 == 1) {
                        full[(i, j)] = -full[(i, j)];
                    }
                }
            }
            let full = symplectic_eigenvalues(&CovarianceMatrix::new(full, Basis::Sideband)).unwrap();
            for k in 0..4 {
                prop_assert!((full[k] - base[k]).abs() < 1e-9);
            }
            for p in enumerate_bipartitions() {
                let a = symplectic_eigenvalues(&partial_transpose(&v, &p).unwrap());
                let b = symplectic_eigenvalues(&partial_transpose(&v, &p.swapped()).unwrap());
                if let (Ok(a), Ok(b)) = (a, b) {
                    for k in 0..4 {
                        prop_assert!((a[k] - b[k]).abs() < 1e-9);
                    }
                }
            }
        }

        #[test]
        fn basis_change_preserves_spectrum(a in proptest::array::uniform16(-0.3..0.3f64)) {
            let mut arr = SixteenParams::vacuum().to_array();
            for k in 0..16 { arr[k] += a[k]; }
            arr[0] += 1.5; arr[1] += 1.5; arr[4] += 1.5; arr[5] += 1.5;
            let sa = build_sa_covariance(&SixteenParams::from_array(arr));
            prop_assume!(sa.entries().cholesky().is_some());
            let sb = to_sideband_basis(&sa).unwrap();
            let x = symplectic_eigenvalues(&sa).unwrap();
            let y = symplectic_eigenvalues(&sb).unwrap();
            for k in 0..4 {
                prop_assert!((x[k] - y[k]).abs() < 1e-10);
            }
        }
    }
}
