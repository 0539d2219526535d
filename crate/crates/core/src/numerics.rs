//! Dense symmetric linear-algebra utilities for the Riccati and SDP layers.

use nalgebra::{Cholesky, SymmetricEigen};
use thiserror::Error;

use crate::config::Tolerances;
use crate::Mat;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric: relative asymmetry {relative:.3e}")]
    Asymmetric { relative: f64 },
    #[error("packed length {0} is not a triangular number")]
    BadPackedLength(usize),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("linear system is singular")]
    Singular,
}

/// Eigen-decomposition of a symmetric matrix with ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct SymSpectrum {
    pub eigenvalues: Vec<f64>,
    /// Orthogonal matrix whose columns are the eigenvectors, in the order of
    /// `eigenvalues`.
    pub eigenvectors: Mat,
}

impl SymSpectrum {
    pub fn min(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    /// `V Λ Vᵀ`.
    pub fn reconstruct(&self) -> Mat {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (j, lam) in self.eigenvalues.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*lam);
        }
        &scaled * v.transpose()
    }
}

/// Orthonormal bases of `null(Bᵀ)` (columns of `n`) and of its orthogonal
/// complement `range(B)` (columns of `m`).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NullBases {
    pub n: Mat,
    pub m: Mat,
}

impl NullBases {
    pub fn rank(&self) -> usize {
        self.m.ncols()
    }

    /// `[N M]`.
    pub fn combined(&self) -> Mat {
        let rows = self.n.nrows();
        let mut t = Mat::zeros(rows, rows);
        t.columns_mut(0, self.n.ncols()).copy_from(&self.n);
        t.columns_mut(self.n.ncols(), self.m.ncols()).copy_from(&self.m);
        t
    }
}

fn ensure_square(a: &Mat) -> Result<(), NumericsError> {
    if a.nrows() != a.ncols() {
        return Err(NumericsError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    Ok(())
}

/// Largest absolute entry; cheap scale estimate.
pub fn max_abs(a: &Mat) -> f64 {
    a.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// `(A + Aᵀ)/2`, rejecting inputs whose asymmetry exceeds `tol·‖A‖`.
pub fn symmetrize_checked(a: &Mat, tol: f64) -> Result<Mat, NumericsError> {
    ensure_square(a)?;
    let scale = a.norm();
    let skew = (a - a.transpose()).norm() * 0.5;
    if scale > 0.0 && skew > tol * scale {
        return Err(NumericsError::Asymmetric {
            relative: skew / scale,
        });
    }
    Ok(symmetrize(a))
}

/// `(A + Aᵀ)/2` without checks.
pub fn symmetrize(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

/// Symmetric eigendecomposition with eigenvalues in ascending order.
pub fn sym_eig(a: &Mat) -> Result<SymSpectrum, NumericsError> {
    let sym = symmetrize_checked(a, Tolerances::default().symmetry_tol)?;
    Ok(sym_eig_unchecked(&sym))
}

pub(crate) fn sym_eig_unchecked(sym: &Mat) -> SymSpectrum {
    let k = sym.nrows();
    if k == 0 {
        return SymSpectrum {
            eigenvalues: Vec::new(),
            eigenvectors: Mat::zeros(0, 0),
        };
    }
    let eig = SymmetricEigen::new(sym.clone());
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut vectors = Mat::zeros(k, k);
    let mut values = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        values.push(eig.eigenvalues[src]);
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    SymSpectrum {
        eigenvalues: values,
        eigenvectors: vectors,
    }
}

/// Smallest eigenvalue of the symmetric part of `a`.
pub fn min_eig(a: &Mat) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    sym_eig_unchecked(&symmetrize(a)).min()
}

/// Largest eigenvalue of the symmetric part of `a`.
pub fn max_eig(a: &Mat) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    sym_eig_unchecked(&symmetrize(a)).max()
}

/// Spectral norm of a symmetric matrix (largest |eigenvalue|).
pub fn sym_norm(a: &Mat) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    let s = sym_eig_unchecked(&symmetrize(a));
    s.min().abs().max(s.max().abs())
}

/// Null-space basis of `Bᵀ` and of its orthogonal complement.
///
/// The range basis comes from the left singular vectors of `B` whose
/// singular values exceed `rank_tol·σ_max`; the complement is completed by a
/// Householder QR of `[M I]`, so `[N M]` is orthonormal to machine precision.
pub fn null_bases(b: &Mat) -> NullBases {
    null_bases_with_tol(b, Tolerances::default().rank_tol)
}

pub fn null_bases_with_tol(b: &Mat, rank_tol: f64) -> NullBases {
    let n = b.nrows();
    let range = range_basis(b, rank_tol);
    let r = range.ncols();
    if r == 0 {
        return NullBases {
            n: Mat::identity(n, n),
            m: Mat::zeros(n, 0),
        };
    }
    let mut aug = Mat::zeros(n, r + n);
    aug.columns_mut(0, r).copy_from(&range);
    aug.columns_mut(r, n).copy_from(&Mat::identity(n, n));
    let q = aug.qr().q();
    NullBases {
        n: q.columns(r, n - r).into_owned(),
        m: q.columns(0, r).into_owned(),
    }
}

fn range_basis(b: &Mat, rank_tol: f64) -> Mat {
    let n = b.nrows();
    if b.ncols() == 0 || n == 0 {
        return Mat::zeros(n, 0);
    }
    let svd = b.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.max();
    if smax <= 0.0 {
        return Mat::zeros(n, 0);
    }
    let mut cols: Vec<(f64, usize)> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s > rank_tol * smax)
        .map(|(i, s)| (*s, i))
        .collect();
    cols.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut out = Mat::zeros(n, cols.len());
    for (j, (_, i)) in cols.iter().enumerate() {
        out.set_column(j, &u.column(*i));
    }
    out
}

/// Numerical rank with singular values below `rank_tol·σ_max` treated as zero.
pub fn matrix_rank(a: &Mat, rank_tol: f64) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let smax = sv.max();
    if smax <= 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > rank_tol * smax).count()
}

/// `λ_min(A) ≥ −tol·‖A‖`.
pub fn is_psd(a: &Mat, tol: f64) -> bool {
    if a.nrows() != a.ncols() {
        return false;
    }
    if a.nrows() == 0 {
        return true;
    }
    let s = sym_eig_unchecked(&symmetrize(a));
    let scale = s.min().abs().max(s.max().abs());
    s.min() >= -tol * scale
}

/// `λ_min(A) ≥ tol·‖A‖` and `A ≠ 0`.
pub fn is_pd(a: &Mat, tol: f64) -> bool {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return false;
    }
    let s = sym_eig_unchecked(&symmetrize(a));
    let scale = s.min().abs().max(s.max().abs());
    scale > 0.0 && s.min() >= tol * scale && s.min() > 0.0
}

/// Largest eigenvalue modulus of a general square matrix.
pub fn spectral_radius(a: &Mat) -> f64 {
    assert_eq!(a.nrows(), a.ncols(), "spectral_radius needs a square matrix");
    if a.nrows() == 0 {
        return 0.0;
    }
    a.complex_eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// Packs a symmetric matrix row-wise over the upper triangle, scaling
/// off-diagonal entries by √2 so that `svec(A)·svec(B) = Tr(AB)`.
pub fn svec(a: &Mat) -> Vec<f64> {
    let k = a.nrows();
    let mut out = Vec::with_capacity(k * (k + 1) / 2);
    for i in 0..k {
        for j in i..k {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            out.push(if i == j { v } else { v * std::f64::consts::SQRT_2 });
        }
    }
    out
}

/// Inverse of [`svec`].
pub fn smat(v: &[f64]) -> Result<Mat, NumericsError> {
    let k = triangular_side(v.len()).ok_or(NumericsError::BadPackedLength(v.len()))?;
    let mut a = Mat::zeros(k, k);
    let mut idx = 0;
    for i in 0..k {
        for j in i..k {
            let val = if i == j {
                v[idx]
            } else {
                v[idx] / std::f64::consts::SQRT_2
            };
            a[(i, j)] = val;
            a[(j, i)] = val;
            idx += 1;
        }
    }
    Ok(a)
}

/// `k` with `k(k+1)/2 = len`, if any.
pub fn triangular_side(len: usize) -> Option<usize> {
    let k = (((8 * len + 1) as f64).sqrt() as usize).saturating_sub(1) / 2;
    (k..=k + 1).find(|c| c * (c + 1) / 2 == len)
}

/// Symmetric PSD square root via the eigenbasis; negative eigenvalues are
/// clipped to zero.
pub fn sym_sqrt(a: &Mat) -> Mat {
    let s = sym_eig_unchecked(&symmetrize(a));
    let mut v = s.eigenvectors.clone();
    for (j, lam) in s.eigenvalues.iter().enumerate() {
        v.column_mut(j).scale_mut(lam.max(0.0).sqrt());
    }
    &v * s.eigenvectors.transpose()
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(a: &Mat) -> Result<Mat, NumericsError> {
    let chol = Cholesky::new(symmetrize(a)).ok_or(NumericsError::NotPositiveDefinite)?;
    Ok(symmetrize(&chol.inverse()))
}

/// Solves `A X = B` for a general square `A` via LU.
pub fn solve(a: &Mat, b: &Mat) -> Result<Mat, NumericsError> {
    a.clone().lu().solve(b).ok_or(NumericsError::Singular)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_orthogonal(k: usize, seed: u64) -> Mat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Mat::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
        a.qr().q()
    }

    #[test]
    fn eig_of_diagonal() {
        let s = sym_eig(&Mat::from_diagonal(&crate::Vec64::from_vec(vec![3.0, 1.0, 2.0]))).unwrap();
        assert_eq!(s.eigenvalues, vec![1.0, 2.0, 3.0]);
        for j in 0..3 {
            let col = s.eigenvectors.column(j);
            assert_relative_eq!(col.amax(), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn eig_recovers_constructed_spectrum() {
        let v = random_orthogonal(5, 11);
        let lam = [-2.0, -0.5, 0.25, 1.0, 4.0];
        let a = &v * Mat::from_diagonal(&crate::Vec64::from_row_slice(&lam)) * v.transpose();
        let s = sym_eig(&a).unwrap();
        for (got, want) in s.eigenvalues.iter().zip(lam) {
            assert_relative_eq!(*got, want, epsilon = 1e-12);
        }
        assert!((s.reconstruct() - &a).norm() <= 1e-12 * a.norm());
        let vtv = s.eigenvectors.transpose() * &s.eigenvectors;
        assert!((vtv - Mat::identity(5, 5)).norm() < 1e-12);
    }

    #[test]
    fn eig_scalar_and_errors() {
        let s = sym_eig(&Mat::from_element(1, 1, 7.5)).unwrap();
        assert_eq!(s.eigenvalues, vec![7.5]);
        assert!(matches!(
            sym_eig(&Mat::zeros(2, 3)),
            Err(NumericsError::NotSquare { .. })
        ));
        let skew = Mat::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(matches!(sym_eig(&skew), Err(NumericsError::Asymmetric { .. })));
    }

    #[test]
    fn null_bases_of_unit_column() {
        let b = Mat::from_row_slice(2, 1, &[1.0, 0.0]);
        let nb = null_bases(&b);
        assert_eq!(nb.rank(), 1);
        assert_relative_eq!(nb.n[(1, 0)].abs(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(nb.m[(0, 0)].abs(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn null_bases_rank_deficient_and_zero() {
        let b = Mat::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 0.0, 0.0]);
        let nb = null_bases(&b);
        assert_eq!(nb.rank(), 1);
        assert_eq!(nb.n.ncols(), 2);
        assert!((nb.n.transpose() * &b).norm() <= 1e-12 * b.norm());
        let z = null_bases(&Mat::zeros(3, 2));
        assert_eq!(z.rank(), 0);
        assert_eq!(z.n.ncols(), 3);
    }

    #[test]
    fn psd_predicates() {
        assert!(is_pd(&Mat::identity(3, 3), 1e-12));
        let d = Mat::from_diagonal(&crate::Vec64::from_vec(vec![1.0, -1.0]));
        assert!(!is_psd(&d, 1e-12));
        let singular = Mat::from_diagonal(&crate::Vec64::from_vec(vec![1.0, 0.0]));
        assert!(is_psd(&singular, 1e-12));
        assert!(!is_pd(&singular, 1e-12));
    }

    #[test]
    fn spectral_radius_examples() {
        assert_relative_eq!(spectral_radius(&Mat::from_element(1, 1, 0.5)), 0.5);
        let th: f64 = 0.3;
        let rot = Mat::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
        assert_relative_eq!(spectral_radius(&rot), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn spectral_radius_matches_power_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            // Symmetric-positive similarity keeps a dominant real eigenvalue,
            // which power iteration can resolve.
            let c = Mat::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
            let t = Mat::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0)) + Mat::identity(4, 4) * 3.0;
            let a = &t * (&c * c.transpose()) * t.clone().try_inverse().unwrap();
            let rho_raw = power_iteration(&a, 20_000);
            let scaled = &a / (2.0 * rho_raw);
            assert!((spectral_radius(&scaled) - 0.5).abs() < 1e-8);
        }
    }

    fn power_iteration(a: &Mat, iters: usize) -> f64 {
        let mut v = crate::Vec64::from_element(a.nrows(), 1.0);
        let mut lam = 0.0;
        for _ in 0..iters {
            let w = a * &v;
            lam = w.norm() / v.norm();
            v = &w / w.norm();
        }
        lam
    }

    #[test]
    fn svec_conventions() {
        let i2 = Mat::identity(2, 2);
        assert_eq!(svec(&i2), vec![1.0, 0.0, 1.0]);
        assert_eq!(svec(&Mat::identity(4, 4)).len(), 10);
        assert!(matches!(smat(&[1.0, 2.0]), Err(NumericsError::BadPackedLength(2))));
        assert_eq!(triangular_side(0), Some(0));
        assert_eq!(triangular_side(6), Some(3));
        assert_eq!(triangular_side(7), None);
    }

    fn sym_strategy(k: usize) -> impl Strategy<Value = Mat> {
        prop::collection::vec(-10.0..10.0f64, k * k).prop_map(move |v| {
            let a = Mat::from_vec(k, k, v);
            symmetrize(&a)
        })
    }

    proptest! {
        #[test]
        fn svec_is_isometric_and_invertible(a in sym_strategy(4), b in sym_strategy(4)) {
            let inner: f64 = svec(&a).iter().zip(svec(&b)).map(|(x, y)| x * y).sum();
            let tr = (&a * &b).trace();
            prop_assert!((inner - tr).abs() <= 1e-10 * (1.0 + tr.abs()));
            let back = smat(&svec(&a)).unwrap();
            prop_assert!((back - &a).amax() <= 1e-13 * (1.0 + a.amax()));
        }

        #[test]
        fn svec_is_linear(a in sym_strategy(3), b in sym_strategy(3), s in -5.0..5.0f64, t in -5.0..5.0f64) {
            let lhs = svec(&(&a * s + &b * t));
            let rhs: Vec<f64> = svec(&a).iter().zip(svec(&b)).map(|(x, y)| s * x + t * y).collect();
            for (l, r) in lhs.iter().zip(rhs) {
                prop_assert!((l - r).abs() <= 1e-14 * 100.0 * (1.0 + r.abs()));
            }
        }

        #[test]
        fn null_bases_invariants(v in prop::collection::vec(-3.0..3.0f64, 8)) {
            let b = Mat::from_vec(4, 2, v);
            let nb = null_bases(&b);
            prop_assert_eq!(nb.n.ncols() + nb.m.ncols(), 4);
            prop_assert!((nb.n.transpose() * &b).norm() <= 1e-12 * b.norm().max(1e-300));
            let t = nb.combined();
            prop_assert!((t.transpose() * &t - Mat::identity(4, 4)).amax() <= 1e-12);
            if nb.rank() == 2 {
                let proj = &nb.n * nb.n.transpose() + &nb.m * nb.m.transpose();
                prop_assert!((proj - Mat::identity(4, 4)).amax() <= 1e-10);
            }
        }

        #[test]
        fn pd_implies_psd(a in sym_strategy(3), tol in 1e-12..1e-3f64) {
            if is_pd(&a, tol) {
                prop_assert!(is_psd(&a, tol));
            }
        }
    }
}
