//! Dense complex helpers shared across modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Largest elementwise `|m - m†|`.
pub fn hermiticity_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Symmetrized copy `(m + m†)/2`, fed to the eigensolver.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Eigen-decomposition `(λ, V)` of the Hermitian part, `H = V diag(λ) V†`.
///
/// The complex QR iteration of nalgebra can return NaN on some sparse
/// rank-deficient inputs, so the matrix is first reduced to a real symmetric
/// tridiagonal `T` with `H = Q T Q†` and only `T` goes through the
/// eigensolver.
pub fn hermitian_eigen(m: &CMatrix) -> (DVector<f64>, CMatrix) {
    let (q, diag, off) = hermitian_part(m).symmetric_tridiagonalize().unpack();
    let n = diag.len();
    let t = DMatrix::<f64>::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => diag[i],
        1 => off[i.min(j)],
        _ => 0.0,
    });
    let eig = SymmetricEigen::new(t);
    let vectors = q * eig.eigenvectors.map(|x| Complex64::new(x, 0.0));
    (eig.eigenvalues, vectors)
}

/// Eigenvalues of the Hermitian part, ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut vals: Vec<f64> = hermitian_eigen(m).0.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    vals
}

pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    hermitian_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// `½‖a - b‖₁` for Hermitian `a`, `b`.
pub fn trace_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    0.5 * hermitian_eigenvalues(&(a - b)).iter().map(|v| v.abs()).sum::<f64>()
}

/// Principal square root of a positive semidefinite Hermitian matrix.
pub fn psd_sqrt(m: &CMatrix) -> CMatrix {
    let (values, v) = hermitian_eigen(m);
    let roots = values.map(|x| Complex64::new(x.max(0.0).sqrt(), 0.0));
    &v * DMatrix::from_diagonal(&roots) * v.adjoint()
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().sum()
}
