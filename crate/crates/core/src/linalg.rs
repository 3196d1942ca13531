//! Small dense complex linear-algebra helpers on top of nalgebra.
//!
//! Every matrix in this crate is at most `max(N_t, N_r)` square, so the
//! helpers favour clarity over blocking or in-place tricks.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// `(A + A^H) / 2`, in place.
pub fn hermitize(a: &mut CMat) {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    for i in 0..n {
        a[(i, i)] = c(a[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let avg = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
            a[(i, j)] = avg;
            a[(j, i)] = avg.conj();
        }
    }
}

pub fn hermitized(mut a: CMat) -> CMat {
    hermitize(&mut a);
    a
}

pub fn trace_re(a: &CMat) -> f64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)].re).sum()
}

pub fn frob_sq(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// Real part of `Tr(A B)` without forming the product.
pub fn trace_product_re(a: &CMat, b: &CMat) -> f64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += (a[(i, j)] * b[(j, i)]).re;
        }
    }
    acc
}

/// Cholesky factorization that rejects non-positive pivots. nalgebra takes
/// complex square roots, so a negative pivot would otherwise slip through as
/// an imaginary diagonal entry.
fn cholesky(a: &CMat, what: &str) -> Result<nalgebra::Cholesky<Complex64, nalgebra::Dyn>> {
    let fail = || Error::NotPositiveDefinite { what: what.to_string() };
    let chol = hermitized(a.clone()).cholesky().ok_or_else(fail)?;
    let l = chol.l_dirty();
    for i in 0..a.nrows() {
        let p = l[(i, i)];
        if !(p.re > 0.0 && p.re.is_finite()) || p.im.abs() > 1e-12 * p.re {
            return Err(fail());
        }
    }
    Ok(chol)
}

/// `log det A` for Hermitian positive definite `A`, from the Cholesky diagonal.
pub fn log_det_hpd(a: &CMat, what: &str) -> Result<f64> {
    let chol = cholesky(a, what)?;
    let l = chol.l_dirty();
    Ok((0..a.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum())
}

/// Inverse of a Hermitian positive definite matrix via Cholesky solve.
pub fn hpd_inverse(a: &CMat, what: &str) -> Result<CMat> {
    Ok(hermitized(cholesky(a, what)?.inverse()))
}

/// Solve `A X = B` for Hermitian positive definite `A`.
pub fn hpd_solve(a: &CMat, b: &CMat, what: &str) -> Result<CMat> {
    Ok(cholesky(a, what)?.solve(b))
}

/// Eigendecomposition of a Hermitian matrix: ascending real eigenvalues and
/// the matching unitary eigenvector matrix.
pub fn hermitian_eigen(a: &CMat) -> (Vec<f64>, CMat) {
    let eig = hermitized(a.clone()).symmetric_eigen();
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Ratio of the largest to smallest singular value (`inf` when singular).
pub fn condition_number(a: &CMat) -> f64 {
    let sv = a.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn min_eigenvalue(a: &CMat) -> f64 {
    hermitian_eigen(a).0.first().copied().unwrap_or(0.0)
}

pub fn is_finite(a: &CMat) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}
