//! Dense complex linear algebra used throughout the solver.
//!
//! Matrices are [`nalgebra::DMatrix`] over [`Complex64`] and are stored in
//! column-major order. Serialized matrices (see [`crate::archive`]) keep that
//! order so that a round trip reproduces every entry bit for bit.
//!
//! Every `(.)^{-1}` that appears in the model is realised as a Cholesky solve;
//! no explicit inverse is ever formed.

use nalgebra::{Cholesky, DMatrix, Dyn};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Complex matrix, column-major.
pub type CMat = DMatrix<Complex64>;

const HERMITIAN_TOL: f64 = 1e-10;

pub fn zeros(rows: usize, cols: usize) -> CMat {
    CMat::zeros(rows, cols)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Squared Frobenius norm.
pub fn fro2(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// `tr(A^H B)`.
pub fn inner(a: &CMat, b: &CMat) -> Complex64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// `Re tr(A^H B)`, the real inner product of the realified matrices.
pub fn re_inner(a: &CMat, b: &CMat) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.re * y.re + x.im * y.im)
        .sum()
}

pub fn trace(a: &CMat) -> Complex64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

pub fn is_finite(a: &CMat) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// `(A + A^H) / 2`.
pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Matrix with i.i.d. circularly-symmetric `CN(0, 1)` entries.
pub fn random_gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * s, im * s)
    })
}

/// Matrix of unit-modulus entries with phases uniform on `(-pi, pi]`.
pub fn random_phases<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        let phase = std::f64::consts::PI * (1.0 - 2.0 * rng.random::<f64>());
        Complex64::from_polar(1.0, phase)
    })
}

fn check_hermitian(a: &CMat) -> Result<()> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let scale = a.iter().fold(f64::MIN_POSITIVE, |m, z| m.max(z.norm()));
    let n = a.nrows();
    for i in 0..n {
        for j in i..n {
            if (a[(i, j)] - a[(j, i)].conj()).norm() > HERMITIAN_TOL * scale {
                return Err(Error::NotPositiveDefinite);
            }
        }
    }
    Ok(())
}

/// Cholesky factor of a Hermitian positive-definite matrix.
pub fn cholesky(a: &CMat) -> Result<Cholesky<Complex64, Dyn>> {
    check_hermitian(a)?;
    if !is_finite(a) {
        return Err(Error::NotPositiveDefinite);
    }
    let chol = Cholesky::new(hermitian_part(a)).ok_or(Error::NotPositiveDefinite)?;
    // complex square roots of negative pivots succeed, so the pivots are checked here
    let l = chol.l_dirty();
    let ok = (0..a.nrows()).all(|i| {
        let p = l[(i, i)];
        p.re > 0.0 && p.re.is_finite() && p.im.abs() <= 1e-12 * p.re
    });
    if ok {
        Ok(chol)
    } else {
        Err(Error::NotPositiveDefinite)
    }
}

/// Solves `A X = B` for Hermitian positive-definite `A`.
pub fn hermitian_solve(a: &CMat, b: &CMat) -> Result<CMat> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "hermitian_solve: A is {}x{}, B is {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let chol = cholesky(a)?;
    Ok(chol.solve(b))
}

/// `log2 det(A)` for Hermitian positive-definite `A`, from the Cholesky diagonal.
pub fn logdet2_pd(a: &CMat) -> Result<f64> {
    Ok(ln_det_pd(a)? / std::f64::consts::LN_2)
}

/// Natural-log determinant of a Hermitian positive-definite matrix.
pub fn ln_det_pd(a: &CMat) -> Result<f64> {
    let chol = cholesky(a)?;
    let l = chol.l_dirty();
    Ok((0..a.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum())
}

/// Root of a continuous monotone function on `[lo, hi]` by bisection.
///
/// Returns as soon as `|f(x)| <= tol` or the bracket is narrower than `tol`.
pub fn bisect_monotone<F>(f: F, lo: f64, hi: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let (mut lo, mut hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() || f_lo.is_nan() || f_hi.is_nan() {
        return Err(Error::NoBracket { f_lo, f_hi });
    }
    // 200 halvings exhaust the resolution of any finite f64 interval
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if f_mid.abs() <= tol || hi - lo <= tol {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
