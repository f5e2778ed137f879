//! Dense linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Condition-number ceiling above which a linear solve is refused.
pub const MAX_COND: f64 = 1e12;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = symmetrize(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_sym_eig(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

pub fn max_sym_eig(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(f64::NEG_INFINITY)
}

pub fn complex_eigenvalues(m: &DMatrix<f64>) -> Vec<Complex64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    m.complex_eigenvalues().iter().copied().collect()
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    complex_eigenvalues(m).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// 2-norm condition number from the singular values.
pub fn cond2(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Solves `a · X = b` by LU with partial pivoting.
///
/// Fails with `SingularMatrix` when the 1-norm condition number of `a`
/// exceeds [`MAX_COND`].
pub fn solve(a: &DMatrix<f64>, b: &DMatrix<f64>, context: &'static str) -> Result<DMatrix<f64>> {
    if a.nrows() != a.ncols() || a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{context}: solve with {}x{} against {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    if a.nrows() == 0 {
        return Ok(b.clone());
    }
    let lu = a.clone().lu();
    let inv = lu.try_inverse().ok_or(Error::SingularMatrix { context, cond: f64::INFINITY })?;
    let cond = norm1(a) * norm1(&inv);
    if !cond.is_finite() || cond > MAX_COND {
        return Err(Error::SingularMatrix { context, cond });
    }
    lu.solve(b).ok_or(Error::SingularMatrix { context, cond })
}

pub fn solve_vec(a: &DMatrix<f64>, b: &DVector<f64>, context: &'static str) -> Result<DVector<f64>> {
    let x = solve(a, &DMatrix::from_column_slice(b.len(), 1, b.as_slice()), context)?;
    Ok(DVector::from_column_slice(x.as_slice()))
}

/// Solves `X · a = b`, i.e. `X = b · a⁻¹`.
pub fn solve_right(a: &DMatrix<f64>, b: &DMatrix<f64>, context: &'static str) -> Result<DMatrix<f64>> {
    Ok(solve(&a.transpose(), &b.transpose(), context)?.transpose())
}

/// Symmetric PSD square root; negative eigenvalues are clamped to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.nrows() == 0 {
        return m.clone();
    }
    let eig = symmetrize(m).symmetric_eigen();
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    symmetrize(&(&eig.eigenvectors * d * eig.eigenvectors.transpose()))
}

/// Numerical rank with the threshold `rel_tol · σ_max`.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// `[B, AB, …, A^{n-1}B]`.
pub fn controllability_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let m = b.ncols();
    let mut out = DMatrix::zeros(n, n * m);
    let mut blk = b.clone();
    for i in 0..n {
        out.view_mut((0, i * m), (n, m)).copy_from(&blk);
        blk = a * blk;
    }
    out
}

/// Orthonormal bases `(range, complement)` of the column space of `m`,
/// using the rank threshold `rel_tol · σ_max`.
pub fn range_split(m: &DMatrix<f64>, rel_tol: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = m.nrows();
    // zero padding guarantees a full n×n set of left singular vectors
    let mut padded = DMatrix::zeros(n, m.ncols() + n);
    padded.view_mut((0, 0), (n, m.ncols())).copy_from(m);
    let svd = padded.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.max();
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let r = if smax == 0.0 { 0 } else { svd.singular_values.iter().filter(|&&s| s > rel_tol * smax).count() };
    let range = DMatrix::from_fn(n, r, |i, j| u[(i, idx[j])]);
    let comp = DMatrix::from_fn(n, n - r, |i, j| u[(i, idx[r + j])]);
    (range, comp)
}

pub fn identity(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n)
}

pub fn quad(x: &DVector<f64>, m: &DMatrix<f64>) -> f64 {
    (x.transpose() * m * x)[(0, 0)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_rejects_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let b = DMatrix::identity(2, 2);
        assert!(matches!(solve(&a, &b, "t"), Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let s = psd_sqrt(&m);
        assert!((&s * &s - &m).norm() < 1e-12);
    }

    #[test]
    fn range_split_of_rank_one() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
        let (r, c) = range_split(&m, 1e-8);
        assert_eq!(r.ncols(), 1);
        assert_eq!(c.ncols(), 2);
        assert!((r[(0, 0)].abs() - 1.0).abs() < 1e-12);
    }
}
