use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{identity, solve};

const PADE_ORDER: usize = 6;
/// Scaling target for `‖A‖₁` before the Padé approximant is applied.
const SCALING_THRESHOLD: f64 = 0.5;

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a diagonal `[6/6]`
/// Padé approximant.
pub fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch(format!("expm of a {}x{} matrix", n, a.ncols())));
    }
    let norm = norm1(a);
    if !norm.is_finite() {
        return Err(Error::InvalidParameter("expm of a non-finite matrix".into()));
    }
    let squarings = if norm > SCALING_THRESHOLD { (norm / SCALING_THRESHOLD).log2().ceil() as i32 } else { 0 };
    let scaled = a / 2f64.powi(squarings);
    // c_j = (2q−j)! q! / ((2q)! j! (q−j)!), built by the ratio recurrence
    let q = PADE_ORDER;
    let mut c = 1.0;
    let mut power = identity(n);
    let mut num = identity(n);
    let mut den = identity(n);
    for j in 1..=q {
        c *= (q + 1 - j) as f64 / (j * (2 * q + 1 - j)) as f64;
        power = &power * &scaled;
        num += &power * c;
        den += &power * if j % 2 == 0 { c } else { -c };
    }
    let mut e = solve(&den, &num, "Pade denominator")?;
    for _ in 0..squarings {
        e = &e * &e;
    }
    Ok(e)
}

/// `A_d = e^{A_c dt}` and `B_d = ∫₀^dt e^{A_c s} ds B_c`, read off the
/// exponential of the augmented matrix `[[A_c, B_c], [0, 0]]·dt`.
pub fn zoh_discretize(a_c: &DMatrix<f64>, b_c: &DMatrix<f64>, dt: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("sample time {dt} must be positive")));
    }
    let (n, m) = (a_c.nrows(), b_c.ncols());
    if a_c.ncols() != n || b_c.nrows() != n {
        return Err(Error::DimensionMismatch("A_c must be square with as many rows as B_c".into()));
    }
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a_c * dt));
    aug.view_mut((0, n), (n, m)).copy_from(&(b_c * dt));
    let e = expm(&aug)?;
    Ok((e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned()))
}
