use crate::error::{RelnError, Result};
use crate::linalg::{frob, Matrix};

const TAYLOR_DEGREE: u32 = 18;
const SCALED_NORM: f64 = 0.5;

/// Matrix exponential by scaling and squaring.
///
/// The input is scaled by `2^-s` until its Frobenius norm is at most 0.5, the
/// exponential of the scaled matrix is evaluated with a degree-18 Taylor
/// polynomial in Horner form, and the result is squared `s` times.
pub fn matrix_exp(x: &Matrix) -> Result<Matrix> {
    if x.nrows() != x.ncols() {
        return Err(RelnError::shape(format!(
            "matrix_exp needs a square matrix, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(RelnError::NonFinite("matrix_exp input"));
    }
    let n = x.nrows();
    let norm = frob(x);
    let squarings = if norm > SCALED_NORM {
        (norm / SCALED_NORM).log2().ceil() as i32
    } else {
        0
    };
    let scaled = x * 2f64.powi(-squarings);

    let id = Matrix::eye(n);
    let mut p = id.clone();
    for k in (1..=TAYLOR_DEGREE).rev() {
        p = &id + &(scaled.dot(&p) / k as f64);
    }
    for _ in 0..squarings {
        p = p.dot(&p);
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(RelnError::NonFinite("matrix_exp result"));
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn exp_of_zero_is_identity() {
        let e = matrix_exp(&Matrix::zeros((4, 4))).unwrap();
        assert_eq!(e, Matrix::eye(4));
    }

    #[test]
    fn diagonal_case() {
        let a = [0.3, -1.7, 2.9];
        let d = Matrix::from_diag(&ndarray::arr1(&a));
        let e = matrix_exp(&d).unwrap();
        for i in 0..3 {
            assert!((e[[i, i]] - a[i].exp()).abs() <= 1e-12 * a[i].exp());
        }
        assert!(e[[0, 1]].abs() < 1e-15);
    }

    #[test]
    fn rotation_about_z_matches_rodrigues() {
        for &theta in &[0.1, 1.0, 2.5, -3.0, 4.9] {
            let xhat = array![[0.0, -theta, 0.0], [theta, 0.0, 0.0], [0.0, 0.0, 0.0]];
            let r = matrix_exp(&xhat).unwrap();
            let (s, c) = f64::sin_cos(theta);
            let expected = array![[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]];
            assert!(frob(&(r - expected)) < 1e-12, "theta = {theta}");
        }
    }

    #[test]
    fn nilpotent_is_exact_polynomial() {
        let n = array![[0.0, 2.0, 3.0], [0.0, 0.0, -1.5], [0.0, 0.0, 0.0]];
        let e = matrix_exp(&n).unwrap();
        let expected = Matrix::eye(3) + &n + n.dot(&n) / 2.0;
        assert!(frob(&(e - expected)) < 1e-13);
    }

    #[test]
    fn rejects_non_finite() {
        let mut a = Matrix::zeros((2, 2));
        a[[0, 1]] = f64::NAN;
        assert!(matrix_exp(&a).is_err());
        assert!(matrix_exp(&Matrix::zeros((2, 3))).is_err());
    }
}
