use ndarray::{Array2, Array3};

use super::Dataset;
use crate::error::{RelnError, Result};
use crate::liealg::{sample_algebra, symplectic_j, AlgebraKind, LieAlgebraBasis};
use crate::linalg::{det, trace, Matrix};
use crate::rng::{self, Stream};

/// Coordinate scale for sampled sp(4) inputs; keeps `exp(tr(XX))` moderate.
pub const SP4_DEFAULT_SIGMA: f64 = 0.4;

/// `sin(tr XY) + cos(tr YY) - tr(YY)³/2 + det(XY) + exp(tr XX)`.
pub fn sp4_target(x: &Matrix, y: &Matrix) -> Result<f64> {
    if x.dim() != (4, 4) || y.dim() != (4, 4) {
        return Err(RelnError::shape("sp4_target expects 4x4 matrices"));
    }
    debug_assert!(in_sp4(x) && in_sp4(y), "sp4_target inputs leave sp(4)");
    let xy = x.dot(y);
    let tr_yy = trace(&y.dot(y));
    let value = trace(&xy).sin() + tr_yy.cos() - 0.5 * tr_yy.powi(3) + det(&xy)? + trace(&x.dot(x)).exp();
    if !value.is_finite() {
        return Err(RelnError::NonFinite("sp4 target"));
    }
    Ok(value)
}

fn in_sp4(x: &Matrix) -> bool {
    let j = symplectic_j();
    let residual = x.t().dot(&j) + j.dot(x);
    residual.iter().all(|v| v.abs() <= 1e-8 * (1.0 + crate::linalg::frob(x)))
}

pub fn sp4_target_coords(basis: &LieAlgebraBasis, x: &[f64], y: &[f64]) -> Result<f64> {
    sp4_target(&basis.hat(x)?, &basis.hat(y)?)
}

/// `n` pairs `(X, Y)` with i.i.d. `N(0, sigma²)` sp(4) coordinates and
/// standardized targets. Bit-reproducible from `seed`.
pub fn gen_sp4_dataset(n: usize, sigma: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(RelnError::invalid("dataset size must be at least 1"));
    }
    let basis = LieAlgebraBasis::new(AlgebraKind::Sp4)?;
    let k = basis.dim();
    let mut r = rng::stream(seed, Stream::Data);
    let mut inputs = Array3::zeros((n, 2, k));
    let mut targets = Array2::zeros((n, 1));
    for i in 0..n {
        let x = sample_algebra(&basis, sigma, &mut r)?;
        let y = sample_algebra(&basis, sigma, &mut r)?;
        targets[[i, 0]] = sp4_target(&basis.hat(x.as_slice().unwrap())?, &basis.hat(y.as_slice().unwrap())?)?;
        inputs.slice_mut(ndarray::s![i, 0, ..]).assign(&x);
        inputs.slice_mut(ndarray::s![i, 1, ..]).assign(&y);
    }
    let mut ds = Dataset::new(AlgebraKind::Sp4, inputs, targets, seed)?;
    ds.standardize_targets();
    Ok(ds)
}
