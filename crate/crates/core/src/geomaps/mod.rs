//! Embeddings that turn left actions and congruences into adjoint actions:
//! Lorentz and orthogonal lifts, the SPD log/exp pair, skew-part vector
//! extraction, and the pairwise invariant edge feature.

mod eigh;

use ndarray::s;

pub use eigh::{jacobi_eigh, numerical_rank, singular_values};

use crate::error::{RelnError, Result};
use crate::forms::modified_form_gl;
use crate::linalg::{frob, max_asymmetry, Matrix, Vector};

/// Four-momentum `(E, px, py, pz)` in natural units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourMomentum(pub [f64; 4]);

impl FourMomentum {
    pub fn new(p: [f64; 4]) -> Result<Self> {
        if p.iter().any(|v| !v.is_finite()) {
            return Err(RelnError::NonFinite("four-momentum"));
        }
        Ok(FourMomentum(p))
    }

    pub fn as_vector(&self) -> Vector {
        Vector::from(self.0.to_vec())
    }
}

/// Sign convention of the Minkowski metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Signature {
    /// `diag(1, -1, -1, -1)`
    #[default]
    MostlyMinus,
    /// `diag(-1, 1, 1, 1)`
    MostlyPlus,
}

impl Signature {
    pub fn metric(self) -> Matrix {
        let d = match self {
            Signature::MostlyMinus => [1.0, -1.0, -1.0, -1.0],
            Signature::MostlyPlus => [-1.0, 1.0, 1.0, 1.0],
        };
        Matrix::from_diag(&ndarray::arr1(&d))
    }
}

/// `[[0, p], [pᵀη, 0]]` in gl(5) with `η = diag(1, -1, -1, -1)`.
pub fn lorentz_lift(p: &FourMomentum) -> Matrix {
    lorentz_lift_with(p, Signature::default())
}

pub fn lorentz_lift_with(p: &FourMomentum, signature: Signature) -> Matrix {
    let eta = signature.metric();
    let pv = p.as_vector();
    let row = pv.dot(&eta);
    let mut out = Matrix::zeros((5, 5));
    out.slice_mut(s![0..4, 4]).assign(&pv);
    out.slice_mut(s![4, 0..4]).assign(&row);
    out
}

/// `[[0, v], [vᵀ, 0]]` in gl(n+1); conjugation by `diag(R, 1)` acts as `v ↦ Rv`
/// for orthogonal `R`.
pub fn orthogonal_lift(v: &[f64]) -> Matrix {
    let n = v.len();
    let mut out = Matrix::zeros((n + 1, n + 1));
    for (i, vi) in v.iter().enumerate() {
        out[[i, n]] = *vi;
        out[[n, i]] = *vi;
    }
    out
}

/// `diag(a, 1)` as an (n+1)×(n+1) matrix.
pub fn block_with_one(a: &Matrix) -> Matrix {
    let n = a.nrows();
    let mut g = Matrix::zeros((n + 1, n + 1));
    g.slice_mut(s![0..n, 0..n]).assign(a);
    g[[n, n]] = 1.0;
    g
}

/// A symmetric positive-definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix(Matrix);

const SPD_CONDITION_LIMIT: f64 = 1e12;

impl SpdMatrix {
    pub fn new(c: Matrix) -> Result<Self> {
        if c.nrows() != c.ncols() {
            return Err(RelnError::shape("SPD matrix must be square"));
        }
        if max_asymmetry(&c) > 1e-12 * frob(&c).max(1.0) {
            return Err(RelnError::invalid("SPD matrix must be symmetric"));
        }
        let (w, _) = jacobi_eigh(&c)?;
        if w.iter().any(|x| *x <= 0.0) {
            return Err(RelnError::invalid("matrix is not positive-definite"));
        }
        Ok(SpdMatrix(c))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

fn spectral_map(values: &Vector, vectors: &Matrix, f: impl Fn(f64) -> f64) -> Matrix {
    let mapped = Matrix::from_diag(&values.mapv(f));
    let out = vectors.dot(&mapped).dot(&vectors.t());
    // exact symmetry
    (&out + &out.t()) / 2.0
}

/// `V log(Λ) Vᵀ`; rejects eigenvalue ratios beyond 1e12.
pub fn spd_log(c: &SpdMatrix) -> Result<Matrix> {
    let (w, v) = jacobi_eigh(c.matrix())?;
    let largest = w[w.len() - 1];
    let smallest = w[0];
    if !(smallest > largest / SPD_CONDITION_LIMIT) {
        return Err(RelnError::invalid(format!(
            "SPD matrix too ill-conditioned for log (eigenvalues {smallest:e} .. {largest:e})"
        )));
    }
    Ok(spectral_map(&w, &v, f64::ln))
}

/// Inverse of [`spd_log`] on symmetric matrices.
pub fn spd_exp(s_mat: &Matrix) -> Result<SpdMatrix> {
    if s_mat.nrows() != s_mat.ncols() {
        return Err(RelnError::shape("spd_exp needs a square matrix"));
    }
    if max_asymmetry(s_mat) > 1e-10 {
        return Err(RelnError::invalid("spd_exp needs a symmetric matrix"));
    }
    let (w, v) = jacobi_eigh(s_mat)?;
    Ok(SpdMatrix(spectral_map(&w, &v, f64::exp)))
}

/// so(3) coordinates of the skew-symmetric part `(A - Aᵀ)/2`.
pub fn skew_extract(a: &Matrix) -> Result<[f64; 3]> {
    if a.dim() != (3, 3) {
        return Err(RelnError::shape("skew_extract needs a 3x3 matrix"));
    }
    let skew = (a - &a.t()) / 2.0;
    Ok([skew[[2, 1]], skew[[0, 2]], skew[[1, 0]]])
}

/// Odd, monotone squashing `sign(z) ln(1 + |z|)`.
pub fn psi(z: f64) -> f64 {
    z.signum() * z.abs().ln_1p()
}

/// `psi` of the modified gl(5) form between two lifted momenta.
pub fn pairwise_invariant(pi: &FourMomentum, pj: &FourMomentum) -> f64 {
    pairwise_invariant_with(pi, pj, Signature::default())
}

pub fn pairwise_invariant_with(pi: &FourMomentum, pj: &FourMomentum, sig: Signature) -> f64 {
    let z = modified_form_gl(&lorentz_lift_with(pi, sig), &lorentz_lift_with(pj, sig))
        .expect("lifts are 5x5");
    if z == 0.0 {
        0.0
    } else {
        psi(z)
    }
}
