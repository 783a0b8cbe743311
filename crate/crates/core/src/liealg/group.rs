use crate::error::{RelnError, Result};
use crate::linalg::{frob, inverse, Matrix, Vector};
use crate::rng::{self, Rng};

use super::basis::LieAlgebraBasis;
use super::expm::matrix_exp;

const MAX_CONDITION: f64 = 1e6;
const MAX_RESAMPLES: usize = 10;

/// An invertible matrix together with its vectorized adjoint action.
#[derive(Debug, Clone)]
pub struct GroupElement {
    pub g: Matrix,
    pub g_inv: Matrix,
    /// Column `i` holds `vee(g E_i g⁻¹)`.
    pub adj: Matrix,
}

impl GroupElement {
    pub fn identity(basis: &LieAlgebraBasis) -> Self {
        GroupElement {
            g: Matrix::eye(basis.n()),
            g_inv: Matrix::eye(basis.n()),
            adj: Matrix::eye(basis.dim()),
        }
    }

    /// Builds the element from `g` and a known inverse.
    pub fn with_inverse(g: Matrix, g_inv: Matrix, basis: &LieAlgebraBasis) -> Result<Self> {
        let k = basis.dim();
        let mut adj = Matrix::zeros((k, k));
        for (i, e) in basis.basis().iter().enumerate() {
            let conj = g.dot(e).dot(&g_inv);
            let col = basis.vee_with_tol(&conj, 1e-7)?;
            adj.column_mut(i).assign(&col);
        }
        Ok(GroupElement { g, g_inv, adj })
    }

    /// Builds the element from an arbitrary invertible `g` (inverse by LU).
    pub fn from_matrix(g: Matrix, basis: &LieAlgebraBasis) -> Result<Self> {
        if g.dim() != (basis.n(), basis.n()) {
            return Err(RelnError::shape("group element does not match the algebra size"));
        }
        let g_inv = inverse(&g)?;
        Self::with_inverse(g, g_inv, basis)
    }

    /// `exp(hat(x))`, with the inverse taken as `exp(-hat(x))`.
    pub fn exp(x: &[f64], basis: &LieAlgebraBasis) -> Result<Self> {
        let xhat = basis.hat(x)?;
        let g = matrix_exp(&xhat)?;
        let g_inv = matrix_exp(&(-&xhat))?;
        Self::with_inverse(g, g_inv, basis)
    }

    /// Group product `self · other`.
    pub fn compose(&self, other: &GroupElement) -> GroupElement {
        GroupElement {
            g: self.g.dot(&other.g),
            g_inv: other.g_inv.dot(&self.g_inv),
            adj: self.adj.dot(&other.adj),
        }
    }

    /// `g X g⁻¹` at the matrix level.
    pub fn conjugate(&self, x: &Matrix) -> Matrix {
        self.g.dot(x).dot(&self.g_inv)
    }

    /// Adjoint action on coordinates.
    pub fn act(&self, x: &[f64]) -> Vector {
        self.adj.dot(&ndarray::ArrayView1::from(x))
    }

    /// Upper bound on the 2-norm condition number.
    pub fn condition_bound(&self) -> f64 {
        frob(&self.g) * frob(&self.g_inv)
    }
}

/// I.i.d. Gaussian coordinates with standard deviation `sigma`.
pub fn sample_algebra(basis: &LieAlgebraBasis, sigma: f64, rng: &mut Rng) -> Result<Vector> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(RelnError::invalid(format!("sigma must be positive, got {sigma}")));
    }
    Ok(Vector::from_iter((0..basis.dim()).map(|_| sigma * rng::normal(rng))))
}

/// `exp` of a Gaussian algebra sample; resamples (up to 10 times) when the
/// condition number of `g` would exceed 1e6.
pub fn sample_group(basis: &LieAlgebraBasis, sigma: f64, rng: &mut Rng) -> Result<GroupElement> {
    for _ in 0..MAX_RESAMPLES {
        let x = sample_algebra(basis, sigma, rng)?;
        let el = GroupElement::exp(x.as_slice().expect("contiguous"), basis)?;
        if el.condition_bound() <= MAX_CONDITION {
            return Ok(el);
        }
    }
    Err(RelnError::Numerical(format!(
        "no group element with condition number <= {MAX_CONDITION:e} after {MAX_RESAMPLES} draws"
    )))
}

/// Group sample that degenerates to the identity when `sigma == 0`.
pub fn sample_group_or_identity(
    basis: &LieAlgebraBasis,
    sigma: f64,
    rng: &mut Rng,
) -> Result<GroupElement> {
    if sigma == 0.0 {
        Ok(GroupElement::identity(basis))
    } else {
        sample_group(basis, sigma, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liealg::{bracket, AlgebraKind};

    fn algebras() -> Vec<LieAlgebraBasis> {
        [
            AlgebraKind::So3,
            AlgebraKind::Sl(3),
            AlgebraKind::Sp4,
            AlgebraKind::So13,
            AlgebraKind::Gl(3),
        ]
        .into_iter()
        .map(|k| LieAlgebraBasis::new(k).unwrap())
        .collect()
    }

    fn rel(a: &Vector, b: &Vector) -> f64 {
        let d: f64 = (a - b).iter().map(|v| v * v).sum::<f64>().sqrt();
        d / (1.0 + b.iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    #[test]
    fn sigma_must_be_positive() {
        let so3 = LieAlgebraBasis::new(AlgebraKind::So3).unwrap();
        let mut r = rng::seeded(1);
        assert!(sample_algebra(&so3, 0.0, &mut r).is_err());
        assert!(sample_algebra(&so3, -1.0, &mut r).is_err());
        assert!(sample_group(&so3, 0.0, &mut r).is_err());
    }

    #[test]
    fn sampling_is_reproducible() {
        let sp4 = LieAlgebraBasis::new(AlgebraKind::Sp4).unwrap();
        let a = sample_algebra(&sp4, 1.0, &mut rng::seeded(9)).unwrap();
        let b = sample_algebra(&sp4, 1.0, &mut rng::seeded(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empirical_std_matches_sigma() {
        let so3 = LieAlgebraBasis::new(AlgebraKind::So3).unwrap();
        let mut r = rng::seeded(2024);
        let sigma = 0.7;
        let draws = 100_000;
        let mut sq = [0.0f64; 3];
        for _ in 0..draws {
            let x = sample_algebra(&so3, sigma, &mut r).unwrap();
            for i in 0..3 {
                sq[i] += x[i] * x[i];
            }
        }
        for s in sq {
            let std = (s / draws as f64).sqrt();
            assert!((std - sigma).abs() <= 0.02 * sigma, "std {std}");
        }
    }

    #[test]
    fn tiny_sigma_gives_identity() {
        let gl = LieAlgebraBasis::new(AlgebraKind::Gl(3)).unwrap();
        let el = sample_group(&gl, 1e-12, &mut rng::seeded(3)).unwrap();
        assert!(frob(&(&el.g - Matrix::eye(3))) < 1e-10);
        assert!(frob(&(&el.adj - Matrix::eye(9))) < 1e-10);
    }

    #[test]
    fn so3_samples_are_rotations() {
        let so3 = LieAlgebraBasis::new(AlgebraKind::So3).unwrap();
        let mut r = rng::seeded(4);
        for _ in 0..100 {
            let el = sample_group(&so3, 0.5, &mut r).unwrap();
            assert!(frob(&(el.g.t().dot(&el.g) - Matrix::eye(3))) < 1e-10);
            assert!((crate::linalg::det(&el.g).unwrap() - 1.0).abs() < 1e-10);
            // adjoint coincides with rotation on R^3
            let v = sample_algebra(&so3, 1.0, &mut r).unwrap();
            let lhs = el.act(v.as_slice().unwrap());
            let rhs = el.g.dot(&v);
            assert!((lhs - rhs).iter().all(|d| d.abs() < 1e-10));
        }
    }

    #[test]
    fn adjoint_matches_conjugation() {
        let mut r = rng::seeded(5);
        for alg in algebras() {
            for _ in 0..100 {
                let el = sample_group(&alg, 0.5, &mut r).unwrap();
                assert!(frob(&(el.g.dot(&el.g_inv) - Matrix::eye(alg.n()))) <= 1e-10);
                let x = sample_algebra(&alg, 1.0, &mut r).unwrap();
                let direct = alg.vee(&el.conjugate(&alg.hat(x.as_slice().unwrap()).unwrap())).unwrap();
                let via_adj = el.act(x.as_slice().unwrap());
                assert!(rel(&via_adj, &direct) <= 1e-10);
            }
        }
    }

    #[test]
    fn adjoint_is_automorphism_and_composes() {
        let mut r = rng::seeded(6);
        for alg in algebras() {
            for _ in 0..30 {
                let g = sample_group(&alg, 0.5, &mut r).unwrap();
                let h = sample_group(&alg, 0.5, &mut r).unwrap();
                let x = alg.hat(sample_algebra(&alg, 1.0, &mut r).unwrap().as_slice().unwrap()).unwrap();
                let y = alg.hat(sample_algebra(&alg, 1.0, &mut r).unwrap().as_slice().unwrap()).unwrap();
                let lhs = alg.vee(&g.conjugate(&bracket(&x, &y).unwrap())).unwrap();
                let rhs = alg
                    .vee(&bracket(&g.conjugate(&x), &g.conjugate(&y)).unwrap())
                    .unwrap();
                assert!(rel(&lhs, &rhs) <= 1e-9);

                let gh = GroupElement::from_matrix(g.g.dot(&h.g), &alg).unwrap();
                let composed = g.compose(&h);
                let diff = frob(&(&gh.adj - &composed.adj)) / (1.0 + frob(&gh.adj));
                assert!(diff <= 1e-9);
            }
        }
    }
}
