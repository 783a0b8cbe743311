use crate::error::{RelnError, Result};
use crate::linalg::{frob, max_asymmetry, Matrix, Vector};

const MAX_SWEEPS: usize = 100;
const OFF_DIAGONAL_TOL: f64 = 1e-13;
const SYMMETRY_TOL: f64 = 1e-10;

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[[i, j]] * a[[i, j]];
            }
        }
    }
    s.sqrt()
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching orthonormal
/// eigenvectors as columns. Iterates until the off-diagonal Frobenius norm
/// drops below `1e-13 |S|_F`, for at most 100 sweeps.
pub fn jacobi_eigh(s: &Matrix) -> Result<(Vector, Matrix)> {
    if s.nrows() != s.ncols() {
        return Err(RelnError::shape("jacobi_eigh needs a square matrix"));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(RelnError::NonFinite("jacobi_eigh input"));
    }
    let scale = frob(s);
    if max_asymmetry(s) > SYMMETRY_TOL * scale.max(1.0) {
        return Err(RelnError::invalid("jacobi_eigh needs a symmetric matrix"));
    }
    let n = s.nrows();
    let mut a = s.clone();
    // symmetrize exactly so rotations see a symmetric input
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = m;
            a[[j, i]] = m;
        }
    }
    let mut v = Matrix::eye(n);
    let target = OFF_DIAGONAL_TOL * scale;
    let mut converged = off_diagonal_norm(&a) <= target;
    let mut sweeps = 0;
    while !converged && sweeps < MAX_SWEEPS {
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - sn * akq;
                    a[[k, q]] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - sn * aqk;
                    a[[q, k]] = sn * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - sn * vkq;
                    v[[k, q]] = sn * vkp + c * vkq;
                }
            }
        }
        sweeps += 1;
        converged = off_diagonal_norm(&a) <= target;
    }
    if !converged {
        return Err(RelnError::Numerical(format!(
            "Jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[i, i]].total_cmp(&a[[j, j]]));
    let values = Vector::from_iter(order.iter().map(|&i| a[[i, i]]));
    let mut vectors = Matrix::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        vectors.column_mut(dst).assign(&v.column(src));
    }
    Ok((values, vectors))
}

/// Singular values (descending) by one-sided Jacobi rotations on the columns
/// of `a`, which diagonalizes `aᵀa` without forming it.
pub fn singular_values(a: &Matrix) -> Result<Vector> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(RelnError::NonFinite("singular_values input"));
    }
    let (m, n) = a.dim();
    let mut u = a.clone();
    let negligible = (f64::EPSILON * frob(a)).powi(2);
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..m {
                    alpha += u[[i, p]] * u[[i, p]];
                    beta += u[[i, q]] * u[[i, q]];
                    gamma += u[[i, p]] * u[[i, q]];
                }
                if gamma == 0.0
                    || alpha <= negligible
                    || beta <= negligible
                    || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt()
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let up = u[[i, p]];
                    let uq = u[[i, q]];
                    u[[i, p]] = c * up - s * uq;
                    u[[i, q]] = s * up + c * uq;
                }
            }
        }
        if !rotated {
            let mut sv: Vec<f64> =
                (0..n).map(|j| u.column(j).iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
            sv.sort_by(|x, y| y.total_cmp(x));
            return Ok(Vector::from(sv));
        }
    }
    Err(RelnError::Numerical("one-sided Jacobi did not converge".into()))
}

/// Numerical rank: singular values above `rel_tol` times the largest.
pub fn numerical_rank(a: &Matrix, rel_tol: f64) -> Result<usize> {
    let sv = singular_values(a)?;
    let top = sv.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|s| **s > rel_tol * top).count())
}
