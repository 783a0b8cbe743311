//! Small dense helpers shared by the algebra, form and geometry modules.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{RelnError, Result};

pub type Matrix = Array2<f64>;
pub type Vector = Array1<f64>;

pub fn frobenius(a: &ArrayView2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn frob(a: &Matrix) -> f64 {
    frobenius(&a.view())
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn trace(a: &Matrix) -> f64 {
    a.diag().sum()
}

pub fn is_square(a: &Matrix) -> bool {
    a.nrows() == a.ncols()
}

pub fn max_asymmetry(a: &Matrix) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    worst
}

/// LU factorization with partial pivoting, stored compactly.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
    sign: f64,
    singular: bool,
}

impl Lu {
    pub fn new(a: &Matrix) -> Result<Self> {
        if !is_square(a) {
            return Err(RelnError::shape(format!(
                "LU needs a square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let n = a.nrows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        let mut singular = false;
        for k in 0..n {
            let mut p = k;
            let mut best = lu[[k, k]].abs();
            for i in (k + 1)..n {
                if lu[[i, k]].abs() > best {
                    best = lu[[i, k]].abs();
                    p = i;
                }
            }
            if best == 0.0 {
                singular = true;
                continue;
            }
            if p != k {
                for j in 0..n {
                    lu.swap([k, j], [p, j]);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = lu[[k, k]];
            for i in (k + 1)..n {
                let f = lu[[i, k]] / pivot;
                lu[[i, k]] = f;
                if f != 0.0 {
                    for j in (k + 1)..n {
                        lu[[i, j]] -= f * lu[[k, j]];
                    }
                }
            }
        }
        Ok(Lu { lu, perm, sign, singular })
    }

    pub fn det(&self) -> f64 {
        if self.singular {
            return 0.0;
        }
        self.sign * self.lu.diag().product()
    }

    pub fn solve(&self, b: &Matrix) -> Result<Matrix> {
        let n = self.lu.nrows();
        if self.singular {
            return Err(RelnError::Numerical("singular matrix".into()));
        }
        if b.nrows() != n {
            return Err(RelnError::shape("right-hand side row count"));
        }
        let mut x = Matrix::zeros(b.raw_dim());
        for col in 0..b.ncols() {
            let mut y: Vec<f64> = (0..n).map(|i| b[[self.perm[i], col]]).collect();
            for i in 0..n {
                for k in 0..i {
                    y[i] -= self.lu[[i, k]] * y[k];
                }
            }
            for i in (0..n).rev() {
                for k in (i + 1)..n {
                    y[i] -= self.lu[[i, k]] * y[k];
                }
                y[i] /= self.lu[[i, i]];
            }
            for i in 0..n {
                x[[i, col]] = y[i];
            }
        }
        Ok(x)
    }
}

pub fn det(a: &Matrix) -> Result<f64> {
    Ok(Lu::new(a)?.det())
}

pub fn inverse(a: &Matrix) -> Result<Matrix> {
    Lu::new(a)?.solve(&Matrix::eye(a.nrows()))
}
