//! Ad-invariant bilinear forms on Lie algebras.
//!
//! Forms are stored as symmetric Gram matrices in basis coordinates, so
//! `B(x, y) = xᵀ G y`. The modified form on gl(n) adds the trace product on the
//! center `ℝI` to the Killing form of sl(n), which makes it non-degenerate
//! where the Killing form of gl(n) is not.

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::error::{RelnError, Result};
use crate::geomaps::{jacobi_eigh, numerical_rank};
use crate::liealg::{sample_algebra, sample_group, AlgebraKind, LieAlgebraBasis};
use crate::linalg::{det, inverse, is_square, max_asymmetry, trace, Matrix, Vector};
use crate::rng::Rng;

pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormKind {
    Trace,
    KillingOracle,
    ModifiedGl,
    ModifiedGeneral,
    Custom,
}

impl FormKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "trace" => Ok(FormKind::Trace),
            "killing" | "killing_oracle" => Ok(FormKind::KillingOracle),
            "modified_gl" | "modified" => Ok(FormKind::ModifiedGl),
            "modified_general" => Ok(FormKind::ModifiedGeneral),
            other => Err(RelnError::invalid(format!("unknown form kind `{other}`"))),
        }
    }
}

/// A symmetric bilinear form in basis coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearForm {
    gram: Matrix,
    kind: FormKind,
    algebra: AlgebraKind,
}

impl BilinearForm {
    /// Wraps an explicit Gram matrix (must be symmetric to 1e-12).
    pub fn from_gram(gram: Matrix, basis: &LieAlgebraBasis) -> Result<Self> {
        Self::with_kind(gram, FormKind::Custom, basis)
    }

    fn with_kind(gram: Matrix, kind: FormKind, basis: &LieAlgebraBasis) -> Result<Self> {
        let k = basis.dim();
        if gram.dim() != (k, k) {
            return Err(RelnError::shape(format!("gram must be {k}x{k}")));
        }
        let scale = gram.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if max_asymmetry(&gram) > 1e-12 * scale {
            return Err(RelnError::invalid("gram matrix is not symmetric"));
        }
        // store exactly symmetric
        let gram = (&gram + &gram.t()) / 2.0;
        Ok(BilinearForm { gram, kind, algebra: basis.kind() })
    }

    fn from_matrix_form(
        basis: &LieAlgebraBasis,
        kind: FormKind,
        f: impl Fn(&Matrix, &Matrix) -> Result<f64>,
    ) -> Result<Self> {
        let e = basis.basis();
        let k = e.len();
        let mut gram = Matrix::zeros((k, k));
        for i in 0..k {
            for j in i..k {
                let v = f(&e[i], &e[j])?;
                gram[[i, j]] = v;
                gram[[j, i]] = v;
            }
        }
        Self::with_kind(gram, kind, basis)
    }

    /// `tr(XY)` on the basis.
    pub fn trace(basis: &LieAlgebraBasis) -> Result<Self> {
        Self::from_matrix_form(basis, FormKind::Trace, trace_form)
    }

    /// `2n tr(XY) - tr(X) tr(Y)` with `n` the ambient matrix size.
    pub fn modified_gl(basis: &LieAlgebraBasis) -> Result<Self> {
        Self::from_matrix_form(basis, FormKind::ModifiedGl, modified_form_gl)
    }

    pub fn of_kind(kind: FormKind, basis: &LieAlgebraBasis) -> Result<Self> {
        match kind {
            FormKind::Trace => Self::trace(basis),
            FormKind::KillingOracle => Ok(killing_oracle(basis)),
            FormKind::ModifiedGl => Self::modified_gl(basis),
            FormKind::ModifiedGeneral => {
                let decomposition = CenterDecomposition::compute(basis)?;
                let p = decomposition.center.len();
                modified_form_general(basis, &decomposition, &Matrix::eye(p))
            }
            FormKind::Custom => Err(RelnError::invalid("custom forms need an explicit gram")),
        }
    }

    pub fn gram(&self) -> &Matrix {
        &self.gram
    }

    pub fn kind(&self) -> FormKind {
        self.kind
    }

    pub fn algebra(&self) -> AlgebraKind {
        self.algebra
    }

    pub fn dim(&self) -> usize {
        self.gram.nrows()
    }

    /// `xᵀ G y`.
    pub fn apply(&self, x: &[f64], y: &[f64]) -> f64 {
        let k = self.dim();
        debug_assert!(x.len() == k && y.len() == k);
        let mut total = 0.0;
        for i in 0..k {
            if x[i] == 0.0 {
                continue;
            }
            let row = self.gram.row(i);
            let mut s = 0.0;
            for j in 0..k {
                s += row[j] * y[j];
            }
            total += x[i] * s;
        }
        total
    }

    pub fn apply_view(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
        x.dot(&self.gram.dot(&y))
    }
}

/// `tr(XY)`.
pub fn trace_form(x: &Matrix, y: &Matrix) -> Result<f64> {
    check_same_square(x, y, "trace_form")?;
    Ok((x * &y.t()).sum())
}

/// `2n tr(XY) - tr(X) tr(Y)` on n×n matrices.
pub fn modified_form_gl(x: &Matrix, y: &Matrix) -> Result<f64> {
    check_same_square(x, y, "modified_form_gl")?;
    let n = x.nrows() as f64;
    Ok(2.0 * n * (x * &y.t()).sum() - trace(x) * trace(y))
}

fn check_same_square(x: &Matrix, y: &Matrix, what: &str) -> Result<()> {
    if x.dim() != y.dim() || !is_square(x) {
        return Err(RelnError::shape(format!("{what}: {:?} vs {:?}", x.dim(), y.dim())));
    }
    Ok(())
}

/// Killing form `tr(ad_x ad_y)` computed directly from the structure constants.
pub fn killing_oracle(basis: &LieAlgebraBasis) -> BilinearForm {
    let k = basis.dim();
    let c = basis.structure();
    // tr(ad_i ad_j) = Σ_{a,b} c[i][b][a] c[j][a][b]
    let mut gram = Matrix::zeros((k, k));
    for i in 0..k {
        for j in i..k {
            let mut s = 0.0;
            for a in 0..k {
                for b in 0..k {
                    s += c[[i, b, a]] * c[[j, a, b]];
                }
            }
            gram[[i, j]] = s;
            gram[[j, i]] = s;
        }
    }
    BilinearForm { gram, kind: FormKind::KillingOracle, algebra: basis.kind() }
}

/// Split of a reductive algebra into its center and derived algebra, as
/// coordinate vectors.
#[derive(Debug, Clone)]
pub struct CenterDecomposition {
    pub center: Vec<Vector>,
    pub semisimple: Vec<Vector>,
}

impl CenterDecomposition {
    /// Canonical split of gl(n): center spanned by `I/n` (whose coordinate is
    /// `tr X`) and sl(n) spanned by off-diagonal units and `E_ii - E_{i+1,i+1}`.
    pub fn gl(basis: &LieAlgebraBasis) -> Result<Self> {
        let n = basis.n();
        let center = vec![basis.vee(&(Matrix::eye(n) / n as f64))?];
        let sl = LieAlgebraBasis::new(AlgebraKind::Sl(n))?;
        let semisimple = sl.basis().iter().map(|e| basis.vee(e)).collect::<Result<Vec<_>>>()?;
        Ok(CenterDecomposition { center, semisimple })
    }

    /// Numerical split: the center is the joint kernel of `ad`, the derived
    /// algebra the span of all structure-constant vectors.
    pub fn compute(basis: &LieAlgebraBasis) -> Result<Self> {
        if matches!(basis.kind(), AlgebraKind::Gl(_)) {
            return Self::gl(basis);
        }
        let k = basis.dim();
        let c = basis.structure();
        // ad map x ↦ ad_x flattened: rows (j, l), columns i.
        let mut ad = Matrix::zeros((k * k, k));
        let mut derived = Matrix::zeros((k, k * k));
        for i in 0..k {
            for j in 0..k {
                for l in 0..k {
                    ad[[j * k + l, i]] = c[[i, j, l]];
                    derived[[l, i * k + j]] = c[[i, j, l]];
                }
            }
        }
        let split = |m: Matrix, keep_null: bool| -> Result<Vec<Vector>> {
            let (w, v) = jacobi_eigh(&m)?;
            let top = w.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            Ok((0..w.len())
                .filter(|&i| (w[i].abs() <= 1e-10 * top.max(1e-300)) == keep_null)
                .map(|i| v.column(i).to_owned())
                .collect())
        };
        let center = split(ad.t().dot(&ad), true)?;
        let semisimple = split(derived.dot(&derived.t()), false)?;
        let out = CenterDecomposition { center, semisimple };
        out.validate(basis)?;
        Ok(out)
    }

    pub fn validate(&self, basis: &LieAlgebraBasis) -> Result<()> {
        let k = basis.dim();
        for z in &self.center {
            if z.len() != k {
                return Err(RelnError::shape("center vector length"));
            }
            let ad = basis.ad_matrix(z.as_slice().expect("contiguous"))?;
            if ad.iter().any(|v| v.abs() > 1e-12) {
                return Err(RelnError::invalid("center element does not commute with the algebra"));
            }
        }
        if self.semisimple.iter().any(|s| s.len() != k) {
            return Err(RelnError::shape("semisimple vector length"));
        }
        let p = self.change_of_basis(k);
        if self.center.len() + self.semisimple.len() != k || numerical_rank(&p, RANK_TOL)? != k {
            return Err(RelnError::invalid("center and derived algebra do not span the algebra"));
        }
        Ok(())
    }

    /// Columns: semisimple vectors followed by center vectors.
    fn change_of_basis(&self, k: usize) -> Matrix {
        let cols = self.semisimple.len() + self.center.len();
        let mut p = Matrix::zeros((k, cols));
        for (c, v) in self.semisimple.iter().chain(&self.center).enumerate() {
            p.column_mut(c).assign(v);
        }
        p
    }
}

/// Killing form on the derived algebra plus `center_inner` on the center,
/// with the two blocks orthogonal.
pub fn modified_form_general(
    basis: &LieAlgebraBasis,
    decomposition: &CenterDecomposition,
    center_inner: &Matrix,
) -> Result<BilinearForm> {
    decomposition.validate(basis)?;
    let p = decomposition.center.len();
    if center_inner.dim() != (p, p) {
        return Err(RelnError::shape(format!("center inner product must be {p}x{p}")));
    }
    if p > 0 {
        if max_asymmetry(center_inner) > 1e-12 {
            return Err(RelnError::invalid("center inner product is not symmetric"));
        }
        let (w, _) = jacobi_eigh(center_inner)?;
        if w[0] <= 0.0 {
            return Err(RelnError::invalid("center inner product is not positive-definite"));
        }
    }
    let k = basis.dim();
    let q = decomposition.semisimple.len();
    let change = decomposition.change_of_basis(k);
    let killing = killing_oracle(basis);
    let ss = change.slice(ndarray::s![.., 0..q]);
    let mut block = Matrix::zeros((k, k));
    block.slice_mut(ndarray::s![0..q, 0..q]).assign(&ss.t().dot(killing.gram()).dot(&ss));
    block.slice_mut(ndarray::s![q.., q..]).assign(center_inner);
    let change_inv = inverse(&change)?;
    let gram = change_inv.t().dot(&block).dot(&change_inv);
    BilinearForm::with_kind(gram, FormKind::ModifiedGeneral, basis)
}

/// `(1/|Γ|) Σ γᵀ M γ` over the listed component actions on the center.
pub fn averaged_center_form(center_inner: &Matrix, actions: &[Matrix]) -> Result<Matrix> {
    if actions.is_empty() {
        return Err(RelnError::invalid("no component actions to average over"));
    }
    let p = center_inner.nrows();
    if center_inner.dim() != (p, p) {
        return Err(RelnError::shape("center inner product must be square"));
    }
    let (w, _) = jacobi_eigh(center_inner)?;
    if w.iter().any(|x| *x <= 0.0) {
        return Err(RelnError::invalid("center inner product is not positive-definite"));
    }
    let mut acc = Matrix::zeros((p, p));
    for gamma in actions {
        if gamma.dim() != (p, p) {
            return Err(RelnError::shape("component action size"));
        }
        if det(gamma)? == 0.0 {
            return Err(RelnError::invalid("component action is not invertible"));
        }
        acc = acc + gamma.t().dot(center_inner).dot(gamma);
    }
    Ok(acc / actions.len() as f64)
}

/// Maximum of `|B(Ad_g x, Ad_g y) - B(x, y)| / (1 + |B(x, y)|)` over random
/// draws of `g` (exponent scale `sigma`) and unit-scale `x`, `y`.
pub fn check_ad_invariance(
    form: &BilinearForm,
    basis: &LieAlgebraBasis,
    trials: usize,
    sigma: f64,
    rng: &mut Rng,
) -> Result<f64> {
    if trials == 0 {
        return Err(RelnError::invalid("trials must be >= 1"));
    }
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let g = sample_group(basis, sigma, rng)?;
        let x = sample_algebra(basis, 1.0, rng)?;
        let y = sample_algebra(basis, 1.0, rng)?;
        let base = form.apply_view(x.view(), y.view());
        let moved = form.apply_view(g.adj.dot(&x).view(), g.adj.dot(&y).view());
        worst = worst.max((moved - base).abs() / (1.0 + base.abs()));
    }
    Ok(worst)
}

/// Numerical rank of the Gram matrix (singular values above 1e-10 of the largest).
pub fn nondegeneracy_rank(form: &BilinearForm) -> Result<usize> {
    numerical_rank(form.gram(), RANK_TOL)
}

/// `X = X₀ + (tr X / n) I`; returns `(X₀, tr X)`.
pub fn decompose_gl(x: &Matrix) -> Result<(Matrix, f64)> {
    if !is_square(x) {
        return Err(RelnError::shape("decompose_gl needs a square matrix"));
    }
    let n = x.nrows();
    let tr = trace(x);
    let traceless = x - &(Matrix::eye(n) * (tr / n as f64));
    Ok((traceless, tr))
}
