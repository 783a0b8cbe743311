use std::fmt;

use ndarray::{Array3, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{RelnError, Result};
use crate::linalg::{frob, inverse, Matrix, Vector};

/// The matrix Lie algebras supported by the library.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AlgebraKind {
    So3,
    Sl(usize),
    Sp4,
    So13,
    Gl(usize),
}

impl AlgebraKind {
    /// Parses `so3`, `sp4`, `so13`, `gl<k>`/`sl<k>`, or `gln`/`sln` with an explicit `n`.
    pub fn parse(name: &str, n: Option<usize>) -> Result<Self> {
        let lower = name.trim().to_ascii_lowercase();
        let sized = |n: Option<usize>, label: &str| -> Result<usize> {
            let n = n.ok_or_else(|| RelnError::invalid(format!("{label} requires n")))?;
            if n < 2 {
                return Err(RelnError::invalid(format!("{label} requires n >= 2, got {n}")));
            }
            Ok(n)
        };
        match lower.as_str() {
            "so3" => Ok(AlgebraKind::So3),
            "sp4" => Ok(AlgebraKind::Sp4),
            "so13" => Ok(AlgebraKind::So13),
            "gln" => Ok(AlgebraKind::Gl(sized(n, "gln")?)),
            "sln" => Ok(AlgebraKind::Sl(sized(n, "sln")?)),
            s => {
                let (prefix, digits) = s.split_at(s.len().min(2));
                match (prefix, digits.parse::<usize>()) {
                    ("gl", Ok(k)) => Ok(AlgebraKind::Gl(sized(Some(k), "gl")?)),
                    ("sl", Ok(k)) => Ok(AlgebraKind::Sl(sized(Some(k), "sl")?)),
                    _ => Err(RelnError::UnknownAlgebra(name.to_string())),
                }
            }
        }
    }

    /// Canonical identifier as written to file headers.
    pub fn name(&self) -> String {
        match self {
            AlgebraKind::So3 => "so3".into(),
            AlgebraKind::Sl(n) => format!("sl{n}"),
            AlgebraKind::Sp4 => "sp4".into(),
            AlgebraKind::So13 => "so13".into(),
            AlgebraKind::Gl(_) => "gln".into(),
        }
    }

    /// Ambient matrix size.
    pub fn n(&self) -> usize {
        match self {
            AlgebraKind::So3 => 3,
            AlgebraKind::Sl(n) | AlgebraKind::Gl(n) => *n,
            AlgebraKind::Sp4 | AlgebraKind::So13 => 4,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            AlgebraKind::So3 => 3,
            AlgebraKind::Sl(n) => n * n - 1,
            AlgebraKind::Sp4 => 10,
            AlgebraKind::So13 => 6,
            AlgebraKind::Gl(n) => n * n,
        }
    }
}

impl fmt::Display for AlgebraKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlgebraKind::Gl(n) => write!(f, "gl{n}"),
            other => f.write_str(&other.name()),
        }
    }
}

/// One nonzero structure constant `[E_i, E_j] ∋ value · E_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureEntry {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub value: f64,
}

/// An ordered basis of a matrix Lie algebra with precomputed structure
/// constants and the Frobenius dual data used by [`LieAlgebraBasis::vee`].
#[derive(Debug, Clone)]
pub struct LieAlgebraBasis {
    kind: AlgebraKind,
    n: usize,
    basis: Vec<Matrix>,
    structure: Array3<f64>,
    sparse: Vec<StructureEntry>,
    dual_gram_inverse: Matrix,
}

const VEE_TOL: f64 = 1e-8;
const STRUCTURE_ZERO: f64 = 1e-14;

fn unit(n: usize, i: usize, j: usize) -> Matrix {
    let mut m = Matrix::zeros((n, n));
    m[[i, j]] = 1.0;
    m
}

fn so3_basis() -> Vec<Matrix> {
    (0..3)
        .map(|axis| {
            let mut v = [0.0; 3];
            v[axis] = 1.0;
            skew3(&v)
        })
        .collect()
}

/// The so(3) hat map on a 3-vector.
pub fn skew3(v: &[f64]) -> Matrix {
    ndarray::array![
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0]
    ]
}

fn sl_basis(n: usize) -> Vec<Matrix> {
    let mut out = Vec::with_capacity(n * n - 1);
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(unit(n, i, j));
            out.push(unit(n, j, i));
        }
    }
    for i in 0..n - 1 {
        out.push(unit(n, i, i) - unit(n, i + 1, i + 1));
    }
    out
}

fn sp4_basis() -> Vec<Matrix> {
    // X = [[A, B], [C, -Aᵀ]] with B, C symmetric preserves J = [[0, I], [-I, 0]].
    let mut out = Vec::with_capacity(10);
    for i in 0..2 {
        for j in 0..2 {
            let mut m = Matrix::zeros((4, 4));
            m[[i, j]] = 1.0;
            m[[2 + j, 2 + i]] = -1.0;
            out.push(m);
        }
    }
    for offset in [(0usize, 2usize), (2, 0)] {
        for (i, j) in [(0usize, 0usize), (1, 1), (0, 1)] {
            let mut m = Matrix::zeros((4, 4));
            m[[offset.0 + i, offset.1 + j]] = 1.0;
            m[[offset.0 + j, offset.1 + i]] = 1.0;
            out.push(m);
        }
    }
    out
}

fn so13_basis() -> Vec<Matrix> {
    // η = diag(-1, 1, 1, 1): three spatial rotations followed by three boosts.
    let mut out = Vec::with_capacity(6);
    for r in so3_basis() {
        let mut m = Matrix::zeros((4, 4));
        m.slice_mut(ndarray::s![1.., 1..]).assign(&r);
        out.push(m);
    }
    for axis in 1..4 {
        out.push(unit(4, 0, axis) + unit(4, axis, 0));
    }
    out
}

fn gl_basis(n: usize) -> Vec<Matrix> {
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push(unit(n, i, j));
        }
    }
    out
}

/// The standard symplectic form `[[0, I2], [-I2, 0]]`.
pub fn symplectic_j() -> Matrix {
    let mut j = Matrix::zeros((4, 4));
    for i in 0..2 {
        j[[i, i + 2]] = 1.0;
        j[[i + 2, i]] = -1.0;
    }
    j
}

/// Minkowski metric `diag(-1, 1, 1, 1)` used by the so(1,3) basis.
pub fn minkowski_mostly_plus() -> Matrix {
    Matrix::from_diag(&ndarray::arr1(&[-1.0, 1.0, 1.0, 1.0]))
}

/// Builds the algebra `name` (`n` is only read for `gln`/`sln`).
pub fn make_algebra(name: &str, n: Option<usize>) -> Result<LieAlgebraBasis> {
    LieAlgebraBasis::new(AlgebraKind::parse(name, n)?)
}

impl LieAlgebraBasis {
    pub fn new(kind: AlgebraKind) -> Result<Self> {
        let basis = match kind {
            AlgebraKind::So3 => so3_basis(),
            AlgebraKind::Sl(n) => sl_basis(n),
            AlgebraKind::Sp4 => sp4_basis(),
            AlgebraKind::So13 => so13_basis(),
            AlgebraKind::Gl(n) => gl_basis(n),
        };
        Self::from_matrices(kind, basis)
    }

    /// Builds a basis from explicit matrices, computing the dual Gram data and
    /// structure constants. Fails if the matrices are dependent or the span is
    /// not closed under the bracket.
    pub fn from_matrices(kind: AlgebraKind, basis: Vec<Matrix>) -> Result<Self> {
        let k = basis.len();
        if k == 0 {
            return Err(RelnError::invalid("empty basis"));
        }
        let n = basis[0].nrows();
        if basis.iter().any(|e| e.dim() != (n, n)) {
            return Err(RelnError::shape("basis matrices must all be n x n"));
        }
        let mut gram = Matrix::zeros((k, k));
        for i in 0..k {
            for j in 0..k {
                gram[[i, j]] = (&basis[i] * &basis[j]).sum();
            }
        }
        let dual_gram_inverse = inverse(&gram)
            .map_err(|_| RelnError::invalid("basis matrices are linearly dependent"))?;
        let mut alg = LieAlgebraBasis {
            kind,
            n,
            basis,
            structure: Array3::zeros((k, k, k)),
            sparse: Vec::new(),
            dual_gram_inverse,
        };
        alg.structure = structure_constants(&alg)?;
        for i in 0..k {
            for j in 0..k {
                for l in 0..k {
                    let value = alg.structure[[i, j, l]];
                    if value != 0.0 {
                        alg.sparse.push(StructureEntry { i, j, k: l, value });
                    }
                }
            }
        }
        Ok(alg)
    }

    pub fn kind(&self) -> AlgebraKind {
        self.kind
    }

    pub fn name(&self) -> String {
        self.kind.name()
    }

    /// Ambient matrix size.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Algebra dimension.
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Matrix] {
        &self.basis
    }

    /// `structure()[[i, j, k]]` is the `E_k` coefficient of `[E_i, E_j]`.
    pub fn structure(&self) -> &Array3<f64> {
        &self.structure
    }

    pub fn structure_sparse(&self) -> &[StructureEntry] {
        &self.sparse
    }

    pub fn dual_gram_inverse(&self) -> &Matrix {
        &self.dual_gram_inverse
    }

    pub fn hat(&self, x: &[f64]) -> Result<Matrix> {
        if x.len() != self.dim() {
            return Err(RelnError::shape(format!(
                "hat: expected {} coordinates, got {}",
                self.dim(),
                x.len()
            )));
        }
        let mut out = Matrix::zeros((self.n, self.n));
        for (xi, e) in x.iter().zip(&self.basis) {
            if *xi != 0.0 {
                out.scaled_add(*xi, e);
            }
        }
        Ok(out)
    }

    pub fn hat_view(&self, x: ArrayView1<f64>) -> Result<Matrix> {
        let v: Vec<f64> = x.iter().copied().collect();
        self.hat(&v)
    }

    /// Coordinates of the Frobenius projection onto the span, without a residual check.
    pub fn project(&self, x: &Matrix) -> Result<Vector> {
        if x.dim() != (self.n, self.n) {
            return Err(RelnError::shape(format!(
                "vee: expected {n}x{n}, got {}x{}",
                x.nrows(),
                x.ncols(),
                n = self.n
            )));
        }
        let b = Vector::from_iter(self.basis.iter().map(|e| (e * x).sum()));
        Ok(self.dual_gram_inverse.dot(&b))
    }

    /// Inverse of [`hat`](Self::hat). Errors when `x` is not in the span
    /// (residual above `1e-8 (1 + |x|_F)`).
    pub fn vee(&self, x: &Matrix) -> Result<Vector> {
        self.vee_with_tol(x, VEE_TOL)
    }

    pub fn vee_with_tol(&self, x: &Matrix, tol: f64) -> Result<Vector> {
        let coords = self.project(x)?;
        let back = self.hat(coords.as_slice().expect("contiguous"))?;
        let residual = frob(&(x - &back));
        if residual > tol * (1.0 + frob(x)) {
            return Err(RelnError::NotInSpan { algebra: self.kind.to_string(), residual });
        }
        Ok(coords)
    }

    /// K×K matrix of `y ↦ [hat(x), y]` in basis coordinates.
    pub fn ad_matrix(&self, x: &[f64]) -> Result<Matrix> {
        let k = self.dim();
        if x.len() != k {
            return Err(RelnError::shape(format!("ad_matrix: expected {k} coordinates")));
        }
        let mut ad = Matrix::zeros((k, k));
        for e in &self.sparse {
            ad[[e.k, e.j]] += x[e.i] * e.value;
        }
        Ok(ad)
    }

    /// Coordinates of `[hat(u), hat(v)]` from the structure constants.
    pub fn bracket_coords(&self, u: &[f64], v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for e in &self.sparse {
            out[e.k] += e.value * u[e.i] * v[e.j];
        }
    }

    /// Whether `x` satisfies the defining constraint of the algebra.
    pub fn satisfies_constraint(&self, x: &Matrix, tol: f64) -> bool {
        let resid = match self.kind {
            AlgebraKind::So3 => frob(&(x + &x.t())),
            AlgebraKind::Sl(_) => crate::linalg::trace(x).abs(),
            AlgebraKind::Sp4 => {
                let j = symplectic_j();
                frob(&(x.t().dot(&j) + j.dot(x)))
            }
            AlgebraKind::So13 => {
                let eta = minkowski_mostly_plus();
                frob(&(x.t().dot(&eta) + eta.dot(x)))
            }
            AlgebraKind::Gl(_) => 0.0,
        };
        resid <= tol
    }
}

/// Matrix commutator `XY - YX`.
pub fn bracket(x: &Matrix, y: &Matrix) -> Result<Matrix> {
    if x.dim() != y.dim() || x.nrows() != x.ncols() {
        return Err(RelnError::shape(format!(
            "bracket: {:?} vs {:?}",
            x.dim(),
            y.dim()
        )));
    }
    Ok(x.dot(y) - y.dot(x))
}

/// Structure constants `c[i][j][k]` with `[E_i, E_j] = Σ_k c[i][j][k] E_k`.
pub fn structure_constants(basis: &LieAlgebraBasis) -> Result<Array3<f64>> {
    let k = basis.dim();
    let mut c = Array3::zeros((k, k, k));
    for i in 0..k {
        for j in (i + 1)..k {
            let br = bracket(&basis.basis[i], &basis.basis[j])?;
            let coords = basis
                .vee_with_tol(&br, 1e-12)
                .map_err(|_| RelnError::invalid(format!("[E_{i}, E_{j}] leaves the span")))?;
            for l in 0..k {
                let mut value = coords[l];
                if value.abs() < STRUCTURE_ZERO {
                    value = 0.0;
                }
                c[[i, j, l]] = value;
                c[[j, i, l]] = -value;
            }
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::array;

    const ALL: [AlgebraKind; 7] = [
        AlgebraKind::So3,
        AlgebraKind::Sl(2),
        AlgebraKind::Sl(3),
        AlgebraKind::Sp4,
        AlgebraKind::So13,
        AlgebraKind::Gl(2),
        AlgebraKind::Gl(3),
    ];

    /// Rank of a set of matrices flattened to vectors, by Gaussian elimination.
    fn rank_of(rows: Vec<Vec<f64>>) -> usize {
        let mut m = rows;
        let cols = m.first().map_or(0, |r| r.len());
        let mut rank = 0;
        for c in 0..cols {
            let Some(p) = (rank..m.len()).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs()))
            else {
                break;
            };
            if m[p][c].abs() < 1e-10 {
                continue;
            }
            m.swap(rank, p);
            for r in 0..m.len() {
                if r != rank {
                    let f = m[r][c] / m[rank][c];
                    for cc in 0..cols {
                        m[r][cc] -= f * m[rank][cc];
                    }
                }
            }
            rank += 1;
        }
        rank
    }

    #[test]
    fn dimensions() {
        assert_eq!(make_algebra("so3", None).unwrap().dim(), 3);
        assert_eq!(make_algebra("gln", Some(3)).unwrap().dim(), 9);
        assert_eq!(make_algebra("sl3", None).unwrap().dim(), 8);
        assert_eq!(make_algebra("sp4", None).unwrap().dim(), 10);
        assert_eq!(make_algebra("so13", None).unwrap().dim(), 6);
        assert_eq!(make_algebra("gl4", None).unwrap().dim(), 16);
    }

    #[test]
    fn sp4_dimension_from_constraint_rank() {
        // Solution space of XᵀJ + JX = 0 over 4x4 matrices: 16 - rank(constraint map).
        let j = symplectic_j();
        let mut columns = Vec::new();
        for idx in 0..16 {
            let x = unit(4, idx / 4, idx % 4);
            let image = x.t().dot(&j) + j.dot(&x);
            columns.push(image.iter().copied().collect::<Vec<_>>());
        }
        // rank of the map = rank of the 16 image vectors
        let rank = rank_of(columns);
        assert_eq!(16 - rank, 10);
        assert_eq!(make_algebra("sp4", None).unwrap().dim(), 16 - rank);
    }

    #[test]
    fn unknown_and_bad_n() {
        assert!(matches!(make_algebra("su3", None), Err(RelnError::UnknownAlgebra(_))));
        assert!(make_algebra("gln", Some(1)).is_err());
        assert!(make_algebra("gln", None).is_err());
    }

    #[test]
    fn basis_invariants_hold() {
        for kind in ALL {
            let alg = LieAlgebraBasis::new(kind).unwrap();
            for e in alg.basis() {
                assert!(alg.satisfies_constraint(e, 1e-14), "{kind}");
            }
            let flat: Vec<Vec<f64>> =
                alg.basis().iter().map(|e| e.iter().copied().collect()).collect();
            assert_eq!(rank_of(flat), alg.dim());
            let c = alg.structure();
            for i in 0..alg.dim() {
                for j in 0..alg.dim() {
                    for k in 0..alg.dim() {
                        assert_eq!(c[[i, j, k]], -c[[j, i, k]]);
                    }
                }
            }
        }
    }

    #[test]
    fn so3_hat_matches_closed_form() {
        let so3 = make_algebra("so3", None).unwrap();
        let h = so3.hat(&[1.0, 2.0, 3.0]).unwrap();
        let expected = array![[0.0, -3.0, 2.0], [3.0, 0.0, -1.0], [-2.0, 1.0, 0.0]];
        assert_eq!(h, expected);
        assert_eq!(so3.hat(&[1.0, 0.0, 0.0]).unwrap(), so3.basis()[0]);
        assert_eq!(so3.hat(&[0.0; 3]).unwrap(), Matrix::zeros((3, 3)));
        assert!(so3.hat(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn so3_brackets_follow_levi_civita() {
        let so3 = make_algebra("so3", None).unwrap();
        let e = so3.basis();
        let b12 = bracket(&e[0], &e[1]).unwrap();
        assert_eq!(b12, so3.hat(&[0.0, 0.0, 1.0]).unwrap());
        let eps = |i: usize, j: usize, k: usize| -> f64 {
            match (i, j, k) {
                (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
                (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
                _ => 0.0,
            }
        };
        let c = so3.structure();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    // brute force: vee of the pairwise bracket
                    let direct = so3.vee(&bracket(&e[i], &e[j]).unwrap()).unwrap()[k];
                    assert_eq!(direct, eps(i, j, k));
                    assert_eq!(c[[i, j, k]], eps(i, j, k));
                }
            }
        }
    }

    #[test]
    fn vee_round_trip_and_span_errors() {
        let mut r = rng::seeded(11);
        for kind in ALL {
            let alg = LieAlgebraBasis::new(kind).unwrap();
            for _ in 0..20 {
                let x: Vec<f64> = (0..alg.dim()).map(|_| rng::normal(&mut r)).collect();
                let back = alg.vee(&alg.hat(&x).unwrap()).unwrap();
                let err: f64 = back.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                assert!(err <= 1e-12 * (1.0 + crate::linalg::norm(&x)));
            }
            assert_eq!(alg.vee(&Matrix::zeros((alg.n(), alg.n()))).unwrap().sum(), 0.0);
        }
        let so3 = make_algebra("so3", None).unwrap();
        let sym = array![[1.0, 2.0, 0.0], [2.0, 0.0, 0.5], [0.0, 0.5, -1.0]];
        assert!(matches!(so3.vee(&sym), Err(RelnError::NotInSpan { .. })));
        assert!(so3.vee(&Matrix::zeros((2, 2))).is_err());
    }

    #[test]
    fn bracket_basics() {
        let x = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(bracket(&x, &x).unwrap(), Matrix::zeros((2, 2)));
        assert_eq!(bracket(&Matrix::eye(2), &x).unwrap(), Matrix::zeros((2, 2)));
        assert!(bracket(&x, &Matrix::eye(3)).is_err());
    }

    #[test]
    fn structure_constants_reproduce_brackets() {
        for kind in ALL {
            let alg = LieAlgebraBasis::new(kind).unwrap();
            let e = alg.basis();
            for i in 0..alg.dim() {
                for j in 0..alg.dim() {
                    let br = bracket(&e[i], &e[j]).unwrap();
                    let coeffs: Vec<f64> =
                        (0..alg.dim()).map(|k| alg.structure()[[i, j, k]]).collect();
                    let resid = frob(&(br - alg.hat(&coeffs).unwrap()));
                    assert!(resid <= 1e-12, "{kind} ({i},{j}): {resid}");
                }
                for k in 0..alg.dim() {
                    assert_eq!(alg.structure()[[i, i, k]], 0.0);
                }
            }
        }
    }

    #[test]
    fn gl_identity_is_central() {
        let gl = make_algebra("gln", Some(3)).unwrap();
        let id = gl.vee(&Matrix::eye(3)).unwrap();
        let ad = gl.ad_matrix(id.as_slice().unwrap()).unwrap();
        assert!(ad.iter().all(|v| v.abs() < 1e-15));
        // and its own structure slices vanish when the identity is a basis element
        let gl2 = LieAlgebraBasis::from_matrices(
            AlgebraKind::Gl(2),
            vec![
                Matrix::eye(2),
                unit(2, 0, 1),
                unit(2, 1, 0),
                unit(2, 0, 0) - unit(2, 1, 1),
            ],
        )
        .unwrap();
        assert!(gl2.structure().slice(ndarray::s![0, .., ..]).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn ad_matrix_matches_bracket_then_vee() {
        let mut r = rng::seeded(5);
        for kind in ALL {
            let alg = LieAlgebraBasis::new(kind).unwrap();
            assert!(alg.ad_matrix(&vec![0.0; alg.dim()]).unwrap().iter().all(|v| *v == 0.0));
            for _ in 0..10 {
                let x: Vec<f64> = (0..alg.dim()).map(|_| rng::normal(&mut r)).collect();
                let y: Vec<f64> = (0..alg.dim()).map(|_| rng::normal(&mut r)).collect();
                let lhs = alg.ad_matrix(&x).unwrap().dot(&Vector::from(y.clone()));
                let rhs = alg
                    .vee(&bracket(&alg.hat(&x).unwrap(), &alg.hat(&y).unwrap()).unwrap())
                    .unwrap();
                assert!((lhs - rhs).iter().all(|d| d.abs() < 1e-12));
            }
        }
    }

    #[test]
    fn dependent_or_open_basis_rejected() {
        let dup = vec![unit(2, 0, 1), unit(2, 0, 1)];
        assert!(LieAlgebraBasis::from_matrices(AlgebraKind::Gl(2), dup).is_err());
        let open = vec![unit(2, 0, 1), unit(2, 1, 0)];
        assert!(LieAlgebraBasis::from_matrices(AlgebraKind::Gl(2), open).is_err());
    }
}
