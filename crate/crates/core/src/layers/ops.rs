//! Forward and backward kernels for the equivariant layers.
//!
//! Features are `[B, K, C]` arrays (batch, algebra coordinate, channel);
//! channel maps multiply from the right and the group acts from the left, so
//! every kernel here commutes with the adjoint action.

use ndarray::{Array2, Array3, Array4, ArrayView2, ArrayView3, Axis};

use crate::error::{RelnError, Result};
use crate::forms::BilinearForm;
use crate::liealg::LieAlgebraBasis;
use crate::linalg::Matrix;

fn rows_view<'a>(x: &'a ArrayView3<f64>) -> ArrayView2<'a, f64> {
    let (b, k, c) = x.dim();
    x.view()
        .into_shape_with_order((b * k, c))
        .expect("features are stored in standard layout")
}

fn check_channels(x: &ArrayView3<f64>, w: &Matrix, what: &str) -> Result<()> {
    if x.dim().2 != w.nrows() {
        return Err(RelnError::shape(format!(
            "{what}: input has {} channels, weight expects {}",
            x.dim().2,
            w.nrows()
        )));
    }
    Ok(())
}

pub(crate) fn standard<D: ndarray::Dimension>(a: ndarray::Array<f64, D>) -> ndarray::Array<f64, D> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

/// `x · W` on the channel axis.
pub fn channel_map(x: ArrayView3<f64>, w: &Matrix) -> Array3<f64> {
    let (b, k, _) = x.dim();
    let x = x.as_standard_layout();
    let out = standard(rows_view(&x.view()).dot(w));
    out.into_shape_with_order((b, k, w.ncols())).expect("shape")
}

/// Gradient of `x · W` with respect to `W`: `Σ_{b,k} xᵀ g`.
pub fn channel_map_weight_grad(x: ArrayView3<f64>, grad_out: ArrayView3<f64>) -> Matrix {
    let x = x.as_standard_layout();
    let g = grad_out.as_standard_layout();
    rows_view(&x.view()).t().dot(&rows_view(&g.view()))
}

/// `G · x_b` for every batch entry (the form's Gram applied on the K axis).
pub fn gram_apply(gram: &Matrix, x: ArrayView3<f64>) -> Array3<f64> {
    let mut out = Array3::zeros(x.raw_dim());
    for (mut o, xb) in out.outer_iter_mut().zip(x.outer_iter()) {
        o.assign(&gram.dot(&xb));
    }
    out
}

/// Column-wise pairing `Σ_k a[b,k,c] · h[b,k,c]`.
fn pair_columns(a: ArrayView3<f64>, h: ArrayView3<f64>) -> Array2<f64> {
    (&a * &h).sum_axis(Axis(1))
}

pub fn linear_forward(x: ArrayView3<f64>, w: &Matrix) -> Result<Array3<f64>> {
    check_channels(&x, w, "linear")?;
    Ok(channel_map(x, w))
}

/// Returns `(dx, dW)`.
pub fn linear_backward(
    x: ArrayView3<f64>,
    w: &Matrix,
    grad_out: ArrayView3<f64>,
) -> (Array3<f64>, Matrix) {
    let dw = channel_map_weight_grad(x, grad_out);
    let dx = channel_map(grad_out, &w.t().to_owned());
    (dx, dw)
}

/// Intermediates of the directional ReLU kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ReluCache {
    pub directions: Array3<f64>,
    pub gram_directions: Array3<f64>,
    pub gates: Array2<f64>,
}

/// Directional ReLU with optional leak:
/// `d = xU`, `s_c = B(x_c, d_c)`, `r = x + max(0, s) d`, `out = αx + (1 - α) r`.
pub fn relu_forward(
    x: ArrayView3<f64>,
    u: &Matrix,
    form: &BilinearForm,
    alpha: f64,
) -> Result<(Array3<f64>, ReluCache)> {
    check_channels(&x, u, "relu")?;
    if u.nrows() != u.ncols() {
        return Err(RelnError::shape("relu direction map must be square"));
    }
    if x.dim().1 != form.dim() {
        return Err(RelnError::shape("relu: feature dimension does not match the form"));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(RelnError::invalid(format!("leak alpha must be in [0, 1), got {alpha}")));
    }
    let directions = channel_map(x, u);
    let gram_directions = gram_apply(form.gram(), directions.view());
    let gates = pair_columns(x, gram_directions.view());
    let mut out = x.to_owned();
    for (bi, mut ob) in out.outer_iter_mut().enumerate() {
        for (c, &s) in gates.row(bi).iter().enumerate() {
            if s > 0.0 {
                let d = directions.slice(ndarray::s![bi, .., c]);
                ob.column_mut(c).scaled_add(s, &d);
            }
        }
    }
    if alpha > 0.0 {
        out = alpha * &x + (1.0 - alpha) * &out;
    }
    Ok((out, ReluCache { directions, gram_directions, gates }))
}

/// Returns `(dx, dU)`. Inactive gates (`s <= 0`) pass the identity gradient only.
pub fn relu_backward(
    x: ArrayView3<f64>,
    u: &Matrix,
    form: &BilinearForm,
    alpha: f64,
    cache: &ReluCache,
    grad_out: ArrayView3<f64>,
) -> (Array3<f64>, Matrix) {
    let keep = 1.0 - alpha;
    let mut dx = grad_out.to_owned();
    let mut dd = Array3::<f64>::zeros(x.raw_dim());
    let gram_x = gram_apply(form.gram(), x);
    let (nb, _, nc) = x.dim();
    for b in 0..nb {
        for c in 0..nc {
            let s = cache.gates[[b, c]];
            if s <= 0.0 {
                continue;
            }
            let g = grad_out.slice(ndarray::s![b, .., c]);
            let d = cache.directions.slice(ndarray::s![b, .., c]);
            let ds = keep * g.dot(&d);
            dd.slice_mut(ndarray::s![b, .., c]).scaled_add(keep * s, &g);
            dd.slice_mut(ndarray::s![b, .., c])
                .scaled_add(ds, &gram_x.slice(ndarray::s![b, .., c]));
            dx.slice_mut(ndarray::s![b, .., c])
                .scaled_add(ds, &cache.gram_directions.slice(ndarray::s![b, .., c]));
        }
    }
    let du = channel_map_weight_grad(x, dd.view());
    dx += &channel_map(dd.view(), &u.t().to_owned());
    (dx, du)
}

/// Per-channel gate values `B(x_c, (xU)_c)`.
pub fn relu_gates(x: ArrayView3<f64>, u: &Matrix, form: &BilinearForm) -> Result<Array2<f64>> {
    check_channels(&x, u, "relu")?;
    let d = channel_map(x, u);
    Ok(pair_columns(x, gram_apply(form.gram(), d.view()).view()))
}

#[derive(Debug, Clone)]
pub struct BracketCache {
    pub u: Array3<f64>,
    pub v: Array3<f64>,
}

/// `[u_c, v_c]` in coordinates for every batch entry and channel.
pub fn bracket_columns(basis: &LieAlgebraBasis, u: ArrayView3<f64>, v: ArrayView3<f64>) -> Array3<f64> {
    let mut out = Array3::<f64>::zeros(u.raw_dim());
    let nc = u.dim().2;
    for ((mut ob, ub), vb) in out.outer_iter_mut().zip(u.outer_iter()).zip(v.outer_iter()) {
        for e in basis.structure_sparse() {
            let ui = ub.row(e.i);
            let vj = vb.row(e.j);
            let mut ok = ob.row_mut(e.k);
            for c in 0..nc {
                ok[c] += e.value * ui[c] * vj[c];
            }
        }
    }
    out
}

/// Residual bracket layer `x + [xW_a, xW_b]`.
pub fn bracket_forward(
    x: ArrayView3<f64>,
    wa: &Matrix,
    wb: &Matrix,
    basis: &LieAlgebraBasis,
) -> Result<(Array3<f64>, BracketCache)> {
    check_channels(&x, wa, "bracket")?;
    check_channels(&x, wb, "bracket")?;
    if wa.nrows() != wa.ncols() || wb.dim() != wa.dim() {
        return Err(RelnError::shape("bracket channel maps must be square and equal-sized"));
    }
    if x.dim().1 != basis.dim() {
        return Err(RelnError::shape("bracket: feature dimension does not match the algebra"));
    }
    let u = channel_map(x, wa);
    let v = channel_map(x, wb);
    let delta = bracket_columns(basis, u.view(), v.view());
    Ok((&x + &delta, BracketCache { u, v }))
}

/// Returns `(dx, dWa, dWb)`.
pub fn bracket_backward(
    x: ArrayView3<f64>,
    wa: &Matrix,
    wb: &Matrix,
    basis: &LieAlgebraBasis,
    cache: &BracketCache,
    grad_out: ArrayView3<f64>,
) -> (Array3<f64>, Matrix, Matrix) {
    let mut du = Array3::<f64>::zeros(x.raw_dim());
    let mut dv = Array3::<f64>::zeros(x.raw_dim());
    let nc = x.dim().2;
    for b in 0..x.dim().0 {
        let ub = cache.u.index_axis(Axis(0), b);
        let vb = cache.v.index_axis(Axis(0), b);
        let gb = grad_out.index_axis(Axis(0), b);
        for e in basis.structure_sparse() {
            let (ui, vj, gk) = (ub.row(e.i), vb.row(e.j), gb.row(e.k));
            {
                let mut dui = du.slice_mut(ndarray::s![b, e.i, ..]);
                for c in 0..nc {
                    dui[c] += e.value * vj[c] * gk[c];
                }
            }
            let mut dvj = dv.slice_mut(ndarray::s![b, e.j, ..]);
            for c in 0..nc {
                dvj[c] += e.value * ui[c] * gk[c];
            }
        }
    }
    let dwa = channel_map_weight_grad(x, du.view());
    let dwb = channel_map_weight_grad(x, dv.view());
    let mut dx = grad_out.to_owned();
    dx += &channel_map(du.view(), &wa.t().to_owned());
    dx += &channel_map(dv.view(), &wb.t().to_owned());
    (dx, dwa, dwb)
}

/// Pooling intermediates: selected set index per (batch, channel) and the
/// full score table.
#[derive(Debug, Clone)]
pub struct PoolCache {
    pub selected: Array2<usize>,
    pub scores: Array3<f64>,
}

/// Max-form pooling over the set axis of `[B, N, K, C]`: per channel picks
/// `argmax_n B(X_{n,c}, (X_n W_d)_c)`, lowest index on ties.
pub fn pool_forward(
    x: &Array4<f64>,
    wd: &Matrix,
    form: &BilinearForm,
) -> Result<(Array3<f64>, PoolCache)> {
    let (nb, nn, nk, nc) = x.dim();
    if nn == 0 {
        return Err(RelnError::invalid("pooling over an empty set"));
    }
    if wd.dim() != (nc, nc) {
        return Err(RelnError::shape("pool direction map must be C x C"));
    }
    if nk != form.dim() {
        return Err(RelnError::shape("pool: feature dimension does not match the form"));
    }
    let x_std = x.as_standard_layout();
    let flat = x_std
        .view()
        .into_shape_with_order((nb * nn, nk, nc))
        .expect("standard layout");
    let dirs = channel_map(flat, wd);
    let gd = gram_apply(form.gram(), dirs.view());
    let scores = standard(pair_columns(flat, gd.view()))
        .into_shape_with_order((nb, nn, nc))
        .expect("shape");
    let mut selected = Array2::<usize>::zeros((nb, nc));
    let mut out = Array3::<f64>::zeros((nb, nk, nc));
    for b in 0..nb {
        for c in 0..nc {
            let mut best = 0;
            for n in 1..nn {
                if scores[[b, n, c]] > scores[[b, best, c]] {
                    best = n;
                }
            }
            selected[[b, c]] = best;
            out.slice_mut(ndarray::s![b, .., c]).assign(&x.slice(ndarray::s![b, best, .., c]));
        }
    }
    Ok((out, PoolCache { selected, scores }))
}

/// Routes the gradient to the selected set element; the direction map gets
/// no gradient (the argmax is piecewise constant).
pub fn pool_backward(
    input_dim: (usize, usize, usize, usize),
    cache: &PoolCache,
    grad_out: ArrayView3<f64>,
) -> (Array4<f64>, Matrix) {
    let (nb, _, _, nc) = input_dim;
    let mut dx = Array4::<f64>::zeros(input_dim);
    for b in 0..nb {
        for c in 0..nc {
            let n = cache.selected[[b, c]];
            dx.slice_mut(ndarray::s![b, n, .., c]).assign(&grad_out.slice(ndarray::s![b, .., c]));
        }
    }
    (dx, Matrix::zeros((nc, nc)))
}

/// Smallest gap between the best and runner-up pooling scores.
pub fn pool_margin(cache: &PoolCache) -> f64 {
    let (nb, nn, nc) = cache.scores.dim();
    let mut margin = f64::INFINITY;
    if nn < 2 {
        return margin;
    }
    for b in 0..nb {
        for c in 0..nc {
            let best = cache.selected[[b, c]];
            for n in 0..nn {
                if n != best {
                    margin = margin.min(cache.scores[[b, best, c]] - cache.scores[[b, n, c]]);
                }
            }
        }
    }
    margin
}

/// `y[b, c] = B(x_c, x_c)`.
pub fn invariant_forward(x: ArrayView3<f64>, form: &BilinearForm) -> Result<Array2<f64>> {
    if x.dim().1 != form.dim() {
        return Err(RelnError::shape("invariant: feature dimension does not match the form"));
    }
    let gx = gram_apply(form.gram(), x);
    Ok(pair_columns(x, gx.view()))
}

pub fn invariant_backward(
    x: ArrayView3<f64>,
    form: &BilinearForm,
    grad_out: ArrayView2<f64>,
) -> Array3<f64> {
    let mut dx = gram_apply(form.gram(), x);
    for (mut db, gb) in dx.outer_iter_mut().zip(grad_out.outer_iter()) {
        for (mut col, g) in db.axis_iter_mut(Axis(1)).zip(gb.iter()) {
            col *= 2.0 * g;
        }
    }
    dx
}

/// Applies a K×K coordinate action (e.g. a vectorized adjoint) to every column.
pub fn act_on_features(adj: &Matrix, x: ArrayView3<f64>) -> Array3<f64> {
    gram_apply(adj, x)
}
