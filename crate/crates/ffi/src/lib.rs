//! C ABI over `reln`.
//!
//! Objects are opaque handles created by `*_new`/`*_load` functions and
//! released with the matching `*_free`. Every fallible call returns a
//! [`RelnStatus`]; on failure the message is available from
//! [`reln_last_error`] on the same thread until the next failing call.
//! Arrays cross the boundary as row-major `double` buffers with explicit
//! lengths. Panics never unwind into C; they surface as `RELN_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use ndarray::{Array2, Array4};
use reln::forms::{BilinearForm, FormKind};
use reln::layers::{load_model, save_model, Model};
use reln::liealg::{bracket, AlgebraKind, LieAlgebraBasis};
use reln::rng::{self, Stream};
use reln::tasks::{read_dataset, Dataset};
use reln::train::evaluate;
use reln::RelnError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Numerical = 4,
    Io = 5,
    Format = 6,
    Panic = 7,
}

/// A Lie algebra with its basis, structure constants and default form.
pub struct RelnAlgebra {
    basis: LieAlgebraBasis,
    form: BilinearForm,
}

pub struct RelnModel(Model);

pub struct RelnDataset(Dataset);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RelnEvalReport {
    pub mse_id: f64,
    pub mse_conjugated: f64,
    pub invariance_error: f64,
    pub conjugations: usize,
    pub sigma: f64,
    pub wall_time: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &RelnError) -> RelnStatus {
    match err {
        RelnError::UnknownAlgebra(_) | RelnError::InvalidArgument(_) | RelnError::NotInSpan { .. } => {
            RelnStatus::InvalidArgument
        }
        RelnError::Shape(_) => RelnStatus::Shape,
        RelnError::Numerical(_) | RelnError::NonFinite(_) => RelnStatus::Numerical,
        RelnError::Io(_) => RelnStatus::Io,
        RelnError::Format(_) | RelnError::Checksum { .. } | RelnError::Version(_) => RelnStatus::Format,
    }
}

/// Runs `f`, recording errors and panics.
fn guard(f: impl FnOnce() -> Result<(), (RelnStatus, String)>) -> RelnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RelnStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            RelnStatus::Panic
        }
    }
}

trait IntoFfi<T> {
    fn ffi(self) -> Result<T, (RelnStatus, String)>;
}

impl<T> IntoFfi<T> for reln::Result<T> {
    fn ffi(self) -> Result<T, (RelnStatus, String)> {
        self.map_err(|e| (status_of(&e), e.to_string()))
    }
}

fn null(what: &str) -> (RelnStatus, String) {
    (RelnStatus::NullPointer, format!("{what} is null"))
}

fn shape(msg: String) -> (RelnStatus, String) {
    (RelnStatus::Shape, msg)
}

unsafe fn str_arg<'a>(s: *const c_char, what: &str) -> Result<&'a str, (RelnStatus, String)> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| (RelnStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], (RelnStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], (RelnStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), (RelnStatus, String)> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn reln_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn reln_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates an algebra by name (`so3`, `sp4`, `so13`, `sl3`, `gl3`, or `gln`/`sln`
/// with `n`; pass `n = 0` when the name carries the size).
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn reln_algebra_new(
    name: *const c_char,
    n: usize,
    out: *mut *mut RelnAlgebra,
) -> RelnStatus {
    guard(|| {
        let name = str_arg(name, "name")?;
        let kind = AlgebraKind::parse(name, (n > 0).then_some(n)).ffi()?;
        let basis = LieAlgebraBasis::new(kind).ffi()?;
        let form = BilinearForm::of_kind(FormKind::ModifiedGl, &basis).ffi()?;
        write_out(out, Box::into_raw(Box::new(RelnAlgebra { basis, form })), "out")
    })
}

/// # Safety
/// `alg` must come from [`reln_algebra_new`] and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn reln_algebra_free(alg: *mut RelnAlgebra) {
    if !alg.is_null() {
        drop(Box::from_raw(alg));
    }
}

/// Writes the algebra dimension K and matrix size n.
///
/// # Safety
/// `alg` must be a live handle; `dim` and `n` writable pointers.
#[no_mangle]
pub unsafe extern "C" fn reln_algebra_dims(alg: *const RelnAlgebra, dim: *mut usize, n: *mut usize) -> RelnStatus {
    guard(|| {
        let alg = alg.as_ref().ok_or_else(|| null("alg"))?;
        write_out(dim, alg.basis.dim(), "dim")?;
        write_out(n, alg.basis.n(), "n")
    })
}

/// Coordinates (length K) to an n×n row-major matrix.
///
/// # Safety
/// `coords` must hold `k` values and `out` room for `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn reln_algebra_hat(
    alg: *const RelnAlgebra,
    coords: *const f64,
    k: usize,
    out: *mut f64,
    out_len: usize,
) -> RelnStatus {
    guard(|| {
        let alg = alg.as_ref().ok_or_else(|| null("alg"))?;
        let x = slice_arg(coords, k, "coords")?;
        let m = alg.basis.hat(x).ffi()?;
        let dst = out_slice(out, out_len, "out")?;
        if dst.len() != m.len() {
            return Err(shape(format!("out needs {} values", m.len())));
        }
        dst.iter_mut().zip(m.iter()).for_each(|(d, v)| *d = *v);
        Ok(())
    })
}

/// n×n row-major matrix to coordinates (length K); fails for matrices outside the algebra.
///
/// # Safety
/// `matrix` must hold `len` values and `out` room for `k` values.
#[no_mangle]
pub unsafe extern "C" fn reln_algebra_vee(
    alg: *const RelnAlgebra,
    matrix: *const f64,
    len: usize,
    out: *mut f64,
    k: usize,
) -> RelnStatus {
    guard(|| {
        let alg = alg.as_ref().ok_or_else(|| null("alg"))?;
        let n = alg.basis.n();
        if len != n * n || k != alg.basis.dim() {
            return Err(shape(format!("expected {} matrix values and K = {}", n * n, alg.basis.dim())));
        }
        let m = Array2::from_shape_vec((n, n), slice_arg(matrix, len, "matrix")?.to_vec())
            .map_err(|e| shape(e.to_string()))?;
        let v = alg.basis.vee(&m).ffi()?;
        out_slice(out, k, "out")?.copy_from_slice(v.as_slice().expect("contiguous"));
        Ok(())
    })
}

/// Coordinates of `[x, y]`; all three buffers have length K.
///
/// # Safety
/// `x`, `y` and `out` must each hold `k` values.
#[no_mangle]
pub unsafe extern "C" fn reln_algebra_bracket(
    alg: *const RelnAlgebra,
    x: *const f64,
    y: *const f64,
    out: *mut f64,
    k: usize,
) -> RelnStatus {
    guard(|| {
        let alg = alg.as_ref().ok_or_else(|| null("alg"))?;
        let xm = alg.basis.hat(slice_arg(x, k, "x")?).ffi()?;
        let ym = alg.basis.hat(slice_arg(y, k, "y")?).ffi()?;
        let v = alg.basis.vee(&bracket(&xm, &ym).ffi()?).ffi()?;
        out_slice(out, k, "out")?.copy_from_slice(v.as_slice().expect("contiguous"));
        Ok(())
    })
}

/// The Ad-invariant form `B(x, y)` on coordinates.
///
/// # Safety
/// `x` and `y` must each hold `k` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn reln_algebra_form(
    alg: *const RelnAlgebra,
    x: *const f64,
    y: *const f64,
    k: usize,
    out: *mut f64,
) -> RelnStatus {
    guard(|| {
        let alg = alg.as_ref().ok_or_else(|| null("alg"))?;
        if k != alg.basis.dim() {
            return Err(shape(format!("K must be {}", alg.basis.dim())));
        }
        let v = alg.form.apply(slice_arg(x, k, "x")?, slice_arg(y, k, "y")?);
        write_out(out, v, "out")
    })
}

/// Loads an RLNM model file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn reln_model_load(path: *const c_char, out: *mut *mut RelnModel) -> RelnStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        let model = load_model(&path).ffi()?;
        write_out(out, Box::into_raw(Box::new(RelnModel(model))), "out")
    })
}

/// Writes the model (parameters only) to an RLNM file.
///
/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn reln_model_save(model: *const RelnModel, path: *const c_char) -> RelnStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        save_model(&model.0, &PathBuf::from(str_arg(path, "path")?)).ffi()
    })
}

/// # Safety
/// `model` must come from [`reln_model_load`] and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn reln_model_free(model: *mut RelnModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Per-sample input shape `(set size, K, channels)`, output width and parameter count.
///
/// # Safety
/// `model` must be a live handle; every out pointer writable.
#[no_mangle]
pub unsafe extern "C" fn reln_model_shape(
    model: *const RelnModel,
    set_size: *mut usize,
    dim: *mut usize,
    channels: *mut usize,
    outputs: *mut usize,
    params: *mut usize,
) -> RelnStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.0;
        let spec = m.spec();
        write_out(set_size, spec.set_size, "set_size")?;
        write_out(dim, spec.algebra.dim(), "dim")?;
        write_out(channels, spec.input_channels, "channels")?;
        write_out(outputs, spec.output_dim, "outputs")?;
        write_out(params, m.num_params(), "params")
    })
}

/// Forward pass on `batch` samples laid out `[batch, set, K, C]`; writes
/// `[batch, outputs]`.
///
/// # Safety
/// `x` must hold `x_len` values and `out` room for `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn reln_model_predict(
    model: *const RelnModel,
    x: *const f64,
    x_len: usize,
    batch: usize,
    out: *mut f64,
    out_len: usize,
) -> RelnStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.0;
        let spec = m.spec();
        let dims = (batch, spec.set_size, spec.algebra.dim(), spec.input_channels);
        if x_len != dims.0 * dims.1 * dims.2 * dims.3 || out_len != batch * spec.output_dim {
            return Err(shape(format!(
                "expected {} inputs and {} outputs for batch {batch}",
                dims.0 * dims.1 * dims.2 * dims.3,
                batch * spec.output_dim
            )));
        }
        let xs = Array4::from_shape_vec(dims, slice_arg(x, x_len, "x")?.to_vec()).map_err(|e| shape(e.to_string()))?;
        let y = m.predict(&xs).ffi()?;
        let dst = out_slice(out, out_len, "out")?;
        dst.iter_mut().zip(y.iter()).for_each(|(d, v)| *d = *v);
        Ok(())
    })
}

/// Loads an RLND dataset file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn reln_dataset_load(path: *const c_char, out: *mut *mut RelnDataset) -> RelnStatus {
    guard(|| {
        let ds = read_dataset(&PathBuf::from(str_arg(path, "path")?)).ffi()?;
        write_out(out, Box::into_raw(Box::new(RelnDataset(ds))), "out")
    })
}

/// # Safety
/// `ds` must come from [`reln_dataset_load`] and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn reln_dataset_free(ds: *mut RelnDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Number of samples.
///
/// # Safety
/// `ds` must be a live handle and `len` writable.
#[no_mangle]
pub unsafe extern "C" fn reln_dataset_len(ds: *const RelnDataset, len: *mut usize) -> RelnStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("ds"))?;
        write_out(len, ds.0.len(), "len")
    })
}

/// MSE, MSE under `conjugations` random adjoint actions of scale `sigma`,
/// and the invariance error, drawn from the evaluation stream of `seed`.
///
/// # Safety
/// `model` and `ds` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn reln_evaluate(
    model: *const RelnModel,
    ds: *const RelnDataset,
    conjugations: usize,
    sigma: f64,
    seed: u64,
    out: *mut RelnEvalReport,
) -> RelnStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.0;
        let ds = &ds.as_ref().ok_or_else(|| null("ds"))?.0;
        let mut r = rng::stream(seed, Stream::Eval);
        let rep = evaluate(m, ds, conjugations, sigma, &mut r).ffi()?;
        let report = RelnEvalReport {
            mse_id: rep.mse_id,
            mse_conjugated: rep.mse_conjugated,
            invariance_error: rep.invariance_error,
            conjugations: rep.m,
            sigma: rep.sigma,
            wall_time: rep.wall_time,
        };
        write_out(out, report, "out")
    })
}
