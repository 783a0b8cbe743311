use std::time::Instant;

use ndarray::{Array2, Array3, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{RelnError, Result};
use crate::layers::Model;
use crate::liealg::{sample_group_or_identity, GroupElement};
use crate::rng::Rng;
use crate::tasks::Dataset;

/// Samples per forward call during evaluation.
pub const EVAL_CHUNK: usize = 250;

/// Default conjugation scale for evaluation.
pub const EVAL_SIGMA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mse_id: f64,
    pub mse_conjugated: f64,
    pub invariance_error: f64,
    pub m: usize,
    pub sigma: f64,
    pub wall_time: f64,
}

/// Model outputs on a whole dataset, computed chunkwise in index order.
pub fn predict_dataset(model: &Model, ds: &Dataset) -> Result<Array2<f64>> {
    predict_inputs(model, &ds.inputs)
}

fn predict_inputs(model: &Model, inputs: &Array3<f64>) -> Result<Array2<f64>> {
    let n = inputs.dim().0;
    let chunks: Vec<Result<Array2<f64>>> = (0..n)
        .step_by(EVAL_CHUNK)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let end = (start + EVAL_CHUNK).min(n);
            let slab = inputs.slice(ndarray::s![start..end, .., ..]).to_owned();
            model.predict(&crate::layers::features_from_inputs(&slab))
        })
        .collect();
    let parts = chunks.into_iter().collect::<Result<Vec<_>>>()?;
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    ndarray::concatenate(Axis(0), &views).map_err(|e| RelnError::shape(e.to_string()))
}

fn conjugate_inputs(inputs: &Array3<f64>, g: &GroupElement) -> Array3<f64> {
    let (n, p, k) = inputs.dim();
    let flat = inputs.view().into_shape_with_order((n * p, k)).expect("standard layout");
    flat.dot(&g.adj.t()).into_shape_with_order((n, p, k)).expect("shape")
}

fn mean_sq(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

/// Targets are compared in the model's standardization when it records one.
///
/// In-distribution MSE, MSE under `m` random conjugations of the inputs, and
/// the mean squared output change under those conjugations. The same `m`
/// group elements act on every sample. Results do not depend on the thread
/// count: each group element's sums are formed sequentially and combined in
/// index order.
pub fn evaluate(model: &Model, ds: &Dataset, m: usize, sigma: f64, rng: &mut Rng) -> Result<EvalReport> {
    if m == 0 {
        return Err(RelnError::invalid("conjugation count must be at least 1"));
    }
    if ds.algebra != model.spec().algebra {
        return Err(RelnError::invalid(format!(
            "model algebra {} differs from dataset algebra {}",
            model.spec().algebra,
            ds.algebra
        )));
    }
    if ds.inputs_per_sample() != model.spec().input_channels || ds.target_dim() != model.spec().output_dim {
        return Err(RelnError::shape("dataset shape does not match the model"));
    }
    let start = Instant::now();
    let rescaled;
    let ds = match model.spec().target_affine {
        Some([mean, std]) if (mean, std) != (ds.target_mean, ds.target_std) => {
            let mut copy = ds.clone();
            copy.restandardize(mean, std)?;
            rescaled = copy;
            &rescaled
        }
        _ => ds,
    };
    let inputs = ds.inputs.as_standard_layout().into_owned();
    let base = predict_inputs(model, &inputs)?;
    let mse_id = mean_sq(&base, &ds.targets);
    let groups = (0..m)
        .map(|_| sample_group_or_identity(model.basis(), sigma, rng))
        .collect::<Result<Vec<_>>>()?;
    let mut per_group = Vec::with_capacity(m);
    for g in &groups {
        let pred = predict_inputs(model, &conjugate_inputs(&inputs, g))?;
        per_group.push((mean_sq(&pred, &ds.targets), mean_sq(&pred, &base)));
    }
    let mse_conjugated = per_group.iter().map(|p| p.0).sum::<f64>() / m as f64;
    let invariance_error = per_group.iter().map(|p| p.1).sum::<f64>() / m as f64;
    Ok(EvalReport {
        mse_id,
        mse_conjugated,
        invariance_error,
        m,
        sigma,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Mean over samples and `m` sampled group elements of `(f(Ad_g x) - f(x))²`.
pub fn invariance_error(model: &Model, ds: &Dataset, m: usize, sigma: f64, seed: u64) -> Result<f64> {
    let mut r = crate::rng::stream(seed, crate::rng::Stream::Eval);
    Ok(evaluate(model, ds, m, sigma, &mut r)?.invariance_error)
}
