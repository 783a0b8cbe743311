use std::path::PathBuf;
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eval::{evaluate, predict_dataset, EvalReport, EVAL_SIGMA};
use super::optim::{adam_step, AdamConfig, AdamState};
use crate::error::{RelnError, Result};
use crate::layers::{init_params, Checkpoint, Model, ModelSpec};
use crate::linalg::Matrix;
use crate::rng::{self, Stream};
use crate::tasks::{augment_adjoint_with, read_dataset, Dataset};

/// Samples per gradient work unit. Fixed so that the reduction order, and
/// therefore every bit of the result, is independent of the thread count.
pub const GRAD_CHUNK: usize = 25;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub train_data: PathBuf,
    pub test_data: Option<PathBuf>,
    pub spec: ModelSpec,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Conjugations for the final test evaluation.
    pub eval_conj: usize,
    /// Conjugations for the per-epoch validation metrics.
    pub epoch_conj: usize,
    pub sigma: f64,
    /// Conjugated copies per training sample and epoch; 0 disables augmentation.
    pub augment: usize,
    pub val_fraction: f64,
}

impl TrainConfig {
    pub fn new(train_data: PathBuf, spec: ModelSpec) -> Self {
        TrainConfig {
            train_data,
            test_data: None,
            spec,
            adam: AdamConfig::default(),
            batch_size: 100,
            epochs: 100,
            seed: 0,
            eval_conj: 500,
            epoch_conj: 4,
            sigma: EVAL_SIGMA,
            augment: 0,
            val_fraction: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.batch_size == 0 {
            return Err(RelnError::invalid("batch size must be positive"));
        }
        if self.eval_conj == 0 || self.epoch_conj == 0 {
            return Err(RelnError::invalid("conjugation counts must be positive"));
        }
        if !(self.sigma >= 0.0) || !(0.0..1.0).contains(&self.val_fraction) {
            return Err(RelnError::invalid("sigma must be >= 0 and val fraction in [0, 1)"));
        }
        self.spec.validate()?;
        Ok(())
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub mse_id: f64,
    pub mse_conjugated: f64,
    pub invariance_error: f64,
    pub seconds: f64,
}

impl EpochMetrics {
    pub const TSV_HEADER: &'static str =
        "epoch\ttrain_loss\tval_loss\tmse_id\tmse_conjugated\tinvariance_error\tseconds";

    pub fn tsv(&self) -> String {
        format!(
            "{}\t{:.9e}\t{:.9e}\t{:.9e}\t{:.9e}\t{:.9e}\t{:.3}",
            self.epoch,
            self.train_loss,
            self.val_loss,
            self.mse_id,
            self.mse_conjugated,
            self.invariance_error,
            self.seconds
        )
    }
}

/// Everything needed to continue a run bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub epoch: usize,
    pub params: Vec<Matrix>,
    pub adam: AdamState,
    pub best_params: Vec<Matrix>,
    pub best_val: f64,
    pub best_epoch: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct StateHeader {
    epoch: usize,
    adam_t: u64,
    best_val: f64,
    best_epoch: usize,
    seed: u64,
}

impl TrainState {
    /// Checkpoint payload to store next to the best parameters.
    pub fn to_checkpoint(&self, seed: u64) -> Checkpoint {
        let header = StateHeader {
            epoch: self.epoch,
            adam_t: self.adam.t,
            best_val: self.best_val,
            best_epoch: self.best_epoch,
            seed,
        };
        let tensors = self
            .params
            .iter()
            .chain(&self.adam.m)
            .chain(&self.adam.v)
            .cloned()
            .collect();
        Checkpoint { state: Some(serde_json::to_value(header).expect("plain struct")), tensors }
    }

    /// Rebuilds the state from a model file written by `to_checkpoint`;
    /// returns it with the seed of the original run.
    pub fn from_checkpoint(best: &Model, ckpt: &Checkpoint) -> Result<(Self, u64)> {
        let value = ckpt
            .state
            .clone()
            .ok_or_else(|| RelnError::Format("model file carries no training state".into()))?;
        let header: StateHeader =
            serde_json::from_value(value).map_err(|e| RelnError::Format(e.to_string()))?;
        let n = best.params.len();
        if ckpt.tensors.len() != 3 * n {
            return Err(RelnError::Format("checkpoint tensor count does not match the model".into()));
        }
        for (i, t) in ckpt.tensors.iter().enumerate() {
            if t.dim() != best.params[i % n].dim() {
                return Err(RelnError::Format("checkpoint tensor shape does not match the model".into()));
            }
        }
        let state = TrainState {
            epoch: header.epoch,
            params: ckpt.tensors[..n].to_vec(),
            adam: AdamState { m: ckpt.tensors[n..2 * n].to_vec(), v: ckpt.tensors[2 * n..].to_vec(), t: header.adam_t },
            best_params: best.params.clone(),
            best_val: header.best_val,
            best_epoch: header.best_epoch,
        };
        Ok((state, header.seed))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Model with the best validation loss.
    pub best: Model,
    pub state: TrainState,
    pub history: Vec<EpochMetrics>,
    /// Evaluation of `best` on the test file (or the validation split).
    pub report: EvalReport,
}

/// Reads the configured files and trains.
pub fn train_loop(cfg: &TrainConfig) -> Result<TrainOutcome> {
    let train_ds = read_dataset(&cfg.train_data)?;
    let test_ds = cfg.test_data.as_deref().map(read_dataset).transpose()?;
    train(cfg, &train_ds, test_ds.as_ref(), None, |_| {})
}

fn check_compatible(spec: &ModelSpec, ds: &Dataset) -> Result<()> {
    if ds.algebra != spec.algebra {
        return Err(RelnError::invalid(format!(
            "dataset algebra {} does not match model algebra {}",
            ds.algebra, spec.algebra
        )));
    }
    if spec.set_size != 1 || ds.inputs_per_sample() != spec.input_channels || ds.target_dim() != spec.output_dim {
        return Err(RelnError::invalid(format!(
            "dataset has {} inputs and {} targets per sample; model expects {} and {}",
            ds.inputs_per_sample(),
            ds.target_dim(),
            spec.input_channels,
            spec.output_dim
        )));
    }
    Ok(())
}

/// Splits indices `0..n` into (train, validation) with a seeded permutation.
pub fn validation_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let n_val = ((n as f64) * fraction).round() as usize;
    if n_val == 0 || n_val >= n {
        let all: Vec<usize> = (0..n).collect();
        return (all.clone(), all);
    }
    let perm = rng::permutation(n, &mut rng::indexed(seed, Stream::Shuffle, 0));
    let (val, tr) = perm.split_at(n_val);
    let mut tr = tr.to_vec();
    let mut val = val.to_vec();
    tr.sort_unstable();
    val.sort_unstable();
    (tr, val)
}

fn mse(model: &Model, ds: &Dataset) -> Result<f64> {
    let pred = predict_dataset(model, ds)?;
    Ok((&pred - &ds.targets).mapv(|d| d * d).sum() / pred.len() as f64)
}

/// Gradient of the batch MSE and the batch sum of squared errors.
fn batch_gradients(model: &Model, ds: &Dataset, idx: &[usize]) -> Result<(Vec<Matrix>, f64)> {
    let scale = 2.0 / (idx.len() * model.spec().output_dim) as f64;
    let parts: Vec<Result<(Vec<Matrix>, f64)>> = idx
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let x = ds.features(chunk);
            let y = ds.target_rows(chunk);
            let (pred, cache) = model.forward(&x)?;
            let diff: Array2<f64> = pred - &y;
            let sse = diff.iter().map(|d| d * d).sum::<f64>();
            let grads = model.gradients(&cache, &(diff * scale))?;
            Ok((grads, sse))
        })
        .collect();
    let mut parts = parts.into_iter();
    let (mut total, mut sse) = parts.next().expect("non-empty batch")?;
    for part in parts {
        let (g, s) = part?;
        for (t, gi) in total.iter_mut().zip(&g) {
            *t += gi;
        }
        sse += s;
    }
    Ok((total, sse))
}

/// Trains from scratch or from `resume`. Every quantity is a deterministic
/// function of the config and data: the split, per-epoch shuffles,
/// augmentation draws and evaluation draws come from their own seeded
/// substreams, indexed by epoch. The model records the training targets'
/// standardization, and test targets are compared in those units.
pub fn train(
    cfg: &TrainConfig,
    train_ds: &Dataset,
    test_ds: Option<&Dataset>,
    resume: Option<TrainState>,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut spec = cfg.spec.clone();
    spec.target_affine = Some([train_ds.target_mean, train_ds.target_std]);
    check_compatible(&spec, train_ds)?;
    if let Some(t) = test_ds {
        check_compatible(&spec, t)?;
    }
    let (train_idx, val_idx) = validation_split(train_ds.len(), cfg.val_fraction, cfg.seed);
    let fit = train_ds.subset(&train_idx);
    let val = train_ds.subset(&val_idx);

    let mut model = init_params(&spec, cfg.seed)?;
    let mut history = vec![];
    let mut state = match resume {
        Some(s) => {
            if s.params.len() != model.params.len() {
                return Err(RelnError::invalid("resume state does not match the model"));
            }
            model.params = s.params.clone();
            s
        }
        None => {
            let start = Instant::now();
            let val_loss = mse(&model, &val)?;
            let mut r = rng::indexed(cfg.seed, Stream::Eval, 0);
            let rep = evaluate(&model, &val, cfg.epoch_conj, cfg.sigma, &mut r)?;
            let metrics = EpochMetrics {
                epoch: 0,
                train_loss: mse(&model, &fit)?,
                val_loss,
                mse_id: rep.mse_id,
                mse_conjugated: rep.mse_conjugated,
                invariance_error: rep.invariance_error,
                seconds: start.elapsed().as_secs_f64(),
            };
            on_epoch(&metrics);
            history.push(metrics);
            TrainState {
                epoch: 0,
                params: model.params.clone(),
                adam: AdamState::new(&model.params),
                best_params: model.params.clone(),
                best_val: val_loss,
                best_epoch: 0,
            }
        }
    };

    while state.epoch < cfg.epochs {
        let epoch = state.epoch + 1;
        let start = Instant::now();
        let data = if cfg.augment > 0 {
            let mut r = rng::indexed(cfg.seed, Stream::Augment, epoch as u64);
            augment_adjoint_with(&fit, cfg.augment, cfg.sigma, &mut r, false)?
        } else {
            fit.clone()
        };
        let order = rng::permutation(data.len(), &mut rng::indexed(cfg.seed, Stream::Shuffle, epoch as u64));
        let mut sse = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (grads, s) = batch_gradients(&model, &data, batch)?;
            sse += s;
            adam_step(&mut model.params, &grads, &mut state.adam, &cfg.adam)?;
        }
        let train_loss = sse / (data.len() * spec.output_dim) as f64;
        let val_loss = mse(&model, &val)?;
        let mut r = rng::indexed(cfg.seed, Stream::Eval, epoch as u64);
        let rep = evaluate(&model, &val, cfg.epoch_conj, cfg.sigma, &mut r)?;
        state.epoch = epoch;
        state.params = model.params.clone();
        if val_loss < state.best_val {
            state.best_val = val_loss;
            state.best_epoch = epoch;
            state.best_params = model.params.clone();
        }
        let metrics = EpochMetrics {
            epoch,
            train_loss,
            val_loss,
            mse_id: rep.mse_id,
            mse_conjugated: rep.mse_conjugated,
            invariance_error: rep.invariance_error,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&metrics);
        history.push(metrics);
    }

    let best = Model::new(spec, state.best_params.clone())?;
    let mut r = rng::stream(cfg.seed, Stream::Eval);
    let report = evaluate(&best, test_ds.unwrap_or(&val), cfg.eval_conj, cfg.sigma, &mut r)?;
    Ok(TrainOutcome { best, state, history, report })
}
