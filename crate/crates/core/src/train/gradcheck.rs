use ndarray::{Array2, Array4};

use super::optim::mse_loss;
use crate::error::{RelnError, Result};
use crate::layers::Model;
use crate::rng::{self, Rng};

/// Gates and pooling margins closer than this to a switch invalidate finite differences.
pub const SWITCH_MARGIN: f64 = 1e-4;
pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Worst error per parameter owner, in declaration order.
    pub per_owner: Vec<(String, f64)>,
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Central differences of the MSE loss against `model`'s analytic gradients.
pub fn grad_check(model: &Model, x: &Array4<f64>, target: &Array2<f64>, h: f64) -> Result<GradCheckReport> {
    if !(h > 0.0) {
        return Err(RelnError::invalid("finite-difference step must be positive"));
    }
    let (pred, cache) = model.forward(x)?;
    let (loss, dout) = mse_loss(&pred, target)?;
    if !loss.is_finite() {
        return Err(RelnError::NonFinite("loss"));
    }
    let analytic = model.gradients(&cache, &dout)?;
    let mut probe = model.clone();
    let loss_at = |m: &Model| -> Result<f64> {
        let l = mse_loss(&m.predict(x)?, target)?.0;
        if l.is_finite() {
            Ok(l)
        } else {
            Err(RelnError::NonFinite("loss"))
        }
    };
    let labels = model.spec().param_labels();
    let mut per_owner: Vec<(String, f64)> = vec![];
    let mut max_rel_err: f64 = 0.0;
    for (t, label) in labels.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for idx in 0..probe.params[t].len() {
            let cols = probe.params[t].ncols();
            let at = [idx / cols, idx % cols];
            let orig = probe.params[t][at];
            probe.params[t][at] = orig + h;
            let plus = loss_at(&probe)?;
            probe.params[t][at] = orig - h;
            let minus = loss_at(&probe)?;
            probe.params[t][at] = orig;
            worst = worst.max(rel_err(analytic[t][at], (plus - minus) / (2.0 * h)));
        }
        max_rel_err = max_rel_err.max(worst);
        match per_owner.last_mut() {
            Some((l, w)) if l == label => *w = w.max(worst),
            _ => per_owner.push((label.clone(), worst)),
        }
    }
    Ok(GradCheckReport { max_rel_err, per_owner })
}

/// Draws inputs `N(0, scale²)` and targets `N(0, 1)`, redrawing inputs until
/// every gate and pooling margin clears `SWITCH_MARGIN`.
pub fn smooth_sample(model: &Model, batch: usize, scale: f64, r: &mut Rng) -> Result<(Array4<f64>, Array2<f64>)> {
    let spec = model.spec();
    let shape = (batch, spec.set_size, spec.algebra.dim(), spec.input_channels);
    for _ in 0..1000 {
        let x = Array4::from_shape_simple_fn(shape, || scale * rng::normal(r));
        let (_, cache) = model.forward(&x)?;
        if cache.min_switch_margin() > SWITCH_MARGIN {
            let y = Array2::from_shape_simple_fn((batch, spec.output_dim), || rng::normal(r));
            return Ok((x, y));
        }
    }
    Err(RelnError::Numerical("could not draw inputs away from gate switches".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{init_params, LayerSpec, ModelSpec};
    use crate::liealg::AlgebraKind;

    fn full_spec() -> ModelSpec {
        ModelSpec::new(
            AlgebraKind::Sp4,
            2,
            vec![
                LayerSpec::linear(2, 4),
                LayerSpec::relu(4),
                LayerSpec::bracket(4),
                LayerSpec::invariant(4),
            ],
        )
        .with_head(vec![6, 6], 1)
    }

    #[test]
    fn linear_only_is_exact() {
        let spec = ModelSpec::new(AlgebraKind::Gl(3), 2, vec![LayerSpec::linear(2, 3), LayerSpec::invariant(3)])
            .with_head(vec![], 1);
        let m = init_params(&spec, 1).unwrap();
        let mut r = rng::seeded(1);
        let (x, y) = smooth_sample(&m, 4, 0.5, &mut r).unwrap();
        assert!(grad_check(&m, &x, &y, DEFAULT_STEP).unwrap().max_rel_err <= 1e-9);
    }

    #[test]
    fn full_model_and_truncation() {
        let m = init_params(&full_spec(), 2).unwrap();
        let mut r = rng::seeded(2);
        let (x, y) = smooth_sample(&m, 4, 0.5, &mut r).unwrap();
        let fine = grad_check(&m, &x, &y, DEFAULT_STEP).unwrap();
        assert!(fine.max_rel_err <= 1e-4);
        let owners: Vec<&str> = fine.per_owner.iter().map(|(l, _)| l.as_str()).collect();
        assert_eq!(owners[..3], ["layer0:linear", "layer1:relu", "layer2:bracket"]);
        let coarse = grad_check(&m, &x, &y, 1e-2).unwrap();
        assert!(coarse.max_rel_err > 100.0 * fine.max_rel_err);
        assert!(grad_check(&m, &x, &y, 0.0).is_err());
    }
}
