//! Datasets: the sp(4) invariant-regression benchmark, a toy
//! covariance/velocity sequence task, and the RLND file format.

mod covseq;
mod io;
mod sp4;

use ndarray::{Array2, Array3, Array4, Axis};

use crate::error::{RelnError, Result};
use crate::liealg::{sample_group_or_identity, AlgebraKind, LieAlgebraBasis};
use crate::rng::{self, Rng, Stream};

pub use covseq::{
    covseq_dataset, gen_cov_sequence, noise_sigma, noisy_velocity, CovSequence, NoiseParams,
};
pub use io::{decode_dataset, encode_dataset, read_dataset, write_dataset, DATASET_MAGIC, DATASET_VERSION};
pub use sp4::{gen_sp4_dataset, sp4_target, sp4_target_coords, SP4_DEFAULT_SIGMA};

/// Samples of algebra-valued inputs with real targets.
///
/// Inputs are `[N, inputs_per_sample, K]`; each of the per-sample inputs
/// becomes one feature channel. Targets are stored standardized with
/// `raw = stored * target_std + target_mean`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub algebra: AlgebraKind,
    pub channels: usize,
    pub inputs: Array3<f64>,
    pub targets: Array2<f64>,
    pub seed: u64,
    pub target_mean: f64,
    pub target_std: f64,
}

impl Dataset {
    pub fn new(
        algebra: AlgebraKind,
        inputs: Array3<f64>,
        targets: Array2<f64>,
        seed: u64,
    ) -> Result<Self> {
        let ds = Dataset {
            algebra,
            channels: inputs.dim().1,
            inputs,
            targets,
            seed,
            target_mean: 0.0,
            target_std: 1.0,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, p, k) = self.inputs.dim();
        if k != self.algebra.dim() {
            return Err(RelnError::shape(format!(
                "dataset K = {k} but {} has dimension {}",
                self.algebra,
                self.algebra.dim()
            )));
        }
        if self.targets.nrows() != n || self.targets.ncols() == 0 || p == 0 {
            return Err(RelnError::shape("dataset inputs and targets disagree"));
        }
        if self.channels != p {
            return Err(RelnError::shape("channel count must equal inputs per sample"));
        }
        if !(self.target_std > 0.0) || !self.target_mean.is_finite() || !self.target_std.is_finite() {
            return Err(RelnError::invalid("target affine must be finite with positive scale"));
        }
        if self.inputs.iter().chain(self.targets.iter()).any(|v| !v.is_finite()) {
            return Err(RelnError::NonFinite("dataset entries"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.dim().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inputs_per_sample(&self) -> usize {
        self.inputs.dim().1
    }

    pub fn target_dim(&self) -> usize {
        self.targets.ncols()
    }

    /// Model features `[B, 1, K, C]` for the given sample indices.
    pub fn features(&self, idx: &[usize]) -> Array4<f64> {
        crate::layers::features_from_inputs(&self.inputs.select(Axis(0), idx))
    }

    pub fn target_rows(&self, idx: &[usize]) -> Array2<f64> {
        self.targets.select(Axis(0), idx)
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select(Axis(0), idx),
            targets: self.targets.select(Axis(0), idx),
            ..self.clone()
        }
    }

    /// Maps stored targets back to raw units.
    pub fn destandardize(&self, y: f64) -> f64 {
        y * self.target_std + self.target_mean
    }

    /// Re-expresses the stored targets in the affine `(mean, std)`.
    pub fn restandardize(&mut self, mean: f64, std: f64) -> Result<()> {
        if !(std > 0.0) || !std.is_finite() || !mean.is_finite() {
            return Err(RelnError::invalid("target affine must be finite with positive scale"));
        }
        if (mean, std) == (self.target_mean, self.target_std) {
            return Ok(());
        }
        let (m0, s0) = (self.target_mean, self.target_std);
        self.targets.mapv_inplace(|t| (t * s0 + m0 - mean) / std);
        self.target_mean = mean;
        self.target_std = std;
        Ok(())
    }

    /// Standardizes targets in place to zero mean and unit (population) variance.
    pub fn standardize_targets(&mut self) {
        let n = self.targets.len() as f64;
        let mean = self.targets.sum() / n;
        let var = self.targets.mapv(|t| (t - mean).powi(2)).sum() / n;
        let std = if var > 0.0 { var.sqrt() } else { 1.0 };
        self.targets.mapv_inplace(|t| (t - mean) / std);
        self.target_mean = mean;
        self.target_std = std;
    }
}

/// Replaces (or, with `extend`, augments) every sample by `m` copies whose
/// inputs are conjugated by independently sampled group elements. Targets
/// are copied unchanged.
pub fn augment_adjoint(ds: &Dataset, m: usize, sigma: f64, seed: u64, extend: bool) -> Result<Dataset> {
    let mut r = rng::stream(seed, Stream::Augment);
    augment_adjoint_with(ds, m, sigma, &mut r, extend)
}

pub fn augment_adjoint_with(
    ds: &Dataset,
    m: usize,
    sigma: f64,
    r: &mut Rng,
    extend: bool,
) -> Result<Dataset> {
    if m == 0 {
        return Err(RelnError::invalid("augmentation count must be at least 1"));
    }
    let basis = LieAlgebraBasis::new(ds.algebra)?;
    let (n, p, k) = ds.inputs.dim();
    let copies = if extend { m + 1 } else { m };
    let mut inputs = Array3::zeros((n * copies, p, k));
    let mut targets = Array2::zeros((n * copies, ds.target_dim()));
    let mut row = 0;
    for i in 0..n {
        let sample = ds.inputs.index_axis(Axis(0), i);
        if extend {
            inputs.index_axis_mut(Axis(0), row).assign(&sample);
            targets.row_mut(row).assign(&ds.targets.row(i));
            row += 1;
        }
        for _ in 0..m {
            let g = sample_group_or_identity(&basis, sigma, r)?;
            let conj = sample.dot(&g.adj.t());
            inputs.index_axis_mut(Axis(0), row).assign(&conj);
            targets.row_mut(row).assign(&ds.targets.row(i));
            row += 1;
        }
    }
    Ok(Dataset { inputs, targets, ..ds.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardization_is_invertible() {
        let mut ds = gen_sp4_dataset(200, SP4_DEFAULT_SIGMA, 3).unwrap();
        let raw: Vec<f64> = ds.targets.iter().map(|t| ds.destandardize(*t)).collect();
        let mean = ds.targets.sum() / 200.0;
        let var = ds.targets.mapv(|t| t * t).sum() / 200.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        ds.targets = Array2::from_shape_vec((200, 1), raw.clone()).unwrap();
        ds.standardize_targets();
        for (i, t) in ds.targets.iter().enumerate() {
            assert!((ds.destandardize(*t) - raw[i]).abs() <= 1e-12 * (1.0 + raw[i].abs()));
        }
    }

    #[test]
    fn restandardize_preserves_raw_targets() {
        let mut ds = gen_sp4_dataset(50, SP4_DEFAULT_SIGMA, 7).unwrap();
        let raw: Vec<f64> = ds.targets.iter().map(|t| ds.destandardize(*t)).collect();
        ds.restandardize(2.5, 7.0).unwrap();
        for (t, r) in ds.targets.iter().zip(&raw) {
            assert!((t * 7.0 + 2.5 - r).abs() <= 1e-12 * (1.0 + r.abs()));
        }
        assert!(ds.restandardize(0.0, 0.0).is_err());
    }

    #[test]
    fn augmentation_with_identity_keeps_data() {
        let ds = gen_sp4_dataset(20, SP4_DEFAULT_SIGMA, 4).unwrap();
        let same = augment_adjoint(&ds, 1, 0.0, 9, false).unwrap();
        assert!((&same.inputs - &ds.inputs).iter().all(|v| v.abs() <= 1e-12));
        assert_eq!(same.targets, ds.targets);
        let ext = augment_adjoint(&ds, 3, 0.5, 9, true).unwrap();
        assert_eq!(ext.len(), 80);
        assert_eq!(ext.inputs.index_axis(Axis(0), 4), ds.inputs.index_axis(Axis(0), 1));
        assert!(augment_adjoint(&ds, 0, 0.5, 9, false).is_err());
    }

    #[test]
    fn augmented_targets_match_recomputation() {
        let ds = gen_sp4_dataset(30, SP4_DEFAULT_SIGMA, 5).unwrap();
        let aug = augment_adjoint(&ds, 5, 0.5, 11, false).unwrap();
        let basis = LieAlgebraBasis::new(AlgebraKind::Sp4).unwrap();
        for i in 0..aug.len() {
            let x = aug.inputs.slice(ndarray::s![i, 0, ..]).to_vec();
            let y = aug.inputs.slice(ndarray::s![i, 1, ..]).to_vec();
            let raw = sp4_target_coords(&basis, &x, &y).unwrap();
            let stored = aug.destandardize(aug.targets[[i, 0]]);
            assert!((raw - stored).abs() <= 1e-7 * (1.0 + raw.abs()));
        }
    }

    #[test]
    fn features_put_inputs_on_channels() {
        let ds = gen_sp4_dataset(5, SP4_DEFAULT_SIGMA, 6).unwrap();
        let f = ds.features(&[3, 1]);
        assert_eq!(f.dim(), (2, 1, 10, 2));
        assert_eq!(f[[0, 0, 7, 1]], ds.inputs[[3, 1, 7]]);
        assert_eq!(f[[1, 0, 2, 0]], ds.inputs[[1, 0, 2]]);
    }
}
