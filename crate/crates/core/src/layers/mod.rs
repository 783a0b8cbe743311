//! Equivariant layers, model composition and the model file format.

pub mod model;
pub mod ops;
pub mod serialize;

use ndarray::Array3;

use crate::error::{RelnError, Result};
use crate::liealg::{AlgebraKind, GroupElement, LieAlgebraBasis};

pub use model::{features_from_inputs, init_params, ForwardCache, LayerKind, LayerSpec, Model, ModelSpec};
pub use ops::{
    bracket_forward, invariant_forward, linear_forward, pool_forward, relu_forward, relu_gates,
};
pub use serialize::{
    deserialize_checkpoint, deserialize_model, load_model, save_model, serialize_checkpoint,
    serialize_model, Checkpoint, MODEL_MAGIC, MODEL_VERSION,
};

/// Batched multi-channel algebra features `[B, K, C]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgFeature {
    data: Array3<f64>,
    algebra: AlgebraKind,
}

impl AlgFeature {
    pub fn new(data: Array3<f64>, basis: &LieAlgebraBasis) -> Result<Self> {
        if data.dim().1 != basis.dim() {
            return Err(RelnError::shape(format!(
                "feature has K = {}, algebra {} has dimension {}",
                data.dim().1,
                basis.kind(),
                basis.dim()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(RelnError::NonFinite("feature"));
        }
        Ok(AlgFeature { data, algebra: basis.kind() })
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array3<f64> {
        self.data
    }

    pub fn algebra(&self) -> AlgebraKind {
        self.algebra
    }

    pub fn batch(&self) -> usize {
        self.data.dim().0
    }

    pub fn channels(&self) -> usize {
        self.data.dim().2
    }

    /// Applies the adjoint action of `g` to every column.
    pub fn conjugated(&self, g: &GroupElement) -> Self {
        AlgFeature { data: ops::act_on_features(&g.adj, self.data.view()), algebra: self.algebra }
    }
}
