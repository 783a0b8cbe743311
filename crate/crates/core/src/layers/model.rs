use ndarray::{Array2, Array3, Array4, Axis};
use serde::{Deserialize, Serialize};

use super::ops::{self, BracketCache, PoolCache, ReluCache};
use crate::error::{RelnError, Result};
use crate::forms::{BilinearForm, FormKind};
use crate::liealg::{AlgebraKind, LieAlgebraBasis};
use crate::linalg::Matrix;
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Linear,
    Relu,
    LeakyRelu,
    Bracket,
    Pool,
    Invariant,
}

impl LayerKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(LayerKind::Linear),
            "relu" => Ok(LayerKind::Relu),
            "leaky_relu" | "leaky" => Ok(LayerKind::LeakyRelu),
            "bracket" => Ok(LayerKind::Bracket),
            "pool" => Ok(LayerKind::Pool),
            "invariant" => Ok(LayerKind::Invariant),
            other => Err(RelnError::invalid(format!("unknown layer kind `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Linear => "linear",
            LayerKind::Relu => "relu",
            LayerKind::LeakyRelu => "leaky_relu",
            LayerKind::Bracket => "bracket",
            LayerKind::Pool => "pool",
            LayerKind::Invariant => "invariant",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    #[serde(default)]
    pub alpha: f64,
}

impl LayerSpec {
    pub fn linear(c_in: usize, c_out: usize) -> Self {
        LayerSpec { kind: LayerKind::Linear, in_channels: c_in, out_channels: c_out, alpha: 0.0 }
    }

    fn square(kind: LayerKind, c: usize) -> Self {
        LayerSpec { kind, in_channels: c, out_channels: c, alpha: 0.0 }
    }

    pub fn relu(c: usize) -> Self {
        Self::square(LayerKind::Relu, c)
    }

    pub fn leaky_relu(c: usize, alpha: f64) -> Self {
        LayerSpec { alpha, ..Self::square(LayerKind::LeakyRelu, c) }
    }

    pub fn bracket(c: usize) -> Self {
        Self::square(LayerKind::Bracket, c)
    }

    pub fn pool(c: usize) -> Self {
        Self::square(LayerKind::Pool, c)
    }

    pub fn invariant(c: usize) -> Self {
        Self::square(LayerKind::Invariant, c)
    }

    /// Shapes of this layer's parameter tensors, in storage order.
    pub fn param_shapes(&self) -> Vec<(usize, usize)> {
        let c = self.in_channels;
        match self.kind {
            LayerKind::Linear => vec![(c, self.out_channels)],
            LayerKind::Relu | LayerKind::LeakyRelu | LayerKind::Pool => vec![(c, c)],
            LayerKind::Bracket => vec![(c, c), (c, c)],
            LayerKind::Invariant => vec![],
        }
    }

    fn alpha(&self) -> f64 {
        match self.kind {
            LayerKind::LeakyRelu => self.alpha,
            _ => 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(RelnError::invalid("layer channel counts must be positive"));
        }
        if self.kind != LayerKind::Linear && self.in_channels != self.out_channels {
            return Err(RelnError::invalid(format!(
                "{} layer needs in_channels = out_channels",
                self.kind.name()
            )));
        }
        if self.kind == LayerKind::LeakyRelu && !(0.0..1.0).contains(&self.alpha) {
            return Err(RelnError::invalid("leaky alpha must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Architecture of a model: equivariant layers, an optional invariant readout
/// (the last layer), and a fully connected head with tanh hidden units.
///
/// Without an invariant layer the final features are flattened into the head,
/// which gives the ordinary (non-invariant) fully connected baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub algebra: AlgebraKind,
    pub form: FormKind,
    pub input_channels: usize,
    pub set_size: usize,
    pub layers: Vec<LayerSpec>,
    pub head_hidden: Vec<usize>,
    pub output_dim: usize,
    /// `(mean, std)` of the standardized targets the model was fitted to.
    pub target_affine: Option<[f64; 2]>,
}

impl ModelSpec {
    pub fn new(algebra: AlgebraKind, input_channels: usize, layers: Vec<LayerSpec>) -> Self {
        ModelSpec {
            algebra,
            form: FormKind::ModifiedGl,
            input_channels,
            set_size: 1,
            layers,
            head_hidden: vec![],
            output_dim: 1,
            target_affine: None,
        }
    }

    pub fn with_head(mut self, hidden: Vec<usize>, output_dim: usize) -> Self {
        self.head_hidden = hidden;
        self.output_dim = output_dim;
        self
    }

    /// Fully connected network on flattened coordinates.
    pub fn flat_baseline(algebra: AlgebraKind, input_channels: usize, hidden: Vec<usize>) -> Self {
        ModelSpec::new(algebra, input_channels, vec![]).with_head(hidden, 1)
    }

    /// Whether the head sees only form invariants.
    pub fn is_invariant(&self) -> bool {
        self.layers.last().is_some_and(|l| l.kind == LayerKind::Invariant)
    }

    /// Checks the channel chain and returns the readout width fed to the head.
    pub fn validate(&self) -> Result<usize> {
        if self.input_channels == 0 || self.set_size == 0 || self.output_dim == 0 {
            return Err(RelnError::invalid("channels, set size and output dim must be positive"));
        }
        if self.form == FormKind::Custom {
            return Err(RelnError::invalid("models need a named form kind"));
        }
        if let Some([mean, std]) = self.target_affine {
            if !mean.is_finite() || !(std > 0.0 && std.is_finite()) {
                return Err(RelnError::invalid("target affine must be finite with positive scale"));
            }
        }
        let mut channels = self.input_channels;
        let mut set = self.set_size;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.validate()?;
            if layer.in_channels != channels {
                return Err(RelnError::invalid(format!(
                    "layer {i} ({}) expects {} channels but receives {channels}",
                    layer.kind.name(),
                    layer.in_channels
                )));
            }
            if layer.kind == LayerKind::Invariant && i + 1 != self.layers.len() {
                return Err(RelnError::invalid("the invariant readout must be the last layer"));
            }
            if layer.kind == LayerKind::Pool {
                set = 1;
            }
            channels = layer.out_channels;
        }
        if self.head_hidden.contains(&0) {
            return Err(RelnError::invalid("head widths must be positive"));
        }
        Ok(if self.is_invariant() {
            set * channels
        } else {
            set * self.algebra.dim() * channels
        })
    }

    /// Every parameter tensor shape in declaration order.
    pub fn param_shapes(&self) -> Result<Vec<(usize, usize)>> {
        let readout = self.validate()?;
        let mut shapes: Vec<(usize, usize)> =
            self.layers.iter().flat_map(|l| l.param_shapes()).collect();
        let mut width = readout;
        for &h in self.head_hidden.iter().chain(std::iter::once(&self.output_dim)) {
            shapes.push((width, h));
            shapes.push((1, h));
            width = h;
        }
        Ok(shapes)
    }

    /// Human-readable owner of each parameter tensor.
    pub fn param_labels(&self) -> Vec<String> {
        let mut labels = vec![];
        for (i, layer) in self.layers.iter().enumerate() {
            for _ in layer.param_shapes() {
                labels.push(format!("layer{i}:{}", layer.kind.name()));
            }
        }
        for i in 0..=self.head_hidden.len() {
            labels.push(format!("head{i}:weight"));
            labels.push(format!("head{i}:bias"));
        }
        labels
    }
}

#[derive(Debug, Clone)]
enum LayerCache {
    Plain,
    Relu(ReluCache),
    Bracket(BracketCache),
    Pool(PoolCache),
}

/// Activations kept by `Model::forward` for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    layer_inputs: Vec<Array4<f64>>,
    layers: Vec<LayerCache>,
    final_features: Array4<f64>,
    head_inputs: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.final_features.dim().0
    }

    /// Smallest |gate| over all ReLU layers and smallest pooling argmax margin.
    /// Finite differences are only trustworthy when this is not tiny.
    pub fn min_switch_margin(&self) -> f64 {
        self.layers.iter().fold(f64::INFINITY, |m, c| match c {
            LayerCache::Relu(r) => r.gates.iter().fold(m, |m, g| m.min(g.abs())),
            LayerCache::Pool(p) => m.min(ops::pool_margin(p)),
            _ => m,
        })
    }
}

/// A parameterized model with gradient buffers.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    basis: LieAlgebraBasis,
    form: BilinearForm,
    pub params: Vec<Matrix>,
    pub grads: Vec<Matrix>,
}

fn flat3(x: &Array4<f64>) -> Array3<f64> {
    let (b, n, k, c) = x.dim();
    x.as_standard_layout().into_owned().into_shape_with_order((b * n, k, c)).expect("shape")
}

fn unflat3(x: Array3<f64>, b: usize, n: usize) -> Array4<f64> {
    let (_, k, c) = x.dim();
    x.into_shape_with_order((b, n, k, c)).expect("shape")
}

impl Model {
    /// Replaces the bilinear form used by the gates, pooling and readout.
    /// The spec keeps its named kind, so this is meant for fault injection
    /// in audits rather than for models that get saved.
    pub fn with_form(mut self, form: BilinearForm) -> Result<Self> {
        if form.algebra() != self.spec.algebra {
            return Err(RelnError::invalid("form belongs to a different algebra"));
        }
        self.form = form;
        Ok(self)
    }

    /// Wraps explicit parameters; shapes must match the spec.
    pub fn new(spec: ModelSpec, params: Vec<Matrix>) -> Result<Self> {
        let shapes = spec.param_shapes()?;
        if shapes.len() != params.len() {
            return Err(RelnError::shape(format!(
                "model expects {} parameter tensors, got {}",
                shapes.len(),
                params.len()
            )));
        }
        for (i, (p, s)) in params.iter().zip(&shapes).enumerate() {
            if p.dim() != *s {
                return Err(RelnError::shape(format!(
                    "parameter {i} has shape {:?}, expected {s:?}",
                    p.dim()
                )));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(RelnError::NonFinite("model parameter"));
            }
        }
        let basis = LieAlgebraBasis::new(spec.algebra)?;
        let form = BilinearForm::of_kind(spec.form, &basis)?;
        let grads = shapes.iter().map(|s| Matrix::zeros(*s)).collect();
        Ok(Model { spec, basis, form, params, grads })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn basis(&self) -> &LieAlgebraBasis {
        &self.basis
    }

    pub fn form(&self) -> &BilinearForm {
        &self.form
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    fn check_input(&self, x: &Array4<f64>) -> Result<()> {
        let (_, n, k, c) = x.dim();
        if n != self.spec.set_size || k != self.basis.dim() || c != self.spec.input_channels {
            return Err(RelnError::shape(format!(
                "model input must be [B, {}, {}, {}], got {:?}",
                self.spec.set_size,
                self.basis.dim(),
                self.spec.input_channels,
                x.dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(RelnError::NonFinite("model input"));
        }
        Ok(())
    }

    /// Runs the model on `[B, N, K, C]` features; returns `[B, output_dim]`.
    pub fn forward(&self, x: &Array4<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(x)?;
        let nb = x.dim().0;
        let mut h = x.as_standard_layout().into_owned();
        let mut layer_inputs = Vec::with_capacity(self.spec.layers.len());
        let mut caches = Vec::with_capacity(self.spec.layers.len());
        let mut p = 0;
        let mut readout: Option<Array2<f64>> = None;
        for layer in &self.spec.layers {
            let n = h.dim().1;
            layer_inputs.push(h.clone());
            let flat = flat3(&h);
            match layer.kind {
                LayerKind::Linear => {
                    let out = ops::linear_forward(flat.view(), &self.params[p])?;
                    h = unflat3(out, nb, n);
                    caches.push(LayerCache::Plain);
                }
                LayerKind::Relu | LayerKind::LeakyRelu => {
                    let (out, cache) =
                        ops::relu_forward(flat.view(), &self.params[p], &self.form, layer.alpha())?;
                    h = unflat3(out, nb, n);
                    caches.push(LayerCache::Relu(cache));
                }
                LayerKind::Bracket => {
                    let (out, cache) = ops::bracket_forward(
                        flat.view(),
                        &self.params[p],
                        &self.params[p + 1],
                        &self.basis,
                    )?;
                    h = unflat3(out, nb, n);
                    caches.push(LayerCache::Bracket(cache));
                }
                LayerKind::Pool => {
                    let (out, cache) = ops::pool_forward(&h, &self.params[p], &self.form)?;
                    h = out.insert_axis(Axis(1));
                    caches.push(LayerCache::Pool(cache));
                }
                LayerKind::Invariant => {
                    let y = ops::invariant_forward(flat.view(), &self.form)?;
                    let c = y.ncols();
                    readout = Some(ops::standard(y).into_shape_with_order((nb, n * c)).expect("shape"));
                    caches.push(LayerCache::Plain);
                }
            }
            p += layer.param_shapes().len();
        }
        let readout = match readout {
            Some(r) => r,
            None => {
                let len = h.len() / nb.max(1);
                h.clone().into_shape_with_order((nb, len)).expect("shape")
            }
        };
        let mut head_inputs = Vec::with_capacity(self.spec.head_hidden.len() + 1);
        let mut a = readout;
        let depth = self.spec.head_hidden.len() + 1;
        for i in 0..depth {
            let w = &self.params[p + 2 * i];
            let b = &self.params[p + 2 * i + 1];
            let mut z = a.dot(w);
            z += &b.row(0);
            head_inputs.push(a);
            a = if i + 1 < depth { z.mapv(f64::tanh) } else { z };
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(RelnError::NonFinite("model output"));
        }
        let cache = ForwardCache { layer_inputs, layers: caches, final_features: h, head_inputs };
        Ok((a, cache))
    }

    pub fn predict(&self, x: &Array4<f64>) -> Result<Array2<f64>> {
        self.forward(x).map(|(y, _)| y)
    }

    /// Gradients of `Σ dout ⊙ output` with respect to every parameter tensor.
    pub fn gradients(&self, cache: &ForwardCache, dout: &Array2<f64>) -> Result<Vec<Matrix>> {
        self.gradients_with_input(cache, dout).map(|(g, _)| g)
    }

    /// Parameter gradients plus the gradient with respect to the model input.
    pub fn gradients_with_input(
        &self,
        cache: &ForwardCache,
        dout: &Array2<f64>,
    ) -> Result<(Vec<Matrix>, Array4<f64>)> {
        let nb = cache.batch();
        if dout.dim() != (nb, self.spec.output_dim) {
            return Err(RelnError::shape(format!(
                "upstream gradient must be [{nb}, {}], got {:?}",
                self.spec.output_dim,
                dout.dim()
            )));
        }
        if cache.layers.len() != self.spec.layers.len()
            || cache.head_inputs.len() != self.spec.head_hidden.len() + 1
        {
            return Err(RelnError::shape("forward cache does not match this model"));
        }
        let mut grads: Vec<Matrix> = self.params.iter().map(|p| Matrix::zeros(p.raw_dim())).collect();
        let head_start: usize = self.spec.layers.iter().map(|l| l.param_shapes().len()).sum();

        let mut dz = dout.clone();
        for i in (0..cache.head_inputs.len()).rev() {
            let a = &cache.head_inputs[i];
            let w = &self.params[head_start + 2 * i];
            grads[head_start + 2 * i] = a.t().dot(&dz);
            grads[head_start + 2 * i + 1] = dz.sum_axis(Axis(0)).insert_axis(Axis(0));
            let da = dz.dot(&w.t());
            dz = if i > 0 { da * a.mapv(|t| 1.0 - t * t) } else { da };
        }
        let d_readout = ops::standard(dz);

        let mut p = head_start;
        let mut dh: Option<Array4<f64>> = None;
        for (li, layer) in self.spec.layers.iter().enumerate().rev() {
            let x_in = &cache.layer_inputs[li];
            let (_, n, _, _) = x_in.dim();
            let n_params = layer.param_shapes().len();
            p -= n_params;
            let flat_in = flat3(x_in);
            let upstream = match (&dh, layer.kind) {
                (_, LayerKind::Invariant) => None,
                (Some(d), LayerKind::Pool) => Some(d.index_axis(Axis(1), 0).to_owned()),
                (Some(d), _) => Some(flat3(d)),
                (None, LayerKind::Pool) => Some(
                    d_readout
                        .clone()
                        .into_shape_with_order(cache.final_features.dim())
                        .expect("shape")
                        .index_axis(Axis(1), 0)
                        .to_owned(),
                ),
                (None, _) => {
                    let shape = cache.final_features.dim();
                    Some(flat3(&d_readout.clone().into_shape_with_order(shape).expect("shape")))
                }
            };
            let dx = match (&cache.layers[li], layer.kind) {
                (_, LayerKind::Invariant) => {
                    let c = layer.in_channels;
                    let g = d_readout.clone().into_shape_with_order((nb * n, c)).expect("shape");
                    ops::invariant_backward(flat_in.view(), &self.form, g.view())
                }
                (LayerCache::Plain, LayerKind::Linear) => {
                    let (dx, dw) = ops::linear_backward(
                        flat_in.view(),
                        &self.params[p],
                        upstream.as_ref().expect("upstream").view(),
                    );
                    grads[p] = dw;
                    dx
                }
                (LayerCache::Relu(rc), _) => {
                    let (dx, du) = ops::relu_backward(
                        flat_in.view(),
                        &self.params[p],
                        &self.form,
                        layer.alpha(),
                        rc,
                        upstream.as_ref().expect("upstream").view(),
                    );
                    grads[p] = du;
                    dx
                }
                (LayerCache::Bracket(bc), _) => {
                    let (dx, dwa, dwb) = ops::bracket_backward(
                        flat_in.view(),
                        &self.params[p],
                        &self.params[p + 1],
                        &self.basis,
                        bc,
                        upstream.as_ref().expect("upstream").view(),
                    );
                    grads[p] = dwa;
                    grads[p + 1] = dwb;
                    dx
                }
                (LayerCache::Pool(pc), _) => {
                    let (dx4, dwd) =
                        ops::pool_backward(x_in.dim(), pc, upstream.as_ref().expect("upstream").view());
                    grads[p] = dwd;
                    dh = Some(dx4);
                    continue;
                }
                _ => return Err(RelnError::shape("forward cache does not match this model")),
            };
            dh = Some(unflat3(dx, nb, n));
        }
        let dx = match dh {
            Some(d) => d,
            None => {
                let shape = cache.final_features.dim();
                d_readout.into_shape_with_order(shape).expect("shape")
            }
        };
        Ok((grads, dx))
    }

    /// Fills the gradient buffers from a forward cache.
    pub fn backward(&mut self, cache: &ForwardCache, dout: &Array2<f64>) -> Result<()> {
        self.grads = self.gradients(cache, dout)?;
        Ok(())
    }
}

/// Gaussian initialization: channel maps and head weights with std
/// `1/sqrt(fan_in)`, head biases zero. Deterministic in `seed`.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<Model> {
    let shapes = spec.param_shapes()?;
    let n_layer_tensors: usize = spec.layers.iter().map(|l| l.param_shapes().len()).sum();
    let mut r = rng::stream(seed, Stream::Init);
    let params = shapes
        .iter()
        .enumerate()
        .map(|(i, &(rows, cols))| {
            let is_bias = i >= n_layer_tensors && (i - n_layer_tensors) % 2 == 1;
            if is_bias {
                Matrix::zeros((rows, cols))
            } else {
                let std = 1.0 / (rows as f64).sqrt();
                Matrix::from_shape_simple_fn((rows, cols), || std * rng::normal(&mut r))
            }
        })
        .collect();
    Model::new(spec.clone(), params)
}

/// Stacks per-sample inputs `[N, C, K]` into model features `[N, 1, K, C]`.
pub fn features_from_inputs(inputs: &Array3<f64>) -> Array4<f64> {
    inputs.view().permuted_axes([0, 2, 1]).as_standard_layout().into_owned().insert_axis(Axis(1))
}
