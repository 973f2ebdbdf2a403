//! Dense feed-forward networks with hand-written reverse-mode gradients.
//!
//! Activations are stored column-wise: a batch of `B` inputs of width `d` is a
//! `d × B` matrix. Hidden layers use ReLU; the last layer is either linear or
//! `scale·tanh`. A network may take an auxiliary input that is concatenated
//! with the output of the first layer (the critic's late action injection).

mod adam;
mod checkpoint;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};

pub use adam::{adam_step, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputActivation {
    Linear,
    TanhScaled(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out × in`.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { weights: DMatrix::zeros(outputs, inputs), bias: DVector::zeros(outputs) }
    }

    fn uniform<R: Rng + ?Sized>(inputs: usize, outputs: usize, limit: f64, rng: &mut R) -> Self {
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite init range");
        Self {
            weights: DMatrix::from_fn(outputs, inputs, |_, _| dist.sample(rng)),
            bias: DVector::from_fn(outputs, |_, _| dist.sample(rng)),
        }
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layer_dims: Vec<usize>,
    layers: Vec<Layer>,
    output: OutputActivation,
    late_concat_dim: Option<usize>,
    generation: u64,
}

/// Activations recorded by [`Mlp::forward`] for a later [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    generation: u64,
    /// Input to each layer (after concatenation for the injection layer).
    layer_inputs: Vec<DMatrix<f64>>,
    pre_activations: Vec<DMatrix<f64>>,
    output: DMatrix<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &DMatrix<f64> {
        &self.output
    }

    pub fn batch_size(&self) -> usize {
        self.output.ncols()
    }
}

/// Gradients of a scalar loss with respect to every parameter and input.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
    pub input: DMatrix<f64>,
    pub aux: Option<DMatrix<f64>>,
}

impl Mlp {
    /// Network with every parameter zero.
    pub fn zeros(layer_dims: &[usize], output: OutputActivation, late_concat_dim: Option<usize>) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(Error::Config(format!("invalid layer dims {layer_dims:?}")));
        }
        if late_concat_dim.is_some() && layer_dims.len() < 3 {
            return Err(Error::Config("late concatenation needs at least two layers".into()));
        }
        if late_concat_dim == Some(0) {
            return Err(Error::Config("late concatenation width must be positive".into()));
        }
        let layers = (0..layer_dims.len() - 1)
            .map(|l| Layer::zeros(Self::fan_in(layer_dims, late_concat_dim, l), layer_dims[l + 1]))
            .collect();
        Ok(Self { layer_dims: layer_dims.to_vec(), layers, output, late_concat_dim, generation: 0 })
    }

    /// Hidden layers `U(±1/√fan_in)`, final layer `U(±final_limit)`.
    pub fn new<R: Rng + ?Sized>(
        layer_dims: &[usize],
        output: OutputActivation,
        late_concat_dim: Option<usize>,
        final_limit: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(layer_dims, output, late_concat_dim)?;
        let last = net.layers.len() - 1;
        for l in 0..net.layers.len() {
            let fan_in = Self::fan_in(layer_dims, late_concat_dim, l);
            let limit = if l == last { final_limit } else { 1.0 / (fan_in as f64).sqrt() };
            net.layers[l] = Layer::uniform(fan_in, layer_dims[l + 1], limit, rng);
        }
        Ok(net)
    }

    pub(crate) fn from_parts(
        layer_dims: Vec<usize>,
        layers: Vec<Layer>,
        output: OutputActivation,
        late_concat_dim: Option<usize>,
    ) -> Result<Self> {
        let mut net = Self::zeros(&layer_dims, output, late_concat_dim)?;
        for (l, (have, want)) in layers.iter().zip(&net.layers).enumerate() {
            if have.weights.shape() != want.weights.shape() || have.bias.len() != want.bias.len() {
                return Err(Error::Checkpoint(format!("layer {l} shape mismatch")));
            }
        }
        if layers.len() != net.layers.len() {
            return Err(Error::Checkpoint("layer count mismatch".into()));
        }
        net.layers = layers;
        Ok(net)
    }

    fn fan_in(dims: &[usize], late: Option<usize>, layer: usize) -> usize {
        dims[layer] + if layer == 1 { late.unwrap_or(0) } else { 0 }
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable parameter access; invalidates outstanding forward caches.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        self.generation += 1;
        &mut self.layers
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn late_concat_dim(&self) -> Option<usize> {
        self.late_concat_dim
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("at least two dims")
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::num_params).sum()
    }

    /// Flat copy of all parameters, layer by layer: weights row-major, then bias.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            for r in 0..layer.weights.nrows() {
                out.extend(layer.weights.row(r).iter());
            }
            out.extend(layer.bias.iter());
        }
        out
    }

    fn same_shape(&self, other: &Mlp) -> bool {
        self.layer_dims == other.layer_dims && self.late_concat_dim == other.late_concat_dim
    }

    pub fn forward(&self, inputs: &DMatrix<f64>, aux: Option<&DMatrix<f64>>) -> Result<ForwardCache> {
        if inputs.nrows() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                inputs.nrows()
            )));
        }
        let batch = inputs.ncols();
        match (self.late_concat_dim, aux) {
            (Some(d), Some(a)) if a.nrows() == d && a.ncols() == batch => {}
            (None, None) => {}
            (Some(d), Some(a)) => {
                return Err(Error::Dimension(format!(
                    "auxiliary input is {}x{}, expected {d}x{batch}",
                    a.nrows(),
                    a.ncols()
                )))
            }
            (Some(_), None) => return Err(Error::Dimension("network requires an auxiliary input".into())),
            (None, Some(_)) => return Err(Error::Dimension("network takes no auxiliary input".into())),
        }

        let last = self.layers.len() - 1;
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut x = inputs.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            if l == 1 {
                if let Some(a) = aux {
                    let mut joined = DMatrix::zeros(x.nrows() + a.nrows(), batch);
                    joined.rows_mut(0, x.nrows()).copy_from(&x);
                    joined.rows_mut(x.nrows(), a.nrows()).copy_from(a);
                    x = joined;
                }
            }
            let mut z = &layer.weights * &x;
            for mut col in z.column_iter_mut() {
                col += &layer.bias;
            }
            let y = if l == last {
                match self.output {
                    OutputActivation::Linear => z.clone(),
                    OutputActivation::TanhScaled(s) => z.map(|v| s * v.tanh()),
                }
            } else {
                z.map(|v| v.max(0.0))
            };
            layer_inputs.push(x);
            pre_activations.push(z);
            x = y;
        }
        Ok(ForwardCache { generation: self.generation, layer_inputs, pre_activations, output: x })
    }

    /// Convenience single-sample forward pass.
    pub fn predict(&self, input: &[f64], aux: Option<&[f64]>) -> Result<Vec<f64>> {
        let x = DMatrix::from_column_slice(input.len(), 1, input);
        let a = aux.map(|a| DMatrix::from_column_slice(a.len(), 1, a));
        Ok(self.forward(&x, a.as_ref())?.output.column(0).iter().copied().collect())
    }

    /// Back-propagates `output_grad = ∂loss/∂output` through a cached pass.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &DMatrix<f64>) -> Result<Gradients> {
        if cache.generation != self.generation || cache.layer_inputs.len() != self.layers.len() {
            return Err(Error::StaleCache("parameters changed since the forward pass".into()));
        }
        if output_grad.shape() != cache.output.shape() {
            return Err(Error::StaleCache(format!(
                "output gradient is {:?}, cached output is {:?}",
                output_grad.shape(),
                cache.output.shape()
            )));
        }
        let last = self.layers.len() - 1;
        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        let mut aux_grad = None;
        let mut upstream = output_grad.clone();
        for l in (0..self.layers.len()).rev() {
            let z = &cache.pre_activations[l];
            let delta = if l == last {
                match self.output {
                    OutputActivation::Linear => upstream,
                    OutputActivation::TanhScaled(s) => upstream.zip_map(z, |g, v| {
                        let t = v.tanh();
                        g * s * (1.0 - t * t)
                    }),
                }
            } else {
                upstream.zip_map(z, |g, v| if v > 0.0 { g } else { 0.0 })
            };
            let x = &cache.layer_inputs[l];
            let weights = &delta * x.transpose();
            let bias = delta.column_sum();
            let mut dx = self.layers[l].weights.tr_mul(&delta);
            if l == 1 {
                if let Some(d) = self.late_concat_dim {
                    let own = dx.nrows() - d;
                    aux_grad = Some(dx.rows(own, d).into_owned());
                    dx = dx.rows(0, own).into_owned();
                }
            }
            grads.push(Layer { weights, bias });
            upstream = dx;
        }
        grads.reverse();
        Ok(Gradients { layers: grads, input: upstream, aux: aux_grad })
    }
}

impl Mlp {
    /// Gradient with respect to the late-concatenated input only.
    /// Stops at layer 1 and skips parameter gradients.
    pub fn aux_gradient(&self, cache: &ForwardCache, output_grad: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let d = self
            .late_concat_dim
            .ok_or_else(|| Error::Dimension("network has no auxiliary input".into()))?;
        if cache.generation != self.generation || cache.layer_inputs.len() != self.layers.len() {
            return Err(Error::StaleCache("parameters changed since the forward pass".into()));
        }
        if output_grad.shape() != cache.output.shape() {
            return Err(Error::StaleCache("output gradient does not match cached output".into()));
        }
        let last = self.layers.len() - 1;
        let mut upstream = output_grad.clone();
        for l in (1..self.layers.len()).rev() {
            let z = &cache.pre_activations[l];
            let delta = if l == last {
                match self.output {
                    OutputActivation::Linear => upstream,
                    OutputActivation::TanhScaled(s) => upstream.zip_map(z, |g, v| {
                        let t = v.tanh();
                        g * s * (1.0 - t * t)
                    }),
                }
            } else {
                upstream.zip_map(z, |g, v| if v > 0.0 { g } else { 0.0 })
            };
            upstream = self.layers[l].weights.tr_mul(&delta);
        }
        let own = upstream.nrows() - d;
        Ok(upstream.rows(own, d).into_owned())
    }
}

/// `θ' ← τ·θ + (1−τ)·θ'` for every parameter.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    if !target.same_shape(online) {
        return Err(Error::Dimension("soft update between differently shaped networks".into()));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Config(format!("soft update rate must lie in (0, 1], got {tau}")));
    }
    let keep = 1.0 - tau;
    for (t, o) in target.layers_mut().iter_mut().zip(&online.layers) {
        t.weights.zip_apply(&o.weights, |a, b| *a = tau * b + keep * *a);
        t.bias.zip_apply(&o.bias, |a, b| *a = tau * b + keep * *a);
    }
    Ok(())
}
