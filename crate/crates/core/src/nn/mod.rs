//! Dense feed-forward networks with exact reverse-mode gradients.
//!
//! Batches are row-major: a batch of `B` inputs of dimension `n` is a `B x n`
//! matrix and a layer computes `act(X W + b)` with `W` of shape
//! `input_dim x output_dim`. Everything is `f64`.

mod adam;
mod loss;
mod serial;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use loss::{
    bce_terms, discriminator_bce, generator_adversarial, l1_loss, l1_rows, sign_diff, PROB_EPS,
};
pub use serial::{NetworkJson, NETWORK_FORMAT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu { alpha: f64 },
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu { alpha } => {
                if z > 0.0 {
                    z
                } else {
                    alpha * z
                }
            }
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative with respect to the pre-activation `z`.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { alpha } => {
                if z > 0.0 {
                    1.0
                } else {
                    alpha
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Activation::Identity => 1.0,
        }
    }

    /// Whether the derivative is discontinuous at zero.
    pub fn has_kink(self) -> bool {
        matches!(self, Activation::Relu | Activation::LeakyRelu { .. })
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_dim: usize, output_dim: usize, activation: Activation) -> Self {
        LayerSpec {
            input_dim,
            output_dim,
            activation,
        }
    }
}

/// Chains `dims` into consecutive layers sharing one activation.
pub fn chain_specs(dims: &[usize], activation: Activation) -> Vec<LayerSpec> {
    dims.windows(2)
        .map(|w| LayerSpec::new(w[0], w[1], activation))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `input_dim x output_dim`.
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn input_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::new(self.input_dim(), self.output_dim(), self.activation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNetwork {
    pub layers: Vec<DenseLayer>,
}

/// Intermediate values from a forward pass, enough for exact backprop.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input of each layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn pre_activations(&self) -> &[Array2<f64>] {
        &self.pre
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

/// Per-parameter gradients mirroring a network's shape.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerGradient>,
}

impl GradientSet {
    pub fn zeros_like(net: &DenseNetwork) -> Self {
        GradientSet {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    biases: Array1::zeros(l.biases.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.biases.iter()).all(|v| v.is_finite()))
    }

    /// Flattened view in network parameter order (weights row-major, then biases, per layer).
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()).copied())
            .collect()
    }

    fn matches(&self, net: &DenseNetwork) -> bool {
        self.layers.len() == net.layers.len()
            && self
                .layers
                .iter()
                .zip(&net.layers)
                .all(|(g, l)| g.weights.dim() == l.weights.dim() && g.biases.len() == l.biases.len())
    }
}

impl DenseNetwork {
    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.biases.len() != l.output_dim() {
                return Err(Error::shape(
                    format!("layer {i} bias length {}", l.output_dim()),
                    l.biases.len(),
                ));
            }
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].output_dim() != w[1].input_dim() {
                return Err(Error::shape(
                    format!("layer {} input dim {}", i + 1, w[0].output_dim()),
                    w[1].input_dim(),
                ));
            }
        }
        let net = DenseNetwork { layers };
        if !net.is_finite() {
            return Err(Error::Model("non-finite network parameter".into()));
        }
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").output_dim()
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(DenseLayer::spec).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.biases.iter()).all(|v| v.is_finite()))
    }

    /// Flattened parameters in the same order as [`GradientSet::flatten`].
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()).copied())
            .collect()
    }

    /// Mutable access to the `k`-th flattened parameter.
    pub fn parameter_mut(&mut self, mut k: usize) -> &mut f64 {
        for l in &mut self.layers {
            if k < l.weights.len() {
                let cols = l.weights.ncols();
                return &mut l.weights[[k / cols, k % cols]];
            }
            k -= l.weights.len();
            if k < l.biases.len() {
                return &mut l.biases[k];
            }
            k -= l.biases.len();
        }
        panic!("parameter index out of range");
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(Error::shape(format!("input dim {}", self.input_dim()), cols));
        }
        Ok(())
    }

    /// Batched forward pass keeping the cache for [`DenseNetwork::backward`].
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(x.ncols())?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut current = x.to_owned();
        for layer in &self.layers {
            let z = current.dot(&layer.weights) + &layer.biases;
            let act = layer.activation;
            let out = z.mapv(|v| act.apply(v));
            inputs.push(current);
            pre.push(z);
            current = out;
        }
        Ok((current, ForwardCache { inputs, pre }))
    }

    /// Batched forward pass without a cache.
    pub fn infer_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        let mut current = x.to_owned();
        for layer in &self.layers {
            let mut z = current.dot(&layer.weights) + &layer.biases;
            let act = layer.activation;
            z.mapv_inplace(|v| act.apply(v));
            current = z;
        }
        Ok(current)
    }

    /// Single-sample forward pass.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("contiguous row");
        let (out, cache) = self.forward_batch(view)?;
        Ok((out.into_raw_vec_and_offset().0, cache))
    }

    fn check_cache(&self, cache: &ForwardCache, grad_rows: usize, grad_cols: usize) -> Result<()> {
        if cache.inputs.len() != self.layers.len() || cache.pre.len() != self.layers.len() {
            return Err(Error::shape(
                format!("cache for {} layers", self.layers.len()),
                cache.inputs.len(),
            ));
        }
        for (i, (layer, (inp, z))) in self.layers.iter().zip(cache.inputs.iter().zip(&cache.pre)).enumerate() {
            if inp.ncols() != layer.input_dim() || z.ncols() != layer.output_dim() || inp.nrows() != grad_rows {
                return Err(Error::shape(
                    format!("cache layer {i} of {}x{}", grad_rows, layer.input_dim()),
                    format!("{}x{}", inp.nrows(), inp.ncols()),
                ));
            }
        }
        if grad_cols != self.output_dim() {
            return Err(Error::shape(format!("output gradient dim {}", self.output_dim()), grad_cols));
        }
        Ok(())
    }

    /// Reverse pass: parameter gradients summed over the batch, plus the
    /// gradient with respect to the batch input.
    pub fn backward(&self, cache: &ForwardCache, output_gradient: ArrayView2<f64>) -> Result<(GradientSet, Array2<f64>)> {
        self.backward_impl(cache, output_gradient, true)
            .map(|(g, dx)| (g.expect("requested"), dx))
    }

    /// Reverse pass that only propagates to the input, leaving parameters untouched.
    pub fn backward_input(&self, cache: &ForwardCache, output_gradient: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.backward_impl(cache, output_gradient, false).map(|(_, dx)| dx)
    }

    fn backward_impl(
        &self,
        cache: &ForwardCache,
        output_gradient: ArrayView2<f64>,
        want_params: bool,
    ) -> Result<(Option<GradientSet>, Array2<f64>)> {
        self.check_cache(cache, output_gradient.nrows(), output_gradient.ncols())?;
        let mut grads = Vec::with_capacity(if want_params { self.layers.len() } else { 0 });
        let mut upstream = output_gradient.to_owned();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let act = layer.activation;
            let mut delta = upstream;
            Zip::from(&mut delta)
                .and(&cache.pre[i])
                .for_each(|d, &z| *d *= act.derivative(z));
            if want_params {
                grads.push(LayerGradient {
                    weights: cache.inputs[i].t().dot(&delta),
                    biases: delta.sum_axis(Axis(0)),
                });
            }
            upstream = delta.dot(&layer.weights.t());
        }
        grads.reverse();
        let set = want_params.then_some(GradientSet { layers: grads });
        Ok((set, upstream))
    }
}

/// Glorot-uniform weights, zero biases, deterministic per seed.
pub fn init_network(specs: &[LayerSpec], seed: u64) -> Result<DenseNetwork> {
    if specs.is_empty() {
        return Err(Error::Config("network needs at least one layer".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        if spec.input_dim == 0 || spec.output_dim == 0 {
            return Err(Error::Config(format!("layer {i} has a zero dimension")));
        }
        if let Activation::LeakyRelu { alpha } = spec.activation {
            if !alpha.is_finite() {
                return Err(Error::Config(format!("layer {i} leaky relu alpha must be finite")));
            }
        }
        let bound = (6.0 / (spec.input_dim + spec.output_dim) as f64).sqrt();
        let weights = Array2::from_shape_fn((spec.input_dim, spec.output_dim), |_| {
            rng.random_range(-bound..bound)
        });
        layers.push(DenseLayer {
            weights,
            biases: Array1::zeros(spec.output_dim),
            activation: spec.activation,
        });
    }
    DenseNetwork::from_layers(layers)
}

/// Stacks row vectors into a batch matrix.
pub fn stack_rows<'a>(rows: impl IntoIterator<Item = &'a [f64]>, dim: usize) -> Result<Array2<f64>> {
    let mut data = Vec::new();
    let mut n = 0;
    for row in rows {
        if row.len() != dim {
            return Err(Error::shape(format!("row of length {dim}"), row.len()));
        }
        data.extend_from_slice(row);
        n += 1;
    }
    Ok(Array2::from_shape_vec((n, dim), data).expect("consistent shape"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn single(weights: Array2<f64>, biases: Array1<f64>, activation: Activation) -> DenseNetwork {
        DenseNetwork::from_layers(vec![DenseLayer {
            weights,
            biases,
            activation,
        }])
        .unwrap()
    }

    #[test]
    fn identity_layer() {
        let net = single(Array2::eye(3), Array1::zeros(3), Activation::Identity);
        let (y, _) = net.forward(&[0.3, -1.0, 2.5]).unwrap();
        assert_eq!(y, vec![0.3, -1.0, 2.5]);
    }

    #[test]
    fn relu_clamps() {
        let net = single(array![[1.0]], array![-1.0], Activation::Relu);
        assert_eq!(net.forward(&[0.5]).unwrap().0, vec![0.0]);
    }

    #[test]
    fn sigmoid_of_zero() {
        let net = single(array![[0.0]], array![0.0], Activation::Sigmoid);
        for x in [-3.0, 0.0, 100.0] {
            assert_eq!(net.forward(&[x]).unwrap().0, vec![0.5]);
        }
    }

    #[test]
    fn forward_dimension_mismatch() {
        let net = single(Array2::eye(2), Array1::zeros(2), Activation::Identity);
        assert!(matches!(net.forward(&[1.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn linear_backward_closed_form() {
        let w = array![[1.0, -2.0], [0.5, 3.0], [0.0, 1.0]];
        let net = single(w.clone(), array![0.1, 0.2], Activation::Identity);
        let x = [0.7, -1.2, 2.0];
        let g = array![[0.3, -0.8]];
        let (_, cache) = net.forward(&x).unwrap();
        let (grads, dx) = net.backward(&cache, g.view()).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                assert!((grads.layers[0].weights[[i, j]] - x[i] * g[[0, j]]).abs() < 1e-15);
            }
        }
        assert_eq!(grads.layers[0].biases, array![0.3, -0.8]);
        let expected_dx = g.dot(&w.t());
        assert!((&dx - &expected_dx).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn leaky_relu_negative_slope() {
        let net = single(array![[1.0]], array![-2.0], Activation::LeakyRelu { alpha: 0.2 });
        let (y, cache) = net.forward(&[1.0]).unwrap();
        assert!((y[0] + 0.2).abs() < 1e-15);
        let (grads, dx) = net.backward(&cache, array![[1.0]].view()).unwrap();
        assert!((grads.layers[0].biases[0] - 0.2).abs() < 1e-15);
        assert!((grads.layers[0].weights[[0, 0]] - 0.2).abs() < 1e-15);
        assert!((dx[[0, 0]] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn stale_cache_rejected() {
        let a = init_network(&chain_specs(&[3, 4, 2], Activation::Relu), 1).unwrap();
        let b = init_network(&chain_specs(&[3, 5, 2], Activation::Relu), 1).unwrap();
        let (_, cache) = a.forward(&[0.1, 0.2, 0.3]).unwrap();
        assert!(matches!(b.backward(&cache, array![[1.0, 1.0]].view()), Err(Error::Shape { .. })));
        assert!(matches!(a.backward(&cache, array![[1.0, 1.0, 1.0]].view()), Err(Error::Shape { .. })));
    }

    #[test]
    fn init_bounds_and_determinism() {
        let specs = [LayerSpec::new(4, 2, Activation::Relu)];
        let net = init_network(&specs, 11).unwrap();
        let bound = (6.0f64 / 6.0).sqrt();
        assert_eq!(net.layers[0].weights.dim(), (4, 2));
        assert!(net.layers[0].weights.iter().all(|w| w.abs() <= bound));
        assert_eq!(net.layers[0].biases, array![0.0, 0.0]);
        assert_eq!(net, init_network(&specs, 11).unwrap());
        assert_ne!(net, init_network(&specs, 12).unwrap());
    }

    #[test]
    fn init_rejects_zero_dims() {
        assert!(matches!(
            init_network(&[LayerSpec::new(0, 2, Activation::Relu)], 0),
            Err(Error::Config(_))
        ));
        assert!(matches!(init_network(&[], 0), Err(Error::Config(_))));
    }

    #[test]
    fn batch_matches_single() {
        let net = init_network(&chain_specs(&[3, 6, 2], Activation::LeakyRelu { alpha: 0.2 }), 5).unwrap();
        let rows = [[0.1, 0.5, -0.3], [1.0, -2.0, 0.25]];
        let batch = stack_rows(rows.iter().map(|r| r.as_slice()), 3).unwrap();
        let out = net.infer_batch(batch.view()).unwrap();
        for (i, r) in rows.iter().enumerate() {
            let (y, _) = net.forward(r).unwrap();
            for j in 0..2 {
                assert_eq!(out[[i, j]], y[j]);
            }
        }
    }
}
