//! Fully connected feed-forward networks `x ↦ f(W x + b)` composed layer by
//! layer, with hand-written backpropagation for the squared-error loss.

mod persist;

pub use persist::{load_model, save_model, LayerFile, ModelFile, MODEL_FORMAT_VERSION};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, SpectralEstimate, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    /// Lipschitz constant of the activation function.
    pub fn lipschitz(self) -> f64 {
        match self {
            Activation::Relu | Activation::Linear => 1.0,
        }
    }

    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
        }
    }

    /// Derivative, with the ReLU subgradient at exactly 0 taken as 0.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `n_out x n_in`.
    pub weights: Matrix,
    pub bias: Vector,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weights: Matrix, bias: Vector, activation: Activation) -> Result<Self> {
        if weights.rows() != bias.dim() {
            return Err(Error::shape("layer bias", weights.rows(), bias.dim()));
        }
        Ok(Layer {
            weights,
            bias,
            activation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_dim: usize,
    layers: Vec<Layer>,
}

impl Network {
    pub fn new(input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Validation("network needs at least one layer".into()));
        }
        let mut width = input_dim;
        for (l, layer) in layers.iter().enumerate() {
            if layer.input_dim() != width {
                return Err(Error::Validation(format!(
                    "layer {l} expects {} inputs but receives {width}",
                    layer.input_dim()
                )));
            }
            width = layer.output_dim();
        }
        Ok(Network { input_dim, layers })
    }

    /// Randomly initialised network with the given layer widths, e.g.
    /// `[13, 20, 20, 20, 1]`. Hidden layers use ReLU, the output layer is
    /// linear. Weights are drawn uniformly from `±sqrt(6 / (fan_in + fan_out))`,
    /// biases start at zero.
    pub fn init<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Config(format!(
                "layer widths must list an input and at least one layer, all positive: {widths:?}"
            )));
        }
        let n_layers = widths.len() - 1;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(l, pair)| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.gen_range(-limit..=limit))
                    .collect();
                let activation = if l + 1 == n_layers {
                    Activation::Linear
                } else {
                    Activation::Relu
                };
                Layer::new(Matrix::new(fan_out, fan_in, data)?, Vector::zeros(fan_out), activation)
            })
            .collect::<Result<Vec<_>>>()?;
        Network::new(widths[0], layers)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::output_dim)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable layer access. Shapes must not be changed.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// `[input_dim, n_1, ..., n_L]`.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim)
            .chain(self.layers.iter().map(Layer::output_dim))
            .collect()
    }

    /// Product of the activation Lipschitz constants, `L_f^L`.
    pub fn activation_lipschitz(&self) -> f64 {
        self.layers.iter().map(|l| l.activation.lipschitz()).product()
    }

    pub fn forward(&self, x: &Vector) -> Result<ForwardTrace> {
        if x.dim() != self.input_dim {
            return Err(Error::shape("network input", self.input_dim, x.dim()));
        }
        let mut pre_activations = Vec::with_capacity(self.depth());
        let mut activations: Vec<Vector> = Vec::with_capacity(self.depth());
        for layer in &self.layers {
            let input = activations.last().unwrap_or(x);
            let mut z = layer.weights.matvec_slice(input.as_slice());
            for (zi, bi) in z.iter_mut().zip(layer.bias.iter()) {
                *zi += bi;
            }
            let a: Vec<f64> = z.iter().map(|&zi| layer.activation.apply(zi)).collect();
            pre_activations.push(Vector::new(z)?);
            activations.push(Vector::new(a)?);
        }
        Ok(ForwardTrace {
            input: x.clone(),
            pre_activations,
            activations,
        })
    }

    /// `g_θ(x)` without keeping intermediate values.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::shape("network input", self.input_dim, x.len()));
        }
        let mut cur = x.to_vec();
        for layer in &self.layers {
            let mut z = layer.weights.matvec_slice(&cur);
            for (zi, bi) in z.iter_mut().zip(layer.bias.iter()) {
                *zi = layer.activation.apply(*zi + bi);
            }
            cur = z;
        }
        Ok(cur)
    }

    /// Gradients of `mse_loss(g_θ(x), target)` with respect to every weight
    /// and bias, given the trace of `forward(x)`.
    pub fn backward(&self, trace: &ForwardTrace, target: &Vector) -> Result<Gradients> {
        self.check_trace(trace)?;
        let output = trace.output();
        if target.dim() != output.dim() {
            return Err(Error::shape("loss target", output.dim(), target.dim()));
        }
        let m = output.dim() as f64;
        let mut delta: Vec<f64> = output
            .iter()
            .zip(target.iter())
            .map(|(p, t)| 2.0 * (p - t) / m)
            .collect();

        let mut grads = Gradients::zeros_like(self);
        for l in (0..self.depth()).rev() {
            let layer = &self.layers[l];
            let z = &trace.pre_activations[l];
            for (d, &zi) in delta.iter_mut().zip(z.iter()) {
                *d *= layer.activation.derivative(zi);
            }
            let input = if l == 0 {
                &trace.input
            } else {
                &trace.activations[l - 1]
            };
            let dw = &mut grads.weights[l];
            for (r, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (g, &x) in dw.row_mut(r).iter_mut().zip(input.iter()) {
                    *g = d * x;
                }
            }
            grads.biases[l].as_mut_slice().copy_from_slice(&delta);
            if l > 0 {
                delta = layer.weights.matvec_transpose_slice(&delta);
            }
        }
        Ok(grads)
    }

    fn check_trace(&self, trace: &ForwardTrace) -> Result<()> {
        let stale = || Error::shape("forward trace", format!("widths {:?}", self.widths()), "trace of another network");
        if trace.input.dim() != self.input_dim
            || trace.pre_activations.len() != self.depth()
            || trace.activations.len() != self.depth()
        {
            return Err(stale());
        }
        for (layer, (z, a)) in self
            .layers
            .iter()
            .zip(trace.pre_activations.iter().zip(&trace.activations))
        {
            if z.dim() != layer.output_dim() || a.dim() != layer.output_dim() {
                return Err(stale());
            }
        }
        Ok(())
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub input: Vector,
    /// `zˡ = Wˡ xˡ⁻¹ + bˡ`.
    pub pre_activations: Vec<Vector>,
    /// `xˡ = f(zˡ)`.
    pub activations: Vec<Vector>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Vector {
        self.activations.last().expect("network has at least one layer")
    }
}

/// Parameter-shaped container used for gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vector>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients {
            weights: net
                .layers
                .iter()
                .map(|l| Matrix::zeros(l.weights.rows(), l.weights.cols()))
                .collect(),
            biases: net.layers.iter().map(|l| Vector::zeros(l.bias.dim())).collect(),
        }
    }

    pub fn is_congruent(&self, net: &Network) -> bool {
        self.weights.len() == net.depth()
            && self.biases.len() == net.depth()
            && net.layers.iter().enumerate().all(|(l, layer)| {
                self.weights[l].shape() == layer.weights.shape()
                    && self.biases[l].dim() == layer.bias.dim()
            })
    }

    /// `self += factor * other`.
    pub fn add_scaled(&mut self, other: &Gradients, factor: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
                *x += factor * y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
                *x += factor * y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.weights
            .iter_mut()
            .map(Matrix::as_mut_slice)
            .chain(self.biases.iter_mut().map(Vector::as_mut_slice))
            .flatten()
            .for_each(|x| *x *= factor);
    }

    /// Euclidean norm of one layer's weight gradient.
    pub fn weight_norm(&self, layer: usize) -> f64 {
        crate::linalg::norm(self.weights[layer].as_slice())
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().all(Matrix::is_zero)
            && self.biases.iter().all(|b| b.iter().all(|&x| x == 0.0))
    }
}

/// Mean squared error.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair("mse", pred, target)?;
    Ok(pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64)
}

/// Mean absolute error.
pub fn mae_metric(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair("mae", pred, target)?;
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

fn check_pair(context: &'static str, pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::shape(context, pred.len(), target.len()));
    }
    Ok(())
}

/// `L̂ = L_f^L · ∏ₗ σₗ`, the product upper bound on the network's Lipschitz
/// constant. Biases do not enter.
pub fn lipschitz_upper_bound(net: &Network, estimates: &[SpectralEstimate]) -> Result<f64> {
    if estimates.len() != net.depth() {
        return Err(Error::shape("spectral estimates", net.depth(), estimates.len()));
    }
    Ok(net.activation_lipschitz() * estimates.iter().map(|e| e.sigma).product::<f64>())
}
