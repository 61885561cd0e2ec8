//! ADAM and the minibatch training loop.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, PowerIteration, SpectralEstimate};
use crate::network::{mae_metric, mse_loss, Gradients, Network};
use crate::regularization::{maxnorm_project, penalty_gradient, penalty_value, RegularizationMode, SpectralTracker};
use crate::{seeded_rng, RngStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub mode: RegularizationMode,
    pub seed: u64,
    pub shuffle: bool,
    pub power_iteration: PowerIteration,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 50,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            mode: RegularizationMode::NoReg,
            seed: 0,
            shuffle: true,
            power_iteration: PowerIteration::default(),
        }
    }
}

impl TrainConfig {
    /// Checks the ranges of every field; `train_len` is the number of
    /// training samples the config will be used with.
    pub fn validate(&self, train_len: usize) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.batch_size == 0 || self.batch_size > train_len {
            return fail(format!(
                "batch size must be in 1..={train_len} (training samples), got {}",
                self.batch_size
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning rate must be finite and non-negative, got {}", self.learning_rate));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return fail(format!("{name} must lie in [0, 1), got {beta}"));
            }
        }
        if !(self.epsilon > 0.0) {
            return fail(format!("epsilon must be positive, got {}", self.epsilon));
        }
        self.mode.validate()
    }
}

/// First and second moment accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Gradients,
    pub v: Gradients,
    pub t: u64,
}

impl AdamState {
    pub fn new(net: &Network) -> Self {
        AdamState {
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
            t: 0,
        }
    }
}

/// One bias-corrected ADAM update of every weight and bias.
///
/// The gradient is checked for NaN/infinite entries before anything is
/// modified; on failure neither the network nor the state changes.
pub fn adam_step(net: &mut Network, grads: &Gradients, state: &mut AdamState, cfg: &TrainConfig) -> Result<()> {
    if !grads.is_congruent(net) || !state.m.is_congruent(net) || !state.v.is_congruent(net) {
        return Err(Error::shape("adam step", format!("widths {:?}", net.widths()), "incongruent gradient"));
    }
    for (layer, (w, b)) in grads.weights.iter().zip(&grads.biases).enumerate() {
        for (param, values) in [("W", w.as_slice()), ("b", b.as_slice())] {
            if let Some(index) = values.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFiniteGradient {
                    layer,
                    param,
                    index,
                    value: values[index],
                });
            }
        }
    }

    state.t += 1;
    let t = state.t as i32;
    let correction1 = 1.0 - cfg.beta1.powi(t);
    let correction2 = 1.0 - cfg.beta2.powi(t);
    let update = |theta: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        for (((p, &gi), mi), vi) in theta.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = *mi / correction1;
            let v_hat = *vi / correction2;
            *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    };
    for (l, layer) in net.layers_mut().iter_mut().enumerate() {
        update(
            layer.weights.as_mut_slice(),
            grads.weights[l].as_slice(),
            state.m.weights[l].as_mut_slice(),
            state.v.weights[l].as_mut_slice(),
        );
        update(
            layer.bias.as_mut_slice(),
            grads.biases[l].as_slice(),
            state.m.biases[l].as_mut_slice(),
            state.v.biases[l].as_mut_slice(),
        );
    }
    Ok(())
}

/// Regression samples fed to the network: one row of `inputs` per target.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub inputs: Matrix,
    pub targets: Vec<f64>,
}

impl Samples {
    pub fn new(inputs: Matrix, targets: Vec<f64>) -> Result<Self> {
        if inputs.rows() != targets.len() {
            return Err(Error::shape("samples", inputs.rows(), targets.len()));
        }
        Ok(Samples { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    fn check(&self, net: &Network) -> Result<()> {
        if self.inputs.cols() != net.input_dim() {
            return Err(Error::shape("sample features", net.input_dim(), self.inputs.cols()));
        }
        if net.output_dim() != 1 {
            return Err(Error::shape("network output", 1, net.output_dim()));
        }
        Ok(())
    }
}

/// Squared-error loss and absolute error over a sample set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub loss: f64,
    pub mae: f64,
}

/// Evaluates `net` on every sample with the current parameters.
pub fn evaluate(net: &Network, samples: &Samples) -> Result<Metrics> {
    samples.check(net)?;
    let pred = predictions(net, &samples.inputs)?;
    Ok(Metrics {
        loss: mse_loss(&pred, &samples.targets)?,
        mae: mae_metric(&pred, &samples.targets)?,
    })
}

/// Network output for every row of `inputs` (single-output networks).
pub fn predictions(net: &Network, inputs: &Matrix) -> Result<Vec<f64>> {
    (0..inputs.rows())
        .map(|r| net.predict(inputs.row(r)).map(|y| y[0]))
        .collect()
}

/// Running averages over one epoch, weighted by batch size and measured on
/// each batch before its update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// Mean squared error of the data term.
    pub loss: f64,
    pub mae: f64,
    /// `(1/λ)·loss + penalty` for spectral modes, the plain loss otherwise.
    pub objective: f64,
}

/// Owns the optimizer state, the warm-started spectral estimates and the
/// shuffling RNG for one training run.
#[derive(Debug, Clone)]
pub struct Trainer {
    cfg: TrainConfig,
    state: AdamState,
    tracker: SpectralTracker,
    rng: ChaCha8Rng,
    order: Vec<usize>,
}

impl Trainer {
    pub fn new(net: &Network, cfg: TrainConfig) -> Self {
        let tracker = SpectralTracker::new(cfg.power_iteration);
        let rng = seeded_rng(cfg.seed, RngStream::Training);
        Trainer {
            state: AdamState::new(net),
            tracker,
            rng,
            order: Vec::new(),
            cfg,
        }
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn state(&self) -> &AdamState {
        &self.state
    }

    /// Fresh per-layer spectral estimates of `net`, warm-started from the
    /// last ones the trainer computed.
    pub fn spectral_estimates(&mut self, net: &Network) -> Result<Vec<SpectralEstimate>> {
        self.tracker.refresh(net, &mut self.rng)
    }

    /// One pass over `data` in minibatches.
    ///
    /// Per batch the gradient is the batch-mean data gradient, weighted by
    /// `1/λ` and summed with the penalty gradient for the spectral modes.
    /// MaxNorm projects after every update. The last batch may be short.
    pub fn train_epoch(&mut self, net: &mut Network, data: &Samples) -> Result<EpochMetrics> {
        if data.is_empty() {
            return Err(Error::Config("training set is empty".into()));
        }
        data.check(net)?;
        self.cfg.validate(data.len())?;

        if self.order.len() != data.len() {
            self.order = (0..data.len()).collect();
        }
        if self.cfg.shuffle {
            self.order.shuffle(&mut self.rng);
        }

        let mode = self.cfg.mode;
        let mut total = EpochMetrics {
            loss: 0.0,
            mae: 0.0,
            objective: 0.0,
        };
        let order = std::mem::take(&mut self.order);
        for batch in order.chunks(self.cfg.batch_size) {
            let mut grads = Gradients::zeros_like(net);
            let mut sq = 0.0;
            let mut abs = 0.0;
            for &i in batch {
                let x = crate::linalg::Vector::new(data.inputs.row(i).to_vec())?;
                let target = crate::linalg::Vector::new(vec![data.targets[i]])?;
                let trace = net.forward(&x)?;
                let err = trace.output()[0] - data.targets[i];
                sq += err * err;
                abs += err.abs();
                grads.add_scaled(&net.backward(&trace, &target)?, 1.0);
            }
            let n = batch.len() as f64;
            grads.scale(1.0 / n);
            let batch_loss = sq / n;

            let objective = if mode.is_spectral() {
                let estimates = self.tracker.refresh(net, &mut self.rng)?;
                grads.scale(mode.data_weight());
                grads.add_scaled(&penalty_gradient(&mode, net, &estimates)?, 1.0);
                mode.data_weight() * batch_loss + penalty_value(&mode, &estimates)
            } else {
                batch_loss
            };

            adam_step(net, &grads, &mut self.state, &self.cfg)?;
            if let RegularizationMode::MaxNorm { cap } = mode {
                maxnorm_project(net, cap);
            }

            total.loss += sq;
            total.mae += abs;
            total.objective += objective * n;
        }
        self.order = order;

        let n = data.len() as f64;
        Ok(EpochMetrics {
            loss: total.loss / n,
            mae: total.mae / n,
            objective: total.objective / n,
        })
    }
}
