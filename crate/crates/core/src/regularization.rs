//! Penalties on the weight matrices and the MaxNorm projection.
//!
//! The regularized objective is `(1/λ)·loss + penalty`. Two penalties are
//! spectral:
//!
//! - `LayerSum`: `Σₗ ‖Wˡ‖`, each layer penalised on its own.
//! - `LipschitzProduct`: `∏ₗ ‖Wˡ‖`, the network Lipschitz bound. Its gradient
//!   with respect to `Wˡ` is `(∏_{k≠l} ‖Wᵏ‖)·uₗvₗᵀ`, so every layer's update
//!   is scaled by the norms of all the other layers.
//!
//! `uₗvₗᵀ` is the gradient of `‖Wˡ‖` wherever the top singular value is
//! simple, and a subgradient otherwise.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{power_iteration, Matrix, PowerIteration, SpectralEstimate, Vector};
use crate::network::{Gradients, Network};

pub const DEFAULT_MAX_NORM_CAP: f64 = 10.0;

/// Training formulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegularizationMode {
    NoReg,
    /// `(1/λ)·loss + Σₗ‖Wˡ‖`.
    LayerSum { lambda: f64 },
    /// `(1/λ)·loss + ∏ₗ‖Wˡ‖`.
    LipschitzProduct { lambda: f64 },
    /// Plain loss; each neuron's incoming weight row is projected back onto
    /// `‖row‖₂ ≤ cap` after every update.
    MaxNorm { cap: f64 },
}

impl RegularizationMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RegularizationMode::LayerSum { lambda } | RegularizationMode::LipschitzProduct { lambda }
                if !(lambda.is_finite() && lambda > 0.0) =>
            {
                Err(Error::Config(format!("lambda must be finite and positive, got {lambda}")))
            }
            RegularizationMode::MaxNorm { cap } if !(cap.is_finite() && cap > 0.0) => {
                Err(Error::Config(format!("max-norm cap must be finite and positive, got {cap}")))
            }
            _ => Ok(()),
        }
    }

    /// Short identifier used in file names and CSV columns.
    pub fn name(&self) -> &'static str {
        match self {
            RegularizationMode::NoReg => "no_reg",
            RegularizationMode::LayerSum { .. } => "layer_reg",
            RegularizationMode::LipschitzProduct { .. } => "lipschitz_reg",
            RegularizationMode::MaxNorm { .. } => "maxnorm",
        }
    }

    /// Column heading for report tables.
    pub fn label(&self) -> &'static str {
        match self {
            RegularizationMode::NoReg => "no reg",
            RegularizationMode::LayerSum { .. } => "Layer reg",
            RegularizationMode::LipschitzProduct { .. } => "Lipschitz reg",
            RegularizationMode::MaxNorm { .. } => "Max Norm",
        }
    }

    pub fn lambda(&self) -> Option<f64> {
        match *self {
            RegularizationMode::LayerSum { lambda } | RegularizationMode::LipschitzProduct { lambda } => {
                Some(lambda)
            }
            _ => None,
        }
    }

    /// Same kind with a different λ; modes without λ are returned unchanged.
    pub fn with_lambda(self, lambda: f64) -> Self {
        match self {
            RegularizationMode::LayerSum { .. } => RegularizationMode::LayerSum { lambda },
            RegularizationMode::LipschitzProduct { .. } => RegularizationMode::LipschitzProduct { lambda },
            other => other,
        }
    }

    /// Whether the mode needs fresh spectral estimates every step.
    pub fn is_spectral(&self) -> bool {
        self.lambda().is_some()
    }

    /// Weight on the data term, `1/λ` for the spectral penalties and 1
    /// otherwise.
    pub fn data_weight(&self) -> f64 {
        self.lambda().map_or(1.0, |l| 1.0 / l)
    }
}

/// Penalty term of the objective. Zero for `NoReg` and `MaxNorm`.
pub fn penalty_value(mode: &RegularizationMode, estimates: &[SpectralEstimate]) -> f64 {
    match mode {
        RegularizationMode::LayerSum { .. } => estimates.iter().map(|e| e.sigma).sum(),
        RegularizationMode::LipschitzProduct { .. } => estimates.iter().map(|e| e.sigma).product(),
        RegularizationMode::NoReg | RegularizationMode::MaxNorm { .. } => 0.0,
    }
}

/// Gradient of [`penalty_value`] with respect to every parameter. Bias
/// gradients are always zero.
pub fn penalty_gradient(
    mode: &RegularizationMode,
    net: &Network,
    estimates: &[SpectralEstimate],
) -> Result<Gradients> {
    let mut grads = Gradients::zeros_like(net);
    if !mode.is_spectral() {
        return Ok(grads);
    }
    if estimates.len() != net.depth() {
        return Err(Error::shape("spectral estimates", net.depth(), estimates.len()));
    }
    for (l, (est, layer)) in estimates.iter().zip(net.layers()).enumerate() {
        if est.u.dim() != layer.weights.rows() || est.v.dim() != layer.weights.cols() {
            return Err(Error::shape(
                "spectral estimate directions",
                format!("{:?}", layer.weights.shape()),
                format!("({}, {})", est.u.dim(), est.v.dim()),
            ));
        }
        let factor = match mode {
            RegularizationMode::LipschitzProduct { .. } => estimates
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != l)
                .map(|(_, e)| e.sigma)
                .product(),
            _ => 1.0,
        };
        grads.weights[l] = Matrix::outer(&est.u, &est.v, factor);
    }
    Ok(grads)
}

/// Scales every weight row whose Euclidean norm exceeds `cap` back onto the
/// sphere of radius `cap`. Rows already within the cap are not touched.
/// Returns the number of rows that were rescaled.
pub fn maxnorm_project(net: &mut Network, cap: f64) -> usize {
    assert!(cap > 0.0, "max-norm cap must be positive");
    let mut clipped = 0;
    for layer in net.layers_mut() {
        for r in 0..layer.weights.rows() {
            let row = layer.weights.row_mut(r);
            let norm = crate::linalg::norm(row);
            if norm <= cap {
                continue;
            }
            clipped += 1;
            let original: Vec<f64> = row.to_vec();
            let mut factor = cap / norm;
            loop {
                for (x, o) in row.iter_mut().zip(&original) {
                    *x = o * factor;
                }
                // Rounding can leave the norm one ulp above the cap.
                if crate::linalg::norm(row) <= cap {
                    break;
                }
                factor *= 1.0 - f64::EPSILON;
            }
        }
    }
    clipped
}

/// Per-layer spectral estimates kept across optimizer steps so each refresh
/// warm-starts from the previous right singular vectors.
#[derive(Debug, Clone)]
pub struct SpectralTracker {
    settings: PowerIteration,
    warm: Vec<Option<Vector>>,
}

impl SpectralTracker {
    pub fn new(settings: PowerIteration) -> Self {
        SpectralTracker {
            settings,
            warm: Vec::new(),
        }
    }

    pub fn settings(&self) -> &PowerIteration {
        &self.settings
    }

    /// Estimates `‖Wˡ‖` for every layer of `net`.
    pub fn refresh<R: Rng + ?Sized>(&mut self, net: &Network, rng: &mut R) -> Result<Vec<SpectralEstimate>> {
        self.warm.resize(net.depth(), None);
        net.layers()
            .iter()
            .zip(self.warm.iter_mut())
            .map(|(layer, warm)| {
                let start = warm.as_ref().filter(|v| v.dim() == layer.weights.cols());
                let est = power_iteration(&layer.weights, &self.settings, start, rng)?;
                *warm = Some(est.v.clone());
                Ok(est)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Activation, Layer};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_net(w1: f64, w2: f64) -> Network {
        let layer = |w: f64, act| {
            Layer::new(Matrix::new(1, 1, vec![w]).unwrap(), Vector::zeros(1), act).unwrap()
        };
        Network::new(1, vec![layer(w1, Activation::Relu), layer(w2, Activation::Linear)]).unwrap()
    }

    fn estimates(net: &Network) -> Vec<SpectralEstimate> {
        SpectralTracker::new(PowerIteration::default())
            .refresh(net, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap()
    }

    fn est(sigma: f64) -> SpectralEstimate {
        SpectralEstimate {
            sigma,
            u: Vector::basis(1, 0),
            v: Vector::basis(1, 0),
            iterations: 1,
            converged: true,
        }
    }

    const LIP: RegularizationMode = RegularizationMode::LipschitzProduct { lambda: 1.0 };
    const SUM: RegularizationMode = RegularizationMode::LayerSum { lambda: 1.0 };

    #[test]
    fn scalar_product_gradient_couples_layers() {
        let net = scalar_net(2.0, 0.5);
        let e = estimates(&net);
        let g = penalty_gradient(&LIP, &net, &e).unwrap();
        assert!((g.weights[0][(0, 0)] - 0.5).abs() < 1e-12);
        assert!((g.weights[1][(0, 0)] - 2.0).abs() < 1e-12);
        let g = penalty_gradient(&SUM, &net, &e).unwrap();
        assert!((g.weights[0][(0, 0)] - 1.0).abs() < 1e-12);
        assert!((g.weights[1][(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negative_scalar_weight_gives_sign_subgradient() {
        let net = scalar_net(-2.0, 0.5);
        let g = penalty_gradient(&SUM, &net, &estimates(&net)).unwrap();
        assert!((g.weights[0][(0, 0)] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn penalty_values() {
        let table = [est(2.508), est(1.625), est(3.315)];
        assert!((penalty_value(&LIP, &table) - 13.51).abs() < 0.005);
        let ones = [est(1.0), est(1.0), est(1.0)];
        assert_eq!(penalty_value(&SUM, &ones), 3.0);
        assert_eq!(penalty_value(&LIP, &ones), 1.0);
        assert_eq!(penalty_value(&RegularizationMode::NoReg, &table), 0.0);
        assert_eq!(penalty_value(&RegularizationMode::MaxNorm { cap: 10.0 }, &table), 0.0);
    }

    #[test]
    fn non_spectral_modes_have_zero_gradient() {
        let net = Network::init(&[3, 4, 1], &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let e = estimates(&net);
        for mode in [RegularizationMode::NoReg, RegularizationMode::MaxNorm { cap: 10.0 }] {
            assert!(penalty_gradient(&mode, &net, &e).unwrap().is_zero());
            assert!(penalty_gradient(&mode, &net, &[]).unwrap().is_zero());
        }
    }

    #[test]
    fn zero_layer_zeroes_other_product_gradients() {
        let net = scalar_net(0.0, 3.0);
        let g = penalty_gradient(&LIP, &net, &estimates(&net)).unwrap();
        assert_eq!(g.weights[1][(0, 0)], 0.0);
        assert!((g.weights[0][(0, 0)].abs() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn penalty_gradient_never_touches_biases() {
        let net = Network::init(&[4, 5, 5, 1], &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let g = penalty_gradient(&LIP, &net, &estimates(&net)).unwrap();
        assert!(g.biases.iter().all(|b| b.iter().all(|&x| x == 0.0)));
        assert!(g.is_congruent(&net));
    }

    #[test]
    fn maxnorm_scales_long_rows() {
        let w = Matrix::from_rows(&[[12.0, 16.0], [3.0, 4.0]]).unwrap();
        let mut net = Network::new(2, vec![Layer::new(w, Vector::zeros(2), Activation::Linear).unwrap()]).unwrap();
        assert_eq!(maxnorm_project(&mut net, 10.0), 1);
        let w = &net.layers()[0].weights;
        assert_eq!(w.row(0), &[6.0, 8.0]);
        assert_eq!(w.row(1), &[3.0, 4.0]);
    }

    #[test]
    fn maxnorm_within_cap_is_identity() {
        let mut net = Network::init(&[5, 6, 1], &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let before = net.clone();
        assert_eq!(maxnorm_project(&mut net, 10.0), 0);
        assert_eq!(net, before);
    }

    #[test]
    fn mode_validation() {
        assert!(RegularizationMode::LayerSum { lambda: 0.0 }.validate().is_err());
        assert!(RegularizationMode::LipschitzProduct { lambda: f64::NAN }.validate().is_err());
        assert!(RegularizationMode::MaxNorm { cap: -1.0 }.validate().is_err());
        assert!(LIP.validate().is_ok());
        assert_eq!(LIP.with_lambda(5.0).lambda(), Some(5.0));
        assert_eq!(RegularizationMode::NoReg.with_lambda(5.0), RegularizationMode::NoReg);
        assert_eq!(SUM.data_weight(), 1.0);
        assert_eq!(RegularizationMode::LayerSum { lambda: 4.0 }.data_weight(), 0.25);
    }

    #[test]
    fn mode_json_is_tagged() {
        let json = serde_json::to_string(&LIP).unwrap();
        assert_eq!(json, r#"{"kind":"lipschitz_product","lambda":1.0}"#);
        let back: RegularizationMode = serde_json::from_str(r#"{"kind":"max_norm","cap":10.0}"#).unwrap();
        assert_eq!(back, RegularizationMode::MaxNorm { cap: 10.0 });
    }
}
