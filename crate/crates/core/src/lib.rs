//! Feed-forward ReLU regression networks trained with no regularization,
//! per-layer spectral-norm penalties, the cross-layer Lipschitz product
//! penalty `∏ₗ‖Wˡ‖`, or a MaxNorm constraint, and evaluated against bounded
//! uniform input noise.
//!
//! The pieces, bottom up:
//!
//! - [`linalg`]: dense matrices, power iteration for `‖W‖₂`, and a Jacobi
//!   eigenvalue oracle.
//! - [`network`]: forward pass, backpropagation, the bound `L̂ = ∏ₗ‖Wˡ‖`,
//!   model files.
//! - [`regularization`]: penalty values and gradients for each mode, MaxNorm
//!   projection.
//! - [`optimizer`]: ADAM and the minibatch epoch loop.
//! - [`data`]: CSV loading, splitting, standardization, the noise model.
//! - [`experiment`]: paired multi-mode runs, λ grid search, report tables and
//!   the two-weight contour grid.

pub mod data;
pub mod error;
pub mod experiment;
pub mod fsutil;
pub mod linalg;
pub mod network;
pub mod optimizer;
pub mod regularization;

pub use error::{Error, Result};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random streams derived from one user seed, so that changing
/// e.g. the number of noise draws never perturbs weight initialisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RngStream {
    Init = 1,
    Training = 2,
    Noise = 3,
    Split = 4,
}

pub fn seeded_rng(seed: u64, stream: RngStream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
