#![allow(dead_code)]

use lipreg::linalg::{power_iteration, Matrix, PowerIteration, SpectralEstimate};
use lipreg::network::Network;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

pub fn boston_path() -> &'static str {
    concat!(env!("CARGO_MANIFEST_DIR"), "/data/boston.csv")
}

/// Cold-start power iteration on every layer of `net`.
pub fn estimates(net: &Network, cfg: &PowerIteration) -> Vec<SpectralEstimate> {
    let mut r = rng(17);
    net.layers()
        .iter()
        .map(|l| power_iteration(&l.weights, cfg, None, &mut r).unwrap())
        .collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
