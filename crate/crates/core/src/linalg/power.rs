use rand::Rng;

use super::{Matrix, Vector};
use crate::error::{Error, Result};

/// Stopping rule for [`power_iteration`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PowerIteration {
    /// Relative change in sigma below which the iteration stops.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerIteration {
    fn default() -> Self {
        PowerIteration {
            tol: 1e-12,
            // Nearly tied top singular values need thousands of steps from a
            // cold start.
            max_iter: 100_000,
        }
    }
}

/// Top singular triple of a matrix as found by power iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEstimate {
    /// Estimated operator norm.
    pub sigma: f64,
    /// Left singular direction, unit norm.
    pub u: Vector,
    /// Right singular direction, unit norm. Feed this back as the warm start
    /// on the next call.
    pub v: Vector,
    pub iterations: usize,
    pub converged: bool,
}

impl SpectralEstimate {
    /// Estimate for an all-zero matrix: sigma 0 with canonical basis
    /// directions.
    fn degenerate(rows: usize, cols: usize) -> Self {
        let basis = |n: usize| if n == 0 { Vector::zeros(0) } else { Vector::basis(n, 0) };
        SpectralEstimate {
            sigma: 0.0,
            u: basis(rows),
            v: basis(cols),
            iterations: 0,
            converged: true,
        }
    }
}

/// Alternating power iteration `v ← normalize(Wᵀu)`, `u ← normalize(Wv)`.
///
/// Stops when `|σₖ − σₖ₋₁| < tol·max(1, σₖ)` or after `max_iter` steps.
/// When `warm_start` is given it is used as the initial right direction,
/// otherwise a random unit vector is drawn from `rng`. An all-zero matrix
/// yields `sigma = 0` and basis vectors for `u` and `v`.
///
/// If the top singular value is repeated the returned pair is some vector in
/// the dominant subspace; sigma is still correct.
pub fn power_iteration<R: Rng + ?Sized>(
    w: &Matrix,
    cfg: &PowerIteration,
    warm_start: Option<&Vector>,
    rng: &mut R,
) -> Result<SpectralEstimate> {
    if !(cfg.tol > 0.0) || cfg.max_iter == 0 {
        return Err(Error::Config(format!(
            "power iteration needs tol > 0 and max_iter >= 1, got tol={} max_iter={}",
            cfg.tol, cfg.max_iter
        )));
    }
    if w.is_zero() || w.rows() == 0 || w.cols() == 0 {
        return Ok(SpectralEstimate::degenerate(w.rows(), w.cols()));
    }

    let mut v = match warm_start {
        Some(v0) if v0.dim() != w.cols() => {
            return Err(Error::shape("power iteration warm start", w.cols(), v0.dim()))
        }
        Some(v0) if v0.norm() > 0.0 => {
            let mut v = v0.clone();
            v.normalize();
            v
        }
        _ => random_unit(w.cols(), rng),
    };

    let mut prev: Option<f64> = None;
    let mut u = Vector::zeros(w.rows());
    let mut sigma = 0.0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        iterations += 1;
        let mut z = Vector(w.matvec_slice(v.as_slice()));
        sigma = z.normalize();
        if sigma == 0.0 {
            // v landed in the null space; restart from a fresh direction.
            v = random_unit(w.cols(), rng);
            prev = None;
            continue;
        }
        u = z;
        if let Some(p) = prev {
            if (sigma - p).abs() < cfg.tol * sigma.max(1.0) {
                converged = true;
                break;
            }
        }
        prev = Some(sigma);
        let mut next = Vector(w.matvec_transpose_slice(u.as_slice()));
        next.normalize();
        v = next;
    }

    if sigma == 0.0 {
        // Only reachable when every restart hit the null space.
        return Ok(SpectralEstimate {
            iterations,
            ..SpectralEstimate::degenerate(w.rows(), w.cols())
        });
    }

    Ok(SpectralEstimate {
        sigma,
        u,
        v,
        iterations,
        converged,
    })
}

fn random_unit<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vector {
    loop {
        let mut v = Vector((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect());
        if v.normalize() > 1e-8 {
            return v;
        }
    }
}
