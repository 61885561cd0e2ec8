//! Exact spectral norm via cyclic Jacobi rotations on `WᵀW`.
//!
//! Slow (O(n³) per sweep) and only meant as a reference for checking the
//! power iteration.

use super::Matrix;
use crate::error::{Error, Result};

/// Largest dimension accepted by [`eigen_oracle`].
pub const ORACLE_MAX_DIM: usize = 64;

const MAX_SWEEPS: usize = 100;

/// Spectral norm `sqrt(λ_max(WᵀW))` computed by cyclic Jacobi.
pub fn eigen_oracle(w: &Matrix) -> Result<f64> {
    if w.rows() > ORACLE_MAX_DIM || w.cols() > ORACLE_MAX_DIM {
        return Err(Error::Scale {
            context: "eigen oracle",
            rows: w.rows(),
            cols: w.cols(),
            limit: ORACLE_MAX_DIM,
        });
    }
    if w.cols() == 0 || w.rows() == 0 {
        return Ok(0.0);
    }
    let eig = symmetric_eigenvalues(&w.gram())?;
    let top = eig.iter().cloned().fold(0.0_f64, f64::max);
    Ok(top.max(0.0).sqrt())
}

/// All eigenvalues of a symmetric matrix, sorted descending.
pub fn symmetric_eigenvalues(a: &Matrix) -> Result<Vec<f64>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::shape("symmetric eigenvalues", "square matrix", format!("{}x{}", n, a.cols())));
    }
    let mut m = a.clone();
    let scale: f64 = m.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale == 0.0 {
        return Ok(vec![0.0; n]);
    }

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut m, p, q);
            }
        }
    }

    let mut eig: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    Ok(eig)
}

/// Applies the Jacobi rotation that annihilates `m[p][q]`.
fn rotate(m: &mut Matrix, p: usize, q: usize) {
    let apq = m[(p, q)];
    if apq == 0.0 {
        return;
    }
    let app = m[(p, p)];
    let aqq = m[(q, q)];
    let theta = (aqq - app) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    let n = m.rows();
    for k in 0..n {
        let mkp = m[(k, p)];
        let mkq = m[(k, q)];
        m[(k, p)] = c * mkp - s * mkq;
        m[(k, q)] = s * mkp + c * mkq;
    }
    for k in 0..n {
        let mpk = m[(p, k)];
        let mqk = m[(q, k)];
        m[(p, k)] = c * mpk - s * mqk;
        m[(q, k)] = s * mpk + c * mqk;
    }
    m[(p, q)] = 0.0;
    m[(q, p)] = 0.0;
}
