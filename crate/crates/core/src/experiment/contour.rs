//! The two-scalar-weight network `x ↦ W² relu(W¹ x)`, where
//! `L̂ = |W¹|·|W²|`: contour values and the two feasible regions
//! `{|W¹| ≤ 1, |W²| ≤ 1}` (per-layer) and `{|W¹|·|W²| ≤ 1}` (product).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourNode {
    pub w1: f64,
    pub w2: f64,
    pub lhat: f64,
    pub in_square: bool,
    pub in_product: bool,
}

pub fn contour_node(w1: f64, w2: f64) -> ContourNode {
    let lhat = w1.abs() * w2.abs();
    ContourNode {
        w1,
        w2,
        lhat,
        in_square: w1.abs() <= 1.0 && w2.abs() <= 1.0,
        in_product: lhat <= 1.0,
    }
}

/// `resolution x resolution` evenly spaced nodes covering both ranges
/// (endpoints included), `w1` varying slowest.
pub fn contour_grid(w1_range: (f64, f64), w2_range: (f64, f64), resolution: usize) -> Result<Vec<ContourNode>> {
    if resolution < 2 {
        return Err(Error::Config(format!("contour resolution must be at least 2, got {resolution}")));
    }
    for (lo, hi) in [w1_range, w2_range] {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!("contour range must be finite with lo < hi, got ({lo}, {hi})")));
        }
    }
    let axis = |(lo, hi): (f64, f64)| -> Vec<f64> {
        let steps = (resolution - 1) as f64;
        (0..resolution).map(|i| lo + (hi - lo) * i as f64 / steps).collect()
    };
    let a1 = axis(w1_range);
    let a2 = axis(w2_range);
    Ok(a1
        .iter()
        .flat_map(|&w1| a2.iter().map(move |&w2| contour_node(w1, w2)))
        .collect())
}

pub fn contour_csv(nodes: &[ContourNode]) -> String {
    let mut out = String::from("W1,W2,lhat,in_square,in_product\n");
    for n in nodes {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            n.w1, n.w2, n.lhat, n.in_square as u8, n.in_product as u8
        );
    }
    out
}
