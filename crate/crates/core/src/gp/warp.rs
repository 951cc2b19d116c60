//! Per-dimension Beta-CDF input warping of the unit box.

use serde::{Deserialize, Serialize};
use statrs::function::beta::checked_beta_reg;

use crate::error::{AloqError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpParams {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl WarpParams {
    pub fn identity(dim: usize) -> Self {
        WarpParams { alpha: vec![1.0; dim], beta: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_valid(&self) -> bool {
        self.alpha.len() == self.beta.len() && self.alpha.iter().chain(&self.beta).all(|v| *v > 0.0 && v.is_finite())
    }
}

/// Regularized incomplete beta function on `[0, 1]`, with the endpoints
/// pinned exactly.
pub fn beta_cdf(x: f64, alpha: f64, beta: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    if alpha == 1.0 && beta == 1.0 {
        return x;
    }
    checked_beta_reg(alpha, beta, x).unwrap_or(f64::NAN)
}

/// Warps a unit-box vector coordinate by coordinate.
pub fn beta_warp(x: &[f64], warp: &WarpParams) -> Result<Vec<f64>> {
    if x.len() != warp.dim() || warp.beta.len() != warp.dim() {
        return Err(AloqError::Domain(format!("warp has {} dimensions, input has {}", warp.dim(), x.len())));
    }
    if !warp.is_valid() {
        return Err(AloqError::Domain("warp parameters must be positive".into()));
    }
    x.iter()
        .zip(warp.alpha.iter().zip(&warp.beta))
        .map(|(&xd, (&a, &b))| {
            if !xd.is_finite() || !(0.0..=1.0).contains(&xd) {
                Err(AloqError::Domain(format!("coordinate {xd} is outside [0, 1]")))
            } else {
                Ok(beta_cdf(xd, a, b))
            }
        })
        .collect()
}
