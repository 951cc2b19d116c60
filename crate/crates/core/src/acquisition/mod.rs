//! Policy acquisition and the optimizers that maximize it.

mod direct;

pub use direct::{direct_maximize, DirectConfig, DirectResult};

use serde::{Deserialize, Serialize};

use crate::error::{AloqError, Result};
use crate::quadrature::{FbarModel, MarginalEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    /// Exploration weight on the standard deviation.
    pub kappa: f64,
    pub direct: DirectConfig,
}

impl AcquisitionConfig {
    pub const KAPPA_ARM: f64 = 1.5;
    pub const KAPPA_SYNTHETIC: f64 = 3.0;

    pub fn new(kappa: f64) -> Self {
        AcquisitionConfig { kappa, direct: DirectConfig::default() }
    }
}

/// Upper confidence bound on `fbar`: `mu + kappa * sigma`.
pub fn ucb(estimate: MarginalEstimate, kappa: f64) -> f64 {
    estimate.mean + kappa * estimate.std_dev()
}

pub fn alpha_aloq(pi: &[f64], model: &FbarModel<'_>, kappa: f64) -> Result<f64> {
    Ok(ucb(model.moments(pi)?, kappa))
}

/// Exact maximizer over a finite candidate list; ties go to the lowest index.
pub fn argmax_over_set<T, F>(candidates: &[T], mut objective: F) -> Result<(usize, f64)>
where
    F: FnMut(&T) -> Result<f64>,
{
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let v = objective(c)?;
        match best {
            Some((_, bv)) if v.partial_cmp(&bv) != Some(std::cmp::Ordering::Greater) => {}
            _ => best = Some((i, v)),
        }
    }
    best.ok_or_else(|| AloqError::Config("argmax over an empty candidate set".into()))
}
