use serde::{Deserialize, Serialize};

/// Squared-exponential kernel hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelHyper {
    /// Signal variance `w0`.
    pub signal_var: f64,
    pub lengthscales: Vec<f64>,
    pub noise_var: f64,
}

impl KernelHyper {
    pub fn new(signal_var: f64, lengthscales: Vec<f64>, noise_var: f64) -> Self {
        KernelHyper { signal_var, lengthscales, noise_var }
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn is_valid(&self) -> bool {
        self.signal_var > 0.0
            && self.signal_var.is_finite()
            && self.noise_var >= 0.0
            && self.noise_var.is_finite()
            && self.lengthscales.iter().all(|l| *l > 0.0 && l.is_finite())
    }
}

/// `w0 * exp(-0.5 * sum_d (a_d - b_d)^2 / w_d^2)` on already-warped inputs.
///
/// Panics when the dimensions disagree.
pub fn se_kernel(a: &[f64], b: &[f64], hyper: &KernelHyper) -> f64 {
    assert_eq!(a.len(), b.len(), "kernel inputs differ in dimension");
    assert_eq!(a.len(), hyper.dim(), "kernel input does not match lengthscales");
    hyper.signal_var * (-0.5 * scaled_sq_dist(a, b, &hyper.lengthscales)).exp()
}

#[inline]
pub(crate) fn scaled_sq_dist(a: &[f64], b: &[f64], lengthscales: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(lengthscales)
        .map(|((x, y), l)| {
            let d = (x - y) / l;
            d * d
        })
        .sum()
}
