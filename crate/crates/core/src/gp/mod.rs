//! Gaussian-process regression over the joint (policy, environment) unit box.
//!
//! Inputs are warped per coordinate by a Beta CDF, then compared with a
//! squared-exponential kernel. Hyperparameters are not point-estimated: a
//! [`GpPosterior`] holds one factorization per hyperposterior sample and
//! combines their predictions as an equally weighted Gaussian mixture.

mod hyper;
mod kernel;
mod warp;

pub use hyper::{
    log_hyperposterior, log_marginal_likelihood, marginalize_hypers, HyperChain, HyperPriors, HyperSample, HyperSpace,
    LogNormalPrior, NoiseModel,
};
pub use kernel::{se_kernel, KernelHyper};
pub use warp::{beta_cdf, beta_warp, WarpParams};

use serde::{Deserialize, Serialize};

use crate::error::{AloqError, Result};
use crate::linalg::{dot, Cholesky, SymMatrix};

/// A point of the joint input space, both halves already mapped to the unit box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputPoint {
    pub policy: Vec<f64>,
    pub env: Vec<f64>,
}

impl InputPoint {
    pub fn new(policy: Vec<f64>, env: Vec<f64>) -> Self {
        InputPoint { policy, env }
    }

    pub fn dim(&self) -> usize {
        self.policy.len() + self.env.len()
    }

    pub fn joint(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.policy);
        v.extend_from_slice(&self.env);
        v
    }

    fn check_box(&self) -> Result<()> {
        for &x in self.policy.iter().chain(&self.env) {
            if !x.is_finite() || !(0.0..=1.0).contains(&x) {
                return Err(AloqError::Domain(format!("input coordinate {x} is outside the unit box")));
            }
        }
        Ok(())
    }
}

/// Append-only evidence `(policy, env, return)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    d_policy: usize,
    d_env: usize,
    inputs: Vec<InputPoint>,
    returns: Vec<f64>,
}

impl Dataset {
    pub fn new(d_policy: usize, d_env: usize) -> Self {
        Dataset { d_policy, d_env, inputs: Vec::new(), returns: Vec::new() }
    }

    pub fn push(&mut self, point: InputPoint, value: f64) -> Result<()> {
        if point.policy.len() != self.d_policy || point.env.len() != self.d_env {
            return Err(AloqError::Domain(format!(
                "point has dims ({}, {}), dataset expects ({}, {})",
                point.policy.len(),
                point.env.len(),
                self.d_policy,
                self.d_env
            )));
        }
        point.check_box()?;
        if !value.is_finite() {
            return Err(AloqError::Domain(format!("non-finite return {value}")));
        }
        self.inputs.push(point);
        self.returns.push(value);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn d_policy(&self) -> usize {
        self.d_policy
    }

    pub fn d_env(&self) -> usize {
        self.d_env
    }

    pub fn dim(&self) -> usize {
        self.d_policy + self.d_env
    }

    pub fn inputs(&self) -> &[InputPoint] {
        &self.inputs
    }

    pub fn returns(&self) -> &[f64] {
        &self.returns
    }

    /// Copy of the dataset with every return mapped through `f`.
    pub fn map_returns(&self, f: impl Fn(f64) -> f64) -> Dataset {
        Dataset {
            d_policy: self.d_policy,
            d_env: self.d_env,
            inputs: self.inputs.clone(),
            returns: self.returns.iter().map(|&y| f(y)).collect(),
        }
    }
}

/// GP conditioned on a dataset under one hyperparameter sample.
#[derive(Debug, Clone)]
pub struct GpFit {
    pub(crate) hyper: HyperSample,
    pub(crate) d_policy: usize,
    /// Warped joint training inputs, one row per datum.
    pub(crate) warped: Vec<Vec<f64>>,
    pub(crate) chol: Cholesky,
    /// `(K + noise I)^-1 y`
    pub(crate) weights: Vec<f64>,
}

impl GpFit {
    pub fn new(data: &Dataset, hyper: &HyperSample) -> Result<Self> {
        let dim = data.dim();
        if hyper.kernel.dim() != dim {
            return Err(AloqError::Domain(format!(
                "hyperparameters cover {} dims, data has {dim}",
                hyper.kernel.dim()
            )));
        }
        if !hyper.kernel.is_valid() {
            return Err(AloqError::Domain("kernel hyperparameters must be positive".into()));
        }
        let warped = data.inputs().iter().map(|p| hyper.warp_point(&p.joint())).collect::<Result<Vec<_>>>()?;
        let n = warped.len();
        let mut k = SymMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                k.set(i, j, se_kernel(&warped[i], &warped[j], &hyper.kernel));
            }
        }
        k.add_diagonal(hyper.kernel.noise_var);
        let chol = Cholesky::factor(&k)?;
        let weights = chol.solve(data.returns());
        Ok(GpFit { hyper: hyper.clone(), d_policy: data.d_policy(), warped, chol, weights })
    }

    pub fn hyper(&self) -> &HyperSample {
        &self.hyper
    }

    pub fn n_train(&self) -> usize {
        self.warped.len()
    }

    pub(crate) fn warp_query(&self, q: &InputPoint) -> Result<Vec<f64>> {
        q.check_box()?;
        if q.dim() != self.hyper.kernel.dim() {
            return Err(AloqError::Domain(format!(
                "query has {} dims, model has {}",
                q.dim(),
                self.hyper.kernel.dim()
            )));
        }
        self.hyper.warp_point(&q.joint())
    }

    /// Latent-function mean and covariance at `queries`.
    pub fn predict(&self, queries: &[InputPoint]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let wq = queries.iter().map(|q| self.warp_query(q)).collect::<Result<Vec<_>>>()?;
        let m = wq.len();
        let n = self.n_train();
        let kern = &self.hyper.kernel;
        // columns of L^-1 k(X, q_j), stored back to back
        let mut v = vec![0.0; n * m];
        let mut mean = vec![0.0; m];
        for (j, q) in wq.iter().enumerate() {
            let col = &mut v[j * n..(j + 1) * n];
            for (i, x) in self.warped.iter().enumerate() {
                col[i] = se_kernel(x, q, kern);
            }
            mean[j] = dot(col, &self.weights);
        }
        self.chol.solve_lower_columns(&mut v);
        let mut cov = vec![vec![0.0; m]; m];
        for a in 0..m {
            for b in 0..=a {
                let prior = se_kernel(&wq[a], &wq[b], kern);
                let c = prior - dot(&v[a * n..(a + 1) * n], &v[b * n..(b + 1) * n]);
                cov[a][b] = c;
                cov[b][a] = c;
            }
        }
        Ok((mean, cov))
    }
}

/// Fully-Bayesian GP: one [`GpFit`] per retained hyperposterior sample.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    fits: Vec<GpFit>,
}

impl GpPosterior {
    pub fn fit(data: &Dataset, hypers: &[HyperSample]) -> Result<Self> {
        if hypers.is_empty() {
            return Err(AloqError::Config("at least one hyperparameter sample is required".into()));
        }
        let fits = hypers.iter().map(|h| GpFit::new(data, h)).collect::<Result<Vec<_>>>()?;
        Ok(GpPosterior { fits })
    }

    pub fn fits(&self) -> &[GpFit] {
        &self.fits
    }

    pub fn hypers(&self) -> impl Iterator<Item = &HyperSample> {
        self.fits.iter().map(|f| &f.hyper)
    }

    /// Mixture mean and covariance over the hyperparameter samples:
    /// `mean = avg(m_s)`, `cov = avg(C_s + m_s m_s^T) - mean mean^T`.
    pub fn predict(&self, queries: &[InputPoint]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        if self.fits.len() == 1 {
            return self.fits[0].predict(queries);
        }
        let m = queries.len();
        let s = self.fits.len() as f64;
        let mut mean = vec![0.0; m];
        let mut second = vec![vec![0.0; m]; m];
        for fit in &self.fits {
            let (mu, cov) = fit.predict(queries)?;
            for a in 0..m {
                mean[a] += mu[a] / s;
                for b in 0..m {
                    second[a][b] += (cov[a][b] + mu[a] * mu[b]) / s;
                }
            }
        }
        for a in 0..m {
            for b in 0..m {
                second[a][b] -= mean[a] * mean[b];
            }
        }
        Ok((mean, second))
    }

    /// Mixture mean and marginal variance at each query.
    pub fn predict_marginal(&self, queries: &[InputPoint]) -> Result<(Vec<f64>, Vec<f64>)> {
        let (mean, cov) = self.predict(queries)?;
        let var = (0..queries.len()).map(|i| cov[i][i].max(0.0)).collect();
        Ok((mean, var))
    }
}

/// Fits a single-sample posterior.
pub fn gp_fit(data: &Dataset, hyper: &HyperSample) -> Result<GpPosterior> {
    GpPosterior::fit(data, std::slice::from_ref(hyper))
}

pub fn gp_predict(post: &GpPosterior, queries: &[InputPoint]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    post.predict(queries)
}
