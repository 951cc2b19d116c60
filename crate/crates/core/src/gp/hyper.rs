//! Hyperpriors, the GP hyperposterior, and its slice-sampled marginalization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{beta_cdf, beta_warp, Dataset, GpFit, KernelHyper, WarpParams};
use crate::error::{AloqError, Result};
use crate::linalg::{dot, Cholesky, SymMatrix};
use crate::sampler::{slice_sample_with_rng, ChainConfig};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Chains that fail (stuck shrinkage) are restarted this many times.
const CHAIN_RETRIES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalPrior {
    pub mu: f64,
    pub sigma: f64,
}

impl LogNormalPrior {
    pub const fn new(mu: f64, sigma: f64) -> Self {
        LogNormalPrior { mu, sigma }
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        if !x.is_finite() || x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let lx = x.ln();
        let z = (lx - self.mu) / self.sigma;
        -lx - self.sigma.ln() - 0.5 * LN_2PI - 0.5 * z * z
    }

    pub fn median(&self) -> f64 {
        self.mu.exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NoiseModel {
    /// Noise variance pinned to `ratio * signal_var`.
    Fixed {
        ratio: f64,
    },
    Learned {
        prior: LogNormalPrior,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperPriors {
    pub signal: LogNormalPrior,
    pub lengthscale: LogNormalPrior,
    /// `None` disables warping altogether.
    pub warp: Option<LogNormalPrior>,
    pub noise: NoiseModel,
}

impl HyperPriors {
    pub const DETERMINISTIC_NOISE_RATIO: f64 = 1e-6;

    /// Priors for the robot-arm tasks.
    pub fn arm() -> Self {
        HyperPriors {
            signal: LogNormalPrior::new(0.0, 1.0),
            lengthscale: LogNormalPrior::new(0.0, 0.75),
            warp: Some(LogNormalPrior::new(0.0, 0.5)),
            noise: NoiseModel::Fixed { ratio: Self::DETERMINISTIC_NOISE_RATIO },
        }
    }

    /// Priors for the synthetic test functions; the warp prior favours
    /// strongly sigmoidal warpings.
    pub fn synthetic() -> Self {
        HyperPriors { warp: Some(LogNormalPrior::new(2.0, 0.5)), ..Self::arm() }
    }

    pub fn unwarped(self) -> Self {
        HyperPriors { warp: None, ..self }
    }

    pub fn with_learned_noise(self, prior: LogNormalPrior) -> Self {
        HyperPriors { noise: NoiseModel::Learned { prior }, ..self }
    }
}

/// Kernel plus warp parameters for one posterior draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperSample {
    pub kernel: KernelHyper,
    pub warp: Option<WarpParams>,
    pub log_posterior: f64,
}

impl HyperSample {
    pub fn new(kernel: KernelHyper, warp: Option<WarpParams>) -> Self {
        HyperSample { kernel, warp, log_posterior: 0.0 }
    }

    pub fn warp_point(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.warp {
            Some(w) => beta_warp(x, w),
            None => Ok(x.to_vec()),
        }
    }

    #[inline]
    pub(crate) fn warp_coord(&self, d: usize, x: f64) -> f64 {
        match &self.warp {
            Some(w) => beta_cdf(x, w.alpha[d], w.beta[d]),
            None => x,
        }
    }
}

/// Parameterization of the hyperparameters of a `dim`-input GP.
///
/// The chain runs on the log of every free positive parameter, laid out as
/// `[w0, lengthscales.., alpha.., beta.., noise]`, the last three groups only
/// when present.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperSpace {
    pub dim: usize,
    pub priors: HyperPriors,
}

impl HyperSpace {
    pub fn new(dim: usize, priors: HyperPriors) -> Self {
        HyperSpace { dim, priors }
    }

    pub fn warped(&self) -> bool {
        self.priors.warp.is_some()
    }

    pub fn n_params(&self) -> usize {
        let mut n = 1 + self.dim;
        if self.warped() {
            n += 2 * self.dim;
        }
        if matches!(self.priors.noise, NoiseModel::Learned { .. }) {
            n += 1;
        }
        n
    }

    /// Prior medians.
    pub fn initial(&self) -> HyperSample {
        let p = &self.priors;
        let w0 = p.signal.median();
        let noise = match p.noise {
            NoiseModel::Fixed { ratio } => ratio * w0,
            NoiseModel::Learned { prior } => prior.median(),
        };
        let warp = p.warp.map(|w| WarpParams { alpha: vec![w.median(); self.dim], beta: vec![w.median(); self.dim] });
        HyperSample::new(KernelHyper::new(w0, vec![p.lengthscale.median(); self.dim], noise), warp)
    }

    pub fn encode(&self, h: &HyperSample) -> Vec<f64> {
        let mut u = Vec::with_capacity(self.n_params());
        u.push(h.kernel.signal_var.ln());
        u.extend(h.kernel.lengthscales.iter().map(|l| l.ln()));
        if let (true, Some(w)) = (self.warped(), &h.warp) {
            u.extend(w.alpha.iter().map(|a| a.ln()));
            u.extend(w.beta.iter().map(|b| b.ln()));
        }
        if matches!(self.priors.noise, NoiseModel::Learned { .. }) {
            u.push(h.kernel.noise_var.ln());
        }
        u
    }

    pub fn decode(&self, u: &[f64]) -> HyperSample {
        assert_eq!(u.len(), self.n_params(), "hyperparameter vector has the wrong length");
        let d = self.dim;
        let w0 = u[0].exp();
        let lengthscales = u[1..1 + d].iter().map(|v| v.exp()).collect();
        let mut at = 1 + d;
        let warp = if self.warped() {
            let alpha = u[at..at + d].iter().map(|v| v.exp()).collect();
            let beta = u[at + d..at + 2 * d].iter().map(|v| v.exp()).collect();
            at += 2 * d;
            Some(WarpParams { alpha, beta })
        } else {
            None
        };
        let noise = match self.priors.noise {
            NoiseModel::Fixed { ratio } => ratio * w0,
            NoiseModel::Learned { .. } => u[at].exp(),
        };
        HyperSample::new(KernelHyper::new(w0, lengthscales, noise), warp)
    }

    pub fn log_prior(&self, h: &HyperSample) -> f64 {
        let p = &self.priors;
        let mut lp = p.signal.log_pdf(h.kernel.signal_var);
        lp += h.kernel.lengthscales.iter().map(|l| p.lengthscale.log_pdf(*l)).sum::<f64>();
        match (&p.warp, &h.warp) {
            (Some(prior), Some(w)) => {
                lp += w.alpha.iter().chain(&w.beta).map(|v| prior.log_pdf(*v)).sum::<f64>();
            }
            (None, None) => {}
            _ => return f64::NEG_INFINITY,
        }
        if let NoiseModel::Learned { prior } = p.noise {
            lp += prior.log_pdf(h.kernel.noise_var);
        }
        lp
    }
}

/// Log marginal likelihood `log N(y | 0, K + noise I)`; zero for empty data.
pub fn log_marginal_likelihood(data: &Dataset, hyper: &HyperSample) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let fit = GpFit::new(data, hyper)?;
    let n = data.len() as f64;
    Ok(-0.5 * dot(data.returns(), &fit.weights) - 0.5 * fit.chol.log_det() - 0.5 * n * LN_2PI)
}

/// Unnormalized log hyperposterior; `-inf` for parameters outside the support.
pub fn log_hyperposterior(data: &Dataset, space: &HyperSpace, hyper: &HyperSample) -> f64 {
    if !hyper.kernel.is_valid() || hyper.warp.as_ref().is_some_and(|w| !w.is_valid()) {
        return f64::NEG_INFINITY;
    }
    let lp = space.log_prior(hyper);
    if !lp.is_finite() {
        return f64::NEG_INFINITY;
    }
    match log_marginal_likelihood(data, hyper) {
        Ok(ll) if ll.is_finite() => ll + lp,
        _ => f64::NEG_INFINITY,
    }
}

/// Evaluates the chain target in log-parameter space, caching the warped
/// pairwise distances of each input dimension between calls.
pub(crate) struct PosteriorEvaluator<'a> {
    space: HyperSpace,
    data: &'a Dataset,
    /// raw inputs, one column per dimension
    columns: Vec<Vec<f64>>,
    /// packed strict-lower-triangle squared differences per dimension
    sq: Vec<Vec<f64>>,
    cached_warp: Vec<Option<(f64, f64)>>,
    kmat: SymMatrix,
}

impl<'a> PosteriorEvaluator<'a> {
    pub(crate) fn new(data: &'a Dataset, space: HyperSpace) -> Self {
        let n = data.len();
        let columns = (0..space.dim).map(|d| data.inputs().iter().map(|p| p.joint()[d]).collect()).collect();
        PosteriorEvaluator {
            space,
            data,
            columns,
            sq: vec![vec![0.0; n * n.saturating_sub(1) / 2]; space.dim],
            cached_warp: vec![None; space.dim],
            kmat: SymMatrix::zeros(n),
        }
    }

    fn refresh_dim(&mut self, d: usize, ab: (f64, f64)) {
        if self.cached_warp[d] == Some(ab) {
            return;
        }
        let w: Vec<f64> = self.columns[d].iter().map(|&x| beta_cdf(x, ab.0, ab.1)).collect();
        let sq = &mut self.sq[d];
        let mut idx = 0;
        for i in 0..w.len() {
            for j in 0..i {
                let diff = w[i] - w[j];
                sq[idx] = diff * diff;
                idx += 1;
            }
        }
        self.cached_warp[d] = Some(ab);
    }

    /// Target density in log-parameter space, including the log-Jacobian.
    pub(crate) fn log_target(&mut self, u: &[f64]) -> f64 {
        if u.iter().any(|v| !v.is_finite() || v.abs() > 30.0) {
            return f64::NEG_INFINITY;
        }
        let h = self.space.decode(u);
        let lp = self.space.log_prior(&h);
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
        let ll = self.log_likelihood(&h);
        if !ll.is_finite() {
            return f64::NEG_INFINITY;
        }
        ll + lp + u.iter().sum::<f64>()
    }

    pub(crate) fn log_likelihood(&mut self, h: &HyperSample) -> f64 {
        let n = self.data.len();
        if n == 0 {
            return 0.0;
        }
        for d in 0..self.space.dim {
            let ab = match &h.warp {
                Some(w) => (w.alpha[d], w.beta[d]),
                None => (1.0, 1.0),
            };
            self.refresh_dim(d, ab);
        }
        let inv_l2: Vec<f64> = h.kernel.lengthscales.iter().map(|l| 1.0 / (l * l)).collect();
        let w0 = h.kernel.signal_var;
        let mut idx = 0;
        for i in 0..n {
            for j in 0..i {
                let s: f64 = (0..self.space.dim).map(|d| self.sq[d][idx] * inv_l2[d]).sum();
                self.kmat.set(i, j, w0 * (-0.5 * s).exp());
                idx += 1;
            }
            self.kmat.data[i * n + i] = w0 + h.kernel.noise_var;
        }
        let chol = match Cholesky::factor(&self.kmat) {
            Ok(c) => c,
            Err(_) => return f64::NEG_INFINITY,
        };
        let mut z = self.data.returns().to_vec();
        chol.solve_lower_in_place(&mut z);
        -0.5 * dot(&z, &z) - 0.5 * chol.log_det() - 0.5 * n as f64 * LN_2PI
    }
}

fn to_sample(space: &HyperSpace, eval: &mut PosteriorEvaluator<'_>, u: &[f64]) -> HyperSample {
    let mut h = space.decode(u);
    h.log_posterior = eval.log_likelihood(&h) + space.log_prior(&h);
    h
}

/// Slice-samples the hyperposterior. An empty `initial_point` in `config`
/// starts the chain at the prior medians.
pub fn marginalize_hypers(data: &Dataset, space: &HyperSpace, config: &ChainConfig) -> Result<Vec<HyperSample>> {
    let mut cfg = config.clone();
    if cfg.initial_point.is_empty() {
        cfg.initial_point = space.encode(&space.initial());
    }
    if cfg.step_width.len() != cfg.initial_point.len() {
        cfg.step_width = vec![cfg.step_width.first().copied().unwrap_or(1.0); cfg.initial_point.len()];
    }
    if cfg.initial_point.len() != space.n_params() {
        return Err(AloqError::Config(format!(
            "initial point has {} entries, hyperparameter space has {}",
            cfg.initial_point.len(),
            space.n_params()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut eval = PosteriorEvaluator::new(data, *space);
    let draws = run_with_retries(&mut eval, &cfg, &mut rng)?;
    Ok(draws.iter().map(|u| to_sample(space, &mut eval, u)).collect())
}

fn run_with_retries(
    eval: &mut PosteriorEvaluator<'_>,
    cfg: &ChainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>> {
    let mut last_err = None;
    for _ in 0..=CHAIN_RETRIES {
        match slice_sample_with_rng(|u| eval.log_target(u), cfg, rng) {
            Ok(draws) => return Ok(draws),
            Err(e @ AloqError::Sampler(_)) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// A hyperparameter chain that persists across optimisation steps, each
/// refresh warm-starting from the last retained draw.
#[derive(Debug, Clone)]
pub struct HyperChain {
    space: HyperSpace,
    state: Vec<f64>,
    rng: ChaCha8Rng,
    step_width: f64,
    max_step_outs: usize,
}

impl HyperChain {
    pub fn new(space: HyperSpace, seed: u64) -> Self {
        HyperChain {
            state: space.encode(&space.initial()),
            space,
            rng: ChaCha8Rng::seed_from_u64(seed),
            step_width: 1.0,
            max_step_outs: 50,
        }
    }

    pub fn space(&self) -> &HyperSpace {
        &self.space
    }

    pub fn state(&self) -> HyperSample {
        self.space.decode(&self.state)
    }

    /// Advances the chain on `data` and returns the retained draws.
    pub fn refresh(
        &mut self,
        data: &Dataset,
        burn_in: usize,
        n_samples: usize,
        thinning: usize,
    ) -> Result<Vec<HyperSample>> {
        let mut eval = PosteriorEvaluator::new(data, self.space);
        if !eval.log_target(&self.state).is_finite() {
            self.state = self.space.encode(&self.space.initial());
        }
        let cfg = ChainConfig {
            seed: 0,
            n_samples,
            burn_in,
            thinning,
            initial_point: self.state.clone(),
            step_width: vec![self.step_width; self.state.len()],
            max_step_outs: self.max_step_outs,
        };
        let draws = run_with_retries(&mut eval, &cfg, &mut self.rng)?;
        self.state = draws.last().expect("n_samples >= 1").clone();
        Ok(draws.iter().map(|u| to_sample(&self.space, &mut eval, u)).collect())
    }
}
