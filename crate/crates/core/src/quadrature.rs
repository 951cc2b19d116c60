//! Bayesian quadrature of `fbar(pi) = E_theta[f(pi, theta)]` under a GP
//! posterior, and the lookahead-variance rule for choosing `theta`.
//!
//! Two routes compute the same moments. [`fbar_moments`] builds the full
//! predictive covariance over the quadrature nodes. [`FbarModel`] exploits
//! the product structure of the SE kernel across policy and environment
//! dimensions: every node shares the same policy, so the environment half of
//! the kernel can be precomputed once per posterior and each policy query
//! costs a single triangular solve.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AloqError, Result};
use crate::gp::{GpFit, GpPosterior, InputPoint};
use crate::linalg::dot;

/// Tolerance on the total mass of a discrete distribution.
const MASS_TOL: f64 = 1e-12;
pub const MIN_MC_COUNT: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EnvSampler {
    UniformBox { lower: Vec<f64>, upper: Vec<f64> },
}

impl EnvSampler {
    fn dim(&self) -> usize {
        match self {
            EnvSampler::UniformBox { lower, .. } => lower.len(),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            EnvSampler::UniformBox { lower, upper } => {
                lower.iter().zip(upper).map(|(lo, hi)| lo + (hi - lo) * rng.random::<f64>()).collect()
            }
        }
    }
}

/// The distribution `p(theta)` that quadrature integrates against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EnvDistribution {
    Discrete { support: Vec<Vec<f64>>, probs: Vec<f64> },
    Continuous { sampler: EnvSampler, mc_count: usize },
}

impl EnvDistribution {
    pub fn discrete(support: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self> {
        let env = EnvDistribution::Discrete { support, probs };
        env.validate()?;
        Ok(env)
    }

    /// Equal weights on every support point.
    pub fn empirical(support: Vec<Vec<f64>>) -> Result<Self> {
        let n = support.len();
        Self::discrete(support, vec![1.0 / n as f64; n])
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EnvDistribution::Discrete { support, probs } => {
                if support.is_empty() || support.len() != probs.len() {
                    return Err(AloqError::Config(format!(
                        "discrete env has {} points and {} probabilities",
                        support.len(),
                        probs.len()
                    )));
                }
                if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    return Err(AloqError::Config("probabilities must be nonnegative".into()));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > MASS_TOL {
                    return Err(AloqError::Config(format!("probabilities sum to {total}")));
                }
                let d = support[0].len();
                if support.iter().any(|s| s.len() != d) {
                    return Err(AloqError::Config("support points differ in dimension".into()));
                }
            }
            EnvDistribution::Continuous { mc_count, .. } => {
                if *mc_count < MIN_MC_COUNT {
                    return Err(AloqError::Config(format!("mc_count {mc_count} is below {MIN_MC_COUNT}")));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            EnvDistribution::Discrete { support, .. } => support[0].len(),
            EnvDistribution::Continuous { sampler, .. } => sampler.dim(),
        }
    }

    /// One draw from `p(theta)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            EnvDistribution::Discrete { support, probs } => support[sample_index(probs, rng)].clone(),
            EnvDistribution::Continuous { sampler, .. } => sampler.draw(rng),
        }
    }

    /// Nodes and weights for quadrature: the support itself for discrete
    /// distributions, `mc_count` equally weighted draws otherwise.
    pub fn rule<R: Rng + ?Sized>(&self, rng: &mut R) -> QuadratureRule {
        match self {
            EnvDistribution::Discrete { support, probs } => {
                QuadratureRule { points: support.clone(), weights: probs.clone() }
            }
            EnvDistribution::Continuous { sampler, mc_count } => {
                let points = (0..*mc_count).map(|_| sampler.draw(rng)).collect();
                QuadratureRule { points, weights: vec![1.0 / *mc_count as f64; *mc_count] }
            }
        }
    }
}

/// Inverse-CDF draw of an index with probabilities `probs`.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

/// Weighted nodes over the environment space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn map_points(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> QuadratureRule {
        QuadratureRule { points: self.points.iter().map(|p| f(p)).collect(), weights: self.weights.clone() }
    }

    fn queries(&self, pi: &[f64]) -> Vec<InputPoint> {
        self.points.iter().map(|t| InputPoint::new(pi.to_vec(), t.clone())).collect()
    }
}

/// Gaussian belief over `fbar(pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalEstimate {
    pub mean: f64,
    pub variance: f64,
}

impl MarginalEstimate {
    pub fn new(mean: f64, variance: f64) -> Self {
        MarginalEstimate { mean, variance: variance.max(0.0) }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Moments of `fbar(pi)` from the full predictive covariance over the nodes:
/// `mean = sum_i p_i m_i`, `var = sum_ij p_i p_j C_ij`.
pub fn fbar_moments(pi: &[f64], post: &GpPosterior, rule: &QuadratureRule) -> Result<MarginalEstimate> {
    let (mean, cov) = post.predict(&rule.queries(pi))?;
    let p = &rule.weights;
    let mu = p.iter().zip(&mean).map(|(w, m)| w * m).sum();
    let var = p.iter().zip(&cov).map(|(wi, row)| wi * dot(p, row)).sum();
    Ok(MarginalEstimate::new(mu, var))
}

/// Posterior variance of `fbar(pi)` after a hypothetical observation at
/// `(pi, theta_cand)`. The unobserved return never enters: conditioning on
/// an input changes the GP covariance independently of its value.
pub fn lookahead_variance(pi: &[f64], theta_cand: &[f64], post: &GpPosterior, rule: &QuadratureRule) -> Result<f64> {
    let model = FbarModel::new(post, rule)?;
    model.lookahead_at(pi, theta_cand)
}

/// Candidate minimizing the lookahead variance over the rule's nodes; ties go
/// to the lowest index. Returns the index into `rule.points`.
pub fn select_theta(pi: &[f64], post: &GpPosterior, rule: &QuadratureRule) -> Result<usize> {
    FbarModel::new(post, rule)?.select_theta(pi)
}

/// Uncertainty-sampling baseline: the node with the largest predictive
/// variance of `f(pi, theta)`.
pub fn uncertainty_sampling_theta(pi: &[f64], post: &GpPosterior, rule: &QuadratureRule) -> Result<usize> {
    let (_, var) = post.predict_marginal(&rule.queries(pi))?;
    Ok(argmax_first(&var))
}

fn argmin_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Per-fit cache of everything in the quadrature that does not depend on
/// the policy.
struct FitQuadrature<'a> {
    fit: &'a GpFit,
    d_policy: usize,
    inv_l2: Vec<f64>,
    /// `g_i = sum_j p_j k_env(x_i, theta_j)`
    g: Vec<f64>,
    /// `sum_ij p_i p_j k_env(theta_i, theta_j)`
    node_mass: f64,
    /// `sum_j p_j k_env(theta_j, theta_c)` for each node `c`
    node_cov: Vec<f64>,
    /// `k_env(x_i, theta_c)`, one contiguous column of length `l` per node
    train_node: Vec<f64>,
}

impl<'a> FitQuadrature<'a> {
    fn new(fit: &'a GpFit, rule_warped: &[Vec<f64>], weights: &[f64], d_policy: usize) -> Self {
        let h = &fit.hyper.kernel;
        let inv_l2: Vec<f64> = h.lengthscales.iter().map(|l| 1.0 / (l * l)).collect();
        let env_l2 = &inv_l2[d_policy..];
        let k_env = |a: &[f64], b: &[f64]| -> f64 {
            let s: f64 = a.iter().zip(b).zip(env_l2).map(|((x, y), w)| (x - y) * (x - y) * w).sum();
            (-0.5 * s).exp()
        };
        let l = fit.n_train();
        let n = rule_warped.len();
        let mut train_node = vec![0.0; l * n];
        for (c, node) in rule_warped.iter().enumerate() {
            for (i, x) in fit.warped.iter().enumerate() {
                train_node[c * l + i] = k_env(&x[d_policy..], node);
            }
        }
        let g = (0..l).map(|i| (0..n).map(|c| weights[c] * train_node[c * l + i]).sum()).collect();
        let node_cov: Vec<f64> =
            rule_warped.iter().map(|a| rule_warped.iter().zip(weights).map(|(b, w)| w * k_env(a, b)).sum()).collect();
        let node_mass = node_cov.iter().zip(weights).map(|(c, w)| c * w).sum();
        FitQuadrature { fit, d_policy, inv_l2, g, node_mass, node_cov, train_node }
    }

    /// `exp(-0.5 * policy-part distance)` to every training input.
    fn k_policy(&self, pi_warped: &[f64]) -> Vec<f64> {
        let pl2 = &self.inv_l2[..self.d_policy];
        self.fit
            .warped
            .iter()
            .map(|x| {
                let s: f64 =
                    x[..self.d_policy].iter().zip(pi_warped).zip(pl2).map(|((a, b), w)| (a - b) * (a - b) * w).sum();
                (-0.5 * s).exp()
            })
            .collect()
    }

    fn warp_policy(&self, pi: &[f64]) -> Vec<f64> {
        pi.iter().enumerate().map(|(d, &x)| self.fit.hyper.warp_coord(d, x)).collect()
    }

    fn mean(&self, pi: &[f64]) -> f64 {
        let w0 = self.fit.hyper.kernel.signal_var;
        let kp = self.k_policy(&self.warp_policy(pi));
        w0 * kp.iter().zip(&self.g).zip(&self.fit.weights).map(|((a, b), w)| a * b * w).sum::<f64>()
    }

    /// Returns `(mean, variance, L^-1 z, k_policy)` for policy `pi`.
    fn moments(&self, pi: &[f64]) -> (f64, f64, Vec<f64>, Vec<f64>) {
        let w0 = self.fit.hyper.kernel.signal_var;
        let kp = self.k_policy(&self.warp_policy(pi));
        let mut z: Vec<f64> = kp.iter().zip(&self.g).map(|(a, b)| w0 * a * b).collect();
        let mean = dot(&z, &self.fit.weights);
        self.fit.chol.solve_lower_in_place(&mut z);
        let var = w0 * self.node_mass - dot(&z, &z);
        (mean, var, z, kp)
    }

    /// Variance reduction from observing the candidate whose environment
    /// kernel column against training inputs is `k_train` and whose prior
    /// covariance with `fbar` (divided by `w0`) is `prior_cov`.
    fn reduced_variance(&self, var: f64, v: &[f64], kp: &[f64], k_train: &[f64], prior_cov: f64) -> f64 {
        let w0 = self.fit.hyper.kernel.signal_var;
        let mut u: Vec<f64> = kp.iter().zip(k_train).map(|(a, b)| w0 * a * b).collect();
        self.fit.chol.solve_lower_in_place(&mut u);
        let cov = w0 * prior_cov - dot(v, &u);
        let cand_var = w0 - dot(&u, &u) + self.fit.hyper.kernel.noise_var;
        if cand_var <= 1e-12 * w0 {
            return var;
        }
        var - cov * cov / cand_var
    }
}

/// Policy-query engine for `fbar` moments and lookahead variances under a
/// fixed posterior and quadrature rule.
pub struct FbarModel<'a> {
    parts: Vec<FitQuadrature<'a>>,
    rule: &'a QuadratureRule,
}

impl<'a> FbarModel<'a> {
    pub fn new(post: &'a GpPosterior, rule: &'a QuadratureRule) -> Result<Self> {
        if rule.is_empty() || rule.points.len() != rule.weights.len() {
            return Err(AloqError::Config("quadrature rule is empty or malformed".into()));
        }
        let parts = post
            .fits()
            .iter()
            .map(|fit| {
                let dp = fit.d_policy;
                if rule.points[0].len() + dp != fit.hyper.kernel.dim() {
                    return Err(AloqError::Domain(format!(
                        "rule nodes have {} dims, model expects {}",
                        rule.points[0].len(),
                        fit.hyper.kernel.dim() - dp
                    )));
                }
                let warped = rule
                    .points
                    .iter()
                    .map(|t| t.iter().enumerate().map(|(k, &x)| fit.hyper.warp_coord(dp + k, x)).collect())
                    .collect::<Vec<Vec<f64>>>();
                Ok(FitQuadrature::new(fit, &warped, &rule.weights, dp))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FbarModel { parts, rule })
    }

    fn check_policy(&self, pi: &[f64]) -> Result<()> {
        let dp = self.parts[0].d_policy;
        if pi.len() != dp || pi.iter().any(|x| !x.is_finite() || !(0.0..=1.0).contains(x)) {
            return Err(AloqError::Domain(format!("policy {pi:?} is not in the unit box of dim {dp}")));
        }
        Ok(())
    }

    /// Mixture moments: mean of means; mean of variances plus variance of means.
    pub fn moments(&self, pi: &[f64]) -> Result<MarginalEstimate> {
        self.check_policy(pi)?;
        let per: Vec<(f64, f64)> = self
            .parts
            .iter()
            .map(|p| {
                let (m, v, _, _) = p.moments(pi);
                (m, v)
            })
            .collect();
        Ok(combine(&per))
    }

    /// Mixture mean alone, skipping the triangular solves.
    pub fn mean(&self, pi: &[f64]) -> Result<f64> {
        self.check_policy(pi)?;
        Ok(self.parts.iter().map(|p| p.mean(pi)).sum::<f64>() / self.parts.len() as f64)
    }

    /// Lookahead variance for every quadrature node as candidate.
    pub fn lookahead_all(&self, pi: &[f64]) -> Result<Vec<f64>> {
        self.check_policy(pi)?;
        let n = self.rule.len();
        let s = self.parts.len() as f64;
        let mut out = vec![0.0; n];
        let mut means = Vec::with_capacity(self.parts.len());
        for part in &self.parts {
            let (m, var, v, kp) = part.moments(pi);
            means.push(m);
            let l = part.fit.n_train();
            for (c, o) in out.iter_mut().enumerate() {
                let col = &part.train_node[c * l..(c + 1) * l];
                *o += part.reduced_variance(var, &v, &kp, col, part.node_cov[c]).max(0.0) / s;
            }
        }
        let spread = variance_of(&means);
        Ok(out.into_iter().map(|v| v + spread).collect())
    }

    /// Lookahead variance for an arbitrary environment candidate.
    pub fn lookahead_at(&self, pi: &[f64], theta_cand: &[f64]) -> Result<f64> {
        self.check_policy(pi)?;
        let s = self.parts.len() as f64;
        let mut total = 0.0;
        let mut means = Vec::with_capacity(self.parts.len());
        for part in &self.parts {
            let dp = part.d_policy;
            let env_l2 = &part.inv_l2[dp..];
            let wc: Vec<f64> =
                theta_cand.iter().enumerate().map(|(k, &x)| part.fit.hyper.warp_coord(dp + k, x)).collect();
            let k_env = |a: &[f64]| -> f64 {
                let d: f64 = a.iter().zip(&wc).zip(env_l2).map(|((x, y), w)| (x - y) * (x - y) * w).sum();
                (-0.5 * d).exp()
            };
            let k_train: Vec<f64> = part.fit.warped.iter().map(|x| k_env(&x[dp..])).collect();
            let prior_cov: f64 = self
                .rule
                .points
                .iter()
                .zip(&self.rule.weights)
                .map(|(t, w)| {
                    let wt: Vec<f64> =
                        t.iter().enumerate().map(|(k, &x)| part.fit.hyper.warp_coord(dp + k, x)).collect();
                    w * k_env(&wt)
                })
                .sum();
            let (m, var, v, kp) = part.moments(pi);
            means.push(m);
            total += part.reduced_variance(var, &v, &kp, &k_train, prior_cov).max(0.0) / s;
        }
        Ok(total + variance_of(&means))
    }

    /// Index of the node minimizing the lookahead variance.
    pub fn select_theta(&self, pi: &[f64]) -> Result<usize> {
        Ok(argmin_first(&self.lookahead_all(pi)?))
    }

    pub fn rule(&self) -> &QuadratureRule {
        self.rule
    }
}

fn variance_of(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n
}

fn combine(per: &[(f64, f64)]) -> MarginalEstimate {
    let n = per.len() as f64;
    let mean = per.iter().map(|p| p.0).sum::<f64>() / n;
    let within = per.iter().map(|p| p.1).sum::<f64>() / n;
    let means: Vec<f64> = per.iter().map(|p| p.0).collect();
    MarginalEstimate::new(mean, within + variance_of(&means))
}
