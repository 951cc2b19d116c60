//! The arm with an unknown joint rigidity `theta`, inferred from noisy
//! trials of a baseline policy.
//!
//! Each joint receives `pi / theta`. A joint pushed past 1 is damaged: it
//! saturates at 1 and the episode incurs [`SRE_PENALTY`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::arm::{arm_fk, ArmGeometry, DISTANCE_SCALE, SRE_PENALTY};
use super::{Bounds, Sense, Task};
use crate::error::{AloqError, Result};
use crate::gp::{HyperPriors, LogNormalPrior};
use crate::quadrature::EnvDistribution;
use crate::sampler::{slice_sample, ChainConfig};

const THETA_RANGE: (f64, f64) = (0.5, 1.0);
/// Joints that stretch the arm straight along the extreme angle of joint 1.
const TARGET_JOINTS: [f64; 3] = [1.0, 0.5, 0.5];
/// The target lies this factor beyond the stretched tip, measured from the
/// base, so that the closest reachable pose needs joint 1 at full stroke.
const TARGET_OVERREACH: f64 = 1.15;
const BASELINE_TARGET_JOINTS: [f64; 3] = [0.5, 0.5, 0.5];
const MODE_GRID: usize = 4001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorqueConfig {
    pub seed: u64,
    pub baseline_trials: usize,
    pub noise_sd: f64,
    /// Every joint of the baseline policy takes this value.
    pub baseline_policy: f64,
    pub opt_samples: usize,
    pub eval_samples: usize,
}

impl Default for TorqueConfig {
    fn default() -> Self {
        TorqueConfig {
            seed: 0,
            baseline_trials: 100,
            noise_sd: 2.0,
            baseline_policy: 0.55,
            opt_samples: 50,
            eval_samples: 400,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ArmTorque {
    config: TorqueConfig,
    geom: ArmGeometry,
    target: [f64; 2],
    baseline_target: [f64; 2],
    true_theta: f64,
    baseline_returns: Vec<f64>,
    eval_samples: Vec<f64>,
    mode: f64,
    policy_bounds: Bounds,
    env_bounds: Bounds,
    env: EnvDistribution,
    warnings: Vec<String>,
}

/// Cost of `pi` against `target` at rigidity `theta`, and whether a joint broke.
fn torque_cost(geom: &ArmGeometry, target: [f64; 2], pi: &[f64], theta: f64) -> (f64, bool) {
    let mut damaged = false;
    let joints: Vec<f64> = pi
        .iter()
        .map(|p| {
            let j = p / theta;
            if j > 1.0 {
                damaged = true;
            }
            j.min(1.0)
        })
        .collect();
    let dist = arm_fk(&joints, geom).distance_to(target);
    (DISTANCE_SCALE * dist + if damaged { SRE_PENALTY } else { 0.0 }, damaged)
}

pub fn arm_torque_task(config: &TorqueConfig) -> Result<ArmTorque> {
    if config.baseline_trials < 10 {
        return Err(AloqError::Config("the torque task needs at least 10 baseline trials".into()));
    }
    if !config.noise_sd.is_finite() || config.noise_sd <= 0.0 {
        return Err(AloqError::Config("baseline noise_sd must be positive".into()));
    }
    if config.opt_samples == 0 || config.eval_samples < config.opt_samples {
        return Err(AloqError::Config("need 1 <= opt_samples <= eval_samples".into()));
    }
    let geom = ArmGeometry::default();
    let stretched = arm_fk(&TARGET_JOINTS, &geom).tip();
    let target: [f64; 2] = std::array::from_fn(|i| geom.base[i] + TARGET_OVERREACH * (stretched[i] - geom.base[i]));
    let baseline_target = arm_fk(&BASELINE_TARGET_JOINTS, &geom).tip();
    let pi_b = [config.baseline_policy; 3];

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let true_theta = rng.random_range(THETA_RANGE.0..THETA_RANGE.1);
    let noise = Normal::new(0.0, config.noise_sd).expect("positive sd");
    let clean = torque_cost(&geom, baseline_target, &pi_b, true_theta).0;
    let baseline_returns: Vec<f64> = (0..config.baseline_trials).map(|_| clean + noise.sample(&mut rng)).collect();

    let n = baseline_returns.len() as f64;
    let sum: f64 = baseline_returns.iter().sum();
    let sum_sq: f64 = baseline_returns.iter().map(|r| r * r).sum();
    let inv_var = 1.0 / (config.noise_sd * config.noise_sd);
    let log_post = |theta: f64| -> f64 {
        if !(THETA_RANGE.0..=THETA_RANGE.1).contains(&theta) {
            return f64::NEG_INFINITY;
        }
        let c = torque_cost(&geom, baseline_target, &pi_b, theta).0;
        -0.5 * inv_var * (sum_sq - 2.0 * c * sum + n * c * c)
    };

    let mode = (0..MODE_GRID)
        .map(|i| THETA_RANGE.0 + (THETA_RANGE.1 - THETA_RANGE.0) * i as f64 / (MODE_GRID - 1) as f64)
        .fold((THETA_RANGE.0, f64::NEG_INFINITY), |best, t| {
            let lp = log_post(t);
            if lp > best.1 {
                (t, lp)
            } else {
                best
            }
        })
        .0;

    let chain = ChainConfig {
        n_samples: config.eval_samples,
        burn_in: 100,
        thinning: 5,
        step_width: vec![0.05],
        ..ChainConfig::new(config.seed ^ 0x5eed, vec![mode])
    };
    let eval_samples: Vec<f64> = slice_sample(|u: &[f64]| log_post(u[0]), &chain)?.into_iter().map(|u| u[0]).collect();

    let stride = config.eval_samples / config.opt_samples;
    let opt: Vec<Vec<f64>> = (0..config.opt_samples).map(|i| vec![eval_samples[i * stride]]).collect();

    let mut warnings = Vec::new();
    if eval_samples.iter().all(|t| *t == eval_samples[0]) {
        warnings.push(format!("degenerate rigidity posterior: every sample equals {}", eval_samples[0]));
    }

    Ok(ArmTorque {
        config: config.clone(),
        geom,
        target,
        baseline_target,
        true_theta,
        baseline_returns,
        eval_samples,
        mode,
        policy_bounds: Bounds::unit(3),
        env_bounds: Bounds::new(vec![THETA_RANGE.0], vec![THETA_RANGE.1]),
        env: EnvDistribution::empirical(opt)?,
        warnings,
    })
}

impl ArmTorque {
    pub fn true_theta(&self) -> f64 {
        self.true_theta
    }

    pub fn baseline_returns(&self) -> &[f64] {
        &self.baseline_returns
    }

    /// The larger posterior sample used for evaluation.
    pub fn evaluation_samples(&self) -> &[f64] {
        &self.eval_samples
    }

    /// Grid maximizer of the rigidity posterior density.
    pub fn posterior_mode(&self) -> f64 {
        self.mode
    }

    pub fn target(&self) -> [f64; 2] {
        self.target
    }

    pub fn baseline_target(&self) -> [f64; 2] {
        self.baseline_target
    }

    /// `n` draws with replacement from the evaluation samples.
    pub fn evaluation_draws(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.eval_samples[rng.random_range(0..self.eval_samples.len())]).collect()
    }
}

impl Task for ArmTorque {
    fn name(&self) -> &str {
        "arm-torque"
    }

    fn policy_bounds(&self) -> &Bounds {
        &self.policy_bounds
    }

    fn env_bounds(&self) -> &Bounds {
        &self.env_bounds
    }

    fn env(&self) -> &EnvDistribution {
        &self.env
    }

    fn sense(&self) -> Sense {
        Sense::Minimize
    }

    fn evaluate(&self, pi: &[f64], theta: &[f64]) -> Result<f64> {
        if pi.len() != 3 || theta.len() != 1 {
            return Err(AloqError::Domain("torque task expects 3 joints and a scalar rigidity".into()));
        }
        if pi.iter().any(|v| !(0.0..=1.0).contains(v)) || theta[0].is_nan() || theta[0] <= 0.0 {
            return Err(AloqError::Simulator {
                pi: pi.to_vec(),
                theta: theta.to_vec(),
                reason: "policy outside [0, 1] or non-positive rigidity".into(),
            });
        }
        Ok(torque_cost(&self.geom, self.target, pi, theta[0]).0)
    }

    fn is_sre(&self, pi: &[f64], theta: &[f64]) -> bool {
        pi.iter().any(|p| p / theta[0] > 1.0)
    }

    /// Expectation over the evaluation posterior sample.
    fn exact_fbar(&self, pi: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for t in &self.eval_samples {
            total += self.evaluate(pi, &[*t])?;
        }
        Ok(total / self.eval_samples.len() as f64)
    }

    fn sre_probability(&self, pi: &[f64]) -> Result<f64> {
        let hits = self.eval_samples.iter().filter(|t| self.is_sre(pi, &[**t])).count();
        Ok(hits as f64 / self.eval_samples.len() as f64)
    }

    fn hyper_priors(&self) -> HyperPriors {
        HyperPriors::arm().with_learned_noise(LogNormalPrior::new(-4.0, 1.0))
    }

    fn default_kappa(&self) -> f64 {
        1.5
    }

    fn warnings(&self) -> Vec<String> {
        self.warnings.clone()
    }

    fn constants(&self) -> serde_json::Value {
        json!({
            "config": self.config,
            "geometry": self.geom,
            "target": self.target,
            "target_joints": TARGET_JOINTS,
            "target_overreach": TARGET_OVERREACH,
            "baseline_target_joints": BASELINE_TARGET_JOINTS,
            "theta_range": [THETA_RANGE.0, THETA_RANGE.1],
            "true_theta": self.true_theta,
            "posterior_mode": self.mode,
            "distance_scale": DISTANCE_SCALE,
            "sre_penalty": SRE_PENALTY,
            "warnings": self.warnings,
        })
    }
}
