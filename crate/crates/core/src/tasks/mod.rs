//! Benchmark simulators with significant rare events.

mod arm;
mod fsre;
mod torque;

#[cfg(test)]
mod tests;

pub use arm::{
    arm_breakage_task, arm_collision_task, arm_fk, ArmBreakage, ArmCollision, ArmGeometry, ArmPose, BREAKAGE_BAND,
    BREAKAGE_RATE, COLLISION_MASS, DISTANCE_SCALE, SRE_PENALTY,
};
pub use fsre::{fsre1, fsre2, FSre, FSreKind};
pub use torque::{arm_torque_task, ArmTorque, TorqueConfig};

use serde::{Deserialize, Serialize};

use crate::error::{AloqError, Result};
use crate::gp::HyperPriors;
use crate::quadrature::EnvDistribution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Maximize,
    Minimize,
}

impl Sense {
    /// Converts a task value into a reward to be maximized and back.
    pub fn sign(self) -> f64 {
        match self {
            Sense::Maximize => 1.0,
            Sense::Minimize => -1.0,
        }
    }
}

/// An axis-aligned box with an affine map to and from the unit cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len());
        assert!(lower.iter().zip(&upper).all(|(l, u)| l < u), "empty box");
        Bounds { lower, upper }
    }

    pub fn unit(dim: usize) -> Self {
        Bounds::new(vec![0.0; dim], vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| ((v - l) / (u - l)).clamp(0.0, 1.0))
            .collect()
    }

    pub fn from_unit(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(self.lower.iter().zip(&self.upper)).map(|(v, (l, u))| l + (u - l) * v).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| *v >= *l && *v <= *u)
    }
}

/// A simulator `f(pi, theta)` together with its environment distribution.
///
/// Policies and environment variables are passed in task units; the
/// optimizer works on the unit cube through [`Bounds`].
pub trait Task: Send + Sync {
    fn name(&self) -> &str;
    fn policy_bounds(&self) -> &Bounds;
    /// Box containing the environment support, used for input scaling.
    fn env_bounds(&self) -> &Bounds;
    fn env(&self) -> &EnvDistribution;
    fn sense(&self) -> Sense;
    fn evaluate(&self, pi: &[f64], theta: &[f64]) -> Result<f64>;
    /// Whether `(pi, theta)` triggers the task's rare event.
    fn is_sre(&self, pi: &[f64], theta: &[f64]) -> bool;
    fn hyper_priors(&self) -> HyperPriors;
    fn default_kappa(&self) -> f64;
    /// Constants needed to rebuild the task, for result-file headers.
    fn constants(&self) -> serde_json::Value;

    /// Problems noticed while building the task.
    fn warnings(&self) -> Vec<String> {
        Vec::new()
    }

    fn d_policy(&self) -> usize {
        self.policy_bounds().dim()
    }

    fn d_env(&self) -> usize {
        self.env_bounds().dim()
    }

    /// The true expected value `E_theta[f(pi, theta)]`.
    fn exact_fbar(&self, pi: &[f64]) -> Result<f64> {
        match self.env() {
            EnvDistribution::Discrete { support, probs } => {
                let mut total = 0.0;
                for (t, p) in support.iter().zip(probs) {
                    total += p * self.evaluate(pi, t)?;
                }
                Ok(total)
            }
            EnvDistribution::Continuous { .. } => {
                Err(AloqError::Config(format!("task `{}` has no closed-form expectation", self.name())))
            }
        }
    }

    fn sre_probability(&self, pi: &[f64]) -> Result<f64> {
        match self.env() {
            EnvDistribution::Discrete { support, probs } => {
                Ok(support.iter().zip(probs).filter(|(t, _)| self.is_sre(pi, t)).map(|(_, p)| p).sum())
            }
            EnvDistribution::Continuous { .. } => {
                Err(AloqError::Config(format!("task `{}` has no closed-form rare-event probability", self.name())))
            }
        }
    }
}

pub const TASK_NAMES: [&str; 5] = ["fsre1", "fsre2", "arm-collision", "arm-breakage", "arm-torque"];

/// Builds a task by name. Only the torque task depends on `seed`, through
/// its baseline trials.
pub fn task_by_name(name: &str, seed: u64) -> Result<Box<dyn Task>> {
    Ok(match name {
        "fsre1" => Box::new(FSre::new(FSreKind::One)),
        "fsre2" => Box::new(FSre::new(FSreKind::Two)),
        "arm-collision" => Box::new(arm_collision_task()),
        "arm-breakage" => Box::new(arm_breakage_task()),
        "arm-torque" => Box::new(arm_torque_task(&TorqueConfig { seed, ..TorqueConfig::default() })?),
        _ => return Err(AloqError::Unknown { kind: "task", name: name.into() }),
    })
}
