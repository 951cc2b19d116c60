//! A planar three-joint arm and the collision and breakage tasks built on it.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Bounds, Sense, Task};
use crate::error::{AloqError, Result};
use crate::gp::HyperPriors;
use crate::quadrature::{EnvDistribution, EnvSampler};

/// Cost per unit of tip-to-target distance.
pub const DISTANCE_SCALE: f64 = 100.0;
/// Cost added when a rare event fires.
pub const SRE_PENALTY: f64 = 150.0;
/// Collision probability of the reference policy.
pub const COLLISION_MASS: f64 = 0.12;
pub const BREAKAGE_BAND: (f64, f64) = (0.3, 0.7);
pub const BREAKAGE_RATE: f64 = 0.05;

const COLLISION_REFERENCE: [f64; 3] = [0.25, 0.75, 0.8];
const BREAKAGE_REFERENCE: [f64; 3] = [0.4, 0.2, 0.6];
const N_WALLS: usize = 20;
const WALL_RANGE: (f64, f64) = (-0.2, 0.14);
const WALL_DECAY: f64 = 0.8;

/// Link lengths and the affine maps from normalized joints to angles.
///
/// The first angle is measured from the x-axis, the others relative to the
/// previous link: `angle_i = offset_i + scale_i * u_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmGeometry {
    pub links: [f64; 3],
    pub base: [f64; 2],
    pub offsets: [f64; 3],
    pub scales: [f64; 3],
}

impl Default for ArmGeometry {
    fn default() -> Self {
        ArmGeometry { links: [0.477; 3], base: [-0.2925, 0.0], offsets: [1.45, -0.3, -0.3], scales: [-0.6, 0.6, 0.6] }
    }
}

impl ArmGeometry {
    pub fn angles(&self, joints: &[f64]) -> [f64; 3] {
        std::array::from_fn(|i| self.offsets[i] + self.scales[i] * joints[i])
    }

    /// Normalized joints that map to zero angle on every joint.
    pub fn zero_angle_preimage(&self) -> [f64; 3] {
        std::array::from_fn(|i| -self.offsets[i] / self.scales[i])
    }

    /// Forward kinematics from relative joint angles in radians.
    pub fn pose_from_angles(&self, angles: &[f64; 3]) -> ArmPose {
        let mut points = [self.base; 4];
        let mut heading = 0.0;
        for i in 0..3 {
            heading += angles[i];
            points[i + 1] =
                [points[i][0] + self.links[i] * heading.cos(), points[i][1] + self.links[i] * heading.sin()];
        }
        ArmPose { points }
    }
}

/// The base, the two elbows and the end effector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmPose {
    pub points: [[f64; 2]; 4],
}

impl ArmPose {
    pub fn tip(&self) -> [f64; 2] {
        self.points[3]
    }

    pub fn segments(&self) -> [([f64; 2], [f64; 2]); 3] {
        std::array::from_fn(|i| (self.points[i], self.points[i + 1]))
    }

    /// Largest x over the arm; segments are straight so an endpoint attains it.
    pub fn max_x(&self) -> f64 {
        self.points.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn distance_to(&self, target: [f64; 2]) -> f64 {
        let t = self.tip();
        (t[0] - target[0]).hypot(t[1] - target[1])
    }
}

pub fn arm_fk(joints: &[f64], geom: &ArmGeometry) -> ArmPose {
    assert_eq!(joints.len(), 3, "the arm has three joints");
    geom.pose_from_angles(&geom.angles(joints))
}

fn check_joints(pi: &[f64], theta: &[f64], d_env: usize) -> Result<()> {
    if pi.len() != 3 || theta.len() != d_env {
        return Err(AloqError::Domain(format!(
            "arm task expects 3 joints and {d_env} env values, got {} and {}",
            pi.len(),
            theta.len()
        )));
    }
    if pi.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(AloqError::Simulator {
            pi: pi.to_vec(),
            theta: theta.to_vec(),
            reason: "joint outside [0, 1]".into(),
        });
    }
    Ok(())
}

/// A wall at x = theta blocks the arm; touching it costs [`SRE_PENALTY`].
#[derive(Debug, Clone)]
pub struct ArmCollision {
    geom: ArmGeometry,
    target: [f64; 2],
    policy_bounds: Bounds,
    env_bounds: Bounds,
    env: EnvDistribution,
}

/// Log-spaced wall positions and their masses. Within each group masses decay
/// geometrically towards the arm; walls hit by the reference policy share
/// [`COLLISION_MASS`] and the rest share the remainder.
fn wall_support(reference_reach: f64) -> (Vec<f64>, Vec<f64>) {
    let (lo, hi) = WALL_RANGE;
    let walls: Vec<f64> = (0..N_WALLS)
        .map(|j| {
            let g = 10f64.powf(j as f64 / (N_WALLS - 1) as f64);
            lo + (hi - lo) * (g - 1.0) / 9.0
        })
        .collect();
    let raw: Vec<f64> = (0..N_WALLS).map(|j| WALL_DECAY.powi((N_WALLS - 1 - j) as i32)).collect();
    let hit = |w: f64| reference_reach > w;
    let hit_mass: f64 = walls.iter().zip(&raw).filter(|(w, _)| hit(**w)).map(|(_, m)| m).sum();
    let miss_mass: f64 = walls.iter().zip(&raw).filter(|(w, _)| !hit(**w)).map(|(_, m)| m).sum();
    let probs = walls
        .iter()
        .zip(&raw)
        .map(|(w, m)| if hit(*w) { m * COLLISION_MASS / hit_mass } else { m * (1.0 - COLLISION_MASS) / miss_mass })
        .collect();
    (walls, probs)
}

pub fn arm_collision_task() -> ArmCollision {
    let geom = ArmGeometry::default();
    let reference = arm_fk(&COLLISION_REFERENCE, &geom);
    let (walls, probs) = wall_support(reference.max_x());
    ArmCollision {
        geom,
        target: reference.tip(),
        policy_bounds: Bounds::unit(3),
        env_bounds: Bounds::new(vec![WALL_RANGE.0], vec![WALL_RANGE.1]),
        env: EnvDistribution::discrete(walls.into_iter().map(|w| vec![w]).collect(), probs).expect("valid wall masses"),
    }
}

impl ArmCollision {
    pub fn geometry(&self) -> &ArmGeometry {
        &self.geom
    }

    pub fn target(&self) -> [f64; 2] {
        self.target
    }

    pub fn reference_policy() -> [f64; 3] {
        COLLISION_REFERENCE
    }

    /// Cost with no walls at all.
    pub fn distance_cost(&self, pi: &[f64]) -> f64 {
        DISTANCE_SCALE * arm_fk(pi, &self.geom).distance_to(self.target)
    }
}

impl Task for ArmCollision {
    fn name(&self) -> &str {
        "arm-collision"
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
        check_joints(pi, theta, 1)?;
        let pose = arm_fk(pi, &self.geom);
        let penalty = if pose.max_x() > theta[0] { SRE_PENALTY } else { 0.0 };
        Ok(DISTANCE_SCALE * pose.distance_to(self.target) + penalty)
    }

    fn is_sre(&self, pi: &[f64], theta: &[f64]) -> bool {
        arm_fk(pi, &self.geom).max_x() > theta[0]
    }

    fn hyper_priors(&self) -> HyperPriors {
        HyperPriors::arm()
    }

    fn default_kappa(&self) -> f64 {
        1.5
    }

    fn constants(&self) -> serde_json::Value {
        let EnvDistribution::Discrete { support, probs } = &self.env else { unreachable!() };
        json!({
            "geometry": self.geom,
            "target": self.target,
            "reference_policy": COLLISION_REFERENCE,
            "walls": support.iter().map(|w| w[0]).collect::<Vec<_>>(),
            "wall_probs": probs,
            "distance_scale": DISTANCE_SCALE,
            "sre_penalty": SRE_PENALTY,
        })
    }
}

/// The first joint breaks with probability [`BREAKAGE_RATE`] while inside
/// [`BREAKAGE_BAND`]; theta is the uniform trigger.
#[derive(Debug, Clone)]
pub struct ArmBreakage {
    geom: ArmGeometry,
    target: [f64; 2],
    policy_bounds: Bounds,
    env_bounds: Bounds,
    env: EnvDistribution,
}

pub fn arm_breakage_task() -> ArmBreakage {
    let geom = ArmGeometry::default();
    ArmBreakage {
        geom,
        target: arm_fk(&BREAKAGE_REFERENCE, &geom).tip(),
        policy_bounds: Bounds::unit(3),
        env_bounds: Bounds::unit(1),
        env: EnvDistribution::Continuous {
            sampler: EnvSampler::UniformBox { lower: vec![0.0], upper: vec![1.0] },
            mc_count: 200,
        },
    }
}

impl ArmBreakage {
    pub fn target(&self) -> [f64; 2] {
        self.target
    }

    fn in_band(pi: &[f64]) -> bool {
        (BREAKAGE_BAND.0..=BREAKAGE_BAND.1).contains(&pi[0])
    }

    pub fn distance_cost(&self, pi: &[f64]) -> f64 {
        DISTANCE_SCALE * arm_fk(pi, &self.geom).distance_to(self.target)
    }
}

impl Task for ArmBreakage {
    fn name(&self) -> &str {
        "arm-breakage"
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
        check_joints(pi, theta, 1)?;
        let penalty = if self.is_sre(pi, theta) { SRE_PENALTY } else { 0.0 };
        Ok(self.distance_cost(pi) + penalty)
    }

    fn is_sre(&self, pi: &[f64], theta: &[f64]) -> bool {
        Self::in_band(pi) && theta[0] < BREAKAGE_RATE
    }

    fn exact_fbar(&self, pi: &[f64]) -> Result<f64> {
        check_joints(pi, &[0.0], 1)?;
        Ok(self.distance_cost(pi) + SRE_PENALTY * self.sre_probability(pi)?)
    }

    fn sre_probability(&self, pi: &[f64]) -> Result<f64> {
        Ok(if Self::in_band(pi) { BREAKAGE_RATE } else { 0.0 })
    }

    fn hyper_priors(&self) -> HyperPriors {
        HyperPriors::arm()
    }

    fn default_kappa(&self) -> f64 {
        1.5
    }

    fn constants(&self) -> serde_json::Value {
        json!({
            "geometry": self.geom,
            "target": self.target,
            "reference_policy": BREAKAGE_REFERENCE,
            "band": [BREAKAGE_BAND.0, BREAKAGE_BAND.1],
            "rate": BREAKAGE_RATE,
            "mc_count": 200,
            "distance_scale": DISTANCE_SCALE,
            "sre_penalty": SRE_PENALTY,
        })
    }
}
