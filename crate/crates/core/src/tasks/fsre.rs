//! The one-dimensional synthetic functions F-SRE1 and F-SRE2.

use serde_json::json;

use super::{Bounds, Sense, Task};
use crate::error::{AloqError, Result};
use crate::gp::HyperPriors;
use crate::quadrature::EnvDistribution;

/// Tolerance for matching a theta value to a support point.
const SUPPORT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FSreKind {
    One,
    Two,
}

/// `(first point, step, count, probability)` for each run of support points.
type Segment = (f64, f64, usize, f64);

const FSRE1_SEGMENTS: [Segment; 2] = [(-1.0, 0.05, 21, 0.0047), (0.05, 0.05, 90, 0.01)];
const FSRE2_SEGMENTS: [Segment; 3] = [(-1.0, 0.02, 40, 0.012), (-0.2, 0.02, 21, 0.002), (0.22, 0.02, 40, 0.012)];

fn segments(kind: FSreKind) -> &'static [Segment] {
    match kind {
        FSreKind::One => &FSRE1_SEGMENTS,
        FSreKind::Two => &FSRE2_SEGMENTS,
    }
}

fn support(kind: FSreKind) -> (Vec<f64>, Vec<f64>) {
    let mut pts = Vec::new();
    let mut probs = Vec::new();
    for &(start, step, n, p) in segments(kind) {
        for j in 0..n {
            pts.push(start + step * j as f64);
            probs.push(p);
        }
    }
    (pts, probs)
}

fn on_support(kind: FSreKind, theta: f64) -> bool {
    segments(kind).iter().any(|&(start, step, n, _)| {
        let j = ((theta - start) / step).round();
        j >= 0.0 && j < n as f64 && (start + step * j - theta).abs() < SUPPORT_TOL
    })
}

fn fsre1_value(pi: f64, theta: f64) -> f64 {
    75.0 * pi * (-pi * pi - (4.0 * theta + 2.0).powi(2)).exp() + (2.0 * pi).sin() * (2.7 * theta).sin()
}

fn fsre2_value(pi: f64, theta: f64) -> f64 {
    pi.sin().powi(2) + 2.0 * theta.cos() + 200.0 * (2.0 * pi).cos() * (0.2 - theta.abs().min(0.2))
}

fn checked(kind: FSreKind, pi: f64, theta: f64) -> Result<()> {
    if !(-2.0..=2.0).contains(&pi) {
        return Err(AloqError::Domain(format!("policy {pi} outside [-2, 2]")));
    }
    if !on_support(kind, theta) {
        return Err(AloqError::Domain(format!("theta {theta} is not a support point")));
    }
    Ok(())
}

pub fn fsre1(pi: f64, theta: f64) -> Result<f64> {
    checked(FSreKind::One, pi, theta)?;
    Ok(fsre1_value(pi, theta))
}

pub fn fsre2(pi: f64, theta: f64) -> Result<f64> {
    checked(FSreKind::Two, pi, theta)?;
    Ok(fsre2_value(pi, theta))
}

#[derive(Debug, Clone)]
pub struct FSre {
    kind: FSreKind,
    policy_bounds: Bounds,
    env_bounds: Bounds,
    env: EnvDistribution,
    raw_probs: Vec<f64>,
}

impl FSre {
    pub fn new(kind: FSreKind) -> Self {
        let (pts, raw) = support(kind);
        let total: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|p| p / total).collect();
        let lo = pts[0];
        let hi = *pts.last().expect("non-empty support");
        FSre {
            kind,
            policy_bounds: Bounds::new(vec![-2.0], vec![2.0]),
            env_bounds: Bounds::new(vec![lo], vec![hi]),
            env: EnvDistribution::discrete(pts.into_iter().map(|t| vec![t]).collect(), probs).expect("valid support"),
            raw_probs: raw,
        }
    }

    pub fn kind(&self) -> FSreKind {
        self.kind
    }

    /// The probabilities as stated, before renormalization.
    pub fn raw_probs(&self) -> &[f64] {
        &self.raw_probs
    }

    pub fn raw_mass(&self) -> f64 {
        self.raw_probs.iter().sum()
    }

    /// Expected value under the unnormalized stated weights.
    pub fn raw_fbar(&self, pi: f64) -> Result<f64> {
        let EnvDistribution::Discrete { support, .. } = &self.env else { unreachable!() };
        let mut total = 0.0;
        for (t, p) in support.iter().zip(&self.raw_probs) {
            total += p * self.evaluate(&[pi], t)?;
        }
        Ok(total)
    }

    /// Best expected value on an evenly spaced policy grid of `n` points.
    pub fn grid_optimum(&self, n: usize) -> Result<(f64, f64)> {
        let mut best = (f64::NAN, f64::NEG_INFINITY);
        for i in 0..n {
            let pi = -2.0 + 4.0 * i as f64 / (n - 1) as f64;
            let v = self.exact_fbar(&[pi])?;
            if v > best.1 {
                best = (pi, v);
            }
        }
        Ok(best)
    }
}

impl Task for FSre {
    fn name(&self) -> &str {
        match self.kind {
            FSreKind::One => "fsre1",
            FSreKind::Two => "fsre2",
        }
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
        Sense::Maximize
    }

    fn evaluate(&self, pi: &[f64], theta: &[f64]) -> Result<f64> {
        if pi.len() != 1 || theta.len() != 1 {
            return Err(AloqError::Domain("F-SRE tasks take scalar pi and theta".into()));
        }
        match self.kind {
            FSreKind::One => fsre1(pi[0], theta[0]),
            FSreKind::Two => fsre2(pi[0], theta[0]),
        }
    }

    /// The rare region is the low-mass run of the support.
    fn is_sre(&self, _pi: &[f64], theta: &[f64]) -> bool {
        match self.kind {
            FSreKind::One => theta[0] <= SUPPORT_TOL,
            FSreKind::Two => theta[0].abs() < 0.2 + SUPPORT_TOL,
        }
    }

    fn hyper_priors(&self) -> HyperPriors {
        HyperPriors::synthetic()
    }

    fn default_kappa(&self) -> f64 {
        3.0
    }

    fn constants(&self) -> serde_json::Value {
        json!({
            "segments": segments(self.kind)
                .iter()
                .map(|&(start, step, n, p)| json!({"start": start, "step": step, "count": n, "prob": p}))
                .collect::<Vec<_>>(),
            "raw_mass": self.raw_mass(),
            "policy_bounds": self.policy_bounds,
        })
    }
}
