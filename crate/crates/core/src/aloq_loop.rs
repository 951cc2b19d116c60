//! The alternating optimisation/quadrature loop and its ablations.

use std::rc::Rc;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{argmax_over_set, direct_maximize, ucb, DirectConfig};
use crate::error::{AloqError, Result};
use crate::gp::{Dataset, GpPosterior, HyperChain, HyperSample, HyperSpace, InputPoint, LogNormalPrior};
use crate::quadrature::{EnvDistribution, FbarModel, MarginalEstimate, QuadratureRule};
use crate::tasks::Task;

/// Noise prior for the single-input GP, where theta shows up as noise.
const NAIVE_NOISE_PRIOR: LogNormalPrior = LogNormalPrior::new(-2.0, 1.5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Aloq,
    RqAloq,
    Unwarped,
    OneStep,
    Naive,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::Aloq, Variant::RqAloq, Variant::Unwarped, Variant::OneStep, Variant::Naive];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Aloq => "aloq",
            Variant::RqAloq => "rq-aloq",
            Variant::Unwarped => "unwarped",
            Variant::OneStep => "one-step",
            Variant::Naive => "naive",
        }
    }

    /// Two simulator calls per iteration, the second on the incumbent.
    pub fn intensifies(self) -> bool {
        matches!(self, Variant::Aloq | Variant::RqAloq | Variant::Unwarped)
    }

    fn active_theta(self) -> bool {
        matches!(self, Variant::Aloq | Variant::Unwarped | Variant::OneStep)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = AloqError;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| AloqError::Unknown { kind: "variant", name: s.into() })
    }
}

/// Slice-sampling effort for the hyperparameter chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainSizes {
    /// Sweeps discarded before the first fit of a run.
    pub initial_burn_in: usize,
    /// Sweeps discarded at each later refresh.
    pub burn_in: usize,
    pub n_samples: usize,
    pub thinning: usize,
}

impl ChainSizes {
    pub const STANDARD: ChainSizes = ChainSizes { initial_burn_in: 50, burn_in: 50, n_samples: 10, thinning: 5 };
    /// Leaner refreshes that lean on the warm start.
    pub const REDUCED: ChainSizes = ChainSizes { initial_burn_in: 50, burn_in: 2, n_samples: 5, thinning: 1 };
}

impl Default for ChainSizes {
    fn default() -> Self {
        ChainSizes::STANDARD
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Total simulator calls `L`.
    pub budget: usize,
    /// Initial design size; `4 * (d_pi + d_theta)` when unset.
    pub init_size: Option<usize>,
    pub seed: u64,
    pub variant: Variant,
    /// Overrides the task's default exploration weight.
    pub kappa: Option<f64>,
    pub direct: DirectConfig,
    pub chain: ChainSizes,
    /// Overrides the Monte Carlo size of a continuous environment.
    pub mc_count: Option<usize>,
}

impl RunConfig {
    pub fn new(variant: Variant, budget: usize, seed: u64) -> Self {
        RunConfig {
            budget,
            init_size: None,
            seed,
            variant,
            kappa: None,
            direct: DirectConfig::default(),
            chain: ChainSizes::default(),
            mc_count: None,
        }
    }

    pub fn init_size_for(&self, task: &dyn Task) -> usize {
        self.init_size.unwrap_or(4 * (task.d_policy() + task.d_env()))
    }

    pub fn validate(&self, task: &dyn Task) -> Result<()> {
        let l0 = self.init_size_for(task);
        if l0 < 2 {
            return Err(AloqError::Config(format!("initial design size {l0} is below 2")));
        }
        if self.budget < l0 {
            return Err(AloqError::Config(format!("budget {} is below the initial design {l0}", self.budget)));
        }
        if self.variant.intensifies() && !(self.budget - l0).is_multiple_of(2) {
            return Err(AloqError::Config(format!(
                "{} makes two calls per iteration; budget - initial design = {} is odd",
                self.variant,
                self.budget - l0
            )));
        }
        if let Some(k) = self.kappa {
            if !(k >= 0.0 && k.is_finite()) {
                return Err(AloqError::Config(format!("kappa {k} must be nonnegative")));
            }
        }
        if self.chain.n_samples == 0 || self.chain.thinning == 0 {
            return Err(AloqError::Config("hyper chain needs n_samples and thinning >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Init,
    Explore,
    Intensify,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Init => "init",
            Phase::Explore => "explore",
            Phase::Intensify => "intensify",
        }
    }
}

/// One simulator call and the incumbent right after it, in task units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub call: usize,
    pub phase: Phase,
    pub policy: Vec<f64>,
    pub theta: Vec<f64>,
    pub value: f64,
    /// Time since the previous call finished, modelling included.
    pub wall_ms: f64,
    pub incumbent: Vec<f64>,
    /// Model estimate of `fbar` at the incumbent; the raw return during the
    /// initial design.
    pub incumbent_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub task: String,
    pub variant: Variant,
    pub seed: u64,
    pub calls: Vec<CallRecord>,
    pub final_policy: Vec<f64>,
    pub final_estimate: f64,
    pub warnings: Vec<String>,
}

pub fn run(task: &dyn Task, config: &RunConfig) -> Result<Trace> {
    config.validate(task)?;
    Runner::new(task, config)?.run()
}

pub fn run_aloq(task: &dyn Task, config: &RunConfig) -> Result<Trace> {
    run(task, &RunConfig { variant: Variant::Aloq, ..config.clone() })
}

pub fn run_rq_aloq(task: &dyn Task, config: &RunConfig) -> Result<Trace> {
    run(task, &RunConfig { variant: Variant::RqAloq, ..config.clone() })
}

pub fn run_one_step(task: &dyn Task, config: &RunConfig) -> Result<Trace> {
    run(task, &RunConfig { variant: Variant::OneStep, ..config.clone() })
}

pub fn run_unwarped(task: &dyn Task, config: &RunConfig) -> Result<Trace> {
    run(task, &RunConfig { variant: Variant::Unwarped, ..config.clone() })
}

pub fn run_naive(task: &dyn Task, config: &RunConfig) -> Result<Trace> {
    run(task, &RunConfig { variant: Variant::Naive, ..config.clone() })
}

/// Latin hypercube of `n` points in the unit cube.
pub fn latin_hypercube<R: Rng + ?Sized>(n: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; dim]; n];
    for d in 0..dim {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (p, s) in pts.iter_mut().zip(strata) {
            p[d] = (s as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    pts
}

/// Affine map of rewards to zero mean and unit variance.
#[derive(Debug, Clone, Copy)]
struct Scale {
    shift: f64,
    scale: f64,
}

impl Scale {
    fn of(ys: &[f64]) -> Self {
        let n = ys.len() as f64;
        let shift = ys.iter().sum::<f64>() / n;
        let var = ys.iter().map(|y| (y - shift).powi(2)).sum::<f64>() / n;
        let scale = if var.sqrt() > 1e-12 * shift.abs().max(1.0) { var.sqrt() } else { 1.0 };
        Scale { shift, scale }
    }

    fn apply(&self, data: &Dataset) -> Dataset {
        data.map_returns(|y| (y - self.shift) / self.scale)
    }

    fn undo(&self, y: f64) -> f64 {
        y * self.scale + self.shift
    }
}

struct Runner<'a> {
    task: &'a dyn Task,
    cfg: &'a RunConfig,
    variant: Variant,
    kappa: f64,
    env: EnvDistribution,
    /// Quadrature nodes in task units and in the unit box.
    rule: QuadratureRule,
    rule_unit: Rc<QuadratureRule>,
    env_rng: ChaCha8Rng,
    design_rng: ChaCha8Rng,
    chain: HyperChain,
    hypers: Vec<HyperSample>,
    chain_started: bool,
    /// Rewards (maximized) on unit-box inputs.
    data: Dataset,
    /// Distinct observed policies in the unit box.
    policies: Vec<Vec<f64>>,
    calls: Vec<CallRecord>,
    clock: Instant,
}

impl<'a> Runner<'a> {
    fn new(task: &'a dyn Task, cfg: &'a RunConfig) -> Result<Self> {
        let mut env = task.env().clone();
        if let (Some(n), EnvDistribution::Continuous { mc_count, .. }) = (cfg.mc_count, &mut env) {
            *mc_count = n;
        }
        env.validate()?;
        let stream = |k: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
            r.set_stream(k);
            r
        };
        let mut env_rng = stream(1);
        let rule = env.rule(&mut env_rng);
        let bounds = task.env_bounds();
        let rule_unit = Rc::new(rule.map_points(|t| bounds.to_unit(t)));

        let naive = cfg.variant == Variant::Naive;
        let mut priors = task.hyper_priors();
        if cfg.variant == Variant::Unwarped {
            priors = priors.unwarped();
        }
        if naive {
            priors = priors.with_learned_noise(NAIVE_NOISE_PRIOR);
        }
        let (dp, de) = (task.d_policy(), if naive { 0 } else { task.d_env() });
        let chain = HyperChain::new(HyperSpace::new(dp + de, priors), stream(3).random());

        Ok(Runner {
            task,
            cfg,
            variant: cfg.variant,
            kappa: cfg.kappa.unwrap_or_else(|| task.default_kappa()),
            env,
            rule,
            rule_unit,
            env_rng,
            design_rng: stream(2),
            chain,
            hypers: Vec::new(),
            chain_started: false,
            data: Dataset::new(dp, de),
            policies: Vec::new(),
            calls: Vec::new(),
            clock: Instant::now(),
        })
    }

    fn sign(&self) -> f64 {
        self.task.sense().sign()
    }

    fn policy_units(&self, z: &[f64]) -> Vec<f64> {
        self.task.policy_bounds().from_unit(z)
    }

    /// Calls the simulator and stores the result; returns the task value.
    fn simulate(&mut self, z: &[f64], theta: &[f64]) -> Result<(Vec<f64>, f64)> {
        let pi = self.policy_units(z);
        let value = self.task.evaluate(&pi, theta)?;
        if !value.is_finite() {
            return Err(AloqError::Simulator { pi, theta: theta.to_vec(), reason: "non-finite return".into() });
        }
        let env = if self.variant == Variant::Naive { Vec::new() } else { self.task.env_bounds().to_unit(theta) };
        self.data.push(InputPoint::new(z.to_vec(), env), self.sign() * value)?;
        if !self.policies.iter().any(|p| p.as_slice() == z) {
            self.policies.push(z.to_vec());
        }
        Ok((pi, value))
    }

    fn record(&mut self, phase: Phase, pi: Vec<f64>, theta: &[f64], value: f64, incumbent: (Vec<f64>, f64)) {
        let now = Instant::now();
        let wall_ms = now.duration_since(self.clock).as_secs_f64() * 1e3;
        self.clock = now;
        self.calls.push(CallRecord {
            call: self.calls.len() + 1,
            phase,
            policy: pi,
            theta: theta.to_vec(),
            value,
            wall_ms,
            incumbent: self.policy_units(&incumbent.0),
            incumbent_estimate: incumbent.1,
        });
    }

    fn refresh_hypers(&mut self) -> Result<()> {
        let s = self.cfg.chain;
        let burn = if self.chain_started { s.burn_in } else { s.initial_burn_in };
        let scaled = Scale::of(self.data.returns()).apply(&self.data);
        self.hypers = self.chain.refresh(&scaled, burn, s.n_samples, s.thinning)?;
        self.chain_started = true;
        Ok(())
    }

    fn fit(&self) -> Result<(GpPosterior, Scale)> {
        let scale = Scale::of(self.data.returns());
        Ok((GpPosterior::fit(&scale.apply(&self.data), &self.hypers)?, scale))
    }

    /// Observed policy with the best estimated `fbar`, as (unit policy, task value).
    fn bq_incumbent(&self, model: &FbarModel<'_>, scale: Scale) -> Result<(Vec<f64>, f64)> {
        let (i, m) = argmax_over_set(&self.policies, |p| model.mean(p))?;
        Ok((self.policies[i].clone(), self.sign() * scale.undo(m)))
    }

    fn naive_predict(post: &GpPosterior, z: &[f64]) -> Result<MarginalEstimate> {
        let (m, v) = post.predict_marginal(&[InputPoint::new(z.to_vec(), Vec::new())])?;
        Ok(MarginalEstimate::new(m[0], v[0]))
    }

    fn naive_incumbent(&self, post: &GpPosterior, scale: Scale) -> Result<(Vec<f64>, f64)> {
        let (i, m) = argmax_over_set(&self.policies, |p| Ok(Self::naive_predict(post, p)?.mean))?;
        Ok((self.policies[i].clone(), self.sign() * scale.undo(m)))
    }

    fn incumbent_now(&self) -> Result<(Vec<f64>, f64)> {
        let (post, scale) = self.fit()?;
        if self.variant == Variant::Naive {
            return self.naive_incumbent(&post, scale);
        }
        let model = FbarModel::new(&post, &self.rule_unit)?;
        self.bq_incumbent(&model, scale)
    }

    fn draw_theta(&mut self) -> Vec<f64> {
        self.env.sample(&mut self.env_rng)
    }

    fn choose_theta(&mut self, model: &FbarModel<'_>, z: &[f64]) -> Result<Vec<f64>> {
        if self.variant.active_theta() {
            Ok(self.rule.points[model.select_theta(z)?].clone())
        } else {
            Ok(self.draw_theta())
        }
    }

    fn initial_design(&mut self) -> Result<()> {
        let l0 = self.cfg.init_size_for(self.task);
        let design = latin_hypercube(l0, self.task.d_policy(), &mut self.design_rng);
        let mut best: Option<(Vec<f64>, f64)> = None;
        for z in design {
            let theta = self.draw_theta();
            let (pi, value) = self.simulate(&z, &theta)?;
            if best.as_ref().is_none_or(|b| self.sign() * value > self.sign() * b.1) {
                best = Some((z.clone(), value));
            }
            self.record(Phase::Init, pi, &theta, value, best.clone().expect("set above"));
        }
        Ok(())
    }

    fn bq_iteration(&mut self) -> Result<()> {
        self.refresh_hypers()?;
        let rule = Rc::clone(&self.rule_unit);
        let (post, _) = self.fit()?;
        let model = FbarModel::new(&post, &rule)?;
        let kappa = self.kappa;
        let best = direct_maximize(|z| Ok(ucb(model.moments(z)?, kappa)), self.task.d_policy(), &self.cfg.direct)?;
        let z = best.argmax;
        let theta = self.choose_theta(&model, &z)?;
        let (pi, value) = self.simulate(&z, &theta)?;

        let (post, scale) = self.fit()?;
        let model = FbarModel::new(&post, &rule)?;
        let inc = self.bq_incumbent(&model, scale)?;
        self.record(Phase::Explore, pi, &theta, value, inc.clone());

        if self.variant.intensifies() && self.calls.len() < self.cfg.budget {
            let theta = self.choose_theta(&model, &inc.0)?;
            let (pi, value) = self.simulate(&inc.0, &theta)?;
            let inc = self.incumbent_now()?;
            self.record(Phase::Intensify, pi, &theta, value, inc);
        }
        Ok(())
    }

    fn naive_iteration(&mut self) -> Result<()> {
        self.refresh_hypers()?;
        let (post, _) = self.fit()?;
        let kappa = self.kappa;
        let best = direct_maximize(
            |z| Ok(ucb(Self::naive_predict(&post, z)?, kappa)),
            self.task.d_policy(),
            &self.cfg.direct,
        )?;
        let theta = self.draw_theta();
        let (pi, value) = self.simulate(&best.argmax, &theta)?;
        let inc = self.incumbent_now()?;
        self.record(Phase::Explore, pi, &theta, value, inc);
        Ok(())
    }

    fn run(mut self) -> Result<Trace> {
        self.initial_design()?;
        while self.calls.len() < self.cfg.budget {
            if self.variant == Variant::Naive {
                self.naive_iteration()?;
            } else {
                self.bq_iteration()?;
            }
        }
        let (final_policy, final_estimate) = if self.chain_started {
            let last = self.calls.last().expect("budget >= 2");
            (self.task.policy_bounds().to_unit(&last.incumbent), last.incumbent_estimate)
        } else {
            self.refresh_hypers()?;
            self.incumbent_now()?
        };
        Ok(Trace {
            task: self.task.name().to_string(),
            variant: self.variant,
            seed: self.cfg.seed,
            final_policy: self.policy_units(&final_policy),
            final_estimate,
            calls: self.calls,
            warnings: self.task.warnings(),
        })
    }
}

#[cfg(test)]
mod tests;
