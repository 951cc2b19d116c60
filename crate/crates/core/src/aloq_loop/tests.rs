use proptest::prelude::*;
use serde_json::json;

use super::*;
use crate::gp::HyperPriors;
use crate::tasks::{task_by_name, Bounds, Sense};

const QUICK: ChainSizes = ChainSizes { initial_burn_in: 5, burn_in: 1, n_samples: 2, thinning: 1 };

fn quick(variant: Variant, budget: usize, seed: u64) -> RunConfig {
    RunConfig {
        chain: QUICK,
        direct: DirectConfig { budget: 60, ..DirectConfig::default() },
        ..RunConfig::new(variant, budget, seed)
    }
}

/// `f(pi, theta) = -(pi - 0.3)^2 + c * theta` on a small discrete support.
struct Bowl {
    policy: Bounds,
    env_bounds: Bounds,
    env: EnvDistribution,
    coupling: f64,
}

impl Bowl {
    fn new(support: Vec<f64>, coupling: f64) -> Self {
        let n = support.len();
        Bowl {
            policy: Bounds::unit(1),
            env_bounds: Bounds::unit(1),
            env: EnvDistribution::discrete(support.into_iter().map(|t| vec![t]).collect(), vec![1.0 / n as f64; n])
                .unwrap(),
            coupling,
        }
    }
}

impl Task for Bowl {
    fn name(&self) -> &str {
        "bowl"
    }
    fn policy_bounds(&self) -> &Bounds {
        &self.policy
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
        Ok(-(pi[0] - 0.3).powi(2) + self.coupling * theta[0])
    }
    fn is_sre(&self, _: &[f64], _: &[f64]) -> bool {
        false
    }
    fn hyper_priors(&self) -> HyperPriors {
        HyperPriors::arm()
    }
    fn default_kappa(&self) -> f64 {
        1.5
    }
    fn constants(&self) -> serde_json::Value {
        json!({ "coupling": self.coupling })
    }
}

fn without_times(mut t: Trace) -> Trace {
    for c in &mut t.calls {
        c.wall_ms = 0.0;
    }
    t
}

#[test]
fn variant_names_round_trip() {
    for v in Variant::ALL {
        assert_eq!(v.name().parse::<Variant>().unwrap(), v);
    }
    assert!("wsn".parse::<Variant>().is_err());
}

#[test]
fn budget_equal_to_design_runs_no_iterations() {
    let task = task_by_name("fsre2", 0).unwrap();
    let trace = run_aloq(task.as_ref(), &quick(Variant::Aloq, 8, 1)).unwrap();
    assert_eq!(trace.calls.len(), 8);
    assert!(trace.calls.iter().all(|c| c.phase == Phase::Init));
    assert!(trace.calls.iter().any(|c| c.policy == trace.final_policy));
}

#[test]
fn every_variant_spends_exactly_the_budget() {
    let task = task_by_name("fsre2", 0).unwrap();
    for v in Variant::ALL {
        let trace = run(task.as_ref(), &quick(v, 14, 2)).unwrap();
        assert_eq!(trace.calls.len(), 14, "{v}");
        let idx: Vec<usize> = trace.calls.iter().map(|c| c.call).collect();
        assert_eq!(idx, (1..=14).collect::<Vec<_>>());
        assert_eq!(trace.variant, v);
    }
}

#[test]
fn explore_and_intensify_alternate() {
    let task = task_by_name("fsre1", 0).unwrap();
    let trace = run_aloq(task.as_ref(), &quick(Variant::Aloq, 16, 3)).unwrap();
    let phases: Vec<Phase> = trace.calls[8..].iter().map(|c| c.phase).collect();
    for (i, p) in phases.iter().enumerate() {
        assert_eq!(*p, if i % 2 == 0 { Phase::Explore } else { Phase::Intensify });
    }
    for (i, c) in trace.calls.iter().enumerate() {
        if c.phase == Phase::Intensify {
            assert!(trace.calls[..i].iter().any(|p| p.policy == c.policy));
        }
        if c.phase != Phase::Init {
            assert!(trace.calls[..=i].iter().any(|p| p.policy == c.incumbent));
        }
    }
}

#[test]
fn one_step_never_intensifies() {
    let task = task_by_name("fsre2", 0).unwrap();
    let trace = run_one_step(task.as_ref(), &quick(Variant::OneStep, 13, 3)).unwrap();
    assert!(trace.calls.iter().all(|c| c.phase != Phase::Intensify));
}

#[test]
fn runs_are_deterministic() {
    let task = task_by_name("fsre2", 0).unwrap();
    for v in [Variant::Aloq, Variant::Naive] {
        let a = without_times(run(task.as_ref(), &quick(v, 12, 9)).unwrap());
        let b = without_times(run(task.as_ref(), &quick(v, 12, 9)).unwrap());
        assert_eq!(a, b);
    }
}

#[test]
fn one_step_matches_aloq_through_first_explore() {
    let task = task_by_name("fsre1", 0).unwrap();
    let a = run_aloq(task.as_ref(), &quick(Variant::Aloq, 12, 4)).unwrap();
    let b = run_one_step(task.as_ref(), &quick(Variant::OneStep, 12, 4)).unwrap();
    for (x, y) in a.calls.iter().zip(&b.calls).take(9) {
        assert_eq!((&x.policy, &x.theta, x.value), (&y.policy, &y.theta, y.value));
    }
}

#[test]
fn single_support_point_makes_rq_identical() {
    let task = Bowl::new(vec![0.4], 1.0);
    let cfg = RunConfig { init_size: Some(4), ..quick(Variant::Aloq, 10, 5) };
    let a = without_times(run_aloq(&task, &cfg).unwrap());
    let b = without_times(run_rq_aloq(&task, &cfg).unwrap());
    let thetas = |t: &Trace| t.calls.iter().map(|c| c.theta.clone()).collect::<Vec<_>>();
    assert_eq!(thetas(&a), thetas(&b));
    assert!(thetas(&a).iter().all(|t| t == &vec![0.4]));
}

#[test]
fn unwarped_chain_carries_no_warp() {
    let task = task_by_name("fsre1", 0).unwrap();
    let cfg = quick(Variant::Unwarped, 10, 6);
    let mut runner = Runner::new(task.as_ref(), &cfg).unwrap();
    runner.initial_design().unwrap();
    runner.refresh_hypers().unwrap();
    assert!(runner.hypers.iter().all(|h| h.warp.is_none()));

    let cfg = quick(Variant::Aloq, 10, 6);
    let mut runner = Runner::new(task.as_ref(), &cfg).unwrap();
    runner.initial_design().unwrap();
    runner.refresh_hypers().unwrap();
    assert!(runner.hypers.iter().all(|h| h.warp.is_some()));
}

#[test]
fn naive_model_sees_policy_only() {
    let task = task_by_name("arm-collision", 0).unwrap();
    let cfg = quick(Variant::Naive, 20, 7);
    let mut runner = Runner::new(task.as_ref(), &cfg).unwrap();
    runner.initial_design().unwrap();
    assert_eq!(runner.data.dim(), task.d_policy());
    runner.refresh_hypers().unwrap();
    assert!(runner.hypers.iter().all(|h| h.kernel.dim() == 3));
}

#[test]
fn theta_independent_task_agrees_across_models() {
    let task = Bowl::new(vec![0.1, 0.5, 0.9], 0.0);
    let cfg = RunConfig { init_size: Some(5), ..quick(Variant::Aloq, 25, 8) };
    let a = run_aloq(&task, &cfg).unwrap();
    let b = run_naive(&task, &RunConfig { variant: Variant::Naive, ..cfg }).unwrap();
    // grid oracle: the argmax of -(pi - 0.3)^2 on a 101-point grid is 0.3
    for t in [&a, &b] {
        assert!((t.final_policy[0] - 0.3).abs() < 0.05, "{:?}", t.final_policy);
    }
}

#[test]
fn configuration_errors() {
    let task = task_by_name("fsre2", 0).unwrap();
    assert!(run(task.as_ref(), &quick(Variant::Aloq, 13, 0)).is_err());
    assert!(run(task.as_ref(), &quick(Variant::Aloq, 6, 0)).is_err());
    assert!(run(task.as_ref(), &RunConfig { init_size: Some(1), ..quick(Variant::Naive, 6, 0) }).is_err());
    assert!(run(task.as_ref(), &RunConfig { kappa: Some(-1.0), ..quick(Variant::Naive, 9, 0) }).is_err());
    // one call per iteration makes odd remainders fine
    assert!(run(task.as_ref(), &quick(Variant::OneStep, 9, 0)).is_ok());
}

#[test]
fn continuous_env_rule_size_override() {
    let task = task_by_name("arm-breakage", 0).unwrap();
    let cfg = RunConfig { mc_count: Some(150), ..quick(Variant::Aloq, 16, 0) };
    let runner = Runner::new(task.as_ref(), &cfg).unwrap();
    assert_eq!(runner.rule.len(), 150);
    let cfg = RunConfig { mc_count: Some(10), ..cfg };
    assert!(Runner::new(task.as_ref(), &cfg).is_err());
}

proptest! {
    #[test]
    fn latin_hypercube_hits_every_stratum(n in 1usize..40, dim in 1usize..5, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = latin_hypercube(n, dim, &mut rng);
        for d in 0..dim {
            let mut strata: Vec<usize> = pts.iter().map(|p| (p[d] * n as f64).floor() as usize).collect();
            strata.sort_unstable();
            prop_assert_eq!(strata, (0..n).collect::<Vec<_>>());
        }
    }
}
