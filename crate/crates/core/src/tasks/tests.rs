use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::quadrature::EnvDistribution;

fn discrete(task: &dyn Task) -> (Vec<Vec<f64>>, Vec<f64>) {
    match task.env() {
        EnvDistribution::Discrete { support, probs } => (support.clone(), probs.clone()),
        _ => panic!("expected a discrete env"),
    }
}

#[test]
fn fsre1_values() {
    for t in [-1.0, -0.5, 0.0, 2.0] {
        assert_eq!(fsre1(0.0, t).unwrap(), 0.0);
    }
    let expected = 75.0 / std::f64::consts::E + 2f64.sin() * (-1.35f64).sin();
    let v = fsre1(1.0, -0.5).unwrap();
    assert!((v - expected).abs() < 1e-12);
    assert!((v - 26.69).abs() < 0.02);
}

#[test]
fn fsre2_values() {
    assert_eq!(fsre2(0.0, 0.0).unwrap(), 42.0);
    for pi in [-1.3, 0.2, 1.9] {
        let v = fsre2(pi, 0.5).unwrap();
        assert!((v - (pi.sin().powi(2) + 2.0 * 0.5f64.cos())).abs() < 1e-12);
    }
}

#[test]
fn off_support_and_out_of_box_are_errors() {
    assert!(fsre1(0.3, 0.01).is_err());
    assert!(fsre1(0.3, 4.55).is_err());
    assert!(fsre2(0.3, 0.21).is_err());
    assert!(fsre2(2.5, 0.0).is_err());
}

#[test]
fn fsre_support_masses() {
    let one = FSre::new(FSreKind::One);
    let two = FSre::new(FSreKind::Two);
    assert_eq!(one.raw_probs().len(), 111);
    assert_eq!(two.raw_probs().len(), 101);
    assert!((one.raw_mass() - 0.9987).abs() < 1e-12);
    assert!((two.raw_mass() - 1.002).abs() < 1e-12);
    assert_eq!(one.raw_probs().iter().filter(|p| **p == 0.0047).count(), 21);
    assert_eq!(two.raw_probs().iter().filter(|p| **p == 0.002).count(), 21);
    for t in [&one, &two] {
        let (_, probs) = discrete(t);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn renormalization_keeps_grid_argmax() {
    for kind in [FSreKind::One, FSreKind::Two] {
        let task = FSre::new(kind);
        let n = 4001;
        let mut best_raw = (0, f64::NEG_INFINITY);
        let mut best_norm = (0, f64::NEG_INFINITY);
        for i in 0..n {
            let pi = -2.0 + 4.0 * i as f64 / (n - 1) as f64;
            let r = task.raw_fbar(pi).unwrap();
            let v = task.exact_fbar(&[pi]).unwrap();
            assert!((r / task.raw_mass() - v).abs() < 1e-10);
            if r > best_raw.1 {
                best_raw = (i, r);
            }
            if v > best_norm.1 {
                best_norm = (i, v);
            }
        }
        assert_eq!(best_raw.0, best_norm.0);
        assert_eq!(task.grid_optimum(n).unwrap().1, best_norm.1);
    }
}

#[test]
fn exact_fbar_is_weighted_sum_for_discrete_tasks() {
    let tasks: Vec<Box<dyn Task>> =
        vec![Box::new(FSre::new(FSreKind::One)), Box::new(FSre::new(FSreKind::Two)), Box::new(arm_collision_task())];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for task in &tasks {
        let (support, probs) = discrete(task.as_ref());
        for _ in 0..100 {
            let z: Vec<f64> = (0..task.d_policy()).map(|_| rng.random()).collect();
            let pi = task.policy_bounds().from_unit(&z);
            let mut oracle = 0.0;
            for (t, p) in support.iter().zip(&probs) {
                oracle += p * task.evaluate(&pi, t).unwrap();
            }
            let v = task.exact_fbar(&pi).unwrap();
            assert!((v - oracle).abs() <= 1e-12 * oracle.abs().max(1.0));
        }
    }
}

/// Tip by composing homogeneous 2-D transforms link by link.
fn matrix_chain_tip(joints: &[f64], geom: &ArmGeometry) -> [f64; 2] {
    let angles = geom.angles(joints);
    let mut m = [[1.0, 0.0, geom.base[0]], [0.0, 1.0, geom.base[1]], [0.0, 0.0, 1.0]];
    for (i, angle) in angles.iter().enumerate() {
        let (s, c) = angle.sin_cos();
        let rot = [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]];
        let tr = [[1.0, 0.0, geom.links[i]], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        m = mul(&mul(&m, &rot), &tr);
    }
    [m[0][2], m[1][2]]
}

fn mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|k| a[i][k] * b[k][j]).sum()))
}

#[test]
fn fk_matches_matrix_chain() {
    let geom = ArmGeometry::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let j: Vec<f64> = (0..3).map(|_| rng.random()).collect();
        let tip = arm_fk(&j, &geom).tip();
        let oracle = matrix_chain_tip(&j, &geom);
        assert!((tip[0] - oracle[0]).abs() < 1e-12 && (tip[1] - oracle[1]).abs() < 1e-12);
    }
}

#[test]
fn zero_angles_extend_along_x() {
    let geom = ArmGeometry::default();
    let pose = arm_fk(&geom.zero_angle_preimage(), &geom);
    let reach: f64 = geom.links.iter().sum();
    assert!((pose.tip()[0] - geom.base[0] - reach).abs() < 1e-12);
    assert!(pose.tip()[1].abs() < 1e-12);
}

#[test]
fn arm_reach_interval() {
    let geom = ArmGeometry::default();
    let n = 100;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let j = [a as f64 / (n - 1) as f64, b as f64 / (n - 1) as f64, c as f64 / (n - 1) as f64];
                let x = arm_fk(&j, &geom).tip()[0];
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
    }
    assert!((lo + 0.54).abs() < 1e-2, "min reach {lo}");
    assert!((hi - 0.89).abs() < 1e-2, "max reach {hi}");
}

#[test]
fn collision_reference_mass() {
    let task = arm_collision_task();
    let pi = ArmCollision::reference_policy();
    let (walls, probs) = discrete(&task);
    assert_eq!(walls.len(), 20);
    assert!((walls[0][0] + 0.2).abs() < 1e-12 && (walls[19][0] - 0.14).abs() < 1e-12);
    assert!(walls.windows(2).all(|w| w[1][0] > w[0][0]));
    let hit: f64 = walls.iter().zip(&probs).filter(|(w, _)| task.is_sre(&pi, w)).map(|(_, p)| p).sum();
    assert!((hit - 0.12).abs() < 1e-12);
    assert!((task.sre_probability(&pi).unwrap() - 0.12).abs() < 1e-12);
    // the target is the reference tip
    assert!(task.distance_cost(&pi) < 1e-12);
}

#[test]
fn retracted_arm_pays_distance_only() {
    let task = arm_collision_task();
    let pi = [0.0, 1.0, 1.0];
    assert!(arm_fk(&pi, task.geometry()).max_x() < -0.2);
    let (walls, _) = discrete(&task);
    for w in &walls {
        assert_eq!(task.evaluate(&pi, w).unwrap(), task.distance_cost(&pi));
    }
    assert_eq!(task.sre_probability(&pi).unwrap(), 0.0);
}

#[test]
fn breakage_expectation() {
    let task = arm_breakage_task();
    let outside = [0.1, 0.5, 0.5];
    let a = task.evaluate(&outside, &[0.01]).unwrap();
    let b = task.evaluate(&outside, &[0.9]).unwrap();
    assert_eq!(a, b);
    assert_eq!(task.sre_probability(&outside).unwrap(), 0.0);

    let inside = [0.5, 0.3, 0.7];
    let exact = task.exact_fbar(&inside).unwrap();
    assert!((exact - (task.distance_cost(&inside) + 0.05 * SRE_PENALTY)).abs() < 1e-12);
    assert_eq!(task.sre_probability(&inside).unwrap(), 0.05);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 100_000;
    let draws: Vec<f64> = (0..n).map(|_| task.evaluate(&inside, &[rng.random()]).unwrap()).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!((mean - exact).abs() < 3.0 * (var / n as f64).sqrt());
}

#[test]
fn torque_damage_threshold() {
    let task = arm_torque_task(&TorqueConfig::default()).unwrap();
    assert!(!task.is_sre(&[0.4, 0.4, 0.4], &[0.5]));
    assert!(task.is_sre(&[0.4, 0.6, 0.4], &[0.55]));
    let safe = task.evaluate(&[0.4, 0.4, 0.4], &[0.5]).unwrap();
    assert!(safe < SRE_PENALTY);
    // saturated joints plus the penalty
    let broken = task.evaluate(&[0.9, 0.9, 0.9], &[0.6]).unwrap();
    let saturated = task.evaluate(&[0.6, 0.6, 0.6], &[0.6]).unwrap();
    assert!((broken - saturated - SRE_PENALTY).abs() < 1e-12);
}

#[test]
fn torque_best_pose_needs_full_stroke_on_joint_one() {
    let task = arm_torque_task(&TorqueConfig::default()).unwrap();
    let theta = 0.8;
    let links: f64 = 3.0 * 0.477;
    let best = task.evaluate(&[theta, theta / 2.0, theta / 2.0], &[theta]).unwrap();
    assert!((best - DISTANCE_SCALE * 0.15 * links).abs() < 1e-9);
    let n = 24;
    for i in 0..=n {
        for j in 0..=n {
            for k in 0..=n {
                let pi = [i as f64 / n as f64, j as f64 / n as f64, k as f64 / n as f64];
                if !task.is_sre(&pi, &[theta]) {
                    assert!(task.evaluate(&pi, &[theta]).unwrap() >= best - 1e-9);
                }
            }
        }
    }
    // backing joint 1 off a little costs far less than a breakage
    let backed = task.evaluate(&[theta - 0.05, theta / 2.0, theta / 2.0], &[theta]).unwrap();
    assert!(backed - best < 0.1 * SRE_PENALTY);
}

#[test]
fn torque_posterior_concentrates_without_noise() {
    let cfg = TorqueConfig { seed: 11, noise_sd: 1e-3, ..TorqueConfig::default() };
    let task = arm_torque_task(&cfg).unwrap();
    let truth = task.true_theta();
    let samples = task.evaluation_samples();
    assert_eq!(samples.len(), 400);
    let near = samples.iter().filter(|t| (**t - truth).abs() <= 0.02).count();
    assert!(near as f64 >= 0.95 * samples.len() as f64, "{near} of {} near {truth}", samples.len());
    assert!((task.posterior_mode() - truth).abs() <= 0.02);
}

#[test]
fn torque_env_and_oracles() {
    let task = arm_torque_task(&TorqueConfig::default()).unwrap();
    let (support, probs) = discrete(&task);
    assert_eq!(support.len(), 50);
    assert!(probs.iter().all(|p| *p == 1.0 / 50.0));
    assert!(support.iter().all(|t| (0.5..=1.0).contains(&t[0])));
    let pi = [0.3, 0.6, 0.9];
    let mean = task.evaluation_samples().iter().map(|t| task.evaluate(&pi, &[*t]).unwrap()).sum::<f64>() / 400.0;
    assert!((task.exact_fbar(&pi).unwrap() - mean).abs() < 1e-12);
    assert!(task.warnings().is_empty());
    assert!(arm_torque_task(&TorqueConfig { baseline_trials: 5, ..TorqueConfig::default() }).is_err());
}

#[test]
fn torque_is_seeded() {
    let a = arm_torque_task(&TorqueConfig { seed: 2, ..TorqueConfig::default() }).unwrap();
    let b = arm_torque_task(&TorqueConfig { seed: 2, ..TorqueConfig::default() }).unwrap();
    assert_eq!(a.evaluation_samples(), b.evaluation_samples());
    assert_eq!(a.true_theta(), b.true_theta());
}

#[test]
fn registry() {
    for name in TASK_NAMES {
        let task = task_by_name(name, 0).unwrap();
        assert_eq!(task.name(), name);
        assert_eq!(task.env().dim(), task.d_env());
    }
    assert!(matches!(task_by_name("hexapod", 0), Err(crate::AloqError::Unknown { .. })));
}

proptest! {
    #[test]
    fn evaluation_is_pure(a in 0.0..1.0f64, b in 0.0..1.0f64, c in 0.0..1.0f64, u in 0.0..1.0f64) {
        let br = arm_breakage_task();
        prop_assert_eq!(br.evaluate(&[a, b, c], &[u]).unwrap(), br.evaluate(&[a, b, c], &[u]).unwrap());
        let col = arm_collision_task();
        let (walls, _) = discrete(&col);
        let w = &walls[(u * 19.0) as usize];
        prop_assert_eq!(col.evaluate(&[a, b, c], w).unwrap(), col.evaluate(&[a, b, c], w).unwrap());
    }

    #[test]
    fn bounds_round_trip(z in 0.0..1.0f64) {
        let b = Bounds::new(vec![-2.0], vec![2.0]);
        let x = b.from_unit(&[z]);
        prop_assert!((b.to_unit(&x)[0] - z).abs() < 1e-12);
    }
}
