use genban::env::{logistic_fn, DiscreteMixtureEnv, EnvConfig, Environment, SyntheticDgpConfig};
use genban::{History, PriorInfo, RngStream};
use proptest::prelude::*;

fn mixture() -> DiscreteMixtureEnv {
    DiscreteMixtureEnv::new(
        2,
        2,
        vec![0.4, 0.6],
        vec![vec![vec![0.9, 0.2], vec![0.3, 0.7]], vec![vec![0.1, 0.6], vec![0.8, 0.25]]],
    )
    .unwrap()
}

// Swapping the two timesteps of a task must not change the law of
// (X, Y) pairs: the counts of (x1, y1, x2, y2) and (x2, y2, x1, y1) agree
// up to sampling noise.
#[test]
fn timestep_swap_leaves_joint_law_unchanged() {
    let env = mixture();
    let n = 100_000u64;
    let mut counts = std::collections::HashMap::<[u8; 4], f64>::new();
    for i in 0..n {
        let task = env.sample_task(&mut RngStream::new(1, i, "exch")).unwrap();
        let key = [
            env.context_index(task.context(0)).unwrap() as u8,
            task.outcome(0, 0) as u8,
            env.context_index(task.context(1)).unwrap() as u8,
            task.outcome(1, 0) as u8,
        ];
        *counts.entry(key).or_default() += 1.0;
    }
    for (k, &c) in &counts {
        let swapped = [k[2], k[3], k[0], k[1]];
        let c2 = counts.get(&swapped).copied().unwrap_or(0.0);
        // difference of two counts from one multinomial
        let se = (c + c2).sqrt().max(1.0);
        assert!((c - c2).abs() < 4.0 * se, "{k:?}: {c} vs {c2}");
    }
}

#[test]
fn arms_are_independent_given_context() {
    let env = mixture();
    let n = 100_000u64;
    let (mut s0, mut s1, mut s01, mut m) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let task = env.sample_task(&mut RngStream::new(2, i, "indep")).unwrap();
        if env.context_index(task.context(0)).unwrap() != 0 {
            continue;
        }
        let (a, b) = (task.outcome(0, 0), task.outcome(0, 1));
        s0 += a;
        s1 += b;
        s01 += a * b;
        m += 1.0;
    }
    let (p0, p1) = (s0 / m, s1 / m);
    let corr = (s01 / m - p0 * p1) / (p0 * (1.0 - p0) * p1 * (1.0 - p1)).sqrt();
    assert!(corr.abs() < 3.0 / m.sqrt(), "correlation {corr} over {m} draws");
}

#[test]
fn synthetic_probe_matches_sigmoid() {
    let env = Environment::from_config(EnvConfig::Synthetic(SyntheticDgpConfig::new(1, 1))).unwrap();
    let Environment::Logistic(dgp) = &env else {
        panic!("synthetic config builds a logistic environment")
    };
    let arm = dgp.sample_arm(&mut RngStream::new(4, 0, "arm"));
    let x = vec![-0.5, 1.0, 0.2, 0.3, 0.7];
    let p = logistic_fn(arm.logit(&x));
    let mut rng = RngStream::new(4, 1, "draws");
    let n = 100_000;
    let phat = (0..n).map(|_| arm.sample_outcome(&x, &mut rng)).sum::<f64>() / n as f64;
    assert!((phat - p).abs() < 3.0 * (p * (1.0 - p) / n as f64).sqrt());
}

#[test]
fn logistic_function_reference_value() {
    assert!((logistic_fn(2.0) - 0.880_797_077_977_882_3).abs() < 1e-15);
}

proptest! {
    #[test]
    fn sampled_tasks_have_binary_tables(seed in any::<u64>(), actions in 1usize..6, horizon in 1usize..30) {
        let env = Environment::from_config(EnvConfig::Synthetic(SyntheticDgpConfig::new(actions, horizon))).unwrap();
        let task = env.sample_task(&mut RngStream::new(seed, 0, "prop")).unwrap();
        prop_assert_eq!(task.horizon(), horizon);
        prop_assert_eq!(task.n_actions(), actions);
        prop_assert!(task.outcomes().iter().flatten().all(|&y| y == 0.0 || y == 1.0));
        prop_assert!(task.prior_info().iter().all(|z| z.len() == 2));
        prop_assert!(task.contexts().iter().all(|x| x.len() == 5));
    }

    #[test]
    fn history_only_holds_taken_actions(steps in proptest::collection::vec((0usize..3, any::<bool>(), -1.0f64..1.0), 0..40)) {
        let mut h = History::new(PriorInfo::new(vec![vec![0.0]; 3]).unwrap());
        for (a, y, x) in &steps {
            h.observe_context(vec![*x]).unwrap();
            h.append_step(&[*x], *a, *y as u8 as f64).unwrap();
        }
        let mut seen = 0;
        for a in 0..3 {
            for (t, x, y) in h.arm_observations(a) {
                prop_assert_eq!(steps[t].0, a);
                prop_assert_eq!(x[0], steps[t].2);
                prop_assert_eq!(y, steps[t].1 as u8 as f64);
                seen += 1;
            }
        }
        prop_assert_eq!(seen, steps.len());
    }

    #[test]
    fn replayed_history_hash_is_stable(steps in proptest::collection::vec((0usize..2, any::<bool>()), 0..20)) {
        let build = || {
            let mut h = History::new(PriorInfo::new(vec![vec![1.0], vec![2.0]]).unwrap());
            for (t, (a, y)) in steps.iter().enumerate() {
                h.observe_context(vec![t as f64]).unwrap();
                h.append_step(&[t as f64], *a, *y as u8 as f64).unwrap();
            }
            h
        };
        prop_assert_eq!(build().hash_hex(), build().hash_hex());
    }
}
