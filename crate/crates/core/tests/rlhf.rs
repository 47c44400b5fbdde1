use approx::assert_abs_diff_eq;
use modescope::rlhf_sim::*;
use proptest::prelude::*;

fn dist(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

#[test]
fn table1_columns() {
    let log = run_table1();
    assert_eq!(log.advantages(), vec![1.0, -0.6, 0.0, 0.6]);
    let p = log.prob_series(JEEPITI).unwrap();
    for (got, want) in p.iter().zip([0.5, 0.73, 0.83, 0.83]) {
        assert!((got - want).abs() <= 0.005, "{p:?}");
    }
    let closed = 1.6f64.exp() / (1.6f64.exp() + (-0.6f64).exp());
    assert_abs_diff_eq!(p[4], closed, epsilon = 1e-12);
    assert!((p[4] - 0.900).abs() <= 0.001);
    let values: Vec<f64> = log.entries.iter().map(|e| e.value).collect();
    assert_eq!(values, vec![1.0, 0.4, 0.4, 1.0]);
    assert!(log.notes.iter().any(|n| n.contains("0.93")));
    for e in &log.entries {
        assert!((e.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn advantage_anchors() {
    assert_eq!(advantage(1.0, 1.0, 0.0, 0.0), 1.0);
    assert_abs_diff_eq!(advantage(0.4, 1.0, 0.0, 1.0), -0.6, epsilon = 1e-15);
    assert_eq!(advantage(0.4, 1.0, 0.0, 0.4), 0.0);
}

#[test]
fn naive_update_anchors() {
    let task = BanditTask::chatbot_names();
    let p0 = PolicyState::uniform(&task.actions);
    let p1 = naive_policy_update(&p0, JEEPITI, 1.0).unwrap();
    assert_abs_diff_eq!(p1.prob(JEEPITI).unwrap(), 1f64.exp() / (1.0 + 1f64.exp()), epsilon = 1e-12);
    assert_eq!(naive_policy_update(&p0, JEEPITI, 0.0).unwrap(), p0);
    assert!(naive_policy_update(&p0, "Clippy", 1.0).is_err());
    let value = value_update(&p1, 0.4);
    assert_eq!(value.value_estimate, 0.4);
    assert_eq!(value.logits, p1.logits);
}

#[test]
fn kl_anchors() {
    assert_abs_diff_eq!(kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap(), 2f64.ln(), epsilon = 1e-12);
    let direct = 0.7 * (1.4f64).ln() + 0.3 * (0.6f64).ln();
    assert_abs_diff_eq!(kl_divergence(&[0.7, 0.3], &[0.5, 0.5]).unwrap(), direct, epsilon = 1e-15);
    assert_abs_diff_eq!(direct, 0.08228, epsilon = 1e-5);
    let err = kl_divergence(&[0.5, 0.5], &[1.0, 0.0]).unwrap_err();
    assert!(err.to_string().contains("infinite divergence"), "{err}");
    let r = kl_penalized_reward(1.0, &[1.0, 0.0], &[0.5, 0.5], 0.01).unwrap();
    assert_abs_diff_eq!(r, 1.0 - 0.01 * 2f64.ln(), epsilon = 1e-15);
    assert_eq!(kl_penalized_reward(0.3, &[0.2, 0.8], &[0.2, 0.8], 5.0).unwrap(), 0.3);
    assert_eq!(kl_penalized_reward(0.3, &[1.0, 0.0], &[0.5, 0.5], 0.0).unwrap(), 0.3);
}

#[test]
fn ppo_anchors() {
    assert_eq!(ppo_clip_objective(1.0, 0.37, 0.2), 0.37);
    assert_eq!(ppo_clip_objective(2.0, 1.0, 0.2), 1.2);
    assert_eq!(ppo_clip_objective(0.5, -1.0, 0.2), -0.8);
}

#[test]
fn one_step_simulation_is_hand_checkable() {
    let task = BanditTask::chatbot_names();
    let log = simulate(&task, &UpdateRule::Naive, 1, 4).unwrap();
    assert_eq!(log.entries.len(), 1);
    let e = &log.entries[0];
    let r = task.reward(&e.action).unwrap();
    assert_eq!(e.reward, r);
    assert_eq!(e.advantage, advantage(r, 1.0, 0.0, 0.0));
    assert_eq!(e.value, r);
    let expected = naive_policy_update(&PolicyState::uniform(&task.actions), &e.action, e.advantage).unwrap();
    assert_eq!(e.probs, expected.probs());
    assert!(simulate(&task, &UpdateRule::Naive, 0, 4).is_err());
}

#[test]
fn naive_rule_collapses() {
    let task = BanditTask::chatbot_names();
    let seeds: Vec<u64> = (0..50).collect();
    let (s, _) = sweep(&task, &UpdateRule::Naive, 500, &seeds).unwrap();
    let collapsed = s
        .final_best_prob
        .iter()
        .zip(&s.final_entropy_bits)
        .filter(|(p, h)| **p > 0.99 && **h < 0.1)
        .count();
    assert!(collapsed >= 48, "{collapsed}/50");
}

#[test]
fn kl_rule_stays_near_reference() {
    let task = BanditTask::chatbot_names();
    let seeds: Vec<u64> = (0..50).collect();
    let (s, _) = sweep(&task, &UpdateRule::kl(10.0), 500, &seeds).unwrap();
    assert!(s.final_kl_to_reference.iter().all(|kl| *kl <= 0.05), "{:?}", s.final_kl_to_reference);
}

#[test]
fn sweeps_are_seed_deterministic() {
    let task = BanditTask::new(&[("a", 1.0), ("b", 0.5), ("c", 0.2)], 1.0).unwrap();
    let rule = UpdateRule::ppo(0.2);
    let (_, a) = sweep(&task, &rule, 100, &[1, 2, 3]).unwrap();
    let (_, b) = sweep(&task, &rule, 100, &[3, 2, 1]).unwrap();
    assert_eq!(a[0], b[2]);
    assert_eq!(a[2], b[0]);
}

#[test]
fn greedy_naive_is_monotone() {
    let task = BanditTask::new(&[("x", 0.2), ("y", 1.0), ("z", 0.6)], 1.0).unwrap();
    let opts = SimOptions { selection: ActionSelection::Greedy, ..Default::default() };
    let log = simulate_with(&task, &UpdateRule::Naive, 200, 0, &opts).unwrap();
    let series = log.prob_series("y").unwrap();
    for w in series.windows(2) {
        assert!(w[1] >= w[0] - 1e-15, "{series:?}");
    }
}

#[test]
fn trajectory_csv_columns() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    run_table1().write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let header = text.lines().next().unwrap();
    for col in ["t", "action", "reward", "advantage", "value", "p_Jeepiti", "p_Chats and Giggles", "entropy_bits"] {
        assert!(header.split(',').any(|h| h == col), "{header}");
    }
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn invalid_rules_are_rejected() {
    let task = BanditTask::chatbot_names();
    assert!(simulate(&task, &UpdateRule::ppo(0.0), 5, 0).is_err());
    assert!(simulate(&task, &UpdateRule::ppo(1.0), 5, 0).is_err());
    assert!(simulate(&task, &UpdateRule::kl(-1.0), 5, 0).is_err());
    assert!(BanditTask::new(&[("only", 1.0)], 1.0).is_err());
}

proptest! {
    #[test]
    fn kl_non_negative_and_zero_on_identity((p, q) in (2usize..8).prop_flat_map(|n| (dist(n), dist(n)))) {
        prop_assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        let d = kl_divergence(&p, &q).unwrap();
        prop_assert!(d >= 0.0);
        if p != q {
            prop_assert!(d > 0.0 || p.iter().zip(&q).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }

    #[test]
    fn advantage_is_linear(r in -10.0f64..10.0, v in -10.0f64..10.0, c in -10.0f64..10.0) {
        prop_assert!((advantage(r + c, 1.0, 0.0, v) - advantage(r, 1.0, 0.0, v) - c).abs() < 1e-12);
        prop_assert!((advantage(r, 1.0, 0.0, v + c) - advantage(r, 1.0, 0.0, v) + c).abs() < 1e-12);
    }

    #[test]
    fn naive_update_keeps_normalization(logits in prop::collection::vec(-5.0f64..5.0, 2..6), adv in -20.0f64..20.0) {
        let actions: Vec<String> = (0..logits.len()).map(|i| format!("a{i}")).collect();
        let p = PolicyState { actions, logits, value_estimate: 0.0 };
        let next = naive_policy_update(&p, "a0", adv).unwrap();
        prop_assert!((next.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ppo_is_pessimistic(ratio in 0.01f64..5.0, adv in 0.0f64..10.0, eps in 0.01f64..0.99) {
        prop_assert_eq!(ppo_clip_objective(1.0, adv, eps), adv);
        prop_assert!(ppo_clip_objective(ratio, adv, eps) <= ratio * adv);
    }
}
