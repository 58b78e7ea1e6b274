use proptest::prelude::*;
use serde_json::{json, Value};

use spatial_env::geometry::{nearest_point_distance, quadrant_label};
use spatial_env::harness::group_advantages;
use spatial_env::rewards::{counting_accuracy, relative_accuracy};
use spatial_env::scheduler::{SchedulerConfig, SchedulerState};
use spatial_env::tasks::TaskType;
use spatial_env::wire::{canonicalize, round_sig, to_canonical_string};

fn task() -> impl Strategy<Value = TaskType> {
    (0..TaskType::ALL.len()).prop_map(|i| TaskType::ALL[i])
}

fn update() -> impl Strategy<Value = (TaskType, f64, f64, bool)> {
    (task(), 0.0..=1.0f64, 1.0..5.0f64, any::<bool>())
}

fn point() -> impl Strategy<Value = [f64; 3]> {
    [-5.0..5.0f64, -5.0..5.0f64, -2.0..3.0f64]
}

fn json_value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::from),
        any::<i32>().prop_map(Value::from),
        (-1e6..1e6f64).prop_map(Value::from),
        "[a-z]{0,6}".prop_map(Value::from),
    ];
    leaf.prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(Value::Array),
            prop::collection::btree_map("[a-z]{1,4}", inner, 0..4)
                .prop_map(|m| Value::Object(m.into_iter().collect())),
        ]
    })
}

proptest! {
    #[test]
    fn sampling_distribution_is_a_floored_probability_vector(
        updates in prop::collection::vec(update(), 0..40),
        feasible in prop::collection::btree_set(task(), 1..16),
    ) {
        let cfg = SchedulerConfig::default();
        let mut st = SchedulerState::new();
        for (t, a, w, inv) in updates {
            st.update(t, a, w, inv, &cfg).unwrap();
        }
        let d = st.sampling_distribution(&feasible, &cfg).unwrap();
        let order: Vec<TaskType> = d.iter().map(|(t, _)| *t).collect();
        prop_assert_eq!(order, feasible.iter().copied().collect::<Vec<_>>());
        let total: f64 = d.iter().map(|(_, p)| p).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        // Each weight is at least delta and at most 1.
        let floor = cfg.delta / feasible.len() as f64;
        prop_assert!(d.iter().all(|(_, p)| *p >= floor - 1e-12 && *p <= 1.0));
    }

    #[test]
    fn statistics_stay_bounded_and_order_free(mut updates in prop::collection::vec(update(), 1..30)) {
        let cfg = SchedulerConfig::default();
        let mut forward = SchedulerState::new();
        for (t, a, w, inv) in &updates {
            forward.update(*t, *a, *w, *inv, &cfg).unwrap();
        }
        updates.reverse();
        let mut backward = SchedulerState::new();
        for (t, a, w, inv) in &updates {
            backward.update(*t, *a, *w, *inv, &cfg).unwrap();
        }
        for (t, s) in &forward.stats {
            let b = backward.get(*t);
            prop_assert!(s.s <= s.n + 1e-9 && s.s_sched <= s.n + 1e-9);
            prop_assert!((s.n - b.n).abs() < 1e-9 && (s.s_sched - b.s_sched).abs() < 1e-9);
            let a = cfg.smoothed_accuracy(s);
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn snapshot_round_trips(updates in prop::collection::vec(update(), 0..30)) {
        let cfg = SchedulerConfig::default();
        let mut st = SchedulerState::new();
        for (t, a, w, inv) in updates {
            st.update(t, a, w, inv, &cfg).unwrap();
        }
        prop_assert_eq!(SchedulerState::from_snapshot(&st.to_snapshot()).unwrap(), st);
    }

    #[test]
    fn sampled_tasks_are_feasible(seed in any::<u64>(), feasible in prop::collection::btree_set(task(), 1..16)) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let st = SchedulerState::new();
        let t = st.sample_task(&feasible, &SchedulerConfig::default(), &mut rng).unwrap();
        prop_assert!(feasible.contains(&t));
    }

    #[test]
    fn advantages_are_centred_and_scaled(rewards in prop::collection::vec(-1.0..1.0f64, 2..12)) {
        let adv = group_advantages(&rewards);
        prop_assert_eq!(adv.len(), rewards.len());
        let mean: f64 = adv.iter().sum::<f64>() / adv.len() as f64;
        prop_assert!(mean.abs() < 1e-9);
        if adv.iter().any(|a| *a != 0.0) {
            let n = adv.len() as f64;
            let var = adv.iter().map(|a| a * a).sum::<f64>() / (n - 1.0);
            prop_assert!((var - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_groups_get_zero_advantage(r in -1.0..1.0f64, n in 1usize..10) {
        prop_assert!(group_advantages(&vec![r; n]).iter().all(|a| *a == 0.0));
    }

    #[test]
    fn counting_accuracy_depends_only_on_absolute_error(gt in 0i64..50, err in 0i64..10) {
        let up = counting_accuracy(gt + err, gt);
        prop_assert_eq!(up, counting_accuracy(gt - err, gt));
        prop_assert!(up >= counting_accuracy(gt + err + 1, gt));
    }

    #[test]
    fn relative_accuracy_is_bounded_and_monotone(gt in 0.1..20.0f64, e1 in 0.0..2.0f64, e2 in 0.0..2.0f64) {
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let a_lo = relative_accuracy(gt * (1.0 + lo), gt).unwrap();
        let a_hi = relative_accuracy(gt * (1.0 + hi), gt).unwrap();
        prop_assert!((0.0..=1.0).contains(&a_lo) && (0.0..=1.0).contains(&a_hi));
        prop_assert!(a_lo >= a_hi);
    }

    #[test]
    fn nearest_distance_is_symmetric_and_exact(
        a in prop::collection::vec(point(), 1..40),
        b in prop::collection::vec(point(), 1..40),
    ) {
        let fast = nearest_point_distance(&a, &b).unwrap();
        let mut best = f64::INFINITY;
        for p in &a {
            for q in &b {
                best = best.min((0..3).map(|k| (p[k] - q[k]).powi(2)).sum::<f64>());
            }
        }
        prop_assert_eq!(fast, best.sqrt());
        prop_assert_eq!(fast, nearest_point_distance(&b, &a).unwrap());
    }

    #[test]
    fn quadrant_label_is_periodic(theta in -180.0..180.0f64) {
        prop_assert_eq!(quadrant_label(theta), quadrant_label(theta + 360.0));
    }

    #[test]
    fn canonical_json_is_idempotent(v in json_value()) {
        let once = canonicalize(&v);
        prop_assert_eq!(canonicalize(&once), once.clone());
        let text = to_canonical_string(&v).unwrap();
        let reparsed: Value = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(to_canonical_string(&reparsed).unwrap(), text);
    }

    #[test]
    fn rounding_keeps_nine_significant_digits(x in -1e12..1e12f64) {
        let r = round_sig(x);
        prop_assert_eq!(round_sig(r), r);
        if x != 0.0 {
            prop_assert!(((r - x) / x).abs() <= 5e-9);
        }
    }
}

#[test]
fn canonical_json_ignores_key_order() {
    let a = json!({"b": 1, "a": {"y": 0.1, "x": [1, 2]}});
    let b = json!({"a": {"x": [1, 2], "y": 0.1}, "b": 1});
    assert_eq!(to_canonical_string(&a).unwrap(), to_canonical_string(&b).unwrap());
}
