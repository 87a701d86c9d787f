use proptest::prelude::*;
use softsched::format::InstanceFile;
use softsched::generate::{small, SmallParams};
use softsched::search::solve;
use softsched::softcumul::{delta, lower_bound, Delta, MinWeightTable};
use softsched::softdisj::eval_weighted;
use softsched::{ActivityId, Assignment, BoundMode, Instance, LbMode, Model, SearchConfig, Store, Threshold, TimeSlot, VarId};

#[derive(Debug, Clone)]
enum Op {
    Remove(usize, u32),
    Penalize(usize, u32, u64),
    Assign(usize, u32),
    Checkpoint,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0..4usize, 0..6u32).prop_map(|(v, s)| Op::Remove(v, s)),
        (0..4usize, 0..6u32, 0..5u64).prop_map(|(v, s, d)| Op::Penalize(v, s, d)),
        (0..4usize, 0..6u32).prop_map(|(v, s)| Op::Assign(v, s)),
        Just(Op::Checkpoint),
    ]
}

fn corpus_instance(seed: u64) -> Instance {
    small(seed, &SmallParams::default())
}

proptest! {
    #[test]
    fn store_undo_restores_every_checkpoint(ops in prop::collection::vec(op(), 0..40)) {
        let mut store = Store::new(6);
        for k in 0..4u64 {
            let pairs: Vec<(TimeSlot, u64)> = (0..6).map(|s| (TimeSlot(s), (s as u64 * 7 + k) % 4)).collect();
            store.new_pref_var(&pairs).unwrap();
        }
        let mut marks = vec![(store.checkpoint(), store.snapshot())];
        for op in ops {
            match op {
                Op::Remove(v, s) => {
                    if store.contains(VarId(v), TimeSlot(s)) && store.size(VarId(v)) > 1 {
                        store.remove_value(VarId(v), TimeSlot(s)).unwrap();
                    }
                }
                Op::Penalize(v, s, d) => {
                    let before = store.penalty(VarId(v), TimeSlot(s));
                    store.add_penalty(VarId(v), TimeSlot(s), d).unwrap();
                    prop_assert_eq!(store.penalty(VarId(v), TimeSlot(s)), before.map(|p| p + d));
                }
                Op::Assign(v, s) => {
                    if !store.is_assigned(VarId(v)) && store.contains(VarId(v), TimeSlot(s)) {
                        store.assign(VarId(v), TimeSlot(s)).unwrap();
                        prop_assert_eq!(store.values(VarId(v)).collect::<Vec<_>>(), vec![TimeSlot(s)]);
                    }
                }
                Op::Checkpoint => marks.push((store.checkpoint(), store.snapshot())),
            }
            for v in 0..4 {
                let (_, min) = store.min_penalty(VarId(v));
                prop_assert!(store.pairs(VarId(v)).all(|(_, p)| p >= min));
            }
        }
        while let Some((mark, snapshot)) = marks.pop() {
            store.backtrack(mark);
            prop_assert_eq!(store.snapshot(), snapshot);
        }
    }

    #[test]
    fn model_undo_restores_root(seed in 0u64..5_000, picks in prop::collection::vec(0usize..8, 6)) {
        let instance = corpus_instance(seed);
        let mut model = Model::from_instance(&instance, Threshold::NONE);
        let root = model.store().snapshot();
        let mark = model.store().checkpoint();
        for (i, &k) in picks.iter().enumerate().take(instance.len()) {
            let var = VarId(i);
            let values: Vec<TimeSlot> = model.store().values(var).collect();
            if values.is_empty() || model.store().is_assigned(var) {
                continue;
            }
            if model.assign(var, values[k % values.len()]).is_err() {
                break;
            }
        }
        model.store_mut().backtrack(mark);
        prop_assert_eq!(model.store().snapshot(), root);
    }

    /// Whatever order the activities are assigned in, the accumulated
    /// penalties equal initial costs plus the weighted violations.
    #[test]
    fn propagation_sum_is_order_independent(
        seed in 0u64..5_000,
        order in Just((0..6usize).collect::<Vec<_>>()).prop_shuffle(),
        picks in prop::collection::vec(0usize..8, 6),
    ) {
        let instance = corpus_instance(seed);
        let mut model = Model::from_instance(&instance, Threshold::NONE);
        let mut start = vec![TimeSlot(0); instance.len()];
        for &i in order.iter().filter(|&&i| i < instance.len()) {
            let act = instance.activity(ActivityId(i));
            let slot = act.domain[picks[i] % act.domain.len()].0;
            if !model.store().contains(VarId(i), slot) || model.assign(VarId(i), slot).is_err() {
                return Ok(());
            }
            start[i] = slot;
        }
        let theta = Assignment(start);
        let expected = theta.initial_cost(&instance).unwrap() + eval_weighted(&instance, &theta).unwrap();
        prop_assert_eq!(model.assigned_cost(), expected);
    }

    #[test]
    fn expected_bound_dominates_minimal(seed in 0u64..20_000) {
        let instance = corpus_instance(seed);
        let model = Model::from_instance(&instance, Threshold::NONE);
        let min = lower_bound(&instance, model.store(), Some(BoundMode::Min)).total();
        let exp = lower_bound(&instance, model.store(), Some(BoundMode::Exp)).total();
        let base = lower_bound(&instance, model.store(), None).total();
        prop_assert_eq!(min.is_none(), exp.is_none());
        if let (Some(min), Some(exp), Some(base)) = (min, exp, base) {
            prop_assert!(base <= min);
            prop_assert!(min <= exp);
        }
    }

    #[test]
    fn delta_grows_with_penalties(seed in 0u64..5_000, var in 0usize..6, bump in 1u64..6, t in 0u32..8) {
        let instance = corpus_instance(seed);
        let var = var % instance.len();
        let mut model = Model::from_instance(&instance, Threshold::NONE);
        let table = MinWeightTable::from_store(model.store());
        let duration = instance.activity(ActivityId(var)).duration;
        let before = delta(t, ActivityId(var), duration, model.store(), &table);
        let values: Vec<TimeSlot> = model.store().values(VarId(var)).collect();
        for slot in values {
            model.store_mut().add_penalty(VarId(var), slot, bump).unwrap();
        }
        let after = delta(t, ActivityId(var), duration, model.store(), &table);
        match (before, after) {
            (Delta::Runnable(b), Delta::Runnable(a)) => prop_assert_eq!(a, b + bump),
            (Delta::NotRunnable, Delta::NotRunnable) => {}
            other => prop_assert!(false, "runnability changed: {:?}", other),
        }
    }

    /// Reordering the activity list leaves the optimum unchanged.
    #[test]
    fn optimum_ignores_activity_order(seed in 0u64..5_000, rotate in 1usize..6) {
        let instance = corpus_instance(seed);
        let mut file = InstanceFile::from_instance(&instance);
        let k = rotate % file.activities.len();
        file.activities.rotate_left(k);
        let permuted = file.into_instance().unwrap();
        let config = SearchConfig { lb_mode: LbMode::Min, ..SearchConfig::default() };
        let a = solve(&instance, &config, &mut |_: &softsched::search::Incumbent| {}).unwrap();
        let b = solve(&permuted, &config, &mut |_: &softsched::search::Incumbent| {}).unwrap();
        prop_assert_eq!(a.status, b.status);
        prop_assert_eq!(a.cost(), b.cost());
    }
}
