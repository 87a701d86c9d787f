//! Soft disjunctive constraints.
//!
//! A pair of activities with weight `w` prefers not to overlap; every overlap
//! in the final schedule costs `w`. When one endpoint is instantiated the
//! overlapping candidate starts of the other endpoint get `w` added to their
//! violation share, so after a complete descent the sum of the penalties of
//! the assigned values is exactly initial costs plus [`eval_weighted`].
//!
//! A [`Threshold`] bounds the incident violation `u` of every activity.
//! Values whose share already exceeds it are filtered out, and an assigned
//! activity that is charged past it by a later partner fails propagation.

use num_rational::Ratio;
use thiserror::Error;

use crate::instance::{ActivityId, Assignment, Instance};
use crate::model::{Conflict, Model, Propagator};
use crate::store::{CounterBlock, Store, StoreError, TimeSlot, VarId};

/// Half-open interval intersection of `[s1, s1 + d1)` and `[s2, s2 + d2)`.
pub fn overlaps(s1: TimeSlot, d1: u32, s2: TimeSlot, d2: u32) -> bool {
    debug_assert!(d1 >= 1 && d2 >= 1);
    (s1.0 as u64) < s2.0 as u64 + d2 as u64 && (s2.0 as u64) < s1.0 as u64 + d1 as u64
}

/// Maximal allowed incident violation per activity; `None` is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Threshold(pub Option<u64>);

impl Threshold {
    pub const NONE: Threshold = Threshold(None);

    pub fn at_most(limit: u64) -> Self {
        Threshold(Some(limit))
    }

    pub fn admits(self, u: u64) -> bool {
        self.0.is_none_or(|limit| u <= limit)
    }
}

/// One partner of the constraint's center activity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arc {
    pub var: VarId,
    pub duration: u32,
    pub weight: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PostError {
    #[error("{0} listed as its own neighbor")]
    SelfArc(VarId),
    #[error("{0} listed twice")]
    DuplicateNeighbor(VarId),
    #[error("zero weight towards {0}")]
    ZeroWeight(VarId),
    #[error("zero duration")]
    ZeroDuration,
    #[error("pair {0}-{1} already constrained")]
    PairAlreadyPosted(VarId, VarId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstraintHandle {
    pub index: Option<usize>,
    pub arcs: usize,
}

/// Propagator for one center activity and its partners. It wakes up when
/// the center or any partner is instantiated, so each pair is posted once.
#[derive(Debug, Clone)]
pub struct SoftDisjunctive {
    center: VarId,
    duration: u32,
    arcs: Vec<Arc>,
    threshold: Threshold,
    late: CounterBlock,
}

pub fn post_soft_disjunctive(
    model: &mut Model,
    center: VarId,
    duration: u32,
    arcs: &[Arc],
    threshold: Threshold,
) -> Result<ConstraintHandle, PostError> {
    if duration == 0 || arcs.iter().any(|a| a.duration == 0) {
        return Err(PostError::ZeroDuration);
    }
    for (k, arc) in arcs.iter().enumerate() {
        if arc.var == center {
            return Err(PostError::SelfArc(center));
        }
        if arc.weight == 0 {
            return Err(PostError::ZeroWeight(arc.var));
        }
        if arcs[..k].iter().any(|a| a.var == arc.var) {
            return Err(PostError::DuplicateNeighbor(arc.var));
        }
    }
    if arcs.is_empty() {
        return Ok(ConstraintHandle {
            index: None,
            arcs: 0,
        });
    }
    for arc in arcs {
        model.register_pair(center, arc.var, arc.weight)?;
    }
    let late = model.late_counters();
    let watched: Vec<VarId> = std::iter::once(center)
        .chain(arcs.iter().map(|a| a.var))
        .collect();
    let index = model.post(
        Box::new(SoftDisjunctive {
            center,
            duration,
            arcs: arcs.to_vec(),
            threshold,
            late,
        }),
        &watched,
    );
    Ok(ConstraintHandle {
        index: Some(index),
        arcs: arcs.len(),
    })
}

impl SoftDisjunctive {
    /// Pushes the cost of overlapping `[source, source + source_len)` onto
    /// `target`.
    fn charge(
        &self,
        store: &mut Store,
        source: TimeSlot,
        source_len: u32,
        target: VarId,
        target_len: u32,
        weight: u64,
    ) -> Result<(), Conflict> {
        if let Some(at) = store.assigned(target) {
            if overlaps(source, source_len, at, target_len) {
                let delta = i64::try_from(weight)
                    .map_err(|_| StoreError::Overflow { var: target, slot: at })?;
                let late = store.add_counter(self.late, target.0, delta) as u64;
                let share = store.share(target, at).unwrap_or(0);
                if !self.threshold.admits(share + late) {
                    return Err(Conflict::Threshold(target));
                }
            }
            return Ok(());
        }
        let hits: Vec<TimeSlot> = store
            .values(target)
            .filter(|&u| overlaps(source, source_len, u, target_len))
            .collect();
        for u in hits {
            store.add_penalty(target, u, weight)?;
            let share = store.share(target, u).unwrap_or(0);
            if !self.threshold.admits(share) {
                store.remove_value(target, u)?;
            }
        }
        Ok(())
    }
}

impl Propagator for SoftDisjunctive {
    fn on_instantiate(&self, var: VarId, store: &mut Store) -> Result<(), Conflict> {
        let at = store.assigned(var).expect("instantiation event on a free variable");
        if var == self.center {
            for arc in &self.arcs {
                self.charge(store, at, self.duration, arc.var, arc.duration, arc.weight)?;
            }
        } else if let Some(arc) = self.arcs.iter().find(|a| a.var == var) {
            self.charge(store, at, arc.duration, self.center, self.duration, arc.weight)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("assignment covers {got} activities, instance has {expected}")]
    Incomplete { expected: usize, got: usize },
    #[error("fuzzy objective needs at least two activities and one soft disjunction")]
    Undefined,
    #[error("activity {0} has no enrolled students")]
    ZeroEnrollment(u32),
}

fn check_complete(instance: &Instance, theta: &Assignment) -> Result<(), EvalError> {
    if theta.len() != instance.len() {
        return Err(EvalError::Incomplete {
            expected: instance.len(),
            got: theta.len(),
        });
    }
    Ok(())
}

fn pair_overlaps(instance: &Instance, theta: &Assignment, a: ActivityId, b: ActivityId) -> bool {
    overlaps(
        theta.start(a),
        instance.activity(a).duration,
        theta.start(b),
        instance.activity(b).duration,
    )
}

/// Weighted count of overlapping constrained pairs, each pair once.
pub fn eval_weighted(instance: &Instance, theta: &Assignment) -> Result<u64, EvalError> {
    check_complete(instance, theta)?;
    Ok(instance
        .soft()
        .iter()
        .filter(|p| pair_overlaps(instance, theta, p.a, p.b))
        .map(|p| p.weight)
        .sum())
}

/// Weighted violations incident to activity `i`.
pub fn eval_u(instance: &Instance, theta: &Assignment, i: ActivityId) -> Result<u64, EvalError> {
    check_complete(instance, theta)?;
    Ok(instance
        .neighbors(i)
        .iter()
        .filter(|&&(j, _)| pair_overlaps(instance, theta, i, j))
        .map(|&(_, w)| w)
        .sum())
}

/// `eval_u` for every activity, by index.
pub fn incident_violations(instance: &Instance, theta: &Assignment) -> Result<Vec<u64>, EvalError> {
    check_complete(instance, theta)?;
    let mut u = vec![0u64; instance.len()];
    for p in instance.soft() {
        if pair_overlaps(instance, theta, p.a, p.b) {
            u[p.a.0] += p.weight;
            u[p.b.0] += p.weight;
        }
    }
    Ok(u)
}

/// Normalizer `m(n - 1)` of the fuzzy objective, with `m` the total weight
/// of the soft disjunctions (each unit of weight is one pairwise requirement).
pub fn fuzzy_scale(instance: &Instance) -> Result<u64, EvalError> {
    let m = instance.total_weight();
    if instance.len() < 2 || m == 0 {
        return Err(EvalError::Undefined);
    }
    Ok(m * (instance.len() as u64 - 1))
}

/// Worst normalized satisfaction over activities,
/// `min_i [1 - u_i / (m (n - 1))]`, as an exact rational in `[0, 1]`.
pub fn eval_fuzzy(instance: &Instance, theta: &Assignment) -> Result<Ratio<u64>, EvalError> {
    let scale = fuzzy_scale(instance)?;
    let worst = incident_violations(instance, theta)?
        .into_iter()
        .max()
        .unwrap_or(0);
    Ok(Ratio::new(scale - worst, scale))
}

/// Incident violation per enrolled student, `u_i / s_i`.
pub fn eval_ratio(instance: &Instance, theta: &Assignment, i: ActivityId) -> Result<Ratio<u64>, EvalError> {
    let act = instance.activity(i);
    if act.enrollment == 0 {
        return Err(EvalError::ZeroEnrollment(act.label));
    }
    Ok(Ratio::new(eval_u(instance, theta, i)?, act.enrollment as u64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{Activity, SoftDisjunctive as Pair};

    /// Overlap by explicit slot sets, independent of the interval formula.
    fn overlap_by_slots(s1: u32, d1: u32, s2: u32, d2: u32) -> bool {
        let a: Vec<u32> = (s1..s1 + d1).collect();
        (s2..s2 + d2).any(|t| a.contains(&t))
    }

    fn units(n: usize, horizon: u32) -> Vec<Activity> {
        (0..n)
            .map(|i| Activity {
                label: i as u32,
                duration: 1,
                enrollment: 10,
                domain: (0..horizon).map(|s| (TimeSlot(s), 0)).collect(),
            })
            .collect()
    }

    fn pair(a: usize, b: usize, weight: u64) -> Pair {
        Pair {
            a: ActivityId(a),
            b: ActivityId(b),
            weight,
        }
    }

    fn at(slots: &[u32]) -> Assignment {
        Assignment(slots.iter().map(|&s| TimeSlot(s)).collect())
    }

    fn triangle() -> Instance {
        Instance::new(
            2,
            units(3, 2),
            vec![pair(0, 1, 1), pair(0, 2, 2), pair(1, 2, 4)],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn overlap_examples() {
        assert!(overlaps(TimeSlot(0), 2, TimeSlot(1), 2));
        assert!(!overlaps(TimeSlot(0), 2, TimeSlot(2), 2));
        assert!(overlaps(TimeSlot(3), 1, TimeSlot(3), 1));
    }

    #[test]
    fn overlap_matches_slot_sets() {
        for s1 in 0..6 {
            for s2 in 0..6 {
                for d1 in 1..4 {
                    for d2 in 1..4 {
                        assert_eq!(
                            overlaps(TimeSlot(s1), d1, TimeSlot(s2), d2),
                            overlap_by_slots(s1, d1, s2, d2)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn post_validation() {
        let mut model = Model::new(5);
        let i = model.new_var(&[(TimeSlot(0), 0)]).unwrap();
        let j = model.new_var(&[(TimeSlot(0), 0)]).unwrap();
        let k = model.new_var(&[(TimeSlot(0), 0)]).unwrap();
        let arc = |var, weight| Arc {
            var,
            duration: 1,
            weight,
        };
        let h = post_soft_disjunctive(&mut model, i, 1, &[arc(j, 5), arc(k, 2)], Threshold::NONE)
            .unwrap();
        assert_eq!(h.arcs, 2);
        let h = post_soft_disjunctive(&mut model, k, 1, &[], Threshold::NONE).unwrap();
        assert_eq!(h, ConstraintHandle { index: None, arcs: 0 });
        assert_eq!(
            post_soft_disjunctive(&mut model, i, 1, &[arc(i, 1)], Threshold::NONE),
            Err(PostError::SelfArc(i))
        );
        assert_eq!(
            post_soft_disjunctive(&mut model, k, 1, &[arc(j, 1), arc(j, 1)], Threshold::NONE),
            Err(PostError::DuplicateNeighbor(j))
        );
        assert_eq!(
            post_soft_disjunctive(&mut model, j, 1, &[arc(i, 1)], Threshold::NONE),
            Err(PostError::PairAlreadyPosted(i, j))
        );
    }

    fn propagation_model(threshold: Threshold) -> (Model, VarId, VarId) {
        let mut model = Model::new(5);
        let i = model
            .new_var(&(0..4).map(|s| (TimeSlot(s), 0)).collect::<Vec<_>>())
            .unwrap();
        let j = model
            .new_var(&(0..5).map(|s| (TimeSlot(s), 0)).collect::<Vec<_>>())
            .unwrap();
        post_soft_disjunctive(
            &mut model,
            i,
            2,
            &[Arc {
                var: j,
                duration: 1,
                weight: 5,
            }],
            threshold,
        )
        .unwrap();
        (model, i, j)
    }

    #[test]
    fn instantiation_charges_overlapping_values() {
        let (mut model, i, j) = propagation_model(Threshold::NONE);
        model.assign(i, TimeSlot(2)).unwrap();
        // Expected penalties enumerated slot by slot.
        let expected: Vec<(TimeSlot, u64)> = (0..5)
            .map(|u| (TimeSlot(u), if overlap_by_slots(2, 2, u, 1) { 5 } else { 0 }))
            .collect();
        assert_eq!(expected[2].1, 5);
        assert_eq!(expected[3].1, 5);
        assert_eq!(model.store().pairs(j).collect::<Vec<_>>(), expected);
    }

    #[test]
    fn threshold_filters_values() {
        let (mut model, i, j) = propagation_model(Threshold::at_most(4));
        model.assign(i, TimeSlot(2)).unwrap();
        assert_eq!(
            model.store().values(j).collect::<Vec<_>>(),
            vec![TimeSlot(0), TimeSlot(1), TimeSlot(4)]
        );
    }

    #[test]
    fn partner_instantiation_propagates_back() {
        let (mut model, i, j) = propagation_model(Threshold::NONE);
        model.assign(j, TimeSlot(1)).unwrap();
        // i has duration 2, so starts 0 and 1 cover slot 1.
        assert_eq!(model.store().penalty(i, TimeSlot(0)), Some(5));
        assert_eq!(model.store().penalty(i, TimeSlot(1)), Some(5));
        assert_eq!(model.store().penalty(i, TimeSlot(2)), Some(0));
    }

    #[test]
    fn disjoint_assigned_partner_is_untouched() {
        let (mut model, i, j) = propagation_model(Threshold::NONE);
        model.assign(j, TimeSlot(4)).unwrap();
        let before = model.store().snapshot();
        model.assign(i, TimeSlot(0)).unwrap();
        assert_eq!(model.store().penalty(j, TimeSlot(4)), Some(0));
        assert_eq!(model.incident_violation(j), Some(0));
        assert_ne!(before, model.store().snapshot());
    }

    #[test]
    fn late_charges_count_against_the_threshold() {
        // Center 0 assigned first; partners 1 and 2 each overlap it with
        // weight 3. Each partner's own share is 3, but u(0) reaches 6.
        let mut model = Model::new(1);
        let vars: Vec<VarId> = (0..3)
            .map(|_| model.new_var(&[(TimeSlot(0), 0)]).unwrap())
            .collect();
        let arcs: Vec<Arc> = vars[1..]
            .iter()
            .map(|&var| Arc {
                var,
                duration: 1,
                weight: 3,
            })
            .collect();
        post_soft_disjunctive(&mut model, vars[0], 1, &arcs, Threshold::at_most(5)).unwrap();
        model.assign(vars[0], TimeSlot(0)).unwrap();
        model.assign(vars[1], TimeSlot(0)).unwrap();
        assert_eq!(model.incident_violation(vars[0]), Some(3));
        assert!(matches!(
            model.assign(vars[2], TimeSlot(0)),
            Err(crate::model::AssignError::Conflict(Conflict::Threshold(v))) if v == vars[0]
        ));
    }

    #[test]
    fn weighted_examples() {
        let two = Instance::new(1, units(2, 1), vec![pair(0, 1, 3)], vec![]).unwrap();
        assert_eq!(eval_weighted(&two, &at(&[0, 0])).unwrap(), 3);
        let tri = triangle();
        assert_eq!(eval_weighted(&tri, &at(&[0, 0, 0])).unwrap(), 7);
        assert_eq!(eval_weighted(&tri, &at(&[0, 1, 1])).unwrap(), 4);
        assert!(matches!(
            eval_weighted(&tri, &at(&[0, 0])),
            Err(EvalError::Incomplete { .. })
        ));
    }

    #[test]
    fn incident_examples() {
        let tri = triangle();
        assert_eq!(eval_u(&tri, &at(&[0, 0, 0]), ActivityId(0)).unwrap(), 3);
        let two = Instance::new(2, units(2, 2), vec![pair(0, 1, 3)], vec![]).unwrap();
        for i in [ActivityId(0), ActivityId(1)] {
            assert_eq!(eval_u(&two, &at(&[1, 1]), i).unwrap(), 3);
            assert_eq!(eval_u(&two, &at(&[0, 1]), i).unwrap(), 0);
        }
        assert_eq!(
            incident_violations(&tri, &at(&[0, 0, 0])).unwrap(),
            vec![3, 5, 6]
        );
    }

    #[test]
    fn fuzzy_examples() {
        let two = Instance::new(2, units(2, 2), vec![pair(0, 1, 1)], vec![]).unwrap();
        assert_eq!(eval_fuzzy(&two, &at(&[0, 0])).unwrap(), Ratio::from_integer(0));
        assert_eq!(eval_fuzzy(&two, &at(&[0, 1])).unwrap(), Ratio::from_integer(1));

        let unit_tri = Instance::new(
            1,
            units(3, 1),
            vec![pair(0, 1, 1), pair(0, 2, 1), pair(1, 2, 1)],
            vec![],
        )
        .unwrap();
        // m = 3, n = 3: each u = 2, 1 - 2/6.
        assert_eq!(eval_fuzzy(&unit_tri, &at(&[0, 0, 0])).unwrap(), Ratio::new(2, 3));

        let lonely = Instance::new(1, units(1, 1), vec![], vec![]).unwrap();
        assert_eq!(eval_fuzzy(&lonely, &at(&[0])), Err(EvalError::Undefined));
        let unlinked = Instance::new(1, units(2, 1), vec![], vec![]).unwrap();
        assert_eq!(eval_fuzzy(&unlinked, &at(&[0, 0])), Err(EvalError::Undefined));
    }

    #[test]
    fn fuzzy_stays_in_unit_interval_with_heavy_weights() {
        let heavy = Instance::new(1, units(2, 1), vec![pair(0, 1, 9)], vec![]).unwrap();
        assert_eq!(eval_fuzzy(&heavy, &at(&[0, 0])).unwrap(), Ratio::from_integer(0));
    }

    #[test]
    fn ratio_examples() {
        let mut acts = units(2, 1);
        acts[0].enrollment = 30;
        acts[1].enrollment = 0;
        let inst = Instance::new(1, acts, vec![pair(0, 1, 3)], vec![]).unwrap();
        assert_eq!(
            eval_ratio(&inst, &at(&[0, 0]), ActivityId(0)).unwrap(),
            Ratio::new(1, 10)
        );
        assert_eq!(
            eval_ratio(&inst, &at(&[0, 0]), ActivityId(1)),
            Err(EvalError::ZeroEnrollment(1))
        );
        let apart = Instance::new(2, units(2, 2), vec![pair(0, 1, 3)], vec![]).unwrap();
        assert_eq!(
            eval_ratio(&apart, &at(&[0, 1]), ActivityId(0)).unwrap(),
            Ratio::from_integer(0)
        );
    }
}
