//! Immutable problem data: activities, weighted soft disjunctions and
//! discrete-capacity resources.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::softcumul::{unit_capacity_expand, UnitView};
use crate::store::TimeSlot;

/// Dense activity index inside one [`Instance`]; also the index of the
/// activity's start variable in a [`crate::store::Store`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActivityId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Activity {
    /// External identifier used by instance and solution files.
    pub label: u32,
    pub duration: u32,
    /// Enrolled students.
    pub enrollment: u32,
    /// Candidate starts with their initial costs, in file order.
    pub domain: Vec<(TimeSlot, u64)>,
}

impl Activity {
    pub fn initial_cost(&self, start: TimeSlot) -> Option<u64> {
        self.domain.iter().find(|(s, _)| *s == start).map(|&(_, c)| c)
    }

    pub fn max_initial_cost(&self) -> u64 {
        self.domain.iter().map(|&(_, c)| c).max().unwrap_or(0)
    }

    /// True iff the activity started at `start` is in execution at `t`.
    pub fn covers(&self, start: TimeSlot, t: u32) -> bool {
        start.0 <= t && t < start.0 + self.duration
    }
}

/// Pairwise weighted non-overlap preference. `a < b` after construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SoftDisjunctive {
    pub a: ActivityId,
    pub b: ActivityId,
    pub weight: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceProfile {
    pub name: String,
    /// One entry per capacity unit demanded; an activity needing `k` units
    /// appears `k` times.
    pub members: Vec<UnitView>,
    pub t_min: u32,
    pub t_max: u32,
    pub cap_min: Vec<u32>,
    pub cap_max: Vec<u32>,
    pub cap_exp: Vec<u32>,
}

impl ResourceProfile {
    pub fn window(&self) -> impl Iterator<Item = u32> {
        self.t_min..=self.t_max
    }

    pub fn len(&self) -> usize {
        (self.t_max - self.t_min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Per-slot arrays are indexed relative to `t_min`.
    pub fn offset(&self, t: u32) -> usize {
        (t - self.t_min) as usize
    }

    /// Member activities as they appear in the resource file (repeated per
    /// unit of demand).
    pub fn member_ids(&self) -> impl Iterator<Item = ActivityId> + '_ {
        self.members.iter().map(|m| m.activity)
    }
}

/// Plain resource description before unit expansion and validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceSpec {
    pub name: String,
    pub members: Vec<ActivityId>,
    pub t_min: u32,
    pub t_max: u32,
    pub cap_min: Vec<u32>,
    pub cap_max: Vec<u32>,
    pub cap_exp: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InstanceError {
    #[error("horizon must be positive")]
    EmptyHorizon,
    #[error("activity label {0} used twice")]
    DuplicateLabel(u32),
    #[error("activity {label}: duration must be at least 1")]
    ZeroDuration { label: u32 },
    #[error("activity {label}: empty domain")]
    EmptyDomain { label: u32 },
    #[error("activity {label}: start {start} listed twice")]
    DuplicateStart { label: u32, start: u32 },
    #[error("activity {label}: start {start} with duration {duration} does not fit horizon {horizon}")]
    StartOutsideHorizon {
        label: u32,
        start: u32,
        duration: u32,
        horizon: u32,
    },
    #[error("reference to unknown activity index {0}")]
    DanglingActivity(usize),
    #[error("soft disjunction between activity {0} and itself")]
    SelfPair(u32),
    #[error("soft disjunction {a}-{b} has weight 0")]
    ZeroWeight { a: u32, b: u32 },
    #[error("resource {name}: window {t_min}..={t_max} outside horizon {horizon}")]
    BadWindow {
        name: String,
        t_min: u32,
        t_max: u32,
        horizon: u32,
    },
    #[error("resource {name}: capacity array {field} has length {got}, expected {expected}")]
    CapacityLength {
        name: String,
        field: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("resource {name}: slot {t} violates cap_min <= cap_exp <= cap_max")]
    CapacityOrder { name: String, t: u32 },
    #[error("penalty totals overflow 64 bits")]
    Overflow,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    horizon: u32,
    activities: Vec<Activity>,
    soft: Vec<SoftDisjunctive>,
    resources: Vec<ResourceProfile>,
    neighbors: Vec<Vec<(ActivityId, u64)>>,
}

impl Instance {
    /// Validates and normalizes the raw data. Soft pairs are aggregated per
    /// unordered pair by summing weights and stored with `a < b`, sorted.
    pub fn new(
        horizon: u32,
        activities: Vec<Activity>,
        pairs: Vec<SoftDisjunctive>,
        resources: Vec<ResourceSpec>,
    ) -> Result<Self, InstanceError> {
        if horizon == 0 {
            return Err(InstanceError::EmptyHorizon);
        }
        let mut labels = HashMap::new();
        let mut penalty_total: u64 = 0;
        for (i, act) in activities.iter().enumerate() {
            if labels.insert(act.label, i).is_some() {
                return Err(InstanceError::DuplicateLabel(act.label));
            }
            if act.duration == 0 {
                return Err(InstanceError::ZeroDuration { label: act.label });
            }
            if act.domain.is_empty() {
                return Err(InstanceError::EmptyDomain { label: act.label });
            }
            let mut seen = vec![false; horizon as usize];
            for &(start, _) in &act.domain {
                if start.0 as u64 + act.duration as u64 > horizon as u64 {
                    return Err(InstanceError::StartOutsideHorizon {
                        label: act.label,
                        start: start.0,
                        duration: act.duration,
                        horizon,
                    });
                }
                if std::mem::replace(&mut seen[start.index()], true) {
                    return Err(InstanceError::DuplicateStart {
                        label: act.label,
                        start: start.0,
                    });
                }
            }
            penalty_total = penalty_total
                .checked_add(act.max_initial_cost())
                .ok_or(InstanceError::Overflow)?;
        }

        let n = activities.len();
        let mut merged: BTreeMap<(usize, usize), u64> = BTreeMap::new();
        for p in &pairs {
            for id in [p.a, p.b] {
                if id.0 >= n {
                    return Err(InstanceError::DanglingActivity(id.0));
                }
            }
            if p.a == p.b {
                return Err(InstanceError::SelfPair(activities[p.a.0].label));
            }
            if p.weight == 0 {
                return Err(InstanceError::ZeroWeight {
                    a: activities[p.a.0].label,
                    b: activities[p.b.0].label,
                });
            }
            let key = (p.a.0.min(p.b.0), p.a.0.max(p.b.0));
            let w = merged.entry(key).or_insert(0);
            *w = w.checked_add(p.weight).ok_or(InstanceError::Overflow)?;
        }
        let soft: Vec<SoftDisjunctive> = merged
            .into_iter()
            .map(|((a, b), weight)| SoftDisjunctive {
                a: ActivityId(a),
                b: ActivityId(b),
                weight,
            })
            .collect();
        // Every pair can be charged to at most one endpoint, so this bounds
        // any reachable total penalty.
        for p in &soft {
            penalty_total = penalty_total
                .checked_add(p.weight)
                .ok_or(InstanceError::Overflow)?;
        }

        let mut neighbors = vec![Vec::new(); n];
        for p in &soft {
            neighbors[p.a.0].push((p.b, p.weight));
            neighbors[p.b.0].push((p.a, p.weight));
        }

        let resources = resources
            .into_iter()
            .map(|spec| Self::check_resource(spec, horizon, n))
            .collect::<Result<Vec<_>, _>>()?;

        Ok(Instance {
            horizon,
            activities,
            soft,
            resources,
            neighbors,
        })
    }

    fn check_resource(
        spec: ResourceSpec,
        horizon: u32,
        n: usize,
    ) -> Result<ResourceProfile, InstanceError> {
        if spec.t_min > spec.t_max || spec.t_max >= horizon {
            return Err(InstanceError::BadWindow {
                name: spec.name,
                t_min: spec.t_min,
                t_max: spec.t_max,
                horizon,
            });
        }
        let expected = (spec.t_max - spec.t_min + 1) as usize;
        for (field, arr) in [
            ("cap_min", &spec.cap_min),
            ("cap_max", &spec.cap_max),
            ("cap_exp", &spec.cap_exp),
        ] {
            if arr.len() != expected {
                return Err(InstanceError::CapacityLength {
                    name: spec.name.clone(),
                    field,
                    got: arr.len(),
                    expected,
                });
            }
        }
        for k in 0..expected {
            if !(spec.cap_min[k] <= spec.cap_exp[k] && spec.cap_exp[k] <= spec.cap_max[k]) {
                return Err(InstanceError::CapacityOrder {
                    name: spec.name,
                    t: spec.t_min + k as u32,
                });
            }
        }
        let mut demand: BTreeMap<ActivityId, u32> = BTreeMap::new();
        let mut order = Vec::new();
        for &m in &spec.members {
            if m.0 >= n {
                return Err(InstanceError::DanglingActivity(m.0));
            }
            let k = demand.entry(m).or_insert(0);
            if *k == 0 {
                order.push(m);
            }
            *k += 1;
        }
        let members = order
            .into_iter()
            .flat_map(|a| unit_capacity_expand(a, demand[&a]).expect("demand is positive"))
            .collect();
        Ok(ResourceProfile {
            name: spec.name,
            members,
            t_min: spec.t_min,
            t_max: spec.t_max,
            cap_min: spec.cap_min,
            cap_max: spec.cap_max,
            cap_exp: spec.cap_exp,
        })
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.activities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.activities.is_empty()
    }

    pub fn activities(&self) -> &[Activity] {
        &self.activities
    }

    pub fn activity(&self, id: ActivityId) -> &Activity {
        &self.activities[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ActivityId> {
        (0..self.activities.len()).map(ActivityId)
    }

    /// Aggregated soft disjunctions, `a < b`, sorted by `(a, b)`.
    pub fn soft(&self) -> &[SoftDisjunctive] {
        &self.soft
    }

    pub fn resources(&self) -> &[ResourceProfile] {
        &self.resources
    }

    /// Soft-disjunction partners of `id` with their weights.
    pub fn neighbors(&self, id: ActivityId) -> &[(ActivityId, u64)] {
        &self.neighbors[id.0]
    }

    pub fn total_weight(&self) -> u64 {
        self.soft.iter().map(|p| p.weight).sum()
    }

    /// Size of the full Cartesian product of start domains, saturating.
    pub fn search_space(&self) -> u128 {
        self.activities
            .iter()
            .fold(1u128, |acc, a| acc.saturating_mul(a.domain.len() as u128))
    }

    pub fn id_of_label(&self, label: u32) -> Option<ActivityId> {
        self.activities
            .iter()
            .position(|a| a.label == label)
            .map(ActivityId)
    }
}

/// Complete assignment of starts, indexed by [`ActivityId`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment(pub Vec<TimeSlot>);

impl Assignment {
    pub fn start(&self, id: ActivityId) -> TimeSlot {
        self.0[id.0]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Sum of the initial costs of the chosen starts. `None` if some start
    /// is not in its activity's domain.
    pub fn initial_cost(&self, instance: &Instance) -> Option<u64> {
        instance
            .ids()
            .map(|id| instance.activity(id).initial_cost(self.start(id)))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn unit(label: u32, slots: u32) -> Activity {
        Activity {
            label,
            duration: 1,
            enrollment: 0,
            domain: (0..slots).map(|s| (TimeSlot(s), 0)).collect(),
        }
    }

    #[test]
    fn aggregates_duplicate_pairs() {
        let inst = Instance::new(
            2,
            vec![unit(0, 2), unit(1, 2)],
            vec![
                SoftDisjunctive {
                    a: ActivityId(0),
                    b: ActivityId(1),
                    weight: 2,
                },
                SoftDisjunctive {
                    a: ActivityId(1),
                    b: ActivityId(0),
                    weight: 3,
                },
            ],
            vec![],
        )
        .unwrap();
        assert_eq!(
            inst.soft(),
            &[SoftDisjunctive {
                a: ActivityId(0),
                b: ActivityId(1),
                weight: 5
            }]
        );
        assert_eq!(inst.neighbors(ActivityId(1)), &[(ActivityId(0), 5)]);
    }

    #[test]
    fn rejects_zero_weight_and_self_pairs() {
        let pair = |a, b, weight| SoftDisjunctive {
            a: ActivityId(a),
            b: ActivityId(b),
            weight,
        };
        let acts = || vec![unit(0, 2), unit(1, 2)];
        assert!(matches!(
            Instance::new(2, acts(), vec![pair(0, 1, 0)], vec![]),
            Err(InstanceError::ZeroWeight { .. })
        ));
        assert!(matches!(
            Instance::new(2, acts(), vec![pair(1, 1, 1)], vec![]),
            Err(InstanceError::SelfPair(1))
        ));
        assert!(matches!(
            Instance::new(2, acts(), vec![pair(0, 7, 1)], vec![]),
            Err(InstanceError::DanglingActivity(7))
        ));
    }

    #[test]
    fn domain_must_fit_horizon() {
        let mut a = unit(0, 3);
        a.duration = 2;
        assert!(matches!(
            Instance::new(3, vec![a], vec![], vec![]),
            Err(InstanceError::StartOutsideHorizon { start: 2, .. })
        ));
    }

    #[test]
    fn resource_validation() {
        let spec = ResourceSpec {
            name: "rooms".into(),
            members: vec![ActivityId(0), ActivityId(0)],
            t_min: 0,
            t_max: 1,
            cap_min: vec![0, 0],
            cap_max: vec![2, 2],
            cap_exp: vec![1, 1],
        };
        let inst = Instance::new(2, vec![unit(0, 2)], vec![], vec![spec.clone()]).unwrap();
        assert_eq!(inst.resources()[0].members.len(), 2);

        let mut bad = spec.clone();
        bad.cap_exp = vec![3, 1];
        assert!(matches!(
            Instance::new(2, vec![unit(0, 2)], vec![], vec![bad]),
            Err(InstanceError::CapacityOrder { t: 0, .. })
        ));
        let mut bad = spec.clone();
        bad.cap_min = vec![0];
        assert!(matches!(
            Instance::new(2, vec![unit(0, 2)], vec![], vec![bad]),
            Err(InstanceError::CapacityLength { .. })
        ));
        let mut bad = spec;
        bad.t_max = 2;
        assert!(matches!(
            Instance::new(2, vec![unit(0, 2)], vec![], vec![bad]),
            Err(InstanceError::BadWindow { .. })
        ));
    }
}
