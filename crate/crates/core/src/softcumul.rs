//! Discrete-capacity resources.
//!
//! Besides the hard "at most" / "at least" occupancy checks this module
//! computes how much a resource raises the preference lower bound
//! `L = sum m(a)`. At every slot `t` at least `c_t` member activities have to
//! run, and each one pays at least its cheapest covering start. The excess
//! over `m(a)`, spread over the activity's duration, is `d(t, a) / d_a`; the
//! `c_t` smallest of these ratios are a valid extra cost for slot `t`.
//!
//! Resources are processed in declaration order and share one
//! [`MinWeightTable`]: once a resource has charged an activity, later
//! resources see a raised `m(a)` and cannot charge the same excess again.

use num_rational::Ratio;
use thiserror::Error;

use crate::instance::{ActivityId, Instance, ResourceProfile};
use crate::model::{Conflict, Model, Propagator};
use crate::store::{CounterBlock, Store, TimeSlot, VarId};

/// Exact value of a lower-bound contribution.
pub type Bound = Ratio<u128>;

/// One capacity unit demanded by an activity. Views of the same activity
/// share its start variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UnitView {
    pub activity: ActivityId,
    pub unit: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CumulError {
    #[error("required capacity must be at least 1")]
    ZeroDemand,
    #[error("activity {0:?} missing from the minimal weight table")]
    MissingActivity(ActivityId),
}

/// An activity needing `k` units is seen by a resource as `k` unit-demand
/// activities running at the same slots.
pub fn unit_capacity_expand(activity: ActivityId, k: u32) -> Result<Vec<UnitView>, CumulError> {
    if k == 0 {
        return Err(CumulError::ZeroDemand);
    }
    Ok((0..k).map(|unit| UnitView { activity, unit }).collect())
}

/// Minimal expected penalty `m(a)` per activity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinWeightTable {
    m: Vec<Option<u64>>,
}

impl MinWeightTable {
    pub fn new(len: usize) -> Self {
        MinWeightTable { m: vec![None; len] }
    }

    /// `m(a)` is the smallest live penalty of every unassigned activity.
    /// Assigned activities are left out: their cost is already paid.
    pub fn from_store(store: &Store) -> Self {
        let m = (0..store.num_vars())
            .map(|i| {
                let v = VarId(i);
                (!store.is_assigned(v)).then(|| store.min_penalty(v).1)
            })
            .collect();
        MinWeightTable { m }
    }

    pub fn get(&self, a: ActivityId) -> Option<u64> {
        self.m.get(a.0).copied().flatten()
    }

    pub fn set(&mut self, a: ActivityId, value: u64) {
        if a.0 >= self.m.len() {
            self.m.resize(a.0 + 1, None);
        }
        self.m[a.0] = Some(value);
    }

    pub fn scope(&self) -> impl Iterator<Item = ActivityId> + '_ {
        self.m
            .iter()
            .enumerate()
            .filter(|(_, m)| m.is_some())
            .map(|(i, _)| ActivityId(i))
    }
}

/// `L = sum of m(a)` over `scope`.
pub fn base_lower_bound(
    table: &MinWeightTable,
    scope: impl IntoIterator<Item = ActivityId>,
) -> Result<u64, CumulError> {
    scope
        .into_iter()
        .map(|a| table.get(a).ok_or(CumulError::MissingActivity(a)))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delta {
    /// No live start puts the activity in execution at the slot.
    NotRunnable,
    Runnable(u64),
}

/// Excess penalty `d(t, a)` that activity `a` pays to be running at `t`:
/// the cheapest live start in `[t - d_a + 1, t]` minus `m(a)`, floored at 0.
pub fn delta(t: u32, a: ActivityId, duration: u32, store: &Store, table: &MinWeightTable) -> Delta {
    let var = VarId(a.0);
    let lo = (t + 1).saturating_sub(duration);
    let cheapest = store
        .pairs(var)
        .filter(|(s, _)| lo <= s.0 && s.0 <= t)
        .map(|(_, p)| p)
        .min();
    match cheapest {
        None => Delta::NotRunnable,
        Some(p) => Delta::Runnable(p.saturating_sub(table.get(a).unwrap_or(0))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundMode {
    /// Sum the `c_t^min` smallest ratios per slot.
    Min,
    /// Sum the `c_t^exp` smallest ratios per slot.
    Exp,
}

/// Fewer activities can still run at `slot` than the hard minimum requires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("at most {runnable} activities can run at slot {slot}, {required} required")]
pub struct Infeasible {
    pub slot: u32,
    pub runnable: usize,
    pub required: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contribution {
    pub total: Bound,
    /// Per-slot ratios `d(t, a) / d_a` of every unassigned runnable member,
    /// indexed by slot offset, kept for [`update_min_weights`].
    ratios: Vec<Vec<(ActivityId, Bound)>>,
}

/// Number of capacity units of `r` taken by assigned activities at `t`.
fn assigned_occupancy(instance: &Instance, r: &ResourceProfile, store: &Store, t: u32) -> u32 {
    r.members
        .iter()
        .filter(|m| {
            store
                .assigned(VarId(m.activity.0))
                .is_some_and(|s| instance.activity(m.activity).covers(s, t))
        })
        .count() as u32
}

/// Lower-bound contribution of resource `r` given the current store. Assigned
/// members only consume capacity; unassigned ones compete for what is left.
pub fn resource_contribution(
    instance: &Instance,
    r: &ResourceProfile,
    store: &Store,
    table: &MinWeightTable,
    mode: BoundMode,
) -> Result<Contribution, Infeasible> {
    let runnable_ratios = |t: u32| -> Vec<(ActivityId, Bound)> {
        let mut slot = Vec::new();
        for view in &r.members {
            let a = view.activity;
            if store.is_assigned(VarId(a.0)) {
                continue;
            }
            let d = instance.activity(a).duration;
            if let Delta::Runnable(excess) = delta(t, a, d, store, table) {
                // Extra capacity units of one activity ride along for free:
                // its excess is paid once.
                let excess = if view.unit == 0 { excess } else { 0 };
                slot.push((a, Bound::new(excess as u128, d as u128)));
            }
        }
        slot.sort_by(|x, y| x.1.cmp(&y.1).then(x.0.cmp(&y.0)));
        slot
    };
    let mut total = Bound::from_integer(0);
    let mut ratios = Vec::with_capacity(r.len());
    // Slots that want no capacity add nothing; their ratios are only needed
    // by the min-weight update, so they are filled in if the total is positive.
    let mut deferred = Vec::new();
    for t in r.window() {
        let k = r.offset(t);
        let used = assigned_occupancy(instance, r, store, t);
        let required = r.cap_min[k].saturating_sub(used);
        let wanted = match mode {
            BoundMode::Min => required,
            BoundMode::Exp => r.cap_exp[k].saturating_sub(used),
        }
        .max(required);
        if wanted == 0 {
            deferred.push(t);
            ratios.push(Vec::new());
            continue;
        }
        let slot = runnable_ratios(t);
        if slot.len() < required as usize {
            return Err(Infeasible {
                slot: t,
                runnable: slot.len(),
                required,
            });
        }
        let take = (wanted as usize).min(slot.len());
        for (_, ratio) in &slot[..take] {
            total += ratio;
        }
        ratios.push(slot);
    }
    if total > Bound::from_integer(0) {
        for t in deferred {
            ratios[r.offset(t)] = runnable_ratios(t);
        }
    }
    Ok(Contribution { total, ratios })
}

/// Raises `m(a)` for the members of `r` after its contribution was counted.
///
/// Whatever share of the contribution an activity ends up paying, it cannot
/// exceed the largest sum of its ratios over the slots covered by one of its
/// live starts. Raising `m(a)` by that amount, rounded up, keeps the sum of
/// all resource contributions below the true excess. A zero contribution
/// charges nobody and leaves the table unchanged.
pub fn update_min_weights(
    instance: &Instance,
    r: &ResourceProfile,
    store: &Store,
    table: &mut MinWeightTable,
    contribution: &Contribution,
) {
    if contribution.total == Bound::from_integer(0) {
        return;
    }
    let mut seen = Vec::new();
    for view in &r.members {
        let a = view.activity;
        if view.unit != 0 || store.is_assigned(VarId(a.0)) || seen.contains(&a) {
            continue;
        }
        seen.push(a);
        let act = instance.activity(a);
        let ratio_at = |t: u32| -> Bound {
            if t < r.t_min || t > r.t_max {
                return Bound::from_integer(0);
            }
            contribution.ratios[r.offset(t)]
                .iter()
                .find(|(b, _)| *b == a)
                .map_or(Bound::from_integer(0), |(_, q)| *q)
        };
        let charge = store
            .values(VarId(a.0))
            .map(|s| (s.0..s.0 + act.duration).map(ratio_at).sum::<Bound>())
            .max()
            .unwrap_or_else(|| Bound::from_integer(0));
        let raise = charge.ceil().to_integer() as u64;
        if raise > 0 {
            let m = table.get(a).unwrap_or(0);
            table.set(a, m.saturating_add(raise));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LowerBound {
    Value { base: u64, resources: Bound },
    Infeasible { resource: usize, cause: Infeasible },
}

impl LowerBound {
    pub fn total(&self) -> Option<Bound> {
        match self {
            LowerBound::Value { base, resources } => Some(Bound::from_integer(*base as u128) + resources),
            LowerBound::Infeasible { .. } => None,
        }
    }
}

/// Lower bound on the cost still to be paid by the unassigned activities:
/// `sum m(a)` plus, when `mode` is set, every resource's contribution with
/// min-weight sharing in declaration order.
pub fn lower_bound(instance: &Instance, store: &Store, mode: Option<BoundMode>) -> LowerBound {
    let mut table = MinWeightTable::from_store(store);
    let base = base_lower_bound(&table, table.scope().collect::<Vec<_>>())
        .expect("scope comes from the table");
    let mut resources = Bound::from_integer(0);
    if let Some(mode) = mode {
        for (index, r) in instance.resources().iter().enumerate() {
            match resource_contribution(instance, r, store, &table, mode) {
                Ok(c) => {
                    resources += c.total;
                    update_min_weights(instance, r, store, &mut table, &c);
                }
                Err(cause) => {
                    return LowerBound::Infeasible {
                        resource: index,
                        cause,
                    }
                }
            }
        }
    }
    LowerBound::Value { base, resources }
}

/// First slot where the assigned members of `r` exceed `cap_max`.
pub fn check_cumulative_max(
    instance: &Instance,
    r: &ResourceProfile,
    partial: &[Option<TimeSlot>],
) -> Result<(), u32> {
    for t in r.window() {
        let load = r
            .members
            .iter()
            .filter(|m| partial[m.activity.0].is_some_and(|s| instance.activity(m.activity).covers(s, t)))
            .count();
        if load > r.cap_max[r.offset(t)] as usize {
            return Err(t);
        }
    }
    Ok(())
}

/// First slot where a complete assignment leaves `r` below `cap_min`.
pub fn check_atleast(instance: &Instance, r: &ResourceProfile, theta: &[TimeSlot]) -> Result<(), u32> {
    for t in r.window() {
        let load = r
            .members
            .iter()
            .filter(|m| instance.activity(m.activity).covers(theta[m.activity.0], t))
            .count();
        if load < r.cap_min[r.offset(t)] as usize {
            return Err(t);
        }
    }
    Ok(())
}

/// Hard "at most `cap_max`" occupancy, checked on every instantiation.
pub struct CumulativeMax {
    resource: usize,
    t_min: u32,
    cap_max: Vec<u32>,
    /// `(variable, duration, units demanded)` per member activity.
    members: Vec<(VarId, u32, u32)>,
    load: CounterBlock,
}

impl CumulativeMax {
    pub fn post(model: &mut Model, instance: &Instance, index: usize, r: &ResourceProfile) -> usize {
        let mut members: Vec<(VarId, u32, u32)> = Vec::new();
        for view in &r.members {
            let var = VarId(view.activity.0);
            match members.iter_mut().find(|m| m.0 == var) {
                Some(m) => m.2 += 1,
                None => members.push((var, instance.activity(view.activity).duration, 1)),
            }
        }
        let load = model.store_mut().alloc_counters(r.len());
        let watched: Vec<VarId> = members.iter().map(|m| m.0).collect();
        model.post(
            Box::new(CumulativeMax {
                resource: index,
                t_min: r.t_min,
                cap_max: r.cap_max.clone(),
                members,
                load,
            }),
            &watched,
        )
    }
}

impl Propagator for CumulativeMax {
    fn on_instantiate(&self, var: VarId, store: &mut Store) -> Result<(), Conflict> {
        let Some(&(_, duration, units)) = self.members.iter().find(|m| m.0 == var) else {
            return Ok(());
        };
        let start = store.assigned(var).expect("instantiation event on a free variable");
        let t_max = self.t_min + self.cap_max.len() as u32 - 1;
        let from = start.0.max(self.t_min);
        let to = (start.0 + duration - 1).min(t_max);
        for t in from..=to {
            let k = (t - self.t_min) as usize;
            let load = store.add_counter(self.load, k, units as i64);
            if load > self.cap_max[k] as i64 {
                return Err(Conflict::Capacity {
                    resource: self.resource,
                    slot: t,
                });
            }
        }
        Ok(())
    }
}
