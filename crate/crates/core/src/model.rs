//! A store plus the constraints suspended on its variables.
//!
//! Constraints wake up only on instantiation. Events are delivered
//! synchronously, in the order the constraints were posted, before
//! [`Model::assign`] returns.

use std::collections::HashSet;

use thiserror::Error;

use crate::instance::{ActivityId, Instance};
use crate::softcumul::CumulativeMax;
use crate::softdisj::{post_soft_disjunctive, Arc, PostError, Threshold};
use crate::store::{CounterBlock, Store, StoreError, TimeSlot, VarId, Wipeout};

/// Why propagation rejected the current partial assignment.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Conflict {
    #[error(transparent)]
    Wipeout(#[from] Wipeout),
    #[error("incident violation of {0} exceeds the threshold")]
    Threshold(VarId),
    #[error("resource {resource} over capacity at slot {slot}")]
    Capacity { resource: usize, slot: u32 },
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AssignError {
    #[error(transparent)]
    Invalid(StoreError),
    #[error(transparent)]
    Conflict(#[from] Conflict),
}

pub trait Propagator {
    /// Called once `var`, one of the watched variables, has been assigned.
    fn on_instantiate(&self, var: VarId, store: &mut Store) -> Result<(), Conflict>;
}

pub struct Model {
    store: Store,
    propagators: Vec<Box<dyn Propagator>>,
    watchers: Vec<Vec<usize>>,
    arcs: Vec<Vec<(VarId, u64)>>,
    posted_pairs: HashSet<(VarId, VarId)>,
    late: Option<CounterBlock>,
}

impl Model {
    pub fn new(horizon: u32) -> Self {
        Model {
            store: Store::new(horizon),
            propagators: Vec::new(),
            watchers: Vec::new(),
            arcs: Vec::new(),
            posted_pairs: HashSet::new(),
            late: None,
        }
    }

    /// One start variable per activity (variable `i` is activity `i`), a
    /// soft disjunctive constraint per activity over its higher-indexed
    /// partners, and a hard capacity check per resource.
    pub fn from_instance(instance: &Instance, threshold: Threshold) -> Self {
        let mut model = Model::new(instance.horizon());
        for act in instance.activities() {
            model
                .new_var(&act.domain)
                .expect("instance domains are validated");
        }
        for i in instance.ids() {
            let act = instance.activity(i);
            let arcs: Vec<Arc> = instance
                .neighbors(i)
                .iter()
                .filter(|(j, _)| *j > i)
                .map(|&(j, weight)| Arc {
                    var: VarId(j.0),
                    duration: instance.activity(j).duration,
                    weight,
                })
                .collect();
            if !arcs.is_empty() {
                post_soft_disjunctive(&mut model, VarId(i.0), act.duration, &arcs, threshold)
                    .expect("aggregated pairs are unique");
            }
        }
        for (index, resource) in instance.resources().iter().enumerate() {
            CumulativeMax::post(&mut model, instance, index, resource);
        }
        model
    }

    pub fn new_var(&mut self, pairs: &[(TimeSlot, u64)]) -> Result<VarId, StoreError> {
        let id = self.store.new_pref_var(pairs)?;
        self.watchers.push(Vec::new());
        self.arcs.push(Vec::new());
        Ok(id)
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut Store {
        &mut self.store
    }

    /// Registers `propagator` on `watched`; returns its index.
    pub fn post(&mut self, propagator: Box<dyn Propagator>, watched: &[VarId]) -> usize {
        let index = self.propagators.len();
        self.propagators.push(propagator);
        for &v in watched {
            if !self.watchers[v.0].contains(&index) {
                self.watchers[v.0].push(index);
            }
        }
        index
    }

    /// Per-variable counters of violation charged to a variable after it
    /// was assigned. Allocated on first use; covers the variables that exist
    /// at that point.
    pub(crate) fn late_counters(&mut self) -> CounterBlock {
        if let Some(block) = self.late {
            return block;
        }
        let block = self.store.alloc_counters(self.store.num_vars());
        self.late = Some(block);
        block
    }

    pub(crate) fn register_pair(&mut self, a: VarId, b: VarId, weight: u64) -> Result<(), PostError> {
        let key = (a.min(b), a.max(b));
        if !self.posted_pairs.insert(key) {
            return Err(PostError::PairAlreadyPosted(key.0, key.1));
        }
        self.arcs[a.0].push((b, weight));
        self.arcs[b.0].push((a, weight));
        Ok(())
    }

    /// Soft-disjunction partners of `var` that are still unassigned.
    pub fn suspended_arcs(&self, var: VarId) -> impl Iterator<Item = (VarId, u64)> + '_ {
        self.arcs[var.0]
            .iter()
            .copied()
            .filter(|(other, _)| !self.store.is_assigned(*other))
    }

    pub fn num_vars(&self) -> usize {
        self.store.num_vars()
    }

    /// Incident violation of an assigned variable: the share carried by its
    /// value plus everything charged by partners assigned after it.
    pub fn incident_violation(&self, var: VarId) -> Option<u64> {
        let slot = self.store.assigned(var)?;
        let late = self
            .late
            .filter(|b| var.0 < b.len())
            .map_or(0, |b| self.store.counter(b, var.0) as u64);
        Some(self.store.share(var, slot).unwrap_or(0) + late)
    }

    pub fn assign(&mut self, var: VarId, slot: TimeSlot) -> Result<(), AssignError> {
        self.store.assign(var, slot).map_err(AssignError::Invalid)?;
        for k in 0..self.watchers[var.0].len() {
            let p = self.watchers[var.0][k];
            self.propagators[p].on_instantiate(var, &mut self.store)?;
        }
        Ok(())
    }

    /// Sum of the penalties of assigned values.
    pub fn assigned_cost(&self) -> u64 {
        (0..self.num_vars())
            .filter_map(|i| {
                let v = VarId(i);
                self.store
                    .assigned(v)
                    .and_then(|s| self.store.penalty(v, s))
            })
            .sum()
    }

    pub fn var_of(id: ActivityId) -> VarId {
        VarId(id.0)
    }
}
