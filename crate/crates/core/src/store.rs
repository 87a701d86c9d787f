//! Domain store for preference variables.
//!
//! Every variable ranges over the dense slot grid `0..horizon`. A live value
//! carries a penalty made of two parts: the initial cost it was created with
//! and the violation share pushed onto it by soft constraints. Penalty zero
//! means the value is fully preferred.
//!
//! All mutations go through the trail, so [`Store::backtrack`] restores the
//! exact state observed at a [`Checkpoint`].

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A discrete time unit on the scheduling grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TimeSlot(pub u32);

impl TimeSlot {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TimeSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Dense identifier of a preference variable inside one [`Store`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("a preference variable needs at least one value")]
    EmptyDomain,
    #[error("value {0} listed twice")]
    DuplicateValue(TimeSlot),
    #[error("value {slot} lies outside the horizon 0..{horizon}")]
    OutsideHorizon { slot: TimeSlot, horizon: u32 },
    #[error("value {slot} is not in the domain of {var}")]
    NotInDomain { var: VarId, slot: TimeSlot },
    #[error("{0} is already assigned")]
    AlreadyAssigned(VarId),
    #[error("penalty overflow on {var} at value {slot}")]
    Overflow { var: VarId, slot: TimeSlot },
}

/// Raised when a domain becomes empty. Search must backtrack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("domain wipeout on {0}")]
pub struct Wipeout(pub VarId);

#[derive(Debug, Clone, PartialEq, Eq)]
struct Domain {
    live: Vec<u64>,
    size: usize,
    initial: Vec<u64>,
    share: Vec<u64>,
    assigned: Option<TimeSlot>,
}

impl Domain {
    fn contains(&self, slot: usize) -> bool {
        slot < self.initial.len() && self.live[slot / 64] & (1 << (slot % 64)) != 0
    }

    fn set(&mut self, slot: usize, on: bool) {
        let mask = 1u64 << (slot % 64);
        if on {
            self.live[slot / 64] |= mask;
        } else {
            self.live[slot / 64] &= !mask;
        }
    }

    fn iter(&self) -> LiveSlots<'_> {
        LiveSlots {
            words: &self.live,
            word: 0,
            bits: self.live.first().copied().unwrap_or(0),
        }
    }
}

struct LiveSlots<'a> {
    words: &'a [u64],
    word: usize,
    bits: u64,
}

impl Iterator for LiveSlots<'_> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        loop {
            if self.bits != 0 {
                let bit = self.bits.trailing_zeros() as usize;
                self.bits &= self.bits - 1;
                return Some(self.word * 64 + bit);
            }
            self.word += 1;
            self.bits = *self.words.get(self.word)?;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TrailEntry {
    Removed { var: VarId, slot: u32 },
    Share { var: VarId, slot: u32, delta: u64 },
    Assigned { var: VarId },
    Counter { index: usize, delta: i64 },
}

/// Position on the trail; backtracking to it undoes everything recorded since.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Checkpoint(usize);

/// Contiguous block of reversible integer counters owned by one constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterBlock {
    base: usize,
    len: usize,
}

impl CounterBlock {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Comparable copy of everything the trail protects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    domains: Vec<Domain>,
    counters: Vec<i64>,
}

#[derive(Debug, Clone)]
pub struct Store {
    horizon: u32,
    domains: Vec<Domain>,
    counters: Vec<i64>,
    trail: Vec<TrailEntry>,
}

impl Store {
    pub fn new(horizon: u32) -> Self {
        Store {
            horizon,
            domains: Vec::new(),
            counters: Vec::new(),
            trail: Vec::new(),
        }
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn num_vars(&self) -> usize {
        self.domains.len()
    }

    /// Creates an unassigned variable whose domain is exactly `pairs`, each
    /// value starting at its initial cost.
    pub fn new_pref_var(&mut self, pairs: &[(TimeSlot, u64)]) -> Result<VarId, StoreError> {
        if pairs.is_empty() {
            return Err(StoreError::EmptyDomain);
        }
        let width = self.horizon as usize;
        let mut domain = Domain {
            live: vec![0; width.div_ceil(64).max(1)],
            size: 0,
            initial: vec![0; width],
            share: vec![0; width],
            assigned: None,
        };
        for &(slot, cost) in pairs {
            if slot.0 >= self.horizon {
                return Err(StoreError::OutsideHorizon {
                    slot,
                    horizon: self.horizon,
                });
            }
            if domain.contains(slot.index()) {
                return Err(StoreError::DuplicateValue(slot));
            }
            domain.set(slot.index(), true);
            domain.initial[slot.index()] = cost;
            domain.size += 1;
        }
        let id = VarId(self.domains.len());
        self.domains.push(domain);
        Ok(id)
    }

    pub fn alloc_counters(&mut self, len: usize) -> CounterBlock {
        let base = self.counters.len();
        self.counters.resize(base + len, 0);
        CounterBlock { base, len }
    }

    pub fn counter(&self, block: CounterBlock, index: usize) -> i64 {
        debug_assert!(index < block.len);
        self.counters[block.base + index]
    }

    pub fn add_counter(&mut self, block: CounterBlock, index: usize, delta: i64) -> i64 {
        debug_assert!(index < block.len);
        if delta != 0 {
            let at = block.base + index;
            self.counters[at] += delta;
            self.trail.push(TrailEntry::Counter { index: at, delta });
        }
        self.counters[block.base + index]
    }

    pub fn contains(&self, var: VarId, slot: TimeSlot) -> bool {
        self.domains[var.0].contains(slot.index())
    }

    pub fn size(&self, var: VarId) -> usize {
        self.domains[var.0].size
    }

    pub fn assigned(&self, var: VarId) -> Option<TimeSlot> {
        self.domains[var.0].assigned
    }

    pub fn is_assigned(&self, var: VarId) -> bool {
        self.domains[var.0].assigned.is_some()
    }

    /// Total penalty of a live value, `None` if the value is gone.
    pub fn penalty(&self, var: VarId, slot: TimeSlot) -> Option<u64> {
        let d = &self.domains[var.0];
        d.contains(slot.index())
            .then(|| d.initial[slot.index()] + d.share[slot.index()])
    }

    pub fn initial_cost(&self, var: VarId, slot: TimeSlot) -> Option<u64> {
        let d = &self.domains[var.0];
        d.contains(slot.index()).then(|| d.initial[slot.index()])
    }

    /// Violation share accumulated on a live value by soft constraints.
    pub fn share(&self, var: VarId, slot: TimeSlot) -> Option<u64> {
        let d = &self.domains[var.0];
        d.contains(slot.index()).then(|| d.share[slot.index()])
    }

    /// Live values in increasing slot order.
    pub fn values(&self, var: VarId) -> impl Iterator<Item = TimeSlot> + '_ {
        self.domains[var.0].iter().map(|s| TimeSlot(s as u32))
    }

    /// Live `(value, penalty)` pairs in increasing slot order.
    pub fn pairs(&self, var: VarId) -> impl Iterator<Item = (TimeSlot, u64)> + '_ {
        let d = &self.domains[var.0];
        d.iter()
            .map(move |s| (TimeSlot(s as u32), d.initial[s] + d.share[s]))
    }

    pub fn remove_value(&mut self, var: VarId, slot: TimeSlot) -> Result<(), Wipeout> {
        let d = &mut self.domains[var.0];
        if !d.contains(slot.index()) {
            return Ok(());
        }
        d.set(slot.index(), false);
        d.size -= 1;
        self.trail.push(TrailEntry::Removed { var, slot: slot.0 });
        if d.size == 0 {
            Err(Wipeout(var))
        } else {
            Ok(())
        }
    }

    /// Adds `delta` to the violation share of a value. A value that already
    /// left the domain is skipped silently, as is a zero delta.
    pub fn add_penalty(&mut self, var: VarId, slot: TimeSlot, delta: u64) -> Result<(), StoreError> {
        let d = &mut self.domains[var.0];
        if delta == 0 || !d.contains(slot.index()) {
            return Ok(());
        }
        let i = slot.index();
        let share = d.share[i].checked_add(delta);
        match share.filter(|s| s.checked_add(d.initial[i]).is_some()) {
            Some(s) => d.share[i] = s,
            None => return Err(StoreError::Overflow { var, slot }),
        }
        self.trail.push(TrailEntry::Share {
            var,
            slot: slot.0,
            delta,
        });
        Ok(())
    }

    /// Fixes `var` to `slot` and drops every other value. Constraint
    /// propagation is the caller's job (see [`crate::model::Model::assign`]).
    pub fn assign(&mut self, var: VarId, slot: TimeSlot) -> Result<(), StoreError> {
        if self.is_assigned(var) {
            return Err(StoreError::AlreadyAssigned(var));
        }
        if !self.contains(var, slot) {
            return Err(StoreError::NotInDomain { var, slot });
        }
        let others: Vec<usize> = self.domains[var.0]
            .iter()
            .filter(|&s| s != slot.index())
            .collect();
        let d = &mut self.domains[var.0];
        for s in others {
            d.set(s, false);
            self.trail.push(TrailEntry::Removed { var, slot: s as u32 });
        }
        d.size = 1;
        d.assigned = Some(slot);
        self.trail.push(TrailEntry::Assigned { var });
        Ok(())
    }

    /// Value with the smallest penalty; ties go to the earliest slot.
    ///
    /// Panics on an empty domain, which only exists after a wipeout.
    pub fn min_penalty(&self, var: VarId) -> (TimeSlot, u64) {
        self.pairs(var)
            .min_by_key(|&(slot, p)| (p, slot))
            .expect("min_penalty on a wiped-out domain")
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint(self.trail.len())
    }

    pub fn trail_len(&self) -> usize {
        self.trail.len()
    }

    pub fn backtrack(&mut self, to: Checkpoint) {
        while self.trail.len() > to.0 {
            match self.trail.pop().expect("trail underflow") {
                TrailEntry::Removed { var, slot } => {
                    let d = &mut self.domains[var.0];
                    d.set(slot as usize, true);
                    d.size += 1;
                }
                TrailEntry::Share { var, slot, delta } => {
                    self.domains[var.0].share[slot as usize] -= delta;
                }
                TrailEntry::Assigned { var } => self.domains[var.0].assigned = None,
                TrailEntry::Counter { index, delta } => self.counters[index] -= delta,
            }
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            domains: self.domains.clone(),
            counters: self.counters.clone(),
        }
    }
}
