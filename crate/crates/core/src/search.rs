//! Anytime depth-first branch and bound over preference variables.
//!
//! Variables are picked most-constrained first (most soft disjunctions to
//! still unassigned partners), values cheapest first. The cost of a partial
//! assignment is the sum of the penalties its values carried when they were
//! assigned; at a leaf this is initial costs plus the weighted overlap cost.
//! Every improving leaf is reported to the observer as it is found.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::instance::{Assignment, Instance};
use crate::model::Model;
use crate::softcumul::{check_atleast, lower_bound, Bound, BoundMode};
use crate::softdisj::{incident_violations, Threshold};
use crate::store::{Store, TimeSlot, VarId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LbMode {
    #[default]
    None,
    Min,
    Exp,
}

impl LbMode {
    pub fn bound_mode(self) -> Option<BoundMode> {
        match self {
            LbMode::None => None,
            LbMode::Min => Some(BoundMode::Min),
            LbMode::Exp => Some(BoundMode::Exp),
        }
    }
}

/// How "most constrained" is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VarOrder {
    /// Number of soft disjunctions to unassigned partners.
    #[default]
    ArcCount,
    /// Total weight of those disjunctions.
    ArcWeight,
}

#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub time_limit: Option<Duration>,
    pub node_limit: Option<u64>,
    pub u_max: Threshold,
    pub lb_mode: LbMode,
    /// Resource contributions are recomputed at depths that are multiples of
    /// this period; other nodes reuse the parent's bound.
    pub lb_period: u32,
    pub var_order: VarOrder,
    /// Cooperative cancellation, polled at node boundaries.
    pub cancel: Option<Arc<AtomicBool>>,
    /// Best cost known across concurrent searches. Read for pruning and
    /// lowered whenever this search improves on it.
    pub shared_bound: Option<Arc<AtomicU64>>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            time_limit: None,
            node_limit: None,
            u_max: Threshold::NONE,
            lb_mode: LbMode::None,
            lb_period: 1,
            var_order: VarOrder::ArcCount,
            cancel: None,
            shared_bound: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SearchError {
    #[error("time limit must be positive")]
    ZeroTimeLimit,
    #[error("node limit must be positive")]
    ZeroNodeLimit,
    #[error("lower bound period must be positive")]
    ZeroPeriod,
}

impl SearchConfig {
    fn validate(&self) -> Result<(), SearchError> {
        if self.time_limit == Some(Duration::ZERO) {
            return Err(SearchError::ZeroTimeLimit);
        }
        if self.node_limit == Some(0) {
            return Err(SearchError::ZeroNodeLimit);
        }
        if self.lb_period == 0 {
            return Err(SearchError::ZeroPeriod);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Incumbent {
    pub assignment: Assignment,
    /// Initial costs plus weighted overlaps of `assignment`.
    pub cost: u64,
    pub elapsed: Duration,
    pub nodes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// Search space exhausted; the incumbent is optimal.
    Optimal,
    /// A limit or cancellation stopped the search after an incumbent.
    LimitReached,
    /// Search space exhausted without any feasible assignment.
    Infeasible,
    /// A limit or cancellation stopped the search before any incumbent.
    NoSolutionYet,
    /// Exhausted, but only because a concurrent search held a better bound.
    Dominated,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub status: Status,
    pub incumbent: Option<Incumbent>,
    pub nodes: u64,
    pub elapsed: Duration,
    pub incumbents: usize,
}

impl SolveOutcome {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    pub fn cost(&self) -> Option<u64> {
        self.incumbent.as_ref().map(|i| i.cost)
    }
}

/// Receives search events synchronously. Closures taking `&Incumbent` are
/// observers.
pub trait SearchObserver {
    fn incumbent(&mut self, incumbent: &Incumbent);

    /// Every complete assignment reached, with the sum of the penalties of
    /// its values, before the hard at-least check.
    fn leaf(&mut self, _assignment: &Assignment, _penalty_sum: u64) {}
}

impl<F: FnMut(&Incumbent)> SearchObserver for F {
    fn incumbent(&mut self, incumbent: &Incumbent) {
        self(incumbent)
    }
}

/// Unassigned variable with the most suspended arcs; ties go to the
/// smallest minimal penalty, then to the smallest index.
pub fn select_variable(model: &Model, order: VarOrder) -> Option<VarId> {
    let store = model.store();
    (0..model.num_vars())
        .map(VarId)
        .filter(|&v| !store.is_assigned(v))
        .max_by(|&x, &y| {
            let score = |v: VarId| -> u64 {
                match order {
                    VarOrder::ArcCount => model.suspended_arcs(v).count() as u64,
                    VarOrder::ArcWeight => model.suspended_arcs(v).map(|(_, w)| w).sum(),
                }
            };
            score(x)
                .cmp(&score(y))
                .then_with(|| store.min_penalty(y).1.cmp(&store.min_penalty(x).1))
                .then_with(|| y.cmp(&x))
        })
}

/// Live values by increasing penalty, ties by slot.
pub fn order_values(store: &Store, var: VarId) -> Vec<TimeSlot> {
    let mut pairs: Vec<(TimeSlot, u64)> = store.pairs(var).collect();
    pairs.sort_by_key(|&(slot, p)| (p, slot));
    pairs.into_iter().map(|(slot, _)| slot).collect()
}

pub fn solve(
    instance: &Instance,
    config: &SearchConfig,
    observer: &mut dyn SearchObserver,
) -> Result<SolveOutcome, SearchError> {
    config.validate()?;
    let mut search = Search::new(instance, config, observer, Instant::now(), 0);
    Ok(search.run())
}

struct Search<'a> {
    instance: &'a Instance,
    config: &'a SearchConfig,
    observer: &'a mut dyn SearchObserver,
    model: Model,
    best: Option<Incumbent>,
    incumbents: usize,
    nodes: u64,
    node_offset: u64,
    started: Instant,
    stopped: bool,
    pruned_by_shared: bool,
}

impl<'a> Search<'a> {
    fn new(
        instance: &'a Instance,
        config: &'a SearchConfig,
        observer: &'a mut dyn SearchObserver,
        started: Instant,
        node_offset: u64,
    ) -> Self {
        Search {
            instance,
            config,
            observer,
            model: Model::from_instance(instance, config.u_max),
            best: None,
            incumbents: 0,
            nodes: 0,
            node_offset,
            started,
            stopped: false,
            pruned_by_shared: false,
        }
    }

    fn run(&mut self) -> SolveOutcome {
        if let Some(root) = self.node_bound(0, 0, None) {
            self.descend(0, 0, root);
        }
        let status = match (self.stopped, &self.best) {
            (true, Some(_)) => Status::LimitReached,
            (true, None) => Status::NoSolutionYet,
            (false, Some(best)) => {
                if self.shared_value().is_some_and(|s| s < best.cost) {
                    Status::Dominated
                } else {
                    Status::Optimal
                }
            }
            (false, None) if self.pruned_by_shared => Status::Dominated,
            (false, None) => Status::Infeasible,
        };
        SolveOutcome {
            status,
            incumbent: self.best.clone(),
            nodes: self.nodes,
            elapsed: self.started.elapsed(),
            incumbents: self.incumbents,
        }
    }

    fn shared_value(&self) -> Option<u64> {
        self.config
            .shared_bound
            .as_ref()
            .map(|b| b.load(Ordering::Acquire))
    }

    fn should_stop(&mut self) -> bool {
        if self.stopped {
            return true;
        }
        let cancelled = self
            .config
            .cancel
            .as_ref()
            .is_some_and(|c| c.load(Ordering::Relaxed));
        let out_of_nodes = self
            .config
            .node_limit
            .is_some_and(|limit| self.node_offset + self.nodes >= limit);
        let out_of_time = self
            .config
            .time_limit
            .is_some_and(|limit| self.started.elapsed() >= limit);
        self.stopped = cancelled || out_of_nodes || out_of_time;
        self.stopped
    }

    /// Lower bound on the total cost of any completion, or `None` if the
    /// node can be pruned.
    fn node_bound(&mut self, depth: u32, cost: u64, parent: Option<Bound>) -> Option<Bound> {
        let store = self.model.store();
        let recompute = self.config.lb_mode != LbMode::None && depth.is_multiple_of(self.config.lb_period);
        let mode = if recompute {
            self.config.lb_mode.bound_mode()
        } else {
            None
        };
        let below = lower_bound(self.instance, store, mode);
        let mut bound = below.total()? + Bound::from_integer(cost as u128);
        if let Some(parent) = parent {
            bound = bound.max(parent);
        }
        let needed = bound.ceil().to_integer();
        if self.best.as_ref().is_some_and(|b| needed >= b.cost as u128) {
            return None;
        }
        if self.shared_value().is_some_and(|s| needed >= s as u128) {
            self.pruned_by_shared = true;
            return None;
        }
        Some(bound)
    }

    fn descend(&mut self, depth: u32, cost: u64, bound: Bound) {
        let Some(var) = select_variable(&self.model, self.config.var_order) else {
            self.leaf(cost);
            return;
        };
        for value in order_values(self.model.store(), var) {
            if self.should_stop() {
                return;
            }
            // Values may have been pruned by an incumbent found deeper down.
            if self
                .best
                .as_ref()
                .is_some_and(|b| bound.ceil().to_integer() >= b.cost as u128)
            {
                return;
            }
            self.nodes += 1;
            let penalty = self
                .model
                .store()
                .penalty(var, value)
                .expect("ordered values are live");
            let checkpoint = self.model.store().checkpoint();
            if self.model.assign(var, value).is_ok() {
                let child_cost = cost + penalty;
                if let Some(child) = self.node_bound(depth + 1, child_cost, Some(bound)) {
                    self.descend(depth + 1, child_cost, child);
                }
            }
            self.model.store_mut().backtrack(checkpoint);
        }
    }

    fn leaf(&mut self, cost: u64) {
        let store = self.model.store();
        let assignment = Assignment(
            (0..store.num_vars())
                .map(|i| store.assigned(VarId(i)).expect("leaf is complete"))
                .collect(),
        );
        self.observer.leaf(&assignment, cost);
        let feasible = self
            .instance
            .resources()
            .iter()
            .all(|r| check_atleast(self.instance, r, &assignment.0).is_ok());
        if !feasible || self.best.as_ref().is_some_and(|b| cost >= b.cost) {
            return;
        }
        let incumbent = Incumbent {
            assignment,
            cost,
            elapsed: self.started.elapsed(),
            nodes: self.node_offset + self.nodes,
        };
        if let Some(shared) = &self.config.shared_bound {
            shared.fetch_min(cost, Ordering::AcqRel);
        }
        self.incumbents += 1;
        self.observer.incumbent(&incumbent);
        self.best = Some(incumbent);
    }
}

/// Result of [`restart_tightening`].
#[derive(Debug, Clone)]
pub enum Tightening {
    /// Search again with a threshold one below the previous worst share.
    Next(SearchConfig),
    /// The previous incumbent already has no violation at all.
    Done,
}

/// Largest incident violation `u` of any activity in `incumbent`.
pub fn worst_share(instance: &Instance, incumbent: &Incumbent) -> u64 {
    incident_violations(instance, &incumbent.assignment)
        .expect("incumbents are complete")
        .into_iter()
        .max()
        .unwrap_or(0)
}

pub fn restart_tightening(instance: &Instance, previous: &Incumbent, config: &SearchConfig) -> Tightening {
    match worst_share(instance, previous) {
        0 => Tightening::Done,
        worst => Tightening::Next(SearchConfig {
            u_max: Threshold::at_most(worst - 1),
            ..config.clone()
        }),
    }
}

#[derive(Debug, Clone)]
pub struct FuzzyOutcome {
    /// `Optimal` means no assignment has a smaller worst share than the
    /// incumbent's.
    pub status: Status,
    pub incumbent: Option<Incumbent>,
    pub rounds: usize,
    pub nodes: u64,
    pub elapsed: Duration,
    pub incumbents: usize,
}

/// Repeats [`solve`] with [`restart_tightening`] until no assignment beats
/// the last incumbent's worst per-activity violation. Limits apply to the
/// whole sequence of rounds.
pub fn solve_fuzzy_restart(
    instance: &Instance,
    config: &SearchConfig,
    observer: &mut dyn SearchObserver,
) -> Result<FuzzyOutcome, SearchError> {
    config.validate()?;
    let started = Instant::now();
    let mut round_config = config.clone();
    let mut best: Option<Incumbent> = None;
    let mut rounds = 0;
    let mut nodes = 0;
    let mut incumbents = 0;
    let status = loop {
        rounds += 1;
        let outcome = {
            let mut search = Search::new(instance, &round_config, observer, started, nodes);
            search.run()
        };
        nodes += outcome.nodes;
        incumbents += outcome.incumbents;
        match (outcome.status, outcome.incumbent) {
            (Status::Optimal, Some(inc)) | (Status::Dominated, Some(inc)) => {
                let next = restart_tightening(instance, &inc, &round_config);
                best = Some(inc);
                match next {
                    Tightening::Done => break Status::Optimal,
                    Tightening::Next(c) => round_config = c,
                }
            }
            (_, Some(inc)) => {
                best = Some(inc);
                break Status::LimitReached;
            }
            (Status::Infeasible, None) if best.is_some() => break Status::Optimal,
            (Status::Infeasible, None) => break Status::Infeasible,
            (_, None) if best.is_some() => break Status::LimitReached,
            (status, None) => break status,
        }
    };
    Ok(FuzzyOutcome {
        status,
        incumbent: best,
        rounds,
        nodes,
        elapsed: started.elapsed(),
        incumbents,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{Activity, ActivityId, ResourceSpec, SoftDisjunctive};
    use crate::softdisj::{post_soft_disjunctive, Arc as SoftArc};

    fn units(n: usize, slots: u32) -> Vec<Activity> {
        (0..n)
            .map(|i| Activity {
                label: i as u32,
                duration: 1,
                enrollment: 1,
                domain: (0..slots).map(|s| (TimeSlot(s), 0)).collect(),
            })
            .collect()
    }

    fn rooms(n: usize, slots: u32, cap: u32) -> ResourceSpec {
        ResourceSpec {
            name: "rooms".into(),
            members: (0..n).map(ActivityId).collect(),
            t_min: 0,
            t_max: slots - 1,
            cap_min: vec![0; slots as usize],
            cap_max: vec![cap; slots as usize],
            cap_exp: vec![0; slots as usize],
        }
    }

    fn pair(weight: u64) -> SoftDisjunctive {
        SoftDisjunctive {
            a: ActivityId(0),
            b: ActivityId(1),
            weight,
        }
    }

    fn run(inst: &Instance) -> SolveOutcome {
        solve(inst, &SearchConfig::default(), &mut |_: &Incumbent| {}).unwrap()
    }

    #[test]
    fn two_slots_separate_the_pair() {
        let inst = Instance::new(2, units(2, 2), vec![pair(3)], vec![rooms(2, 2, 1)]).unwrap();
        let out = run(&inst);
        assert_eq!(out.status, Status::Optimal);
        assert_eq!(out.cost(), Some(0));
    }

    #[test]
    fn one_slot_forces_overlap() {
        let inst = Instance::new(1, units(2, 1), vec![pair(3)], vec![]).unwrap();
        let out = run(&inst);
        assert_eq!(out.status, Status::Optimal);
        assert_eq!(out.cost(), Some(3));
    }

    #[test]
    fn one_room_one_slot_is_infeasible() {
        let inst = Instance::new(1, units(2, 1), vec![pair(3)], vec![rooms(2, 1, 1)]).unwrap();
        let out = run(&inst);
        assert_eq!(out.status, Status::Infeasible);
        assert!(out.incumbent.is_none());
    }

    #[test]
    fn empty_instance_has_empty_optimum() {
        let inst = Instance::new(1, vec![], vec![], vec![]).unwrap();
        let out = run(&inst);
        assert_eq!(out.status, Status::Optimal);
        assert_eq!(out.cost(), Some(0));
    }

    #[test]
    fn variable_selection_examples() {
        // Arc counts x:3, y:5, z:5 with min penalties y:2, z:0.
        let free = |c: u64| vec![(TimeSlot(0), c), (TimeSlot(1), c)];
        let arcs = |vars: &[VarId]| -> Vec<SoftArc> {
            vars.iter()
                .map(|&var| SoftArc {
                    var,
                    duration: 1,
                    weight: 1,
                })
                .collect()
        };
        let mut model = Model::new(2);
        let x = model.new_var(&free(0)).unwrap();
        let y = model.new_var(&free(2)).unwrap();
        let z = model.new_var(&free(0)).unwrap();
        let others: Vec<VarId> = (0..5).map(|_| model.new_var(&free(9)).unwrap()).collect();
        post_soft_disjunctive(&mut model, x, 1, &arcs(&others[..3]), Threshold::NONE).unwrap();
        post_soft_disjunctive(&mut model, y, 1, &arcs(&others), Threshold::NONE).unwrap();
        post_soft_disjunctive(&mut model, z, 1, &arcs(&others), Threshold::NONE).unwrap();
        assert_eq!(select_variable(&model, VarOrder::ArcCount), Some(z));
    }

    #[test]
    fn selection_edge_cases() {
        let mut model = Model::new(1);
        let v = model.new_var(&[(TimeSlot(0), 0)]).unwrap();
        assert_eq!(select_variable(&model, VarOrder::ArcCount), Some(v));
        model.assign(v, TimeSlot(0)).unwrap();
        assert_eq!(select_variable(&model, VarOrder::ArcCount), None);
    }

    #[test]
    fn value_ordering_examples() {
        let mut store = Store::new(11);
        let a = store
            .new_pref_var(&[(TimeSlot(7), 5), (TimeSlot(8), 0), (TimeSlot(10), 0)])
            .unwrap();
        assert_eq!(order_values(&store, a), vec![TimeSlot(8), TimeSlot(10), TimeSlot(7)]);
        let flat = store
            .new_pref_var(&[(TimeSlot(3), 1), (TimeSlot(1), 1), (TimeSlot(2), 1)])
            .unwrap();
        assert_eq!(order_values(&store, flat), vec![TimeSlot(1), TimeSlot(2), TimeSlot(3)]);
        let single = store.new_pref_var(&[(TimeSlot(4), 9)]).unwrap();
        assert_eq!(order_values(&store, single), vec![TimeSlot(4)]);
    }

    #[test]
    fn tightening_rule() {
        let inst = Instance::new(1, units(2, 1), vec![pair(4)], vec![]).unwrap();
        let inc = run(&inst).incumbent.unwrap();
        match restart_tightening(&inst, &inc, &SearchConfig::default()) {
            Tightening::Next(c) => assert_eq!(c.u_max, Threshold::at_most(3)),
            Tightening::Done => panic!("worst share is 4"),
        }
        let apart = Instance::new(2, units(2, 2), vec![pair(4)], vec![]).unwrap();
        let inc = run(&apart).incumbent.unwrap();
        assert!(matches!(
            restart_tightening(&apart, &inc, &SearchConfig::default()),
            Tightening::Done
        ));
    }

    #[test]
    fn config_validation() {
        let inst = Instance::new(1, units(1, 1), vec![], vec![]).unwrap();
        let mut sink = |_: &Incumbent| {};
        let bad = SearchConfig {
            node_limit: Some(0),
            ..Default::default()
        };
        assert_eq!(solve(&inst, &bad, &mut sink).unwrap_err(), SearchError::ZeroNodeLimit);
        let bad = SearchConfig {
            lb_period: 0,
            ..Default::default()
        };
        assert_eq!(solve(&inst, &bad, &mut sink).unwrap_err(), SearchError::ZeroPeriod);
    }

    #[test]
    fn node_limit_stops_early() {
        let inst = Instance::new(4, units(6, 4), vec![pair(1)], vec![]).unwrap();
        let cfg = SearchConfig {
            node_limit: Some(2),
            ..Default::default()
        };
        let out = solve(&inst, &cfg, &mut |_: &Incumbent| {}).unwrap();
        assert_eq!(out.status, Status::NoSolutionYet);
        assert_eq!(out.nodes, 2);
    }

    #[test]
    fn cancellation_keeps_best_incumbent() {
        let inst = Instance::new(3, units(5, 3), vec![pair(2)], vec![]).unwrap();
        let cancel = Arc::new(AtomicBool::new(false));
        let cfg = SearchConfig {
            cancel: Some(cancel.clone()),
            ..Default::default()
        };
        let mut seen = Vec::new();
        let out = solve(&inst, &cfg, &mut |inc: &Incumbent| {
            seen.push(inc.cost);
            cancel.store(true, Ordering::Relaxed);
        })
        .unwrap();
        assert_eq!(out.status, Status::LimitReached);
        assert_eq!(out.cost(), seen.last().copied());
    }
}
