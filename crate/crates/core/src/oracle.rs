//! Brute-force reference solver for small instances.
//!
//! Enumerates the full Cartesian product of start domains, drops every
//! assignment that breaks a hard capacity, and scores the rest directly with
//! the objective evaluators. Nothing here touches the store or propagation.

use std::fmt;

use num_rational::Ratio;
use thiserror::Error;

use crate::instance::{Assignment, Instance};
use crate::model::Model;
use crate::softcumul::{check_atleast, check_cumulative_max, lower_bound, Bound, BoundMode};
use crate::softdisj::{eval_fuzzy, eval_weighted, fuzzy_scale, incident_violations, Threshold};
use crate::store::TimeSlot;

pub const DEFAULT_CAP: u128 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Minimize initial costs plus weighted overlaps.
    Weighted,
    /// Maximize the worst normalized per-activity satisfaction.
    Fuzzy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimalValue {
    Cost(u64),
    Fuzzy(Ratio<u64>),
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleResult {
    pub optimum: OptimalValue,
    pub optima: Vec<Assignment>,
    pub evaluated: u64,
}

impl OracleResult {
    pub fn cost(&self) -> Option<u64> {
        match self.optimum {
            OptimalValue::Cost(c) => Some(c),
            _ => None,
        }
    }
}

/// Labelled assignment, for error messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentDump(pub Vec<(u32, u32)>);

impl AssignmentDump {
    pub fn new(instance: &Instance, theta: &Assignment) -> Self {
        AssignmentDump(
            instance
                .ids()
                .map(|id| (instance.activity(id).label, theta.start(id).0))
                .collect(),
        )
    }
}

impl fmt::Display for AssignmentDump {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(l, s)| format!("{l}@{s}")).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("search space of {size} assignments exceeds the cap of {cap}")]
    TooLarge { size: u128, cap: u128 },
    #[error("fuzzy objective undefined for this instance")]
    Undefined,
    #[error("lower bound {bound} exceeds optimum {optimum}; optimal assignment {witness}")]
    BoundViolated {
        bound: Bound,
        optimum: u64,
        witness: AssignmentDump,
    },
    #[error("lower bound claims infeasibility but {witness} is feasible with cost {optimum}")]
    FalseInfeasibility { optimum: u64, witness: AssignmentDump },
}

#[derive(Debug, Clone, Copy)]
pub struct Oracle {
    pub cap: u128,
    /// Only assignments whose every incident violation is within the
    /// threshold count as feasible.
    pub threshold: Threshold,
}

impl Default for Oracle {
    fn default() -> Self {
        Oracle {
            cap: DEFAULT_CAP,
            threshold: Threshold::NONE,
        }
    }
}

pub fn enumerate_optimum(instance: &Instance, objective: Objective) -> Result<OracleResult, OracleError> {
    Oracle::default().enumerate(instance, objective)
}

impl Oracle {
    pub fn with_threshold(threshold: Threshold) -> Self {
        Oracle {
            threshold,
            ..Default::default()
        }
    }

    fn feasible(&self, instance: &Instance, theta: &Assignment) -> bool {
        let partial: Vec<Option<TimeSlot>> = theta.0.iter().copied().map(Some).collect();
        let hard = instance.resources().iter().all(|r| {
            check_cumulative_max(instance, r, &partial).is_ok() && check_atleast(instance, r, &theta.0).is_ok()
        });
        hard && (self.threshold.0.is_none()
            || incident_violations(instance, theta)
                .expect("complete")
                .into_iter()
                .all(|u| self.threshold.admits(u)))
    }

    pub fn enumerate(&self, instance: &Instance, objective: Objective) -> Result<OracleResult, OracleError> {
        let size = instance.search_space();
        if size > self.cap {
            return Err(OracleError::TooLarge { size, cap: self.cap });
        }
        if objective == Objective::Fuzzy {
            fuzzy_scale(instance).map_err(|_| OracleError::Undefined)?;
        }
        let domains: Vec<Vec<TimeSlot>> = instance
            .activities()
            .iter()
            .map(|a| a.domain.iter().map(|&(s, _)| s).collect())
            .collect();
        let mut digits = vec![0usize; domains.len()];
        let mut evaluated = 0u64;
        let mut best: Option<(Ratio<u64>, OptimalValue)> = None;
        let mut optima = Vec::new();
        loop {
            let theta = Assignment(digits.iter().zip(&domains).map(|(&k, d)| d[k]).collect());
            evaluated += 1;
            if self.feasible(instance, &theta) {
                // Scores are compared as "smaller is better".
                let (key, value) = match objective {
                    Objective::Weighted => {
                        let cost = theta.initial_cost(instance).expect("starts come from domains")
                            + eval_weighted(instance, &theta).expect("complete");
                        (Ratio::from_integer(cost), OptimalValue::Cost(cost))
                    }
                    Objective::Fuzzy => {
                        let f = eval_fuzzy(instance, &theta).expect("checked above");
                        (Ratio::from_integer(1) - f, OptimalValue::Fuzzy(f))
                    }
                };
                match &best {
                    Some((k, _)) if key > *k => {}
                    Some((k, _)) if key == *k => optima.push(theta),
                    _ => {
                        best = Some((key, value));
                        optima = vec![theta];
                    }
                }
            }
            // Odometer increment; the last activity turns fastest.
            let mut i = digits.len();
            loop {
                if i == 0 {
                    return Ok(OracleResult {
                        optimum: best.map_or(OptimalValue::Infeasible, |(_, v)| v),
                        optima,
                        evaluated,
                    });
                }
                i -= 1;
                digits[i] += 1;
                if digits[i] < domains[i].len() {
                    break;
                }
                digits[i] = 0;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundReport {
    /// Root lower bound; `None` when the bound itself proves infeasibility.
    pub bound: Option<Bound>,
    pub optimum: Option<u64>,
    /// `optimum - bound` when both exist.
    pub slack: Option<Bound>,
}

/// Checks the root lower bound (`sum m(a)` plus resource contributions in
/// `mode`) against the enumerated weighted optimum.
pub fn verify_bound(instance: &Instance, mode: BoundMode) -> Result<BoundReport, OracleError> {
    let result = enumerate_optimum(instance, Objective::Weighted)?;
    let model = Model::from_instance(instance, Threshold::NONE);
    let bound = lower_bound(instance, model.store(), Some(mode)).total();
    let optimum = result.cost();
    match (bound, optimum) {
        (Some(b), Some(opt)) if b > Bound::from_integer(opt as u128) => Err(OracleError::BoundViolated {
            bound: b,
            optimum: opt,
            witness: AssignmentDump::new(instance, &result.optima[0]),
        }),
        (None, Some(opt)) => Err(OracleError::FalseInfeasibility {
            optimum: opt,
            witness: AssignmentDump::new(instance, &result.optima[0]),
        }),
        (b, opt) => Ok(BoundReport {
            bound: b,
            optimum: opt,
            slack: b.zip(opt).map(|(b, o)| Bound::from_integer(o as u128) - b),
        }),
    }
}
