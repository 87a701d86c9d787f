//! JSON instance and solution files.
//!
//! Instance files carry a mandatory `"format": 1` field, unknown fields are
//! rejected, and activities are referenced by their `id`. Repeating an id in
//! a resource's `members` list demands one more capacity unit.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{Activity, ActivityId, Assignment, Instance, InstanceError, ResourceSpec, SoftDisjunctive};
use crate::softdisj::{eval_fuzzy, eval_weighted, incident_violations};
use crate::store::TimeSlot;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub format: u32,
    pub horizon: u32,
    pub activities: Vec<ActivityRecord>,
    pub soft_disjunctive: Vec<PairRecord>,
    pub resources: Vec<ResourceRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivityRecord {
    pub id: u32,
    pub duration: u32,
    pub enrollment: u32,
    /// `[start, initial_cost]` pairs.
    pub domain: Vec<(u32, u64)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRecord {
    pub a: u32,
    pub b: u32,
    pub weight: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceRecord {
    pub name: String,
    pub members: Vec<u32>,
    pub t_min: u32,
    pub t_max: u32,
    pub cap_min: Vec<u32>,
    pub cap_max: Vec<u32>,
    pub cap_exp: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("unsupported format version {0}, expected {FORMAT_VERSION}")]
    Version(u32),
    #[error("{at}: unknown activity id {id}")]
    DanglingId { at: String, id: u32 },
    #[error("{at}: {source}")]
    Invalid {
        at: String,
        #[source]
        source: InstanceError,
    },
}

impl FormatError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            FormatError::Syntax { .. } => "syntax",
            FormatError::Version(_) => "version",
            FormatError::DanglingId { .. } => "dangling-id",
            FormatError::Invalid { source, .. } => match source {
                InstanceError::EmptyHorizon
                | InstanceError::ZeroDuration { .. }
                | InstanceError::EmptyDomain { .. }
                | InstanceError::DuplicateStart { .. }
                | InstanceError::StartOutsideHorizon { .. } => "domain",
                InstanceError::DuplicateLabel(_) => "duplicate-id",
                InstanceError::DanglingActivity(_) => "dangling-id",
                InstanceError::SelfPair(_) | InstanceError::ZeroWeight { .. } => "weight",
                InstanceError::BadWindow { .. }
                | InstanceError::CapacityLength { .. }
                | InstanceError::CapacityOrder { .. } => "resource",
                InstanceError::Overflow => "overflow",
            },
        }
    }
}

fn syntax(e: serde_json::Error) -> FormatError {
    FormatError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

pub fn parse_instance(bytes: &[u8]) -> Result<Instance, FormatError> {
    let file: InstanceFile = serde_json::from_slice(bytes).map_err(syntax)?;
    file.into_instance()
}

impl InstanceFile {
    pub fn into_instance(self) -> Result<Instance, FormatError> {
        if self.format != FORMAT_VERSION {
            return Err(FormatError::Version(self.format));
        }
        let mut index: HashMap<u32, usize> = HashMap::new();
        for (k, a) in self.activities.iter().enumerate() {
            if index.insert(a.id, k).is_some() {
                return Err(FormatError::Invalid {
                    at: format!("activities[{k}].id"),
                    source: InstanceError::DuplicateLabel(a.id),
                });
            }
        }
        let lookup = |at: String, id: u32| -> Result<ActivityId, FormatError> {
            index
                .get(&id)
                .map(|&k| ActivityId(k))
                .ok_or(FormatError::DanglingId { at, id })
        };
        let mut pairs = Vec::with_capacity(self.soft_disjunctive.len());
        for (k, p) in self.soft_disjunctive.iter().enumerate() {
            pairs.push(SoftDisjunctive {
                a: lookup(format!("soft_disjunctive[{k}].a"), p.a)?,
                b: lookup(format!("soft_disjunctive[{k}].b"), p.b)?,
                weight: p.weight,
            });
        }
        let mut resources = Vec::with_capacity(self.resources.len());
        for (k, r) in self.resources.into_iter().enumerate() {
            let members = r
                .members
                .iter()
                .enumerate()
                .map(|(j, &id)| lookup(format!("resources[{k}].members[{j}]"), id))
                .collect::<Result<Vec<_>, _>>()?;
            resources.push(ResourceSpec {
                name: r.name,
                members,
                t_min: r.t_min,
                t_max: r.t_max,
                cap_min: r.cap_min,
                cap_max: r.cap_max,
                cap_exp: r.cap_exp,
            });
        }
        let activities: Vec<Activity> = self
            .activities
            .into_iter()
            .map(|a| Activity {
                label: a.id,
                duration: a.duration,
                enrollment: a.enrollment,
                domain: a.domain.into_iter().map(|(s, c)| (TimeSlot(s), c)).collect(),
            })
            .collect();
        let labels: Vec<u32> = activities.iter().map(|a| a.label).collect();
        Instance::new(self.horizon, activities, pairs, resources).map_err(|source| FormatError::Invalid {
            at: locate(&source, &labels),
            source,
        })
    }

    pub fn from_instance(instance: &Instance) -> Self {
        let label = |id: ActivityId| instance.activity(id).label;
        InstanceFile {
            format: FORMAT_VERSION,
            horizon: instance.horizon(),
            activities: instance
                .activities()
                .iter()
                .map(|a| ActivityRecord {
                    id: a.label,
                    duration: a.duration,
                    enrollment: a.enrollment,
                    domain: a.domain.iter().map(|&(s, c)| (s.0, c)).collect(),
                })
                .collect(),
            soft_disjunctive: instance
                .soft()
                .iter()
                .map(|p| PairRecord {
                    a: label(p.a),
                    b: label(p.b),
                    weight: p.weight,
                })
                .collect(),
            resources: instance
                .resources()
                .iter()
                .map(|r| ResourceRecord {
                    name: r.name.clone(),
                    members: r.member_ids().map(label).collect(),
                    t_min: r.t_min,
                    t_max: r.t_max,
                    cap_min: r.cap_min.clone(),
                    cap_max: r.cap_max.clone(),
                    cap_exp: r.cap_exp.clone(),
                })
                .collect(),
        }
    }
}

/// Best-effort field path for a validation error.
fn locate(e: &InstanceError, labels: &[u32]) -> String {
    let activity = |label: &u32| {
        labels
            .iter()
            .position(|l| l == label)
            .map_or_else(|| "activities".to_string(), |k| format!("activities[{k}]"))
    };
    match e {
        InstanceError::EmptyHorizon => "horizon".into(),
        InstanceError::ZeroDuration { label } => format!("{}.duration", activity(label)),
        InstanceError::EmptyDomain { label }
        | InstanceError::DuplicateStart { label, .. }
        | InstanceError::StartOutsideHorizon { label, .. } => format!("{}.domain", activity(label)),
        InstanceError::DuplicateLabel(label) => format!("{}.id", activity(label)),
        InstanceError::SelfPair(_) | InstanceError::ZeroWeight { .. } | InstanceError::DanglingActivity(_) => {
            "soft_disjunctive".into()
        }
        InstanceError::BadWindow { name, .. }
        | InstanceError::CapacityLength { name, .. }
        | InstanceError::CapacityOrder { name, .. } => format!("resources[name={name}]"),
        InstanceError::Overflow => "$".into(),
    }
}

pub fn serialize_instance(instance: &Instance) -> String {
    let mut text = serde_json::to_string_pretty(&InstanceFile::from_instance(instance))
        .expect("instance files always serialize");
    text.push('\n');
    text
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionFile {
    pub format: u32,
    pub assignment: Vec<StartRecord>,
    pub cost: u64,
    pub breakdown: Breakdown,
    pub optimal: bool,
    pub stats: Stats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartRecord {
    pub id: u32,
    pub start: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UsageRecord {
    pub id: u32,
    pub u: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Breakdown {
    pub initial_cost_sum: u64,
    /// Weighted overlaps, each constrained pair once.
    pub violation_sum: u64,
    pub per_activity_u: Vec<UsageRecord>,
    /// Exact worst normalized satisfaction as `"p/q"`; `null` when fewer
    /// than two activities or no soft disjunctions exist.
    pub fuzzy: Option<String>,
    /// `100 * violation_sum / total soft weight`.
    pub violated_pct_enrollment: f64,
    /// `100 * initial_cost_sum / sum of per-activity maximal initial costs`.
    pub violated_pct_initial: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stats {
    pub nodes: u64,
    /// Seconds.
    pub elapsed: f64,
    pub incumbents: usize,
}

/// One line of the incumbent stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncumbentRecord {
    pub cost: u64,
    pub elapsed: f64,
    pub nodes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolutionError {
    #[error("assignment lists {got} activities, instance has {expected}")]
    Length { expected: usize, got: usize },
    #[error("activity {0} missing from the assignment")]
    Missing(u32),
    #[error("activity {id}: start {start} not in its domain")]
    NotInDomain { id: u32, start: u32 },
    #[error("{field} is {stored}, recomputed {expected}")]
    Mismatch {
        field: &'static str,
        stored: String,
        expected: String,
    },
}

fn percent(part: u64, whole: u64) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

impl Breakdown {
    pub fn compute(instance: &Instance, theta: &Assignment) -> Self {
        let initial_cost_sum = theta.initial_cost(instance).expect("starts come from domains");
        let violation_sum = eval_weighted(instance, theta).expect("complete assignment");
        let u = incident_violations(instance, theta).expect("complete assignment");
        let max_initial: u64 = instance.activities().iter().map(|a| a.max_initial_cost()).sum();
        Breakdown {
            initial_cost_sum,
            violation_sum,
            per_activity_u: instance
                .ids()
                .map(|id| UsageRecord {
                    id: instance.activity(id).label,
                    u: u[id.0],
                })
                .collect(),
            fuzzy: eval_fuzzy(instance, theta).ok().map(|f| f.to_string()),
            violated_pct_enrollment: percent(violation_sum, instance.total_weight()),
            violated_pct_initial: percent(initial_cost_sum, max_initial),
        }
    }
}

impl SolutionFile {
    pub fn new(instance: &Instance, theta: &Assignment, optimal: bool, stats: Stats) -> Self {
        let breakdown = Breakdown::compute(instance, theta);
        SolutionFile {
            format: FORMAT_VERSION,
            assignment: instance
                .ids()
                .map(|id| StartRecord {
                    id: instance.activity(id).label,
                    start: theta.start(id).0,
                })
                .collect(),
            cost: breakdown.initial_cost_sum + breakdown.violation_sum,
            breakdown,
            optimal,
            stats,
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("solution files always serialize");
        text.push('\n');
        text
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, FormatError> {
        serde_json::from_slice(bytes).map_err(syntax)
    }

    /// Assignment by activity index.
    pub fn assignment_for(&self, instance: &Instance) -> Result<Assignment, SolutionError> {
        if self.assignment.len() != instance.len() {
            return Err(SolutionError::Length {
                expected: instance.len(),
                got: self.assignment.len(),
            });
        }
        let starts: HashMap<u32, u32> = self.assignment.iter().map(|r| (r.id, r.start)).collect();
        instance
            .activities()
            .iter()
            .map(|a| {
                let start = *starts.get(&a.label).ok_or(SolutionError::Missing(a.label))?;
                a.initial_cost(TimeSlot(start))
                    .map(|_| TimeSlot(start))
                    .ok_or(SolutionError::NotInDomain { id: a.label, start })
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Assignment)
    }

    /// Recomputes the cost and breakdown from the assignment.
    pub fn check(&self, instance: &Instance) -> Result<(), SolutionError> {
        let theta = self.assignment_for(instance)?;
        let expected = Breakdown::compute(instance, &theta);
        let cost = expected.initial_cost_sum + expected.violation_sum;
        let mismatch = |field: &'static str, stored: String, expected: String| {
            Err(SolutionError::Mismatch { field, stored, expected })
        };
        if self.cost != cost {
            return mismatch("cost", self.cost.to_string(), cost.to_string());
        }
        if self.breakdown.violation_sum != expected.violation_sum {
            return mismatch(
                "violation_sum",
                self.breakdown.violation_sum.to_string(),
                expected.violation_sum.to_string(),
            );
        }
        if self.breakdown.initial_cost_sum != expected.initial_cost_sum {
            return mismatch(
                "initial_cost_sum",
                self.breakdown.initial_cost_sum.to_string(),
                expected.initial_cost_sum.to_string(),
            );
        }
        if self.breakdown.per_activity_u != expected.per_activity_u {
            return mismatch(
                "per_activity_u",
                format!("{:?}", self.breakdown.per_activity_u),
                format!("{:?}", expected.per_activity_u),
            );
        }
        if self.breakdown.fuzzy != expected.fuzzy {
            return mismatch(
                "fuzzy",
                format!("{:?}", self.breakdown.fuzzy),
                format!("{:?}", expected.fuzzy),
            );
        }
        Ok(())
    }
}
