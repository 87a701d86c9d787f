//! Scheduling with soft disjunctive and soft cumulative constraints.
//!
//! Activities pick a start from a finite domain with per-start initial
//! costs. Overlapping pairs pay a weight, resources bound concurrency, and
//! branch and bound minimizes the total penalty.

pub mod format;
pub mod generate;
pub mod instance;
pub mod model;
pub mod oracle;
pub mod search;
pub mod softcumul;
pub mod softdisj;
pub mod store;

pub use format::{parse_instance, serialize_instance, FormatError, SolutionFile};
pub use instance::{Activity, ActivityId, Assignment, Instance, InstanceError, ResourceProfile, ResourceSpec, SoftDisjunctive};
pub use model::{Conflict, Model};
pub use search::{solve, solve_fuzzy_restart, LbMode, SearchConfig, SolveOutcome, Status};
pub use softcumul::{BoundMode, Bound};
pub use softdisj::Threshold;
pub use store::{Store, TimeSlot, VarId};
