//! Fixtures shared by the benchmarks.

use softsched::generate::{small, timetable, SmallParams, TimetableParams};
use softsched::Instance;

/// The 258-course, 35-room, 74% occupancy reference shape.
pub fn reference_timetable(seed: u64) -> Instance {
    timetable(&TimetableParams {
        seed,
        ..TimetableParams::default()
    })
    .expect("reference parameters are feasible")
}

pub fn small_corpus(count: u64) -> Vec<Instance> {
    (0..count).map(|seed| small(seed, &SmallParams::default())).collect()
}
