//! Seeded instance generators.
//!
//! [`timetable`] builds course-timetabling instances: students pick courses
//! with power-law popularity, co-enrollment counts become soft disjunction
//! weights, and a single rooms resource bounds concurrent courses.
//! [`small`] builds tiny mixed instances for exhaustive cross-checking.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::instance::{Activity, ActivityId, Instance, InstanceError, ResourceSpec, SoftDisjunctive};
use crate::store::TimeSlot;

#[derive(Debug, Clone, PartialEq)]
pub struct TimetableParams {
    pub courses: usize,
    pub rooms: u32,
    /// Target fraction of room-slots in use, in (0, 1].
    pub occupancy: f64,
    /// Derived from the occupancy target when absent.
    pub horizon: Option<u32>,
    pub max_duration: u32,
    pub students: usize,
    pub courses_per_student: usize,
    /// Popularity of the k-th most popular course is proportional to
    /// `1 / (k + 1)^exponent`.
    pub popularity_exponent: f64,
    /// Probability that a given start carries a non-zero initial cost.
    pub discouraged_fraction: f64,
    pub max_initial_cost: u64,
    pub seed: u64,
}

impl Default for TimetableParams {
    fn default() -> Self {
        TimetableParams {
            courses: 258,
            rooms: 35,
            occupancy: 0.74,
            horizon: None,
            max_duration: 2,
            students: 3000,
            courses_per_student: 4,
            popularity_exponent: 1.0,
            discouraged_fraction: 0.3,
            max_initial_cost: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenerateError {
    #[error("need at least one course and one room")]
    Empty,
    #[error("occupancy target {0} outside (0, 1]")]
    Occupancy(f64),
    #[error("max duration must be at least 1")]
    ZeroDuration,
    #[error("total course duration {demand} exceeds rooms x horizon = {supply}")]
    Infeasible { demand: u64, supply: u64 },
    #[error("horizon {horizon} shorter than a course of duration {duration}")]
    ShortHorizon { horizon: u32, duration: u32 },
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

pub fn timetable(p: &TimetableParams) -> Result<Instance, GenerateError> {
    if p.courses == 0 || p.rooms == 0 {
        return Err(GenerateError::Empty);
    }
    if !(p.occupancy > 0.0 && p.occupancy <= 1.0) {
        return Err(GenerateError::Occupancy(p.occupancy));
    }
    if p.max_duration == 0 {
        return Err(GenerateError::ZeroDuration);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let durations: Vec<u32> = (0..p.courses).map(|_| rng.random_range(1..=p.max_duration)).collect();
    let demand: u64 = durations.iter().map(|&d| u64::from(d)).sum();
    let longest = *durations.iter().max().expect("at least one course");

    let horizon = match p.horizon {
        Some(h) => h,
        None => ((demand as f64 / (p.occupancy * f64::from(p.rooms))).ceil() as u32).max(longest),
    };
    let supply = u64::from(p.rooms) * u64::from(horizon);
    if demand > supply {
        return Err(GenerateError::Infeasible { demand, supply });
    }
    if longest > horizon {
        return Err(GenerateError::ShortHorizon {
            horizon,
            duration: longest,
        });
    }

    // Popularity ranks are a random permutation of the courses.
    let mut rank: Vec<usize> = (0..p.courses).collect();
    rank.shuffle(&mut rng);
    let weights: Vec<f64> = rank
        .iter()
        .map(|&k| 1.0 / ((k + 1) as f64).powf(p.popularity_exponent))
        .collect();
    let pick = WeightedIndex::new(&weights).expect("positive weights");
    let per_student = p.courses_per_student.min(p.courses);

    let mut enrollment = vec![0u32; p.courses];
    let mut co: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut chosen = Vec::with_capacity(per_student);
    for _ in 0..p.students {
        chosen.clear();
        while chosen.len() < per_student {
            let c = pick.sample(&mut rng);
            if !chosen.contains(&c) {
                chosen.push(c);
            }
        }
        chosen.sort_unstable();
        for (k, &a) in chosen.iter().enumerate() {
            enrollment[a] += 1;
            for &b in &chosen[k + 1..] {
                *co.entry((a, b)).or_insert(0) += 1;
            }
        }
    }

    let activities = durations
        .iter()
        .enumerate()
        .map(|(i, &d)| Activity {
            label: i as u32,
            duration: d,
            enrollment: enrollment[i],
            domain: (0..=horizon - d)
                .map(|s| {
                    let cost = if rng.random_bool(p.discouraged_fraction) && p.max_initial_cost > 0 {
                        rng.random_range(1..=p.max_initial_cost)
                    } else {
                        0
                    };
                    (TimeSlot(s), cost)
                })
                .collect(),
        })
        .collect();
    let pairs = co
        .into_iter()
        .map(|((a, b), weight)| SoftDisjunctive {
            a: ActivityId(a),
            b: ActivityId(b),
            weight,
        })
        .collect();
    let len = horizon as usize;
    let rooms = ResourceSpec {
        name: "rooms".into(),
        members: (0..p.courses).map(ActivityId).collect(),
        t_min: 0,
        t_max: horizon - 1,
        cap_min: vec![0; len],
        cap_max: vec![p.rooms; len],
        cap_exp: vec![(p.occupancy * f64::from(p.rooms)).round() as u32; len],
    };
    Ok(Instance::new(horizon, activities, pairs, vec![rooms])?)
}

/// Shape limits for [`small`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SmallParams {
    pub min_activities: usize,
    pub max_activities: usize,
    pub max_horizon: u32,
    pub max_duration: u32,
    pub max_resources: usize,
}

impl Default for SmallParams {
    fn default() -> Self {
        SmallParams {
            min_activities: 3,
            max_activities: 6,
            max_horizon: 8,
            max_duration: 3,
            max_resources: 2,
        }
    }
}

/// A tiny random instance. Every activity has a non-empty domain, so the
/// only sources of infeasibility are resource floors and ceilings.
pub fn small(seed: u64, p: &SmallParams) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(p.min_activities..=p.max_activities);
    let horizon = rng.random_range(2..=p.max_horizon.max(2));
    let activities: Vec<Activity> = (0..n)
        .map(|i| {
            let d = rng.random_range(1..=p.max_duration.min(horizon));
            let starts: Vec<u32> = (0..=horizon - d).collect();
            let mut domain: Vec<(TimeSlot, u64)> = starts
                .iter()
                .filter(|_| rng.random_bool(0.75))
                .map(|&s| (TimeSlot(s), 0))
                .collect();
            if domain.is_empty() {
                domain.push((TimeSlot(starts[rng.random_range(0..starts.len())]), 0));
            }
            for entry in &mut domain {
                if rng.random_bool(0.5) {
                    entry.1 = rng.random_range(1..=3);
                }
            }
            Activity {
                label: i as u32,
                duration: d,
                enrollment: rng.random_range(1..=20),
                domain,
            }
        })
        .collect();

    let mut pairs = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(0.6) {
                pairs.push(SoftDisjunctive {
                    a: ActivityId(a),
                    b: ActivityId(b),
                    weight: rng.random_range(1..=4),
                });
            }
        }
    }

    let resources = (0..rng.random_range(0..=p.max_resources))
        .map(|k| {
            let mut members: Vec<ActivityId> = (0..n).filter(|_| rng.random_bool(0.7)).map(ActivityId).collect();
            if members.is_empty() {
                members.push(ActivityId(rng.random_range(0..n)));
            }
            if rng.random_bool(0.1) {
                let extra = members[rng.random_range(0..members.len())];
                members.push(extra);
            }
            let t_min = rng.random_range(0..horizon);
            let t_max = rng.random_range(t_min..horizon);
            let len = (t_max - t_min + 1) as usize;
            let mut cap_min = Vec::with_capacity(len);
            let mut cap_max = Vec::with_capacity(len);
            let mut cap_exp = Vec::with_capacity(len);
            for _ in 0..len {
                let hi = rng.random_range(1..=3);
                let lo = if rng.random_bool(0.3) { 1 } else { 0 };
                cap_min.push(lo);
                cap_max.push(hi);
                cap_exp.push(rng.random_range(lo..=hi));
            }
            ResourceSpec {
                name: format!("r{k}"),
                members,
                t_min,
                t_max,
                cap_min,
                cap_max,
                cap_exp,
            }
        })
        .collect();

    Instance::new(horizon, activities, pairs, resources).expect("generator respects instance invariants")
}
