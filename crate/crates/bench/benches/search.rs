use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use softsched::oracle::{enumerate_optimum, Objective};
use softsched::search::Incumbent;
use softsched::softcumul::lower_bound;
use softsched::{solve, BoundMode, LbMode, Model, SearchConfig, Threshold};
use softsched_bench::{reference_timetable, small_corpus};

fn corpus(c: &mut Criterion) {
    let instances = small_corpus(50);
    let mut group = c.benchmark_group("small_corpus");
    for (mode, name) in [(LbMode::None, "solve_lb_none"), (LbMode::Min, "solve_lb_min")] {
        let config = SearchConfig {
            lb_mode: mode,
            ..SearchConfig::default()
        };
        group.bench_function(name, |b| {
            b.iter(|| {
                for inst in &instances {
                    black_box(solve(inst, &config, &mut |_: &Incumbent| {}).unwrap());
                }
            })
        });
    }
    group.bench_function("enumerate", |b| {
        b.iter(|| {
            for inst in &instances {
                black_box(enumerate_optimum(inst, Objective::Weighted).unwrap());
            }
        })
    });
    group.finish();
}

fn reference(c: &mut Criterion) {
    let instance = reference_timetable(1);
    let mut group = c.benchmark_group("reference_timetable");
    group.sample_size(10);
    group.bench_function("build_model", |b| {
        b.iter(|| black_box(Model::from_instance(&instance, Threshold::NONE)))
    });
    let model = Model::from_instance(&instance, Threshold::NONE);
    for (mode, name) in [(BoundMode::Min, "root_bound_min"), (BoundMode::Exp, "root_bound_exp")] {
        group.bench_function(name, |b| b.iter(|| black_box(lower_bound(&instance, model.store(), Some(mode)))));
    }
    for (period, name) in [(1, "first_1000_nodes_period_1"), (8, "first_1000_nodes_period_8")] {
        let config = SearchConfig {
            node_limit: Some(1000),
            lb_period: period,
            lb_mode: LbMode::Min,
            ..SearchConfig::default()
        };
        group.bench_function(name, |b| {
            b.iter_batched(
                || config.clone(),
                |config| black_box(solve(&instance, &config, &mut |_: &Incumbent| {}).unwrap()),
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

criterion_group!(benches, corpus, reference);
criterion_main!(benches);
