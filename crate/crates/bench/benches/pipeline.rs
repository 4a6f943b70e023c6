use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use intentgrid_bench::{pillar_map, shipped_map};
use intentgrid_core::intent::estimate_desires;
use intentgrid_core::planner::{compute_rewards, value_iteration, TransitionModel};
use intentgrid_core::{
    compute_visibility, modified_astar, run_actions, Action, Heading, HmmParams, Planner, PlannerParams, Pose, StepMode,
};

fn visibility(c: &mut Criterion) {
    let map = shipped_map();
    let pose = Pose::new(5, 5, Heading::EAST);
    c.bench_function("visibility/20x20", |b| {
        b.iter(|| compute_visibility(black_box(&map), &pose, std::f64::consts::FRAC_PI_2))
    });
}

fn astar(c: &mut Criterion) {
    let mut group = c.benchmark_group("astar");
    for size in [10, 20, 40] {
        let map = pillar_map(size);
        let pose = Pose::new(size - 1, size - 1, Heading::NORTH);
        let vis = compute_visibility(&map, &pose, std::f64::consts::FRAC_PI_2);
        let goal = map.goals()[0];
        group.bench_with_input(BenchmarkId::from_parameter(size), &size, |b, _| {
            b.iter(|| modified_astar(black_box(&map), pose.cell(), goal, &vis))
        });
    }
    group.finish();
}

fn value_iteration_bench(c: &mut Criterion) {
    let params = PlannerParams::default();
    let mut group = c.benchmark_group("value_iteration");
    group.sample_size(10);
    for size in [10, 20] {
        let map = pillar_map(size);
        let rewards = compute_rewards(&map, 0, &params).unwrap();
        let model = TransitionModel::new(&map, params.eps_move);
        group.bench_with_input(BenchmarkId::from_parameter(size), &size, |b, _| {
            b.iter(|| value_iteration(&model, black_box(&rewards), &params).unwrap())
        });
    }
    group.finish();
}

fn rewards(c: &mut Criterion) {
    let params = PlannerParams::default();
    let map = shipped_map();
    let mut group = c.benchmark_group("rewards");
    group.sample_size(10);
    group.bench_function("20x20/one-goal", |b| b.iter(|| compute_rewards(black_box(&map), 0, &params).unwrap()));
    group.finish();
}

fn viterbi(c: &mut Criterion) {
    let params = HmmParams::default();
    let mut group = c.benchmark_group("viterbi");
    for len in [31, 1000] {
        let emissions: Vec<Vec<f64>> =
            (0..len).map(|t| (0..5).map(|s| 0.05 + ((t * 7 + s * 3) % 11) as f64 / 11.0).collect()).collect();
        group.bench_with_input(BenchmarkId::from_parameter(len), &len, |b, _| {
            b.iter(|| estimate_desires(&params, 3, black_box(&emissions)).unwrap())
        });
    }
    group.finish();
}

fn precompute(c: &mut Criterion) {
    let map = shipped_map();
    let params = PlannerParams::default();
    let mut group = c.benchmark_group("precompute");
    group.sample_size(10);
    group.bench_function("20x20x8/K=3", |b| b.iter(|| Planner::solve(black_box(&map), &params).unwrap()));
    group.finish();
}

fn session(c: &mut Criterion) {
    let planner = Arc::new(Planner::solve(&shipped_map(), &PlannerParams::default()).unwrap());
    let actions =
        [Action::TurnCcw, Action::TurnCcw, Action::Right, Action::Right, Action::Right, Action::Right].repeat(5);
    c.bench_function("session/30-steps", |b| {
        b.iter(|| {
            run_actions(
                planner.clone(),
                HmmParams::default(),
                Pose::new(5, 5, Heading::SOUTH),
                &actions,
                StepMode::Stochastic,
                7,
            )
            .unwrap()
        })
    });
}

criterion_group!(benches, visibility, astar, value_iteration_bench, rewards, viterbi, precompute, session);
criterion_main!(benches);
