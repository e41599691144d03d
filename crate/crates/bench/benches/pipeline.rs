use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use mapaware_bench::{snapshot, world};
use mapaware_core::bench::{direct_frontier_cells, direct_pipeline, structured_pipeline};
use mapaware_core::policy::network::StepInput;
use mapaware_core::policy::LstmState;
use mapaware_core::structmap::partition;
use mapaware_core::{ExplorationConfig, NavGrid, PolicyNetwork};

const LEVELS: [f64; 3] = [0.1, 0.5, 0.95];

fn extraction(c: &mut Criterion) {
    let w = world("cluttered");
    let cfg = ExplorationConfig::default();
    let pp = cfg.partition_params(None);
    let mut group = c.benchmark_group("extraction");
    for level in LEVELS {
        let (belief, _) = snapshot(&w, level, 0);
        let fp = cfg.frontier_params(belief.geometry().resolution);
        group.bench_with_input(BenchmarkId::new("partition", level), &belief, |b, bel| {
            b.iter(|| partition(black_box(bel), &pp).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("structured", level), &belief, |b, bel| {
            b.iter(|| structured_pipeline(black_box(bel), &pp, &fp).unwrap())
        });
        group.bench_with_input(
            BenchmarkId::new("direct_cells", level),
            &belief,
            |b, bel| b.iter(|| direct_frontier_cells(black_box(bel))),
        );
        group.bench_with_input(BenchmarkId::new("direct", level), &belief, |b, bel| {
            b.iter(|| direct_pipeline(black_box(bel), cfg.n, &fp).unwrap())
        });
    }
    group.finish();
}

fn planning(c: &mut Criterion) {
    let w = world("multiroom");
    let (belief, pose) = snapshot(&w, 0.95, 0);
    let nav = NavGrid::new(&belief, 2);
    let g = *belief.geometry();
    // farthest reachable free cell from the robot
    let field = nav.distance_field(pose.position()).unwrap();
    let goal = (0..g.len())
        .map(|i| g.cell_at(i))
        .filter_map(|cell| field.length(cell).map(|d| (d, cell)))
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, cell)| g.cell_center(cell))
        .unwrap();
    c.bench_function("astar_far_goal", |b| {
        b.iter(|| {
            nav.plan(black_box(pose.position()), black_box(goal), 4)
                .unwrap()
        })
    });
    c.bench_function("nav_grid_build", |b| {
        b.iter(|| NavGrid::new(black_box(&belief), 2))
    });
    c.bench_function("distance_field", |b| {
        b.iter(|| nav.distance_field(black_box(pose.position())).unwrap())
    });
}

fn network(c: &mut Criterion) {
    let net = PolicyNetwork::new(32, 64, 0).unwrap();
    let obs = vec![0.5; 3 * 32 * 64];
    let input = StepInput {
        obs: &obs,
        prev_action: [0.1, -0.2],
        prev_completeness: 0.4,
    };
    let state = LstmState::default();
    c.bench_function("network_step_32x64", |b| {
        b.iter(|| net.step(black_box(&input), &state).unwrap())
    });
}

criterion_group!(benches, extraction, planning, network);
criterion_main!(benches);
