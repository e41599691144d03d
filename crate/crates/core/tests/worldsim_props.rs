mod common;

use common::{free_point, known_belief, random_world, rng};
use mapaware_core::nav::NavGrid;
use mapaware_core::worldsim::{raycast, trace_ray, traverse, WorldCell};
use mapaware_core::{load_world, Cell, Point, RobotPose, SensorModel, WorldMap};
use proptest::prelude::*;
use rand::Rng;

/// Slab-method distance from `o` along `angle` to the nearest occupied cell
/// square. Chords shorter than `1e-9` (corner grazes) are ignored.
fn oracle_range(world: &WorldMap, o: Point, angle: f64) -> Option<f64> {
    let g = world.geometry();
    let (dx, dy) = (angle.cos(), angle.sin());
    let mut best: Option<f64> = None;
    for i in 0..g.len() {
        let c = g.cell_at(i);
        if world.cell(c) != WorldCell::Occupied {
            continue;
        }
        let x0 = g.origin.x + c.col as f64 * g.resolution;
        let y0 = g.origin.y + c.row as f64 * g.resolution;
        let (x1, y1) = (x0 + g.resolution, y0 + g.resolution);
        let slab = |lo: f64, hi: f64, p: f64, d: f64| -> (f64, f64) {
            if d.abs() < 1e-15 {
                if p >= lo && p <= hi {
                    (f64::NEG_INFINITY, f64::INFINITY)
                } else {
                    (f64::INFINITY, f64::NEG_INFINITY)
                }
            } else {
                let (a, b) = ((lo - p) / d, (hi - p) / d);
                (a.min(b), a.max(b))
            }
        };
        let (ax, bx) = slab(x0, x1, o.x, dx);
        let (ay, by) = slab(y0, y1, o.y, dy);
        let t_in = ax.max(ay).max(0.0);
        let t_out = bx.min(by);
        if t_out - t_in > 1e-9 && best.is_none_or(|b| t_in < b) {
            best = Some(t_in);
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn raycast_matches_segment_oracle(seed in any::<u64>()) {
        let world = random_world(seed, 8, 30, 0.15);
        let mut r = rng(seed ^ 0x5eed);
        let p = free_point(&world, &mut r);
        let pose = RobotPose::new(p.x, p.y, r.random_range(-std::f64::consts::PI..std::f64::consts::PI));
        let model = SensorModel { beam_count: 61, max_range: 2.5, ..SensorModel::default() }.noiseless();
        let scan = raycast(&world, &pose, &model, seed).unwrap();
        let half = world.geometry().resolution / 2.0;
        for ((&rel, &range), &hit) in scan.angles.iter().zip(&scan.ranges).zip(&scan.hit_flags) {
            let truth = oracle_range(&world, p, pose.heading + rel);
            match truth {
                Some(t) if t < model.max_range - 1e-6 => {
                    prop_assert!(hit, "missed obstacle at {t}");
                    prop_assert!((range - t).abs() <= half, "range {range} vs oracle {t}");
                }
                Some(t) if t <= model.max_range + 1e-6 => {}
                _ => {
                    prop_assert!(!hit);
                    prop_assert_eq!(range, model.max_range);
                }
            }
        }
    }

    #[test]
    fn adding_an_obstacle_never_lengthens_a_beam(seed in any::<u64>()) {
        let world = random_world(seed, 8, 30, 0.1);
        let mut r = rng(seed);
        let p = free_point(&world, &mut r);
        let heading = r.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let g = *world.geometry();
        let extra = Cell::new(r.random_range(0..g.height), r.random_range(0..g.width));
        prop_assume!(g.cell_of(p) != Some(extra));
        let denser = world.with_occupied(extra);
        for i in 0..90 {
            let a = heading + i as f64 * 0.07;
            let before = trace_ray(&world, p, a, 4.0).unwrap_or(4.0);
            let after = trace_ray(&denser, p, a, 4.0).unwrap_or(4.0);
            prop_assert!(after <= before + 1e-12, "beam {a}: {after} > {before}");
        }
    }

    #[test]
    fn traversal_distance_equals_plan_length(seed in any::<u64>()) {
        let world = random_world(seed, 10, 40, 0.08);
        let belief = known_belief(&world);
        let nav = NavGrid::new(&belief, 0);
        let mut r = rng(seed);
        let g = *world.geometry();
        let a = g.cell_center(g.cell_of(free_point(&world, &mut r)).unwrap());
        let b = free_point(&world, &mut r);
        if let Some(path) = nav.plan(a, b, 0).unwrap() {
            let start = RobotPose::new(a.x, a.y, 0.0);
            let t = traverse(&world, &start, &path.waypoints, 0.45).unwrap();
            prop_assert!((t.distance - path.length).abs() < 1e-9);
            prop_assert!((t.elapsed - path.length / 0.45).abs() < 1e-9);
            prop_assert_eq!(t.pose.position(), path.goal());
        }
    }
}

#[test]
fn straight_run_takes_distance_over_speed() {
    let mut text = String::new();
    for row in 0..5 {
        for col in 0..60 {
            text.push(if row == 0 || row == 4 || col == 0 || col == 59 {
                '#'
            } else {
                '.'
            });
        }
        text.push('\n');
    }
    let world = load_world(&text).unwrap();
    let g = *world.geometry();
    let a = g.cell_center(Cell::new(2, 5));
    let b = g.cell_center(Cell::new(2, 50));
    let path = NavGrid::new(&known_belief(&world), 0)
        .plan(a, b, 0)
        .unwrap()
        .unwrap();
    assert!((path.length - 4.5).abs() < 1e-9);
    let t = traverse(
        &world,
        &RobotPose::new(a.x, a.y, 1.0),
        &path.waypoints,
        0.45,
    )
    .unwrap();
    assert!((t.elapsed - 10.0).abs() < 1e-9);
    assert!(t.pose.heading.abs() < 1e-12);
}

#[test]
fn scan_is_deterministic_per_seed() {
    let world = random_world(3, 20, 20, 0.1);
    let p = free_point(&world, &mut rng(1));
    let pose = RobotPose::new(p.x, p.y, 0.3);
    let model = SensorModel::default();
    let a = raycast(&world, &pose, &model, 9).unwrap();
    let b = raycast(&world, &pose, &model, 9).unwrap();
    assert_eq!(a, b);
    assert!(a.ranges.iter().all(|r| *r > 0.0 && *r <= model.max_range));
}
