//! Fixtures shared by the benchmarks in `benches/`.

use std::path::PathBuf;

use mapaware_core::rl::run_episode_observed;
use mapaware_core::{
    load_world_file, ExplorationConfig, NearestFrontierPolicy, OccupancyBelief, RobotPose, WorldMap,
};

pub fn world_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../worlds")
        .join(format!("{name}.world"))
}

pub fn world(name: &str) -> WorldMap {
    load_world_file(world_path(name)).expect("bundled world loads")
}

/// The first belief along a seeded nearest-frontier run whose completeness
/// reaches `level` (or the last one if it never does), with the pose.
pub fn snapshot(world: &WorldMap, level: f64, seed: u64) -> (OccupancyBelief, RobotPose) {
    let cfg = ExplorationConfig::default();
    let mut found: Option<(OccupancyBelief, RobotPose)> = None;
    let mut last = None;
    run_episode_observed(world, &mut NearestFrontierPolicy, &cfg, seed, &mut |v| {
        if found.is_none() && v.completeness >= level {
            found = Some((v.belief.clone(), v.pose));
        }
        last = Some((v.belief.clone(), v.pose));
    })
    .expect("episode runs");
    found.or(last).expect("at least one snapshot")
}
