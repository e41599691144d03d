//! Rollout/update loop producing a trained network and a reward curve.

use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{ExplorationConfig, PpoConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::policy::{MapAwarePolicy, PolicyNetwork};
use crate::rl::episode::{run_episode, EpisodeRecord, StepOutcome, Terminal};
use crate::rl::ppo::{PpoStats, PpoTrainer, Rollout};
use crate::worldsim::WorldMap;

/// Episodes rolled out concurrently against one parameter snapshot.
const ROLLOUT_CHUNK: usize = 4;

/// One row of the reward curve.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveRow {
    pub episode: usize,
    pub steps: usize,
    pub reward: f64,
    pub completeness: f64,
    pub distance: f64,
    pub time: f64,
    pub terminal: Terminal,
}

impl CurveRow {
    fn from_record(episode: usize, rec: &EpisodeRecord) -> Self {
        Self {
            episode,
            steps: rec.steps.len(),
            reward: rec.total_reward(),
            completeness: rec.completeness(),
            distance: rec.distance(),
            time: rec.time(),
            terminal: rec.terminal,
        }
    }
}

pub const CURVE_HEADER: [&str; 7] = [
    "episode",
    "steps",
    "reward",
    "completeness",
    "distance_m",
    "time_s",
    "terminal",
];

pub fn curve_to_csv(rows: &[CurveRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CURVE_HEADER).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.episode.to_string(),
            r.steps.to_string(),
            r.reward.to_string(),
            r.completeness.to_string(),
            r.distance.to_string(),
            r.time.to_string(),
            r.terminal.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is UTF-8")
}

pub fn curve_from_csv(text: &str) -> Result<Vec<CurveRow>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let bad = |e: &dyn std::fmt::Display| Error::Csv(e.to_string());
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| bad(&e))?;
        let field = |i: usize| {
            rec.get(i)
                .ok_or_else(|| Error::Csv(format!("missing column {i}")))
        };
        let num = |i: usize| -> Result<f64> { field(i)?.parse().map_err(|e| bad(&e)) };
        let int = |i: usize| -> Result<usize> { field(i)?.parse().map_err(|e| bad(&e)) };
        rows.push(CurveRow {
            episode: int(0)?,
            steps: int(1)?,
            reward: num(2)?,
            completeness: num(3)?,
            distance: num(4)?,
            time: num(5)?,
            terminal: field(6)?.parse()?,
        });
    }
    Ok(rows)
}

/// Reports a plateau when the mean of the latest `window` values differs
/// from the previous window's mean by less than `tolerance` (relative).
/// Checked only at window boundaries.
#[derive(Clone, Debug)]
pub struct PlateauDetector {
    pub window: usize,
    pub tolerance: f64,
    values: Vec<f64>,
}

impl Default for PlateauDetector {
    fn default() -> Self {
        Self::new(50, 0.01)
    }
}

impl PlateauDetector {
    pub fn new(window: usize, tolerance: f64) -> Self {
        Self {
            window,
            tolerance,
            values: Vec::new(),
        }
    }

    pub fn push(&mut self, v: f64) -> bool {
        self.values.push(v);
        let (n, w) = (self.values.len(), self.window);
        if w == 0 || n % w != 0 || n < 2 * w {
            return false;
        }
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        let prev = mean(&self.values[n - 2 * w..n - w]);
        let cur = mean(&self.values[n - w..]);
        (cur - prev).abs() < self.tolerance * prev.abs().max(1e-12)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub network: PolicyNetwork,
    pub curve: Vec<CurveRow>,
    pub updates: usize,
    pub stats: Vec<PpoStats>,
    /// Episode count at which the plateau detector fired.
    pub plateau_at: Option<usize>,
}

/// Alternates rollouts and PPO updates. `on_checkpoint(update, net)` runs
/// every `checkpoint_every` updates and once at the end.
pub fn train(
    worlds: &[WorldMap],
    explore: &ExplorationConfig,
    ppo: &PpoConfig,
    tc: &TrainConfig,
    observation: (usize, usize),
    seed: u64,
    on_checkpoint: &mut dyn FnMut(usize, &PolicyNetwork) -> Result<()>,
) -> Result<TrainOutcome> {
    if worlds.is_empty() {
        return Err(Error::EmptyInput("training worlds"));
    }
    ppo.validate()?;
    let mut net = PolicyNetwork::new(observation.0, observation.1, tc.init_seed)?;
    let mut trainer = PpoTrainer::new(ppo.clone(), net.param_count());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut curve = Vec::new();
    let mut stats = Vec::new();
    let mut plateau = PlateauDetector::default();
    let mut plateau_at = None;
    let mut updates = 0;
    let max_updates = tc.max_updates.unwrap_or(usize::MAX);

    while curve.len() < tc.total_episodes && updates < max_updates {
        let snapshot = Arc::new(net.clone());
        let mut batch = Vec::new();
        let mut transitions = 0;
        while transitions < ppo.batch_size && curve.len() < tc.total_episodes {
            let chunk = ROLLOUT_CHUNK.min(tc.total_episodes - curve.len());
            let jobs: Vec<(usize, u64)> = (0..chunk)
                .map(|i| (curve.len() + i, rng.next_u64()))
                .collect();
            let results: Vec<Result<(EpisodeRecord, Rollout)>> = jobs
                .par_iter()
                .map(|&(episode, ep_seed)| {
                    let mut policy = MapAwarePolicy::new(snapshot.clone(), true, true);
                    policy.record();
                    let world = &worlds[episode % worlds.len()];
                    let rec = run_episode(world, &mut policy, explore, ep_seed)?;
                    let rewards = rec.steps.iter().map(|s| s.reward).collect();
                    debug_assert!(rec
                        .steps
                        .iter()
                        .all(|s| s.outcome != StepOutcome::Unreachable));
                    Ok((rec, Rollout::new(policy.take_transitions(), rewards)?))
                })
                .collect();
            for (i, res) in results.into_iter().enumerate() {
                let (rec, rollout) = res?;
                let episode = jobs[i].0;
                curve.push(CurveRow::from_record(episode, &rec));
                transitions += rollout.len();
                if !rollout.is_empty() {
                    batch.push(rollout);
                }
                if tc.plateau && plateau_at.is_none() && plateau.push(rec.total_reward()) {
                    plateau_at = Some(curve.len());
                }
            }
            if plateau_at.is_some() {
                break;
            }
        }
        if !batch.is_empty() {
            stats.push(trainer.update(&mut net, &batch)?);
            updates += 1;
            if tc.checkpoint_every > 0 && updates % tc.checkpoint_every == 0 {
                on_checkpoint(updates, &net)?;
            }
        }
        if plateau_at.is_some() {
            break;
        }
    }
    on_checkpoint(updates, &net)?;
    Ok(TrainOutcome {
        network: net,
        curve,
        updates,
        stats,
        plateau_at,
    })
}
