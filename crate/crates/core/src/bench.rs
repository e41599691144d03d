//! Experiment orchestration: tier metrics over seeded runs and the three
//! ablations (structured-map timing, AOU on/off, ROI size).

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::belief::{BeliefCell, OccupancyBelief};
use crate::config::{ExplorationConfig, RunConfig};
use crate::error::{Error, Result};
use crate::frontier::{BoundarySet, FrontierParams};
use crate::grid::Point;
use crate::policy::{
    checkpoint, DecisionPolicy, MapAwarePolicy, NearestFrontierPolicy, PolicyNetwork,
    ScriptedPolicy, Strategy,
};
use crate::rl::episode::{
    run_episode, run_episode_observed, EpisodeRecord, Terminal, TimelineSample,
};
use crate::structmap::{partition, PartitionParams};
use crate::worldsim::{load_world_file, WorldMap};

pub const MOSTLY_COMPLETED: f64 = 0.75;
pub const ESSENTIALLY_COMPLETED: f64 = 0.93;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Crossing {
    pub time: f64,
    pub distance: f64,
}

/// Time and distance at which completeness first reaches `level`, linearly
/// interpolated between the two samples that bracket the crossing.
pub fn crossing(timeline: &[TimelineSample], level: f64) -> Option<Crossing> {
    let first = timeline.first()?;
    if first.completeness >= level {
        return Some(Crossing {
            time: first.time,
            distance: first.distance,
        });
    }
    timeline.windows(2).find_map(|w| {
        let (a, b) = (w[0], w[1]);
        if b.completeness < level {
            return None;
        }
        let f = (level - a.completeness) / (b.completeness - a.completeness);
        Some(Crossing {
            time: a.time + f * (b.time - a.time),
            distance: a.distance + f * (b.distance - a.distance),
        })
    })
}

/// Tier metrics of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub world: String,
    pub strategy: Strategy,
    pub seed: u64,
    pub steps: usize,
    pub mostly: Option<Crossing>,
    pub essentially: Option<Crossing>,
    pub stop_time: f64,
    pub stop_distance: f64,
    pub completeness: f64,
    pub invalid_decisions: usize,
    pub terminal: Terminal,
}

impl RunSummary {
    pub fn from_record(world: &str, strategy: Strategy, rec: &EpisodeRecord) -> Self {
        let last = rec.timeline.last().copied();
        Self {
            world: world.to_string(),
            strategy,
            seed: rec.seed,
            steps: rec.steps.len(),
            mostly: crossing(&rec.timeline, MOSTLY_COMPLETED),
            essentially: crossing(&rec.timeline, ESSENTIALLY_COMPLETED),
            stop_time: rec.time().max(last.map_or(0.0, |s| s.time)),
            stop_distance: rec.distance(),
            completeness: rec.completeness(),
            invalid_decisions: rec.invalid_decisions(),
            terminal: rec.terminal,
        }
    }

    /// Never reached the essential completion level.
    pub fn failure(&self) -> bool {
        self.essentially.is_none()
    }
}

/// Means over the runs of one world/strategy pair. Tier means only count
/// runs that reached the tier.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub world: String,
    pub strategy: Strategy,
    pub runs: usize,
    pub mostly_time: Option<f64>,
    pub mostly_distance: Option<f64>,
    pub essentially_time: Option<f64>,
    pub essentially_distance: Option<f64>,
    pub stop_time: f64,
    pub stop_distance: f64,
    pub completeness: f64,
    pub failure_rate: f64,
}

fn mean(v: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for x in v {
        s += x;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TierReport {
    pub runs: Vec<RunSummary>,
}

const RUNS_HEADER: [&str; 14] = [
    "world",
    "strategy",
    "seed",
    "steps",
    "mostly_time_s",
    "mostly_distance_m",
    "essential_time_s",
    "essential_distance_m",
    "stop_time_s",
    "stop_distance_m",
    "completeness",
    "invalid_decisions",
    "terminal",
    "failure",
];

const SUMMARY_HEADER: [&str; 12] = [
    "world",
    "strategy",
    "runs",
    "mostly_time_s",
    "mostly_distance_m",
    "essential_time_s",
    "essential_distance_m",
    "stop_time_s",
    "stop_distance_m",
    "completeness",
    "failure_rate",
    "failures",
];

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::Csv(e.to_string())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is UTF-8")
}

impl TierReport {
    /// One aggregate per (world, strategy) in first-seen order.
    pub fn aggregates(&self) -> Vec<Aggregate> {
        let mut keys: Vec<(String, Strategy)> = Vec::new();
        for r in &self.runs {
            if !keys.iter().any(|(w, s)| *w == r.world && *s == r.strategy) {
                keys.push((r.world.clone(), r.strategy));
            }
        }
        keys.into_iter()
            .map(|(world, strategy)| {
                let rs: Vec<&RunSummary> = self
                    .runs
                    .iter()
                    .filter(|r| r.world == world && r.strategy == strategy)
                    .collect();
                let n = rs.len();
                Aggregate {
                    mostly_time: mean(rs.iter().filter_map(|r| r.mostly.map(|c| c.time))),
                    mostly_distance: mean(rs.iter().filter_map(|r| r.mostly.map(|c| c.distance))),
                    essentially_time: mean(rs.iter().filter_map(|r| r.essentially.map(|c| c.time))),
                    essentially_distance: mean(
                        rs.iter().filter_map(|r| r.essentially.map(|c| c.distance)),
                    ),
                    stop_time: mean(rs.iter().map(|r| r.stop_time)).unwrap_or(0.0),
                    stop_distance: mean(rs.iter().map(|r| r.stop_distance)).unwrap_or(0.0),
                    completeness: mean(rs.iter().map(|r| r.completeness)).unwrap_or(0.0),
                    failure_rate: rs.iter().filter(|r| r.failure()).count() as f64 / n as f64,
                    world,
                    strategy,
                    runs: n,
                }
            })
            .collect()
    }

    /// Per-run CSV. Empty fields mark tiers that were never reached.
    pub fn runs_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(RUNS_HEADER).expect("in-memory write");
        for r in &self.runs {
            w.write_record([
                r.world.clone(),
                r.strategy.to_string(),
                r.seed.to_string(),
                r.steps.to_string(),
                opt(r.mostly.map(|c| c.time)),
                opt(r.mostly.map(|c| c.distance)),
                opt(r.essentially.map(|c| c.time)),
                opt(r.essentially.map(|c| c.distance)),
                r.stop_time.to_string(),
                r.stop_distance.to_string(),
                r.completeness.to_string(),
                r.invalid_decisions.to_string(),
                r.terminal.to_string(),
                r.failure().to_string(),
            ])
            .expect("in-memory write");
        }
        finish(w)
    }

    pub fn from_runs_csv(text: &str) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let mut runs = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(csv_err)?;
            let field = |i: usize| {
                rec.get(i)
                    .ok_or_else(|| Error::Csv(format!("missing column `{}`", RUNS_HEADER[i])))
            };
            let num = |i: usize| -> Result<f64> { field(i)?.parse().map_err(csv_err) };
            let maybe = |i: usize| -> Result<Option<f64>> {
                let s = field(i)?;
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(csv_err)
                }
            };
            let pair = |a: usize, b: usize| -> Result<Option<Crossing>> {
                Ok(match (maybe(a)?, maybe(b)?) {
                    (Some(time), Some(distance)) => Some(Crossing { time, distance }),
                    (None, None) => None,
                    _ => return Err(Error::Csv("tier time and distance must both be set".into())),
                })
            };
            runs.push(RunSummary {
                world: field(0)?.to_string(),
                strategy: field(1)?.parse()?,
                seed: field(2)?.parse().map_err(csv_err)?,
                steps: field(3)?.parse().map_err(csv_err)?,
                mostly: pair(4, 5)?,
                essentially: pair(6, 7)?,
                stop_time: num(8)?,
                stop_distance: num(9)?,
                completeness: num(10)?,
                invalid_decisions: field(11)?.parse().map_err(csv_err)?,
                terminal: field(12)?.parse()?,
            });
        }
        Ok(Self { runs })
    }

    pub fn summary_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(SUMMARY_HEADER).expect("in-memory write");
        for a in self.aggregates() {
            w.write_record([
                a.world.clone(),
                a.strategy.to_string(),
                a.runs.to_string(),
                opt(a.mostly_time),
                opt(a.mostly_distance),
                opt(a.essentially_time),
                opt(a.essentially_distance),
                a.stop_time.to_string(),
                a.stop_distance.to_string(),
                a.completeness.to_string(),
                a.failure_rate.to_string(),
                ((a.failure_rate * a.runs as f64).round() as usize).to_string(),
            ])
            .expect("in-memory write");
        }
        finish(w)
    }
}

/// A loaded world with the name used in reports (the file stem).
#[derive(Clone, Debug)]
pub struct NamedWorld {
    pub name: String,
    pub world: WorldMap,
}

pub fn load_worlds(paths: &[PathBuf]) -> Result<Vec<NamedWorld>> {
    if paths.is_empty() {
        return Err(Error::Config("no worlds configured".into()));
    }
    paths
        .iter()
        .map(|p| {
            Ok(NamedWorld {
                name: p.file_stem().map_or_else(
                    || p.display().to_string(),
                    |s| s.to_string_lossy().into_owned(),
                ),
                world: load_world_file(p)?,
            })
        })
        .collect()
}

/// Loads the configured checkpoint, or builds a freshly initialised
/// network when none is set.
pub fn load_network(cfg: &RunConfig) -> Result<Arc<PolicyNetwork>> {
    let net = match &cfg.checkpoint {
        Some(p) => checkpoint::load(p)?,
        None => PolicyNetwork::new(cfg.observation.0, cfg.observation.1, cfg.train.init_seed)?,
    };
    Ok(Arc::new(net))
}

pub fn make_policy(
    strategy: Strategy,
    network: Option<&Arc<PolicyNetwork>>,
    aou: bool,
    stochastic: bool,
) -> Result<Box<dyn DecisionPolicy>> {
    Ok(match strategy {
        Strategy::NearestFrontier => Box::new(NearestFrontierPolicy),
        Strategy::Random => Box::new(ScriptedPolicy::random(aou)),
        Strategy::MapAware => {
            let net = network
                .ok_or_else(|| Error::Config("map-aware strategy needs a network".into()))?;
            Box::new(MapAwarePolicy::new(net.clone(), aou, stochastic))
        }
    })
}

/// Seed of the `i`-th run.
pub fn run_seed(base: u64, i: usize) -> u64 {
    base.wrapping_add(i as u64)
}

/// Runs every world × strategy × seed and, when `out` is given, writes
/// `tiers.csv`, `summary.csv` and one trajectory CSV per run under `runs/`.
pub fn run_benchmark(cfg: &RunConfig, out: Option<&Path>) -> Result<TierReport> {
    cfg.validate()?;
    let worlds = load_worlds(&cfg.worlds)?;
    let network = if cfg.strategies.contains(&Strategy::MapAware) {
        Some(load_network(cfg)?)
    } else {
        None
    };
    let mut jobs = Vec::new();
    for (w, _) in worlds.iter().enumerate() {
        for &s in &cfg.strategies {
            for i in 0..cfg.runs {
                jobs.push((w, s, run_seed(cfg.seed, i)));
            }
        }
    }
    let results: Vec<Result<(usize, Strategy, EpisodeRecord)>> = jobs
        .par_iter()
        .map(|&(w, s, seed)| {
            let mut policy = make_policy(s, network.as_ref(), cfg.aou, cfg.stochastic)?;
            let rec = run_episode(&worlds[w].world, policy.as_mut(), &cfg.explore, seed)?;
            Ok((w, s, rec))
        })
        .collect();
    let mut report = TierReport::default();
    let mut records = Vec::new();
    for res in results {
        let (w, s, rec) = res?;
        report
            .runs
            .push(RunSummary::from_record(&worlds[w].name, s, &rec));
        records.push((w, s, rec));
    }
    if let Some(out) = out {
        let runs_dir = out.join("runs");
        fs::create_dir_all(&runs_dir).map_err(|e| Error::file(&runs_dir, e))?;
        for (w, s, rec) in &records {
            let p = runs_dir.join(format!("{}_{}_{}.csv", worlds[*w].name, s, rec.seed));
            fs::write(&p, rec.to_csv()).map_err(|e| Error::file(&p, e))?;
        }
        write_file(&out.join("tiers.csv"), &report.runs_csv())?;
        write_file(&out.join("summary.csv"), &report.summary_csv())?;
    }
    Ok(report)
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::file(path, e))
}

/// Cell-level frontier: centers of `Free` cells with a 4-neighbour that is
/// `Unknown`. Only free cells are visited, so the cost follows the explored
/// area.
pub fn direct_frontier_cells(belief: &OccupancyBelief) -> Vec<Point> {
    let g = belief.geometry();
    let cells = belief.cells();
    let (h, w) = (g.height, g.width);
    let unknown = |i: usize| cells[i] == BeliefCell::Unknown;
    let mut out = Vec::new();
    for (i, c) in cells.iter().enumerate() {
        if *c != BeliefCell::Free {
            continue;
        }
        let (r, col) = (i / w, i % w);
        let hit = (r > 0 && unknown(i - w))
            || (r + 1 < h && unknown(i + w))
            || (col > 0 && unknown(i - 1))
            || (col + 1 < w && unknown(i + 1));
        if hit {
            out.push(g.cell_center(g.cell_at(i)));
        }
    }
    out
}

/// Partition plus the boundary pipeline; returns the representatives.
pub fn structured_pipeline(
    belief: &OccupancyBelief,
    partition_params: &PartitionParams,
    frontier_params: &FrontierParams,
) -> Result<Vec<Point>> {
    let roi = partition(belief, partition_params)?;
    let mut set = BoundarySet::new(partition_params.n, belief.geometry().resolution);
    set.update(&roi, belief.geometry(), frontier_params)?;
    Ok(set.representatives)
}

/// Cell-level frontier detection followed by the same clustering.
pub fn direct_pipeline(
    belief: &OccupancyBelief,
    n: usize,
    frontier_params: &FrontierParams,
) -> Result<Vec<Point>> {
    let mut set = BoundarySet::new(n, belief.geometry().resolution);
    set.recompute(direct_frontier_cells(belief), frontier_params)?;
    Ok(set.representatives)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimingRow {
    pub world: String,
    pub seed: u64,
    pub step: usize,
    pub completeness: f64,
    /// Fraction of belief cells that are known.
    pub known_fraction: f64,
    pub structured_s: f64,
    pub direct_s: f64,
    pub structured_points: usize,
    pub direct_points: usize,
}

const TIMING_REPEATS: usize = 3;

fn best_of<T>(mut f: impl FnMut() -> Result<T>) -> Result<(f64, T)> {
    let mut best = f64::INFINITY;
    let mut last = None;
    for _ in 0..TIMING_REPEATS {
        let t = Instant::now();
        let v = f()?;
        best = best.min(t.elapsed().as_secs_f64());
        last = Some(v);
    }
    Ok((best, last.expect("at least one repeat")))
}

/// Times both pipelines on one belief.
pub fn time_snapshot(
    belief: &OccupancyBelief,
    explore: &ExplorationConfig,
) -> Result<(f64, f64, usize, usize)> {
    let pp = explore.partition_params(None);
    let fp = explore.frontier_params(belief.geometry().resolution);
    let (ts, s) = best_of(|| structured_pipeline(belief, &pp, &fp))?;
    let (td, d) = best_of(|| direct_pipeline(belief, explore.n, &fp))?;
    Ok((ts, td, s.len(), d.len()))
}

/// Collects belief snapshots along nearest-frontier traces (one per
/// decision, plus the initial scan) until `snapshots` of them are at or
/// above `high` completeness, then times both pipelines on every snapshot.
/// Timing runs sequentially.
pub fn ablate_structmap_timing(
    world: &NamedWorld,
    explore: &ExplorationConfig,
    seed: u64,
    snapshots: usize,
    high: f64,
) -> Result<Vec<TimingRow>> {
    let mut cfg = explore.clone();
    cfg.episode_length = cfg.episode_length.max(200);
    let mut collected: Vec<(u64, usize, f64, OccupancyBelief)> = Vec::new();
    let mut high_count = 0;
    let mut i = 0;
    while high_count < snapshots && i < 10 * snapshots.max(1) {
        let s = run_seed(seed, i);
        i += 1;
        run_episode_observed(
            &world.world,
            &mut NearestFrontierPolicy,
            &cfg,
            s,
            &mut |v| {
                if v.completeness >= high {
                    if high_count >= snapshots {
                        return;
                    }
                    high_count += 1;
                }
                collected.push((s, v.step, v.completeness, v.belief.clone()));
            },
        )?;
    }
    collected
        .into_iter()
        .map(|(s, step, completeness, belief)| {
            let (ts, td, ns, nd) = time_snapshot(&belief, explore)?;
            Ok(TimingRow {
                world: world.name.clone(),
                seed: s,
                step,
                completeness,
                known_fraction: belief.known_count() as f64 / belief.geometry().len() as f64,
                structured_s: ts,
                direct_s: td,
                structured_points: ns,
                direct_points: nd,
            })
        })
        .collect()
}

pub fn timing_csv(rows: &[TimingRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "world",
        "seed",
        "step",
        "completeness",
        "known_fraction",
        "structured_s",
        "direct_s",
        "structured_points",
        "direct_points",
    ])
    .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.world.clone(),
            r.seed.to_string(),
            r.step.to_string(),
            r.completeness.to_string(),
            r.known_fraction.to_string(),
            r.structured_s.to_string(),
            r.direct_s.to_string(),
            r.structured_points.to_string(),
            r.direct_points.to_string(),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

/// Median timings of the snapshots whose completeness falls in one bin.
#[derive(Clone, Debug, PartialEq)]
pub struct TimingBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub structured_s: f64,
    pub direct_s: f64,
}

/// Groups rows into `[edges[i], edges[i+1])` completeness bins (the last
/// bin is closed) and takes per-bin medians. Empty bins are skipped.
pub fn timing_bins(rows: &[TimingRow], edges: &[f64]) -> Vec<TimingBin> {
    let last = edges.len().saturating_sub(2);
    edges
        .windows(2)
        .enumerate()
        .filter_map(|(i, e)| {
            let inside = |c: f64| c >= e[0] && (c < e[1] || (i == last && c <= e[1]));
            let sel: Vec<&TimingRow> = rows.iter().filter(|r| inside(r.completeness)).collect();
            let mut s: Vec<f64> = sel.iter().map(|r| r.structured_s).collect();
            let mut d: Vec<f64> = sel.iter().map(|r| r.direct_s).collect();
            Some(TimingBin {
                lo: e[0],
                hi: e[1],
                count: sel.len(),
                structured_s: median(&mut s)?,
                direct_s: median(&mut d)?,
            })
        })
        .collect()
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[m]
    } else {
        (values[m - 1] + values[m]) / 2.0
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AouRow {
    pub world: String,
    pub seed: u64,
    pub aou: bool,
    pub steps: usize,
    pub invalid_decisions: usize,
    /// Steps to reach 93%, censored at the step limit.
    pub steps_to_93: usize,
    pub reached_93: bool,
    pub completeness: f64,
    pub terminal: Terminal,
}

impl AouRow {
    pub fn invalid_rate(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.invalid_decisions as f64 / self.steps as f64
        }
    }
}

/// Paired runs of one policy with the AOU enabled and disabled. Uses the
/// map-aware policy when a checkpoint is configured, the random scripted
/// policy otherwise.
pub fn ablate_aou(cfg: &RunConfig, worlds: &[NamedWorld]) -> Result<Vec<AouRow>> {
    let network = match cfg.checkpoint {
        Some(_) => Some(load_network(cfg)?),
        None => None,
    };
    let strategy = if network.is_some() {
        Strategy::MapAware
    } else {
        Strategy::Random
    };
    let mut jobs = Vec::new();
    for w in 0..worlds.len() {
        for i in 0..cfg.runs {
            for aou in [true, false] {
                jobs.push((w, run_seed(cfg.seed, i), aou));
            }
        }
    }
    let limit = cfg.explore.episode_length;
    jobs.par_iter()
        .map(|&(w, seed, aou)| {
            let mut policy = make_policy(strategy, network.as_ref(), aou, cfg.stochastic)?;
            let rec = run_episode(&worlds[w].world, policy.as_mut(), &cfg.explore, seed)?;
            let reached = rec.steps_to(ESSENTIALLY_COMPLETED);
            Ok(AouRow {
                world: worlds[w].name.clone(),
                seed,
                aou,
                steps: rec.steps.len(),
                invalid_decisions: rec.invalid_decisions(),
                steps_to_93: reached.unwrap_or(limit),
                reached_93: reached.is_some(),
                completeness: rec.completeness(),
                terminal: rec.terminal,
            })
        })
        .collect()
}

pub fn aou_csv(rows: &[AouRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "world",
        "seed",
        "aou",
        "steps",
        "invalid_decisions",
        "invalid_rate",
        "steps_to_93",
        "reached_93",
        "completeness",
        "terminal",
    ])
    .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.world.clone(),
            r.seed.to_string(),
            r.aou.to_string(),
            r.steps.to_string(),
            r.invalid_decisions.to_string(),
            r.invalid_rate().to_string(),
            r.steps_to_93.to_string(),
            r.reached_93.to_string(),
            r.completeness.to_string(),
            r.terminal.to_string(),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoiRow {
    pub n: usize,
    pub world: String,
    pub seed: u64,
    pub steps: usize,
    pub time: f64,
    pub distance: f64,
    pub completeness: f64,
    pub terminal: Terminal,
}

/// Nearest-frontier runs for every ROI size.
pub fn ablate_roi(cfg: &RunConfig, worlds: &[NamedWorld]) -> Result<Vec<RoiRow>> {
    let mut jobs = Vec::new();
    for &n in &cfg.n_values {
        for w in 0..worlds.len() {
            for i in 0..cfg.runs {
                jobs.push((n, w, run_seed(cfg.seed, i)));
            }
        }
    }
    jobs.par_iter()
        .map(|&(n, w, seed)| {
            let explore = ExplorationConfig {
                n,
                ..cfg.explore.clone()
            };
            let rec = run_episode(&worlds[w].world, &mut NearestFrontierPolicy, &explore, seed)?;
            Ok(RoiRow {
                n,
                world: worlds[w].name.clone(),
                seed,
                steps: rec.steps.len(),
                time: rec.time(),
                distance: rec.distance(),
                completeness: rec.completeness(),
                terminal: rec.terminal,
            })
        })
        .collect()
}

pub fn roi_csv(rows: &[RoiRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "n",
        "world",
        "seed",
        "steps",
        "time_s",
        "distance_m",
        "completeness",
        "terminal",
    ])
    .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.world.clone(),
            r.seed.to_string(),
            r.steps.to_string(),
            r.time.to_string(),
            r.distance.to_string(),
            r.completeness.to_string(),
            r.terminal.to_string(),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

/// `(n, mean completeness, mean steps)` in the order of `n_values`.
pub fn roi_means(rows: &[RoiRow], n_values: &[usize]) -> Vec<(usize, f64, f64)> {
    n_values
        .iter()
        .map(|&n| {
            let sel: Vec<&RoiRow> = rows.iter().filter(|r| r.n == n).collect();
            (
                n,
                mean(sel.iter().map(|r| r.completeness)).unwrap_or(0.0),
                mean(sel.iter().map(|r| r.steps as f64)).unwrap_or(0.0),
            )
        })
        .collect()
}

/// Binary PPM of a belief (unknown grey, free white, occupied black) with
/// `path` drawn in red and `marks` in blue. Row 0 of the image is the top
/// of the map (largest y).
pub fn render_ppm(belief: &OccupancyBelief, path: &[Point], marks: &[Point]) -> Vec<u8> {
    let g = belief.geometry();
    let (w, h) = (g.width, g.height);
    let mut px = vec![[128u8, 128, 128]; w * h];
    for (i, c) in belief.cells().iter().enumerate() {
        px[i] = match c {
            BeliefCell::Unknown => [128, 128, 128],
            BeliefCell::Free => [255, 255, 255],
            BeliefCell::Occupied => [0, 0, 0],
        };
    }
    let mut paint = |p: Point, rgb: [u8; 3]| {
        if let Some(c) = g.cell_of(p) {
            px[g.index(c)] = rgb;
        }
    };
    for w2 in path.windows(2) {
        let steps = (w2[0].dist(w2[1]) / (g.resolution / 2.0)).ceil().max(1.0) as usize;
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            paint(
                Point::new(
                    w2[0].x + t * (w2[1].x - w2[0].x),
                    w2[0].y + t * (w2[1].y - w2[0].y),
                ),
                [220, 30, 30],
            );
        }
    }
    for &m in marks {
        paint(m, [30, 60, 220]);
    }
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for row in (0..h).rev() {
        for col in 0..w {
            out.extend_from_slice(&px[row * w + col]);
        }
    }
    out
}
