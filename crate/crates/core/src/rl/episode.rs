//! The exploration episode loop.

use std::collections::VecDeque;
use std::fmt;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::belief::{BeliefCell, Explorable, OccupancyBelief};
use crate::config::ExplorationConfig;
use crate::error::{Error, Result};
use crate::frontier::BoundarySet;
use crate::grid::{Cell, Point};
use crate::nav::NavGrid;
use crate::policy::{Decision, DecisionContext, DecisionPolicy, Provenance};
use crate::rl::reward::compute_reward;
use crate::structmap::{assemble, partition, pose_mask, robot_roi, RoiGrid, VisitedGrid};
use crate::worldsim::{raycast, wrap_angle, RobotPose, WorldMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Terminal {
    Complete,
    NoFrontiers,
    StepLimit,
    Failure,
}

impl fmt::Display for Terminal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Terminal::Complete => "COMPLETE",
            Terminal::NoFrontiers => "NO_FRONTIERS",
            Terminal::StepLimit => "STEP_LIMIT",
            Terminal::Failure => "FAILURE",
        })
    }
}

impl std::str::FromStr for Terminal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "COMPLETE" => Ok(Terminal::Complete),
            "NO_FRONTIERS" => Ok(Terminal::NoFrontiers),
            "STEP_LIMIT" => Ok(Terminal::StepLimit),
            "FAILURE" => Ok(Terminal::Failure),
            other => Err(Error::Csv(format!("unknown terminal `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Moved,
    Unreachable,
    NoValidAction,
}

impl fmt::Display for StepOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepOutcome::Moved => "MOVED",
            StepOutcome::Unreachable => "UNREACHABLE",
            StepOutcome::NoValidAction => "NO_VALID_ACTION",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    /// 1-based decision index.
    pub step: usize,
    pub target: Option<Point>,
    pub provenance: Option<Provenance>,
    pub outcome: StepOutcome,
    pub reward: f64,
    /// Newly visited ROIs.
    pub delta_coverage: usize,
    pub completeness: f64,
    /// Cumulative meters.
    pub distance: f64,
    /// Cumulative simulated seconds.
    pub time: f64,
}

/// Completeness after a scan, for tier metrics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimelineSample {
    pub step: usize,
    pub time: f64,
    pub distance: f64,
    pub completeness: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub start: RobotPose,
    pub final_pose: RobotPose,
    pub steps: Vec<StepRecord>,
    pub terminal: Terminal,
    pub timeline: Vec<TimelineSample>,
    /// Completeness after the initial scan.
    pub initial_completeness: f64,
    pub initial_visited: usize,
    pub final_visited: usize,
}

impl EpisodeRecord {
    pub fn completeness(&self) -> f64 {
        self.timeline.last().map_or(0.0, |s| s.completeness)
    }

    pub fn distance(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.distance)
    }

    pub fn time(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.time)
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    /// Decisions whose target could not be planned to.
    pub fn invalid_decisions(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| s.outcome == StepOutcome::Unreachable)
            .count()
    }

    /// First decision index after which completeness reached `level`
    /// (0 if it already held after the initial scan).
    pub fn steps_to(&self, level: f64) -> Option<usize> {
        if self.initial_completeness >= level {
            return Some(0);
        }
        self.steps
            .iter()
            .find(|s| s.completeness >= level)
            .map(|s| s.step)
    }

    /// Per-step CSV. Row 0 is the post-initial-scan state; the terminal
    /// reason is on the last row. Floats use shortest round-trip formatting.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header = [
            "step",
            "x",
            "y",
            "provenance",
            "outcome",
            "reward",
            "delta_coverage",
            "completeness",
            "distance_m",
            "time_s",
            "terminal",
        ];
        w.write_record(header).expect("in-memory write");
        let last = self.steps.len();
        let terminal = |i: usize| {
            if i == last {
                self.terminal.to_string()
            } else {
                String::new()
            }
        };
        w.write_record([
            "0".to_string(),
            self.start.x.to_string(),
            self.start.y.to_string(),
            String::new(),
            "START".to_string(),
            "0".to_string(),
            "0".to_string(),
            self.initial_completeness.to_string(),
            "0".to_string(),
            "0".to_string(),
            terminal(0),
        ])
        .expect("in-memory write");
        for s in &self.steps {
            let (x, y) = s.target.map_or((String::new(), String::new()), |p| {
                (p.x.to_string(), p.y.to_string())
            });
            w.write_record([
                s.step.to_string(),
                x,
                y,
                s.provenance.map_or(String::new(), |p| p.to_string()),
                s.outcome.to_string(),
                s.reward.to_string(),
                s.delta_coverage.to_string(),
                s.completeness.to_string(),
                s.distance.to_string(),
                s.time.to_string(),
                terminal(s.step),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is UTF-8")
    }
}

/// Read-only view handed to episode observers after every decision.
pub struct EpisodeView<'a> {
    pub step: usize,
    pub belief: &'a OccupancyBelief,
    pub completeness: f64,
    pub pose: RobotPose,
}

/// Picks a start cell center in the largest 4-connected free region, at
/// least `clearance` cells from any wall when possible.
pub fn choose_start<R: Rng + ?Sized>(world: &WorldMap, clearance: usize, rng: &mut R) -> RobotPose {
    let g = world.geometry();
    let mut label = vec![usize::MAX; g.len()];
    let mut best: Vec<Cell> = Vec::new();
    for i in 0..g.len() {
        let c = g.cell_at(i);
        if label[i] != usize::MAX || !world.is_free(c) {
            continue;
        }
        let mut comp = Vec::new();
        let mut queue = VecDeque::from([c]);
        label[i] = i;
        while let Some(cur) = queue.pop_front() {
            comp.push(cur);
            for nb in g.neighbors4(cur) {
                let j = g.index(nb);
                if label[j] == usize::MAX && world.is_free(nb) {
                    label[j] = i;
                    queue.push_back(nb);
                }
            }
        }
        if comp.len() > best.len() {
            best = comp;
        }
    }
    best.sort();
    let rad = clearance as isize;
    let clear = |c: &Cell| {
        (-rad..=rad).all(|dr| {
            (-rad..=rad).all(|dc| {
                if dr * dr + dc * dc > rad * rad {
                    return true;
                }
                let (r, col) = (c.row as isize + dr, c.col as isize + dc);
                r >= 0
                    && col >= 0
                    && (r as usize) < g.height
                    && (col as usize) < g.width
                    && world.is_free(Cell::new(r as usize, col as usize))
            })
        })
    };
    let roomy: Vec<Cell> = best.iter().copied().filter(clear).collect();
    let pool = if roomy.is_empty() { &best } else { &roomy };
    let cell = pool[rng.random_range(0..pool.len())];
    let p = g.cell_center(cell);
    let heading = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    RobotPose::new(p.x, p.y, heading)
}

/// Meters ahead on the path the robot faces while driving.
const LOOKAHEAD: f64 = 1.0;
/// Radius around the arrival point searched for unknown cells to face.
const VIEW_RADIUS: f64 = 2.0;

struct Episode<'a> {
    world: &'a WorldMap,
    cfg: &'a ExplorationConfig,
    rng: ChaCha8Rng,
    belief: OccupancyBelief,
    explorable: Explorable,
    pose: RobotPose,
    distance: f64,
    time: f64,
    step: usize,
    timeline: Vec<TimelineSample>,
}

impl Episode<'_> {
    fn scan(&mut self) -> Result<()> {
        let scan = raycast(
            self.world,
            &self.pose,
            &self.cfg.sensor,
            self.rng.next_u64(),
        )?;
        self.belief.integrate_scan(&scan)?;
        self.timeline.push(TimelineSample {
            step: self.step,
            time: self.time + self.distance_time(),
            distance: self.distance,
            completeness: self.explorable.completeness(&self.belief)?,
        });
        Ok(())
    }

    // Travel time is accounted in `distance`; decision time in `time`.
    fn distance_time(&self) -> f64 {
        self.distance / self.cfg.speed
    }

    fn total_time(&self) -> f64 {
        self.time + self.distance_time()
    }

    /// Follows `path`, scanning every `scan_spacing` meters and on arrival.
    /// Stops early in front of any cell that is occupied in the world.
    fn follow(&mut self, path: &[Point], target: Point) -> Result<()> {
        let g = *self.world.geometry();
        let mut since_scan = 0.0;
        let mut heading = self.pose.heading;
        let mut moved = false;
        for (i, &wp) in path.iter().enumerate() {
            let blocked = g.cell_of(wp).is_none_or(|c| !self.world.is_free(c));
            if blocked {
                break;
            }
            let here = self.pose.position();
            let seg = here.dist(wp);
            if seg > 0.0 {
                // face a point one lookahead distance further along the path
                let ahead = path[i..]
                    .iter()
                    .find(|p| p.dist(wp) >= LOOKAHEAD)
                    .or(path.last())
                    .copied()
                    .filter(|p| p.dist(wp) > 1e-9)
                    .unwrap_or(wp);
                let from = if ahead == wp { here } else { wp };
                heading = (ahead.y - from.y).atan2(ahead.x - from.x);
                moved = true;
            }
            self.distance += seg;
            since_scan += seg;
            self.pose = RobotPose::new(wp.x, wp.y, heading);
            if since_scan >= self.cfg.scan_spacing {
                since_scan = 0.0;
                self.scan()?;
            }
        }
        let here = self.pose.position();
        let arrival = if let Some(b) = self.unknown_bearing(here) {
            b
        } else if here.dist(target) > 1e-9 {
            (target.y - here.y).atan2(target.x - here.x)
        } else if moved {
            heading
        } else {
            wrap_angle(heading + std::f64::consts::PI)
        };
        self.pose = RobotPose::new(here.x, here.y, arrival);
        self.jitter();
        self.scan()
    }

    /// Bearing from `here` to the centroid of unknown cells bordering free
    /// space within `VIEW_RADIUS`, so the arrival scan looks at what is
    /// left to see.
    fn unknown_bearing(&self, here: Point) -> Option<f64> {
        let g = *self.belief.geometry();
        let centre = g.cell_of(here)?;
        let reach = (VIEW_RADIUS / g.resolution).ceil() as usize;
        let (mut sx, mut sy, mut count) = (0.0, 0.0, 0usize);
        for r in centre.row.saturating_sub(reach)..(centre.row + reach + 1).min(g.height) {
            for c in centre.col.saturating_sub(reach)..(centre.col + reach + 1).min(g.width) {
                let cell = Cell::new(r, c);
                if self.belief.cell(cell) != BeliefCell::Unknown || !self.touches_free(cell) {
                    continue;
                }
                let p = g.cell_center(cell);
                if p.dist(here) <= VIEW_RADIUS {
                    sx += p.x - here.x;
                    sy += p.y - here.y;
                    count += 1;
                }
            }
        }
        (count > 0 && (sx != 0.0 || sy != 0.0)).then(|| sy.atan2(sx))
    }

    fn touches_free(&self, cell: Cell) -> bool {
        let g = self.belief.geometry();
        let (r, c) = (cell.row as isize, cell.col as isize);
        [(-1, 0), (1, 0), (0, -1), (0, 1)].iter().any(|&(dr, dc)| {
            let (rr, cc) = (r + dr, c + dc);
            rr >= 0
                && cc >= 0
                && (rr as usize) < g.height
                && (cc as usize) < g.width
                && self.belief.cell(Cell::new(rr as usize, cc as usize)) == BeliefCell::Free
        })
    }

    fn jitter(&mut self) {
        if self.cfg.pose_jitter <= 0.0 {
            return;
        }
        let n = Normal::new(0.0, self.cfg.pose_jitter).expect("validated sigma");
        let p = Point::new(
            self.pose.x + n.sample(&mut self.rng),
            self.pose.y + n.sample(&mut self.rng),
        );
        let ok = self
            .world
            .geometry()
            .cell_of(p)
            .is_some_and(|c| self.world.is_free(c) && self.belief.cell(c) == BeliefCell::Free);
        if ok {
            self.pose = RobotPose::new(p.x, p.y, self.pose.heading);
        }
    }
}

/// Runs one episode.
pub fn run_episode(
    world: &WorldMap,
    policy: &mut dyn DecisionPolicy,
    cfg: &ExplorationConfig,
    seed: u64,
) -> Result<EpisodeRecord> {
    run_episode_observed(world, policy, cfg, seed, &mut |_| {})
}

/// Runs one episode, calling `observer` after the initial scan and after
/// every decision.
pub fn run_episode_observed(
    world: &WorldMap,
    policy: &mut dyn DecisionPolicy,
    cfg: &ExplorationConfig,
    seed: u64,
    observer: &mut dyn FnMut(&EpisodeView),
) -> Result<EpisodeRecord> {
    cfg.validate()?;
    let g = *world.geometry();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = match cfg.start {
        Some(p) => {
            let cell = g
                .cell_of(p)
                .filter(|c| world.is_free(*c))
                .ok_or(Error::InvalidPose { x: p.x, y: p.y })?;
            let c = g.cell_center(cell);
            RobotPose::new(
                c.x,
                c.y,
                rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            )
        }
        None => choose_start(world, cfg.inflation + 2, &mut rng),
    };
    policy.reset(rng.next_u64());

    let shape = policy.observation_shape();
    let pparams = cfg.partition_params(shape);
    let fparams = cfg.frontier_params(g.resolution);
    let mut ep = Episode {
        world,
        cfg,
        rng,
        belief: OccupancyBelief::for_world(world),
        explorable: Explorable::new(world, start.position())?,
        pose: start,
        distance: 0.0,
        time: 0.0,
        step: 0,
        timeline: Vec::new(),
    };
    ep.scan()?;
    let mut initial_completeness = ep.timeline[0].completeness;
    let mut roi: RoiGrid = partition(&ep.belief, &pparams)?;
    let (rows, cols) = roi.shape();
    let mut visited = VisitedGrid::new(rows, cols);
    visited.update(&roi)?;
    let mut initial_visited = visited.count();
    let mut boundary = BoundarySet::new(cfg.n, g.resolution);
    let mut prev_waypoint = start.position();
    let mut failures = 0;
    let mut looked_back = false;
    let mut steps: Vec<StepRecord> = Vec::new();
    observer(&EpisodeView {
        step: 0,
        belief: &ep.belief,
        completeness: initial_completeness,
        pose: ep.pose,
    });

    let terminal = loop {
        let completeness = ep.explorable.completeness(&ep.belief)?;
        if completeness >= cfg.complete_threshold {
            break Terminal::Complete;
        }
        if steps.len() >= cfg.episode_length {
            break Terminal::StepLimit;
        }
        boundary.update(&roi, &g, &fparams)?;
        if boundary.representatives.is_empty() {
            if looked_back {
                break Terminal::NoFrontiers;
            }
            // the sensor only covers the front half-plane: turn around and
            // look once more before giving up, crediting what is seen to the
            // previous step
            looked_back = true;
            ep.pose = RobotPose::new(ep.pose.x, ep.pose.y, ep.pose.heading + std::f64::consts::PI);
            ep.scan()?;
            roi = partition(&ep.belief, &pparams)?;
            let delta = visited.update(&roi)?;
            let completeness = ep.explorable.completeness(&ep.belief)?;
            match steps.last_mut() {
                Some(last) => {
                    last.delta_coverage += delta;
                    last.reward += cfg.mu * delta as f64;
                    last.completeness = completeness;
                }
                None => {
                    initial_visited = visited.count();
                    initial_completeness = completeness;
                }
            }
            continue;
        }
        let nav = NavGrid::new(&ep.belief, cfg.inflation);
        let here = robot_roi(&g, &ep.pose, cfg.n)?;
        let mask = pose_mask(here, cfg.lambda, rows, cols)?;
        let obs = assemble(&roi, &visited, &mask)?;
        let ctx = DecisionContext {
            observation: &obs,
            representatives: &boundary.representatives,
            belief: &ep.belief,
            nav: &nav,
            pose: ep.pose,
            completeness,
            relax: cfg.n,
        };
        let outcome = policy.decide(&ctx)?;
        ep.step += 1;
        ep.time += cfg.decision_time;
        for p in &outcome.excluded {
            boundary.mark_unreachable(*p);
        }
        let (target, provenance, kind, reward, delta) = match outcome.decision {
            Decision::Move { waypoint, path } => {
                let unknown_before = ep.belief.unknown_count();
                ep.follow(&path.waypoints, waypoint.point)?;
                if ep.belief.unknown_count() == unknown_before {
                    boundary.mark_unreachable(waypoint.point);
                }
                roi = partition(&ep.belief, &pparams)?;
                let delta = visited.update(&roi)?;
                let reward = compute_reward(delta, waypoint.point, prev_waypoint, cfg.mu);
                prev_waypoint = waypoint.point;
                failures = 0;
                looked_back = false;
                (
                    Some(waypoint.point),
                    Some(waypoint.provenance),
                    StepOutcome::Moved,
                    reward,
                    delta,
                )
            }
            Decision::Unreachable { target } => {
                boundary.mark_unreachable(target);
                failures += 1;
                let reward = compute_reward(0, target, prev_waypoint, cfg.mu);
                (
                    Some(target),
                    Some(Provenance::NetworkRaw),
                    StepOutcome::Unreachable,
                    reward,
                    0,
                )
            }
            Decision::NoValidAction => (None, None, StepOutcome::NoValidAction, 0.0, 0),
        };
        let completeness = ep.explorable.completeness(&ep.belief)?;
        steps.push(StepRecord {
            step: ep.step,
            target,
            provenance,
            outcome: kind,
            reward,
            delta_coverage: delta,
            completeness,
            distance: ep.distance,
            time: ep.total_time(),
        });
        observer(&EpisodeView {
            step: ep.step,
            belief: &ep.belief,
            completeness,
            pose: ep.pose,
        });
        if failures >= cfg.max_retries {
            break Terminal::Failure;
        }
    };

    Ok(EpisodeRecord {
        seed,
        start,
        final_pose: ep.pose,
        steps,
        terminal,
        timeline: ep.timeline,
        initial_completeness,
        initial_visited,
        final_visited: visited.count(),
    })
}
