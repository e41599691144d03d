//! Plain-text `key = value` configuration. Keys mirror the hyperparameter
//! names used throughout (n, alpha, beta, lambda, r, F, G, R, k, mu, ...).
//! Lines starting with `#` and trailing `# ...` are comments; unknown or
//! repeated keys are errors.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::frontier::FrontierParams;
use crate::grid::Point;
use crate::meanshift::Bandwidth;
use crate::policy::Strategy;
use crate::structmap::PartitionParams;
use crate::worldsim::SensorModel;

/// Settings for a single exploration episode.
#[derive(Clone, Debug, PartialEq)]
pub struct ExplorationConfig {
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub lambda: usize,
    /// Feasibility radius `R` (m).
    pub radius: f64,
    /// Minimum neighbour count `k`.
    pub k: usize,
    /// Fixed mean-shift bandwidth; adaptive when `None`.
    pub bandwidth: Option<f64>,
    pub mu: f64,
    pub episode_length: usize,
    /// Consecutive failed decisions before the episode is abandoned.
    pub max_retries: usize,
    pub complete_threshold: f64,
    /// m/s.
    pub speed: f64,
    /// Seconds charged per decision.
    pub decision_time: f64,
    /// Obstacle inflation in cells.
    pub inflation: usize,
    /// Meters between scans while moving.
    pub scan_spacing: f64,
    pub sensor: SensorModel,
    /// Standard deviation (m) of the pose jitter applied on arrival.
    pub pose_jitter: f64,
    /// Fixed start position; seeded random when `None`.
    pub start: Option<Point>,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        Self {
            n: 4,
            alpha: 0.18,
            beta: 1.0,
            lambda: 3,
            radius: 1.0,
            k: 3,
            bandwidth: None,
            mu: 0.02,
            episode_length: 40,
            max_retries: 5,
            complete_threshold: 0.99,
            speed: 0.45,
            decision_time: 0.3,
            inflation: 2,
            scan_spacing: 1.0,
            sensor: SensorModel::default(),
            pose_jitter: 0.0,
            start: None,
        }
    }
}

impl ExplorationConfig {
    pub fn partition_params(&self, shape: Option<(usize, usize)>) -> PartitionParams {
        PartitionParams {
            n: self.n,
            alpha: self.alpha,
            beta: self.beta,
            shape,
        }
    }

    pub fn frontier_params(&self, resolution: f64) -> FrontierParams {
        FrontierParams {
            radius: self.radius,
            min_neighbors: self.k,
            bandwidth: match self.bandwidth {
                Some(bw) => Bandwidth::Fixed(bw),
                None => Bandwidth::Adaptive {
                    floor: self.n as f64 * resolution,
                },
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.partition_params(None).validate()?;
        self.frontier_params(0.1).validate()?;
        self.sensor.validate()?;
        let checks = [
            (self.speed > 0.0, "speed must be > 0"),
            (self.decision_time >= 0.0, "decision_time must be >= 0"),
            (self.scan_spacing > 0.0, "scan_spacing must be > 0"),
            (self.pose_jitter >= 0.0, "pose_jitter must be >= 0"),
            (
                (0.0..=1.0).contains(&self.complete_threshold),
                "complete_threshold must lie in [0, 1]",
            ),
            (self.mu >= 0.0, "mu must be >= 0"),
            (self.max_retries >= 1, "max_retries must be >= 1"),
            (
                self.bandwidth.is_none_or(|b| b > 0.0),
                "bandwidth must be > 0",
            ),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Config(msg.into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PpoConfig {
    pub gamma: f64,
    pub learning_rate: f64,
    /// Minimum transitions per update (whole episodes are kept together).
    pub batch_size: usize,
    pub clip_epsilon: f64,
    pub gae_lambda: f64,
    pub epochs_per_batch: usize,
    pub entropy_coeff: f64,
    pub value_coeff: f64,
    pub max_grad_norm: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            learning_rate: 0.00025,
            batch_size: 32,
            clip_epsilon: 0.2,
            gae_lambda: 0.95,
            epochs_per_batch: 4,
            entropy_coeff: 0.01,
            value_coeff: 0.5,
            max_grad_norm: 0.5,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!(
                "gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        if !(self.clip_epsilon > 0.0) {
            return Err(Error::Config("clip_epsilon must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::Config("gae_lambda must lie in [0, 1]".into()));
        }
        if self.batch_size == 0 || self.epochs_per_batch == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::Config(
                "batch_size, epochs_per_batch and learning_rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub total_episodes: usize,
    /// Stop after this many PPO updates.
    pub max_updates: Option<usize>,
    /// Emit a checkpoint every this many updates (0 = only at the end).
    pub checkpoint_every: usize,
    /// Stop early when the reward moving average flattens.
    pub plateau: bool,
    pub init_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_episodes: 1000,
            max_updates: None,
            checkpoint_every: 50,
            plateau: true,
            init_seed: 0,
        }
    }
}

/// A full experiment description as read from a config file.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub explore: ExplorationConfig,
    pub ppo: PpoConfig,
    pub train: TrainConfig,
    /// Expected world resolution (m/cell).
    pub r: f64,
    /// Network observation size `F × G`.
    pub observation: (usize, usize),
    pub worlds: Vec<PathBuf>,
    pub strategies: Vec<Strategy>,
    pub runs: usize,
    pub seed: u64,
    pub aou: bool,
    /// Sample actions instead of taking the mean.
    pub stochastic: bool,
    pub checkpoint: Option<PathBuf>,
    /// ROI sizes for the ROI sweep.
    pub n_values: Vec<usize>,
    pub timing_snapshots: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            explore: ExplorationConfig::default(),
            ppo: PpoConfig::default(),
            train: TrainConfig::default(),
            r: 0.1,
            observation: (32, 64),
            worlds: Vec::new(),
            strategies: vec![Strategy::NearestFrontier],
            runs: 10,
            seed: 0,
            aou: true,
            stochastic: true,
            checkpoint: None,
            n_values: vec![2, 4, 8],
            timing_snapshots: 20,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("line {line}: bad value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str, line: usize) -> Result<bool> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!(
            "line {line}: `{key}` expects true/false, got `{value}`"
        ))),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str, line: usize) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s, line))
        .collect()
}

impl RunConfig {
    /// Parses config text; relative world/checkpoint paths are resolved
    /// against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = HashSet::new();
        let mut shape = (None, None);
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {line}: expected `key = value`"
                )));
            };
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {line}: duplicate key `{key}`")));
            }
            let e = &mut cfg.explore;
            let p = &mut cfg.ppo;
            let t = &mut cfg.train;
            match key {
                "n" => e.n = parse_value(key, value, line)?,
                "alpha" => e.alpha = parse_value(key, value, line)?,
                "beta" => e.beta = parse_value(key, value, line)?,
                "lambda" => e.lambda = parse_value(key, value, line)?,
                "r" => cfg.r = parse_value(key, value, line)?,
                "F" => shape.0 = Some(parse_value(key, value, line)?),
                "G" => shape.1 = Some(parse_value(key, value, line)?),
                "R" => e.radius = parse_value(key, value, line)?,
                "k" => e.k = parse_value(key, value, line)?,
                "mu" => e.mu = parse_value(key, value, line)?,
                "bandwidth" => e.bandwidth = Some(parse_value(key, value, line)?),
                "episode_length" => e.episode_length = parse_value(key, value, line)?,
                "max_retries" => e.max_retries = parse_value(key, value, line)?,
                "complete_threshold" => e.complete_threshold = parse_value(key, value, line)?,
                "speed" => e.speed = parse_value(key, value, line)?,
                "decision_time" => e.decision_time = parse_value(key, value, line)?,
                "inflation" => e.inflation = parse_value(key, value, line)?,
                "scan_spacing" => e.scan_spacing = parse_value(key, value, line)?,
                "fov_deg" => {
                    e.sensor.fov = parse_value::<f64>(key, value, line)?.to_radians();
                }
                "max_range" => e.sensor.max_range = parse_value(key, value, line)?,
                "beam_count" => e.sensor.beam_count = parse_value(key, value, line)?,
                "noise_sigma" => e.sensor.noise_sigma = parse_value(key, value, line)?,
                "pose_jitter" => e.pose_jitter = parse_value(key, value, line)?,
                "start" => {
                    let xy: Vec<f64> = parse_list(key, value, line)?;
                    let [x, y] = xy[..] else {
                        return Err(Error::Config(format!("line {line}: `start` expects x,y")));
                    };
                    e.start = Some(Point::new(x, y));
                }
                "batch_size" => p.batch_size = parse_value(key, value, line)?,
                "gamma" => p.gamma = parse_value(key, value, line)?,
                "learning_rate" => p.learning_rate = parse_value(key, value, line)?,
                "clip_epsilon" => p.clip_epsilon = parse_value(key, value, line)?,
                "gae_lambda" => p.gae_lambda = parse_value(key, value, line)?,
                "epochs_per_batch" => p.epochs_per_batch = parse_value(key, value, line)?,
                "entropy_coeff" => p.entropy_coeff = parse_value(key, value, line)?,
                "value_coeff" => p.value_coeff = parse_value(key, value, line)?,
                "max_grad_norm" => p.max_grad_norm = parse_value(key, value, line)?,
                "total_episodes" => t.total_episodes = parse_value(key, value, line)?,
                "max_updates" => t.max_updates = Some(parse_value(key, value, line)?),
                "checkpoint_every" => t.checkpoint_every = parse_value(key, value, line)?,
                "plateau" => t.plateau = parse_bool(key, value, line)?,
                "init_seed" => t.init_seed = parse_value(key, value, line)?,
                "worlds" => {
                    cfg.worlds = value
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|s| base.join(s))
                        .collect();
                }
                "strategies" => cfg.strategies = parse_list(key, value, line)?,
                "runs" => cfg.runs = parse_value(key, value, line)?,
                "seed" => cfg.seed = parse_value(key, value, line)?,
                "aou" => cfg.aou = parse_bool(key, value, line)?,
                "stochastic" => cfg.stochastic = parse_bool(key, value, line)?,
                "checkpoint" => cfg.checkpoint = Some(base.join(value)),
                "n_values" => cfg.n_values = parse_list(key, value, line)?,
                "timing_snapshots" => cfg.timing_snapshots = parse_value(key, value, line)?,
                other => {
                    return Err(Error::Config(format!("line {line}: unknown key `{other}`")));
                }
            }
        }
        match shape {
            (Some(f), Some(g)) => cfg.observation = (f, g),
            (None, None) => {}
            _ => return Err(Error::Config("F and G must be given together".into())),
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        self.explore.validate()?;
        self.ppo.validate()?;
        if !(self.r > 0.0) {
            return Err(Error::Config("r must be > 0".into()));
        }
        if self.observation.0 == 0 || self.observation.1 == 0 {
            return Err(Error::Config("F and G must be >= 1".into()));
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be >= 1".into()));
        }
        if self.n_values.contains(&0) {
            return Err(Error::Config("n_values must be >= 1".into()));
        }
        Ok(())
    }
}
