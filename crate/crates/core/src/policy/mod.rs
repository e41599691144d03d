//! Decision layer: the map-aware recurrent policy with its Action
//! Optimization Unit (AOU), the nearest-frontier baseline and scripted
//! policies, all behind [`DecisionPolicy`].

pub mod checkpoint;
pub mod network;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::belief::{BeliefCell, OccupancyBelief};
use crate::error::{Error, Result};
use crate::grid::{GridGeometry, Point};
use crate::nav::{NavGrid, PlannedPath};
use crate::structmap::StructuredMap;
use crate::worldsim::RobotPose;

pub use network::{LstmState, PolicyNetwork, StepInput, StepOutput};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Provenance {
    NetworkRaw,
    AouProjected,
    Baseline,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::NetworkRaw => "NETWORK_RAW",
            Provenance::AouProjected => "AOU_PROJECTED",
            Provenance::Baseline => "BASELINE",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Waypoint {
    pub point: Point,
    pub provenance: Provenance,
}

/// Everything a policy may look at when choosing the next target.
pub struct DecisionContext<'a> {
    pub observation: &'a StructuredMap,
    pub representatives: &'a [Point],
    pub belief: &'a OccupancyBelief,
    pub nav: &'a NavGrid,
    pub pose: RobotPose,
    /// Completeness after the previous action.
    pub completeness: f64,
    /// Goal-relaxation radius in cells (one ROI side).
    pub relax: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Decision {
    Move {
        waypoint: Waypoint,
        path: PlannedPath,
    },
    /// The chosen target could not be planned to.
    Unreachable { target: Point },
    /// No candidate target is reachable.
    NoValidAction,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecisionOutcome {
    pub decision: Decision,
    /// Candidates found unreachable while deciding; the caller adds them to
    /// the exclusion set.
    pub excluded: Vec<Point>,
}

impl DecisionOutcome {
    fn new(decision: Decision) -> Self {
        Self {
            decision,
            excluded: Vec::new(),
        }
    }
}

pub trait DecisionPolicy: Send {
    /// Observation grid size the policy needs, if any.
    fn observation_shape(&self) -> Option<(usize, usize)> {
        None
    }

    fn reset(&mut self, seed: u64);

    fn decide(&mut self, ctx: &DecisionContext) -> Result<DecisionOutcome>;
}

/// Maps an action in `[-1, 1]²` onto the map extent.
pub fn action_to_coords(action: [f64; 2], geometry: &GridGeometry) -> Point {
    let nx = (action[0] + 1.0) / 2.0;
    let ny = (action[1] + 1.0) / 2.0;
    Point::new(
        geometry.origin.x + nx * geometry.width_m(),
        geometry.origin.y + ny * geometry.height_m(),
    )
}

/// Result of AOU projection or baseline selection.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub chosen: Option<(Waypoint, PlannedPath)>,
    pub unreachable: Vec<Point>,
}

impl Selection {
    fn into_outcome(self) -> DecisionOutcome {
        DecisionOutcome {
            decision: match self.chosen {
                Some((waypoint, path)) => Decision::Move { waypoint, path },
                None => Decision::NoValidAction,
            },
            excluded: self.unreachable,
        }
    }
}

/// Accepts `raw` when it lies in a free, reachable cell; otherwise projects
/// to the nearest reachable representative (ties lexicographic). Members
/// found unreachable on the way are reported.
pub fn aou_project(
    raw: Point,
    representatives: &[Point],
    belief: &OccupancyBelief,
    nav: &NavGrid,
    from: Point,
    relax: usize,
) -> Result<Selection> {
    if belief.cell_at_point(raw) == Some(BeliefCell::Free) {
        if let Some(path) = nav.plan(from, raw, relax)? {
            return Ok(Selection {
                chosen: Some((
                    Waypoint {
                        point: raw,
                        provenance: Provenance::NetworkRaw,
                    },
                    path,
                )),
                unreachable: Vec::new(),
            });
        }
    }
    let mut order: Vec<Point> = representatives.to_vec();
    order.sort_by(|a, b| {
        a.dist_sq(raw)
            .total_cmp(&b.dist_sq(raw))
            .then_with(|| a.lex_cmp(b))
    });
    let mut unreachable = Vec::new();
    for l in order {
        match nav.plan(from, l, relax)? {
            Some(path) => {
                return Ok(Selection {
                    chosen: Some((
                        Waypoint {
                            point: l,
                            provenance: Provenance::AouProjected,
                        },
                        path,
                    )),
                    unreachable,
                })
            }
            None => unreachable.push(l),
        }
    }
    Ok(Selection {
        chosen: None,
        unreachable,
    })
}

/// The representative with the shortest planned path from `from`
/// (ties lexicographic). Unreachable members are reported.
pub fn nearest_frontier_baseline(
    from: Point,
    representatives: &[Point],
    nav: &NavGrid,
    relax: usize,
) -> Result<Selection> {
    if representatives.is_empty() {
        return Ok(Selection {
            chosen: None,
            unreachable: Vec::new(),
        });
    }
    let field = nav.distance_field(from)?;
    let mut best: Option<(f64, Point)> = None;
    let mut unreachable = Vec::new();
    for &l in representatives {
        let length = nav
            .relax_goal(l, relax, Some(field.start()))
            .and_then(|c| field.length(c));
        match length {
            Some(d) => {
                let better = best
                    .is_none_or(|(bd, bp)| d.total_cmp(&bd).then_with(|| l.lex_cmp(&bp)).is_lt());
                if better {
                    best = Some((d, l));
                }
            }
            None => unreachable.push(l),
        }
    }
    let chosen = match best {
        Some((_, l)) => {
            let path = nav
                .plan(from, l, relax)?
                .expect("distance field and A* agree on reachability");
            Some((
                Waypoint {
                    point: l,
                    provenance: Provenance::Baseline,
                },
                path,
            ))
        }
        None => None,
    };
    Ok(Selection {
        chosen,
        unreachable,
    })
}

/// Turns a raw action into a decision, with or without the AOU.
fn resolve_action(action: [f64; 2], ctx: &DecisionContext, aou: bool) -> Result<DecisionOutcome> {
    let raw = action_to_coords(action, ctx.belief.geometry());
    let from = ctx.pose.position();
    if aou {
        return Ok(aou_project(
            raw,
            ctx.representatives,
            ctx.belief,
            ctx.nav,
            from,
            ctx.relax,
        )?
        .into_outcome());
    }
    Ok(DecisionOutcome::new(
        match ctx.nav.plan(from, raw, ctx.relax)? {
            Some(path) => Decision::Move {
                waypoint: Waypoint {
                    point: raw,
                    provenance: Provenance::NetworkRaw,
                },
                path,
            },
            None => Decision::Unreachable { target: raw },
        },
    ))
}

/// Stored inputs and sampling results of one network decision.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub prev_action: [f64; 2],
    pub prev_completeness: f64,
    /// Pre-squash sample.
    pub u: [f64; 2],
    pub log_prob: f64,
    pub value: f64,
}

impl Transition {
    pub fn input(&self) -> StepInput<'_> {
        StepInput {
            obs: &self.obs,
            prev_action: self.prev_action,
            prev_completeness: self.prev_completeness,
        }
    }
}

/// The learned policy: network action, optionally refined by the AOU.
pub struct MapAwarePolicy {
    net: Arc<PolicyNetwork>,
    pub aou: bool,
    pub stochastic: bool,
    state: LstmState,
    prev_action: [f64; 2],
    rng: ChaCha8Rng,
    recording: Option<Vec<Transition>>,
}

impl MapAwarePolicy {
    pub fn new(net: Arc<PolicyNetwork>, aou: bool, stochastic: bool) -> Self {
        Self {
            net,
            aou,
            stochastic,
            state: LstmState::default(),
            prev_action: [0.0; 2],
            rng: ChaCha8Rng::seed_from_u64(0),
            recording: None,
        }
    }

    pub fn network(&self) -> &Arc<PolicyNetwork> {
        &self.net
    }

    /// Starts keeping a [`Transition`] for every decision.
    pub fn record(&mut self) {
        self.recording = Some(Vec::new());
    }

    pub fn take_transitions(&mut self) -> Vec<Transition> {
        self.recording
            .as_mut()
            .map(std::mem::take)
            .unwrap_or_default()
    }
}

impl DecisionPolicy for MapAwarePolicy {
    fn observation_shape(&self) -> Option<(usize, usize)> {
        Some(self.net.input_shape())
    }

    fn reset(&mut self, seed: u64) {
        self.state = LstmState::default();
        self.prev_action = [0.0; 2];
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        if let Some(r) = self.recording.as_mut() {
            r.clear();
        }
    }

    fn decide(&mut self, ctx: &DecisionContext) -> Result<DecisionOutcome> {
        let input = StepInput {
            obs: ctx.observation.data(),
            prev_action: self.prev_action,
            prev_completeness: ctx.completeness,
        };
        let (out, state) = self.net.step(&input, &self.state)?;
        let u = if self.stochastic {
            out.sample(&mut self.rng)
        } else {
            out.mean
        };
        if let Some(rec) = self.recording.as_mut() {
            rec.push(Transition {
                obs: input.obs.to_vec(),
                prev_action: input.prev_action,
                prev_completeness: input.prev_completeness,
                u,
                log_prob: out.log_prob(u),
                value: out.value,
            });
        }
        let action = network::squash(u);
        self.state = state;
        self.prev_action = action;
        resolve_action(action, ctx, self.aou)
    }
}

/// Picks the nearest reachable boundary representative.
#[derive(Clone, Copy, Debug, Default)]
pub struct NearestFrontierPolicy;

impl DecisionPolicy for NearestFrontierPolicy {
    fn reset(&mut self, _seed: u64) {}

    fn decide(&mut self, ctx: &DecisionContext) -> Result<DecisionOutcome> {
        Ok(
            nearest_frontier_baseline(
                ctx.pose.position(),
                ctx.representatives,
                ctx.nav,
                ctx.relax,
            )?
            .into_outcome(),
        )
    }
}

/// Uniformly random actions, or one fixed action when `fixed` is set.
#[derive(Clone, Debug)]
pub struct ScriptedPolicy {
    pub aou: bool,
    pub fixed: Option<[f64; 2]>,
    rng: ChaCha8Rng,
}

impl ScriptedPolicy {
    pub fn random(aou: bool) -> Self {
        Self {
            aou,
            fixed: None,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn constant(action: [f64; 2], aou: bool) -> Self {
        Self {
            aou,
            fixed: Some(action),
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }
}

impl DecisionPolicy for ScriptedPolicy {
    fn reset(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    fn decide(&mut self, ctx: &DecisionContext) -> Result<DecisionOutcome> {
        let action = match self.fixed {
            Some(a) => a,
            None => [
                self.rng.random_range(-1.0..=1.0),
                self.rng.random_range(-1.0..=1.0),
            ],
        };
        resolve_action(action, ctx, self.aou)
    }
}

/// Named strategies selectable from the CLI and config files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    MapAware,
    NearestFrontier,
    Random,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::MapAware => "map-aware",
            Strategy::NearestFrontier => "nearest-frontier",
            Strategy::Random => "random",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "map-aware" => Ok(Strategy::MapAware),
            "nearest-frontier" => Ok(Strategy::NearestFrontier),
            "random" => Ok(Strategy::Random),
            other => Err(Error::Config(format!(
                "unknown strategy `{other}` (expected map-aware, nearest-frontier or random)"
            ))),
        }
    }
}
