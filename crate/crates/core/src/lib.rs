//! Map-aware active exploration on 2D occupancy grids.
//!
//! The pipeline runs belief mapping from simulated lidar, a coarse
//! structured map of regions of interest, boundary-point extraction and
//! compression, A* planning, and a recurrent PPO policy whose raw waypoints
//! are corrected by an action optimization unit.

pub mod belief;
pub mod bench;
pub mod config;
pub mod error;
pub mod frontier;
pub mod grid;
pub mod meanshift;
pub mod nav;
pub mod policy;
pub mod rl;
pub mod structmap;
pub mod worldsim;

pub use belief::{completeness, BeliefCell, Explorable, OccupancyBelief};
pub use config::{ExplorationConfig, PpoConfig, RunConfig, TrainConfig};
pub use error::{Error, Result};
pub use frontier::{BoundarySet, ExclusionSet, FrontierParams};
pub use grid::{Cell, GridGeometry, Point};
pub use nav::{NavGrid, PlannedPath};
pub use policy::{
    DecisionPolicy, MapAwarePolicy, NearestFrontierPolicy, PolicyNetwork, ScriptedPolicy, Strategy,
};
pub use rl::{EpisodeRecord, Terminal};
pub use structmap::{PartitionParams, RoiGrid, StructuredMap, VisitedGrid};
pub use worldsim::{load_world, load_world_file, RobotPose, SensorModel, WorldMap};
