//! Episode loop, reward and PPO training.

pub mod episode;
pub mod ppo;
pub mod reward;
pub mod train;

pub use episode::{run_episode, run_episode_observed, EpisodeRecord, StepOutcome, Terminal};
pub use ppo::{gae, PpoStats, PpoTrainer, Rollout};
pub use reward::compute_reward;
pub use train::{train, CurveRow, TrainOutcome};
