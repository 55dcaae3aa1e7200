//! Learning stack: branching dueling Q-network, optimizer, replay,
//! exploration and checkpoints.

pub mod adam;
pub mod agent;
pub mod checkpoint;
pub mod net;
pub mod replay;
pub mod schedule;

pub use adam::Adam;
pub use agent::{BdqAgent, CheckpointMeta, TrainConfig};
pub use net::{argmax, td_targets, Bdq, Forward, LayerShape, NetSpec};
pub use replay::{Batch, ReplayBuffer};
pub use schedule::{act_epsilon_greedy, EpsilonSchedule};
