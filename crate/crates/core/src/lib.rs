//! Cooperative perception simulator for connected vehicles at a signalized
//! junction, with branching dueling Q-network agents and federated training.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod agents;
pub mod cell;
pub mod channel;
pub mod error;
pub mod federation;
pub mod geom;
pub mod harness;
pub mod num;
pub mod oracle;
pub mod quadtree;
pub mod rl;
pub mod rng;
pub mod satisfaction;
pub mod sensing;
pub mod world;

pub use cell::CellState;
pub use error::{Error, Result};
pub use num::Scalar;

/// Single-precision network used by the agents.
pub type BdqNet = rl::Bdq<f32>;
/// Single-precision learning agent.
pub type Agent = rl::BdqAgent<f32>;
/// Double-precision network, used for gradient checks.
pub type BdqNet64 = rl::Bdq<f64>;
