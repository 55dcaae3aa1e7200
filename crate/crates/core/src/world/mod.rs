//! The simulated junction: configuration, mobility traces, ground truth and
//! region-of-interest weights.

mod config;
mod ground;
mod junction;
mod mobility;
mod roi;

pub use config::WorldConfig;
pub use ground::{GroundTruth, Occupant, VehicleState, World};
pub use junction::{Approach, Arm, Axis, Junction, Signal};
pub use mobility::{generate_trace, MobilityTrace, VehicleInfo, VehicleSample};
pub use roi::{roi_reach, roi_weight, roi_weight_at};
