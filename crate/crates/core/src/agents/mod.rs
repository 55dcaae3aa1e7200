//! Observation encoders, action decoders and rewards of the RSU and the
//! vehicle agents.

mod rsu;
mod vehicle;

pub use rsu::{
    decode_pairing, decode_pairs, decode_rb, decode_rsu_action, encode_rsu_observation, pair_index, rb_pairs, rsu_branches, rsu_obs_width, rsu_reward,
    PairHistory, Roster, RsuDecision,
};
pub use vehicle::{encode_vehicle_observation, mask_send, selected_blocks, vehicle_obs_width, vehicle_reward, ObsContext, SLOT_FEATURES};
