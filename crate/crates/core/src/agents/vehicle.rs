//! Vehicle agents: observation encoding, send masks and reward.

use crate::geom::Point;
use crate::quadtree::QuadBlock;
use crate::world::VehicleState;

/// Features per candidate slot: state one-hot (3), level / L, block centre
/// minus the vehicle position / r (2), value q, validity.
pub const SLOT_FEATURES: usize = 8;

/// Normalization and timing context for observation encoding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObsContext {
    pub levels: u8,
    pub extent_m: f64,
    pub speed_cap: f64,
    pub sensing_radius: f64,
    pub cell_m: f64,
    pub mu: f64,
    pub now: f64,
}

pub fn vehicle_obs_width(candidate_slots: usize) -> usize {
    SLOT_FEATURES * candidate_slots + 6
}

/// Fixed-width observation; padding slots and a missing peer are zeros.
pub fn encode_vehicle_observation(candidates: &[Option<&QuadBlock>], own: &VehicleState, peer: Option<&VehicleState>, ctx: &ObsContext) -> Vec<f32> {
    let mut out = Vec::with_capacity(vehicle_obs_width(candidates.len()));
    for c in candidates {
        match c {
            Some(b) => {
                out.extend_from_slice(&b.state.one_hot());
                out.push(b.level as f32 / ctx.levels.max(1) as f32);
                let (cx, cy) = b.center(ctx.cell_m);
                let rel = Point::new(cx, cy) - own.position;
                out.push((rel.x / ctx.sensing_radius).clamp(-4.0, 4.0) as f32);
                out.push((rel.y / ctx.sensing_radius).clamp(-4.0, 4.0) as f32);
                out.push(b.value(ctx.mu, ctx.now) as f32);
                out.push(1.0);
            }
            None => out.extend_from_slice(&[0.0; SLOT_FEATURES]),
        }
    }
    let kin = |v: &VehicleState| [(v.position.x / ctx.extent_m) as f32, (v.position.y / ctx.extent_m) as f32, (v.velocity / ctx.speed_cap) as f32];
    out.extend_from_slice(&kin(own));
    out.extend_from_slice(&peer.map_or([0.0; 3], kin));
    out
}

/// Forces don't-send (0) on padding slots.
pub fn mask_send(actions: &mut [usize], candidates: &[Option<&QuadBlock>]) {
    for (a, c) in actions.iter_mut().zip(candidates) {
        if c.is_none() {
            *a = 0;
        }
    }
}

/// Blocks chosen for transmission, in candidate order.
pub fn selected_blocks(actions: &[usize], candidates: &[Option<&QuadBlock>]) -> Vec<QuadBlock> {
    actions.iter().zip(candidates).filter_map(|(&a, c)| if a == 1 { c.cloned() } else { None }).collect()
}

/// Sender reward: the receiver's satisfaction scaled by `scale`; 0 when
/// unpaired.
pub fn vehicle_reward(receiver_satisfaction: Option<f64>, scale: f64) -> f64 {
    receiver_satisfaction.map_or(0.0, |f| f * scale)
}
