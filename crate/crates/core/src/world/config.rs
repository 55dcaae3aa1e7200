use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry, timing and traffic parameters of the simulated junction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    /// Side of the square world in meters.
    pub extent_m: f64,
    /// Finest grid cell side in meters.
    pub cell_m: f64,
    /// Width of the north-south road.
    pub road_width_ns_m: f64,
    /// Width of the east-west road.
    pub road_width_ew_m: f64,
    /// Distance between a stop line and the edge of the crossing road.
    pub stop_gap_m: f64,
    /// Gap between road edge and corner buildings.
    pub setback_m: f64,
    /// Depth of each corner building, measured from its inner corner.
    pub building_m: f64,
    /// Slot duration τ in seconds.
    pub slot_s: f64,
    /// Maximum number of served vehicles N.
    pub n_max: usize,
    pub seed: u64,
    pub green_s: f64,
    pub amber_s: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    pub accel: f64,
    /// Comfortable deceleration used for stopping.
    pub decel: f64,
    /// Hardest deceleration; vehicles that cannot stop within it at amber go.
    pub decel_max: f64,
    pub min_gap_m: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            extent_m: 160.0,
            cell_m: 1.25,
            road_width_ns_m: 8.0,
            road_width_ew_m: 8.0,
            stop_gap_m: 1.0,
            setback_m: 3.0,
            building_m: 40.0,
            slot_s: 0.002,
            n_max: 4,
            seed: 7,
            green_s: 12.0,
            amber_s: 3.0,
            speed_min: 8.0,
            speed_max: 14.0,
            accel: 2.0,
            decel: 3.0,
            decel_max: 6.0,
            min_gap_m: 2.0,
        }
    }
}

impl WorldConfig {
    /// Cells per world side.
    pub fn grid_side(&self) -> usize {
        (self.extent_m / self.cell_m).round() as usize
    }

    pub fn center(&self) -> f64 {
        self.extent_m / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.cell_m > 0.0) || !(self.extent_m > 0.0) {
            return bad("extent_m and cell_m must be positive");
        }
        let ratio = self.extent_m / self.cell_m;
        let side = ratio.round();
        if (ratio - side).abs() > 1e-9 || !(side as u64).is_power_of_two() {
            return bad("extent_m / cell_m must be a power of two");
        }
        if !(self.road_width_ns_m > 0.0) || !(self.road_width_ew_m > 0.0) {
            return bad("road widths must be positive");
        }
        if self.road_width_ns_m >= self.extent_m || self.road_width_ew_m >= self.extent_m {
            return bad("roads wider than the world");
        }
        if !(self.slot_s > 0.0) {
            return bad("slot_s must be positive");
        }
        if self.n_max < 2 {
            return bad("n_max must be at least 2");
        }
        if !(self.green_s > 0.0) || self.amber_s < 0.0 {
            return bad("signal timing must be positive");
        }
        if !(self.speed_min > 0.0) || self.speed_max < self.speed_min {
            return bad("speed range must satisfy 0 < speed_min <= speed_max");
        }
        if !(self.accel > 0.0) || !(self.decel > 0.0) || self.decel_max < self.decel {
            return bad("acceleration limits must be positive and decel_max >= decel");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        let c = WorldConfig::default();
        c.validate().unwrap();
        assert_eq!(c.grid_side(), 128);
    }

    #[test]
    fn rejects_non_power_of_two_grid() {
        let c = WorldConfig { cell_m: 1.5, ..WorldConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn rejects_zero_width_roads() {
        let c = WorldConfig { road_width_ew_m: 0.0, ..WorldConfig::default() };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }
}
