//! Static junction layout: roads, stop lines, corner buildings, signal plan.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::geom::{Point, Rect};

use super::WorldConfig;

/// Direction of travel of an approach lane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Approach {
    Eastbound,
    Westbound,
    Northbound,
    Southbound,
}

impl Approach {
    pub const ALL: [Approach; 4] = [Approach::Eastbound, Approach::Westbound, Approach::Northbound, Approach::Southbound];

    pub fn heading(self) -> f64 {
        match self {
            Approach::Eastbound => 0.0,
            Approach::Northbound => FRAC_PI_2,
            Approach::Westbound => PI,
            Approach::Southbound => -FRAC_PI_2,
        }
    }

    pub fn axis(self) -> Axis {
        match self {
            Approach::Eastbound | Approach::Westbound => Axis::EastWest,
            Approach::Northbound | Approach::Southbound => Axis::NorthSouth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    EastWest,
    NorthSouth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Signal {
    Green,
    Amber,
    Red,
}

/// Which part of the road network a point lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    /// Inside the crossing box.
    Box,
    Road(Axis),
    OffRoad,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Junction {
    pub extent: f64,
    pub center: Point,
    pub half_ns: f64,
    pub half_ew: f64,
    pub buildings: [Rect; 4],
    stop_gap: f64,
    green_s: f64,
    amber_s: f64,
}

impl Junction {
    pub fn new(cfg: &WorldConfig) -> Self {
        let c = cfg.center();
        let half_ns = cfg.road_width_ns_m / 2.0;
        let half_ew = cfg.road_width_ew_m / 2.0;
        let gx = half_ns + cfg.setback_m;
        let gy = half_ew + cfg.setback_m;
        let b = cfg.building_m;
        let clamp = |v: f64| v.clamp(0.0, cfg.extent_m);
        let buildings = [
            Rect::new(clamp(c + gx), clamp(c + gy), clamp(c + gx + b), clamp(c + gy + b)),
            Rect::new(clamp(c - gx), clamp(c + gy), clamp(c - gx - b), clamp(c + gy + b)),
            Rect::new(clamp(c - gx), clamp(c - gy), clamp(c - gx - b), clamp(c - gy - b)),
            Rect::new(clamp(c + gx), clamp(c - gy), clamp(c + gx + b), clamp(c - gy - b)),
        ];
        Self {
            extent: cfg.extent_m,
            center: Point::new(c, c),
            half_ns,
            half_ew,
            buildings,
            stop_gap: cfg.stop_gap_m,
            green_s: cfg.green_s,
            amber_s: cfg.amber_s,
        }
    }

    /// Lateral offset of a lane centre from its road's centre line.
    fn lane_offset(&self, a: Approach) -> f64 {
        match a.axis() {
            Axis::EastWest => self.half_ew / 2.0,
            Axis::NorthSouth => self.half_ns / 2.0,
        }
    }

    /// World position at arc length `s` along the lane of approach `a`.
    /// `s = 0` is the world edge where the lane enters.
    pub fn lane_point(&self, a: Approach, s: f64) -> Point {
        let c = self.center;
        let off = self.lane_offset(a);
        match a {
            Approach::Eastbound => Point::new(s, c.y - off),
            Approach::Westbound => Point::new(self.extent - s, c.y + off),
            Approach::Northbound => Point::new(c.x + off, s),
            Approach::Southbound => Point::new(c.x - off, self.extent - s),
        }
    }

    /// Arc length of the stop line on approach `a`.
    pub fn stop_line(&self, a: Approach) -> f64 {
        let cross_half = match a.axis() {
            Axis::EastWest => self.half_ns,
            Axis::NorthSouth => self.half_ew,
        };
        self.extent / 2.0 - cross_half - self.stop_gap
    }

    pub fn cycle_s(&self) -> f64 {
        2.0 * (self.green_s + self.amber_s)
    }

    /// Signal shown to `axis` at time `t` seconds (after phase offset).
    pub fn signal(&self, axis: Axis, t: f64) -> Signal {
        let phase = t.rem_euclid(self.cycle_s());
        let half = self.green_s + self.amber_s;
        let (own_start, _) = match axis {
            Axis::EastWest => (0.0, half),
            Axis::NorthSouth => (half, 2.0 * half),
        };
        let local = (phase - own_start).rem_euclid(self.cycle_s());
        if local < self.green_s {
            Signal::Green
        } else if local < half {
            Signal::Amber
        } else {
            Signal::Red
        }
    }

    pub fn arm(&self, p: Point) -> Arm {
        let on_ew = (p.y - self.center.y).abs() <= self.half_ew;
        let on_ns = (p.x - self.center.x).abs() <= self.half_ns;
        match (on_ew, on_ns) {
            (true, true) => Arm::Box,
            (true, false) => Arm::Road(Axis::EastWest),
            (false, true) => Arm::Road(Axis::NorthSouth),
            (false, false) => Arm::OffRoad,
        }
    }

    pub fn blocked(&self, a: Point, b: Point) -> bool {
        self.buildings.iter().any(|r| r.intersects_segment(a, b))
    }

    pub fn in_building(&self, p: Point) -> bool {
        self.buildings.iter().any(|r| r.contains(p))
    }
}
