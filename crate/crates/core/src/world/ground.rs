use serde::{Deserialize, Serialize};

use crate::cell::CellState;
use crate::geom::{OrientedRect, Point, Rect};

use super::junction::Junction;
use super::mobility::{MobilityTrace, VehicleInfo, VehicleSample};
use super::WorldConfig;

/// What fills a ground-truth cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Occupant {
    Free,
    Building,
    Vehicle(u32),
}

/// Two-state ground-truth occupancy of the world grid at one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub side: usize,
    pub cell_m: f64,
    cells: Vec<Occupant>,
}

impl GroundTruth {
    pub fn empty(side: usize, cell_m: f64) -> Self {
        Self { side, cell_m, cells: vec![Occupant::Free; side * side] }
    }

    #[inline]
    pub fn in_bounds(&self, ix: i64, iy: i64) -> bool {
        ix >= 0 && iy >= 0 && (ix as usize) < self.side && (iy as usize) < self.side
    }

    #[inline]
    pub fn occupant(&self, ix: usize, iy: usize) -> Occupant {
        self.cells[iy * self.side + ix]
    }

    pub fn state(&self, ix: usize, iy: usize) -> CellState {
        match self.occupant(ix, iy) {
            Occupant::Free => CellState::Free,
            _ => CellState::Occupied,
        }
    }

    pub fn set(&mut self, ix: usize, iy: usize, o: Occupant) {
        self.cells[iy * self.side + ix] = o;
    }

    pub fn cell_center(&self, ix: i64, iy: i64) -> Point {
        Point::new((ix as f64 + 0.5) * self.cell_m, (iy as f64 + 0.5) * self.cell_m)
    }

    pub fn cell_of(&self, p: Point) -> (i64, i64) {
        ((p.x / self.cell_m).floor() as i64, (p.y / self.cell_m).floor() as i64)
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|o| **o != Occupant::Free).count()
    }
}

/// Full kinematic state of a served vehicle at one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: u32,
    pub position: Point,
    /// Speed in m/s.
    pub velocity: f64,
    /// Direction of motion in radians.
    pub heading: f64,
    pub length: f64,
    pub width: f64,
    /// Sensor reliability λ in (0.5, 1].
    pub reliability: f64,
    pub sensing_radius: f64,
}

impl VehicleState {
    pub fn from_sample(s: &VehicleSample, info: &VehicleInfo, reliability: f64, sensing_radius: f64) -> Self {
        Self {
            id: s.id,
            position: Point::new(s.x, s.y),
            velocity: s.v,
            heading: s.heading,
            length: info.length,
            width: info.width,
            reliability,
            sensing_radius,
        }
    }

    pub fn footprint(&self) -> OrientedRect {
        OrientedRect { center: self.position, heading: self.heading, length: self.length, width: self.width }
    }
}

/// Static junction plus the rasterizer producing ground truth per slot.
#[derive(Debug, Clone)]
pub struct World {
    pub cfg: WorldConfig,
    pub junction: Junction,
    static_layer: GroundTruth,
}

impl World {
    pub fn new(cfg: WorldConfig) -> Self {
        let junction = Junction::new(&cfg);
        let side = cfg.grid_side();
        let mut static_layer = GroundTruth::empty(side, cfg.cell_m);
        for iy in 0..side {
            for ix in 0..side {
                if junction.in_building(static_layer.cell_center(ix as i64, iy as i64)) {
                    static_layer.set(ix, iy, Occupant::Building);
                }
            }
        }
        Self { cfg, junction, static_layer }
    }

    pub fn grid_side(&self) -> usize {
        self.static_layer.side
    }

    pub fn static_layer(&self) -> &GroundTruth {
        &self.static_layer
    }

    /// Cells overlapped by a vehicle footprint (clipped to the world).
    pub fn footprint_cells(&self, fp: &OrientedRect) -> Vec<(usize, usize)> {
        let c = self.cfg.cell_m;
        let bb = fp.aabb();
        let side = self.grid_side() as i64;
        let x0 = ((bb.min.x / c).floor() as i64).max(0);
        let y0 = ((bb.min.y / c).floor() as i64).max(0);
        let x1 = ((bb.max.x / c).floor() as i64).min(side - 1);
        let y1 = ((bb.max.y / c).floor() as i64).min(side - 1);
        let mut out = Vec::new();
        for iy in y0..=y1 {
            for ix in x0..=x1 {
                let cell = Rect::new(ix as f64 * c, iy as f64 * c, (ix + 1) as f64 * c, (iy + 1) as f64 * c);
                if fp.overlaps(&cell) {
                    out.push((ix as usize, iy as usize));
                }
            }
        }
        out
    }

    /// Ground truth at slot `t`: static obstacles plus vehicle footprints.
    pub fn step_world(&self, trace: &MobilityTrace, t: usize) -> GroundTruth {
        let mut gt = self.static_layer.clone();
        self.fill_ground_truth(trace, t, &mut gt);
        gt
    }

    /// Like [`World::step_world`] but reuses `gt`'s allocation.
    pub fn fill_ground_truth(&self, trace: &MobilityTrace, t: usize, gt: &mut GroundTruth) {
        gt.clone_from(&self.static_layer);
        for s in trace.at(t) {
            let info = trace.info(s.id).expect("trace sample without vehicle info");
            let fp = OrientedRect { center: Point::new(s.x, s.y), heading: s.heading, length: info.length, width: info.width };
            for (ix, iy) in self.footprint_cells(&fp) {
                gt.set(ix, iy, Occupant::Vehicle(s.id));
            }
        }
    }
}
