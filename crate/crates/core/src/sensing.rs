//! Per-vehicle sensing (three-state output with reliability and occlusion),
//! the occupancy/value formulas, and each vehicle's fused perception map.

use rand::Rng;

use crate::cell::CellState;
use crate::geom::Point;
use crate::num::Scalar;
use crate::world::{roi_reach, roi_weight_at, GroundTruth, Occupant, VehicleState};

/// Probability that a location is occupied given the sensor output.
pub fn occupancy_probability<T: Scalar>(state: CellState, reliability: T) -> T {
    match state {
        CellState::Occupied => reliability,
        CellState::Free => T::one() - reliability,
        CellState::Unknown => T::lit(0.5),
    }
}

/// Value of sensed information: certainty `|2p-1|` decayed by age.
pub fn cell_value<T: Scalar>(p: T, age: T, mu: T) -> T {
    (T::lit(2.0) * p - T::one()).abs() * mu.powf(age)
}

/// Interest weighted by the lack of worthy own information.
pub fn modified_interest<T: Scalar>(weight: T, own_value: T) -> T {
    weight * (T::one() - own_value)
}

/// Sensor output of one vehicle over its `side × side` sensing square.
#[derive(Debug, Clone, PartialEq)]
pub struct SensedGrid {
    pub owner: u32,
    /// World cell coordinates of the square's lower-left cell.
    pub origin: (i64, i64),
    pub side: usize,
    pub states: Vec<CellState>,
    /// Last-sensed time in seconds; `-inf` for cells not sensed now.
    pub sensed_at: Vec<f64>,
}

impl SensedGrid {
    #[inline]
    pub fn state(&self, lx: usize, ly: usize) -> CellState {
        self.states[ly * self.side + lx]
    }

    pub fn world_cell(&self, lx: usize, ly: usize) -> (i64, i64) {
        (self.origin.0 + lx as i64, self.origin.1 + ly as i64)
    }
}

/// Lower-left world cell of a `side`-cell sensing square centred on `p`.
pub fn sensing_origin(gt: &GroundTruth, p: Point, side: usize) -> (i64, i64) {
    let (cx, cy) = gt.cell_of(p);
    let half = (side / 2) as i64;
    (cx - half, cy - half)
}

/// Is the straight ray from `from` to the centre of cell `to` blocked by an
/// occupied cell strictly between the two endpoints? The observer's own
/// footprint never blocks.
pub fn occluded(gt: &GroundTruth, from: Point, to: (i64, i64), observer: u32) -> bool {
    let c = gt.cell_m;
    let target = gt.cell_center(to.0, to.1);
    let (mut ix, mut iy) = gt.cell_of(from);
    let start = (ix, iy);
    if start == to {
        return false;
    }
    let dx = target.x - from.x;
    let dy = target.y - from.y;
    let step_x: i64 = if dx > 0.0 { 1 } else { -1 };
    let step_y: i64 = if dy > 0.0 { 1 } else { -1 };
    let next_boundary = |i: i64, step: i64| if step > 0 { (i + 1) as f64 * c } else { i as f64 * c };
    let mut t_max_x = if dx != 0.0 { (next_boundary(ix, step_x) - from.x) / dx } else { f64::INFINITY };
    let mut t_max_y = if dy != 0.0 { (next_boundary(iy, step_y) - from.y) / dy } else { f64::INFINITY };
    let t_dx = if dx != 0.0 { c / dx.abs() } else { f64::INFINITY };
    let t_dy = if dy != 0.0 { c / dy.abs() } else { f64::INFINITY };
    // The walk reaches the target within |Δix| + |Δiy| steps.
    let budget = (to.0 - ix).abs() + (to.1 - iy).abs() + 2;
    for _ in 0..budget {
        if t_max_x < t_max_y {
            ix += step_x;
            t_max_x += t_dx;
        } else {
            iy += step_y;
            t_max_y += t_dy;
        }
        if (ix, iy) == to {
            return false;
        }
        if gt.in_bounds(ix, iy) {
            match gt.occupant(ix as usize, iy as usize) {
                Occupant::Free => {}
                Occupant::Vehicle(id) if id == observer => {}
                _ => return true,
            }
        }
    }
    false
}

/// Three-state sensor output of `vehicle` at time `now` (seconds).
///
/// Visible cells within the sensing radius report ground truth with
/// probability λ and the flipped state otherwise; everything else is
/// unknown.
pub fn sense<R: Rng + ?Sized>(vehicle: &VehicleState, gt: &GroundTruth, side: usize, now: f64, rng: &mut R) -> SensedGrid {
    let origin = sensing_origin(gt, vehicle.position, side);
    let mut states = vec![CellState::Unknown; side * side];
    let mut sensed_at = vec![f64::NEG_INFINITY; side * side];
    let r2 = vehicle.sensing_radius * vehicle.sensing_radius;
    for ly in 0..side {
        for lx in 0..side {
            let (ix, iy) = (origin.0 + lx as i64, origin.1 + ly as i64);
            if !gt.in_bounds(ix, iy) {
                continue;
            }
            let center = gt.cell_center(ix, iy);
            let rel = center - vehicle.position;
            if rel.dot(rel) > r2 {
                continue;
            }
            if occluded(gt, vehicle.position, (ix, iy), vehicle.id) {
                continue;
            }
            let truth = gt.state(ix as usize, iy as usize);
            let out = if vehicle.reliability >= 1.0 || rng.random::<f64>() < vehicle.reliability { truth } else { truth.flipped() };
            states[ly * side + lx] = out;
            sensed_at[ly * side + lx] = now;
        }
    }
    SensedGrid { owner: vehicle.id, origin, side, states, sensed_at }
}

/// A vehicle's fused world map: occupancy probability and last-sensed time
/// per world cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptionMap {
    pub side: usize,
    p: Vec<f64>,
    gamma: Vec<f64>,
}

impl PerceptionMap {
    pub fn new(side: usize) -> Self {
        Self { side, p: vec![0.5; side * side], gamma: vec![f64::NEG_INFINITY; side * side] }
    }

    fn idx(&self, ix: i64, iy: i64) -> Option<usize> {
        if ix < 0 || iy < 0 || ix as usize >= self.side || iy as usize >= self.side {
            None
        } else {
            Some(iy as usize * self.side + ix as usize)
        }
    }

    pub fn probability(&self, ix: i64, iy: i64) -> f64 {
        self.idx(ix, iy).map_or(0.5, |i| self.p[i])
    }

    pub fn last_sensed(&self, ix: i64, iy: i64) -> f64 {
        self.idx(ix, iy).map_or(f64::NEG_INFINITY, |i| self.gamma[i])
    }

    /// Value of the stored information about a cell at time `now`.
    pub fn value(&self, ix: i64, iy: i64, now: f64, mu: f64) -> f64 {
        match self.idx(ix, iy) {
            Some(i) if self.gamma[i].is_finite() => cell_value(self.p[i], now - self.gamma[i], mu),
            _ => 0.0,
        }
    }

    /// Overwrites cells the vehicle sensed this slot.
    pub fn absorb(&mut self, sensed: &SensedGrid, reliability: f64) {
        for ly in 0..sensed.side {
            for lx in 0..sensed.side {
                let k = ly * sensed.side + lx;
                let st = sensed.states[k];
                if st == CellState::Unknown {
                    continue;
                }
                let (ix, iy) = sensed.world_cell(lx, ly);
                if let Some(i) = self.idx(ix, iy) {
                    self.p[i] = occupancy_probability(st, reliability);
                    self.gamma[i] = sensed.sensed_at[k];
                }
            }
        }
    }

    /// Adopts `(p, gamma)` over the given cell square wherever the incoming
    /// value beats the stored one. Returns how many cells changed.
    pub fn fuse(&mut self, origin: (i64, i64), side: usize, p: f64, gamma: f64, now: f64, mu: f64) -> usize {
        let incoming = cell_value(p, now - gamma, mu);
        let mut changed = 0;
        for dy in 0..side as i64 {
            for dx in 0..side as i64 {
                let (ix, iy) = (origin.0 + dx, origin.1 + dy);
                if let Some(i) = self.idx(ix, iy) {
                    if incoming > self.value(ix, iy, now, mu) {
                        self.p[i] = p;
                        self.gamma[i] = gamma;
                        changed += 1;
                    }
                }
            }
        }
        changed
    }
}

/// Modified interest of a vehicle over the bounding box of its region of
/// interest. Cells outside the box have zero interest.
#[derive(Debug, Clone, PartialEq)]
pub struct InterestMap {
    pub origin: (i64, i64),
    pub width: usize,
    pub height: usize,
    values: Vec<f64>,
}

impl InterestMap {
    pub fn empty() -> Self {
        Self { origin: (0, 0), width: 0, height: 0, values: Vec::new() }
    }

    /// Builds the interest map of `vehicle` from its own fused map.
    pub fn build(vehicle: &VehicleState, own: &PerceptionMap, cell_m: f64, now: f64, t_int: f64, mu: f64) -> Self {
        let reach = roi_reach(vehicle, t_int);
        if reach <= 0.0 {
            return Self::empty();
        }
        let side = own.side as i64;
        let lo_x = (((vehicle.position.x - reach) / cell_m).floor() as i64).max(0);
        let lo_y = (((vehicle.position.y - reach) / cell_m).floor() as i64).max(0);
        let hi_x = (((vehicle.position.x + reach) / cell_m).floor() as i64).min(side - 1);
        let hi_y = (((vehicle.position.y + reach) / cell_m).floor() as i64).min(side - 1);
        if hi_x < lo_x || hi_y < lo_y {
            return Self::empty();
        }
        let width = (hi_x - lo_x + 1) as usize;
        let height = (hi_y - lo_y + 1) as usize;
        let mut values = vec![0.0; width * height];
        for y in 0..height {
            for x in 0..width {
                let (ix, iy) = (lo_x + x as i64, lo_y + y as i64);
                let center = Point::new((ix as f64 + 0.5) * cell_m, (iy as f64 + 0.5) * cell_m);
                let w = roi_weight_at(vehicle, center, t_int);
                if w > 0.0 {
                    values[y * width + x] = modified_interest(w, own.value(ix, iy, now, mu));
                }
            }
        }
        Self { origin: (lo_x, lo_y), width, height, values }
    }

    /// Map with explicit values, mainly for tests and oracles.
    pub fn from_values(origin: (i64, i64), width: usize, height: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), width * height);
        Self { origin, width, height, values }
    }

    pub fn get(&self, ix: i64, iy: i64) -> f64 {
        let (x, y) = (ix - self.origin.0, iy - self.origin.1);
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            0.0
        } else {
            self.values[y as usize * self.width + x as usize]
        }
    }

    /// Sum of interest over a square of world cells.
    pub fn block_sum(&self, origin: (i64, i64), side: usize) -> f64 {
        let x0 = origin.0.max(self.origin.0);
        let y0 = origin.1.max(self.origin.1);
        let x1 = (origin.0 + side as i64).min(self.origin.0 + self.width as i64);
        let y1 = (origin.1 + side as i64).min(self.origin.1 + self.height as i64);
        let mut s = 0.0;
        for iy in y0..y1 {
            for ix in x0..x1 {
                s += self.get(ix, iy);
            }
        }
        s
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { values: self.values.iter().map(|v| v * c).collect(), ..self.clone() }
    }
}
