//! Lane-constrained junction mobility (approach, stop at the light, cross,
//! exit) and the per-slot trace it produces.

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

use super::junction::{Approach, Junction, Signal};
use super::WorldConfig;

/// Seconds simulated before slot 0 so the junction starts populated.
const WARMUP_S: f64 = 20.0;
/// Distance under which a stopping vehicle is snapped onto its stop point.
const SNAP_M: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleSample {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleInfo {
    pub id: u32,
    pub length: f64,
    pub width: f64,
    /// `None` for traces imported from CSV.
    pub approach: Option<Approach>,
}

impl VehicleInfo {
    fn car(id: u32) -> Self {
        Self { id, length: 4.5, width: 1.8, approach: None }
    }
}

/// Per-slot kinematics of every vehicle present in the world.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityTrace {
    pub slot_s: f64,
    /// Signal phase offset (seconds) applied to the junction plan.
    pub signal_offset_s: f64,
    pub vehicles: Vec<VehicleInfo>,
    slots: Vec<Vec<VehicleSample>>,
}

impl MobilityTrace {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Vehicles present at slot `t`, sorted by id.
    pub fn at(&self, t: usize) -> &[VehicleSample] {
        &self.slots[t]
    }

    pub fn sample(&self, t: usize, id: u32) -> Option<&VehicleSample> {
        let s = &self.slots[t];
        s.binary_search_by_key(&id, |v| v.id).ok().map(|i| &s[i])
    }

    pub fn info(&self, id: u32) -> Option<&VehicleInfo> {
        self.vehicles.iter().find(|v| v.id == id)
    }

    pub fn signal_time(&self, t: usize) -> f64 {
        t as f64 * self.slot_s + self.signal_offset_s
    }

    /// CSV with columns `slot,id,x,y,v,heading`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["slot", "id", "x", "y", "v", "heading"])?;
        for (t, row) in self.slots.iter().enumerate() {
            for s in row {
                out.write_record([t.to_string(), s.id.to_string(), s.x.to_string(), s.y.to_string(), s.v.to_string(), s.heading.to_string()])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Reads the CSV format written by [`MobilityTrace::write_csv`].
    /// Vehicle dimensions are not part of the format; imported vehicles get
    /// passenger-car dimensions.
    pub fn read_csv<R: Read>(r: R, slot_s: f64) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        let expected = ["slot", "id", "x", "y", "v", "heading"];
        if headers.iter().ne(expected.iter().copied()) {
            return Err(Error::Format(format!("unexpected trace header {headers:?}")));
        }
        let mut slots: Vec<Vec<VehicleSample>> = Vec::new();
        let mut ids = std::collections::BTreeSet::new();
        for rec in rdr.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> { rec[i].parse::<f64>().map_err(|e| Error::Format(format!("column {i}: {e}"))) };
            let t: usize = rec[0].parse().map_err(|e| Error::Format(format!("slot: {e}")))?;
            let id: u32 = rec[1].parse().map_err(|e| Error::Format(format!("id: {e}")))?;
            if slots.len() <= t {
                slots.resize_with(t + 1, Vec::new);
            }
            slots[t].push(VehicleSample { id, x: num(2)?, y: num(3)?, v: num(4)?, heading: num(5)? });
            ids.insert(id);
        }
        for row in &mut slots {
            row.sort_by_key(|s| s.id);
        }
        Ok(Self { slot_s, signal_offset_s: 0.0, vehicles: ids.into_iter().map(VehicleInfo::car).collect(), slots })
    }
}

#[derive(Debug, Clone)]
struct Mover {
    id: u32,
    approach: Approach,
    length: f64,
    target: f64,
    s: f64,
    v: f64,
    committed: bool,
}

impl Mover {
    fn front(&self) -> f64 {
        self.s + self.length / 2.0
    }

    fn rear(&self) -> f64 {
        self.s - self.length / 2.0
    }
}

/// Generates a seeded mobility trace of `slots` slots containing
/// `n_vehicles` vehicles with randomized entry times, lanes, sizes and
/// target speeds.
pub fn generate_trace(cfg: &WorldConfig, n_vehicles: usize, slots: usize, seed: u64) -> Result<MobilityTrace> {
    cfg.validate()?;
    if n_vehicles < 2 {
        return Err(Error::Config("a trace needs at least two vehicles".into()));
    }
    let junction = Junction::new(cfg);
    let mut rng = stream_rng(seed, Stream::Mobility, 0);
    let dt = cfg.slot_s;
    let warm = (WARMUP_S / dt).ceil() as i64;
    let signal_offset_s = rng.random::<f64>() * junction.cycle_s();

    let mut entries: Vec<i64> = (0..n_vehicles).map(|_| rng.random_range(-warm..slots as i64)).collect();
    entries.sort_unstable();

    let mut infos = Vec::with_capacity(n_vehicles);
    let mut pending = std::collections::VecDeque::new();
    for (i, &entry) in entries.iter().enumerate() {
        let approach = Approach::ALL[rng.random_range(0..4)];
        let kind: f64 = rng.random();
        let (length, width) = if kind < 0.7 {
            (4.5, 1.8)
        } else if kind < 0.85 {
            (6.0, 2.1)
        } else {
            (12.0, 2.5)
        };
        let target = rng.random_range(cfg.speed_min..=cfg.speed_max);
        infos.push(VehicleInfo { id: i as u32, length, width, approach: Some(approach) });
        pending.push_back((entry, Mover { id: i as u32, approach, length, target, s: length / 2.0, v: 0.0, committed: false }));
    }

    // Active movers per approach, leader first.
    let mut lanes: Vec<Vec<Mover>> = vec![Vec::new(); 4];
    let lane_ix = |a: Approach| Approach::ALL.iter().position(|&x| x == a).unwrap();
    let mut waiting: Vec<Mover> = Vec::new();
    let mut out = Vec::with_capacity(slots);

    for t in -warm..slots as i64 {
        while pending.front().is_some_and(|(e, _)| *e <= t) {
            waiting.push(pending.pop_front().unwrap().1);
        }
        // Spawn vehicles whose lane entry is clear, in entry order.
        let mut still = Vec::new();
        for mut m in waiting.drain(..) {
            let lane = &mut lanes[lane_ix(m.approach)];
            let clear = lane.last().is_none_or(|l| l.rear() >= m.length + cfg.min_gap_m);
            if clear {
                m.v = match lane.last() {
                    Some(l) => m.target.min((l.v * l.v + 2.0 * cfg.decel * (l.rear() - m.length - cfg.min_gap_m).max(0.0)).sqrt()),
                    None => m.target,
                };
                lane.push(m);
            } else {
                still.push(m);
            }
        }
        waiting = still;

        let time = t as f64 * dt + signal_offset_s;
        for lane in lanes.iter_mut() {
            let prev: Vec<(f64, f64)> = lane.iter().map(|m| (m.rear(), m.v)).collect();
            for (i, m) in lane.iter_mut().enumerate() {
                let leader = if i > 0 { Some(prev[i - 1]) } else { None };
                step_mover(m, leader, &junction, time, cfg);
            }
            lane.retain(|m| m.front() < cfg.extent_m);
        }

        if t >= 0 {
            let mut row: Vec<VehicleSample> = lanes
                .iter()
                .flatten()
                .map(|m| {
                    let p = junction.lane_point(m.approach, m.s);
                    VehicleSample { id: m.id, x: p.x, y: p.y, v: m.v, heading: m.approach.heading() }
                })
                .collect();
            row.sort_by_key(|s| s.id);
            out.push(row);
        }
    }

    Ok(MobilityTrace { slot_s: dt, signal_offset_s, vehicles: infos, slots: out })
}

fn step_mover(m: &mut Mover, leader: Option<(f64, f64)>, j: &Junction, time: f64, cfg: &WorldConfig) {
    let dt = cfg.slot_s;
    let stop = j.stop_line(m.approach);
    let before_line = m.front() <= stop + 1e-9;
    let signal = j.signal(m.approach.axis(), time);
    if signal == Signal::Green {
        m.committed = false;
    }
    let mut v_des = m.target;
    let mut must_stop = false;
    if before_line && signal != Signal::Green {
        let d = (stop - m.front()).max(0.0);
        if signal == Signal::Amber && !m.committed && m.v * m.v / (2.0 * cfg.decel_max) > d + 1e-9 {
            m.committed = true;
        }
        if !m.committed {
            must_stop = true;
            v_des = v_des.min((2.0 * cfg.decel * d).sqrt());
        }
    }
    let mut gap_limit = f64::INFINITY;
    if let Some((lead_rear, lead_v)) = leader {
        gap_limit = lead_rear - cfg.min_gap_m;
        let gap = (gap_limit - m.front()).max(0.0);
        v_des = v_des.min((lead_v * lead_v + 2.0 * cfg.decel * gap).sqrt());
    }
    let mut v = (m.v + cfg.accel * dt).min(v_des).max(m.v - cfg.decel_max * dt).max(0.0);
    let mut s = m.s + v * dt;
    if must_stop && s + m.length / 2.0 > stop - SNAP_M {
        s = (stop - m.length / 2.0).max(m.s);
        v = 0.0;
    }
    if let Some((_, lead_v)) = leader.filter(|_| s + m.length / 2.0 > gap_limit - SNAP_M) {
        s = (gap_limit - m.length / 2.0).max(m.s);
        v = v.min(lead_v);
        if s + m.length / 2.0 >= gap_limit - SNAP_M && lead_v == 0.0 {
            v = 0.0;
        }
    }
    m.s = s;
    m.v = v;
}
