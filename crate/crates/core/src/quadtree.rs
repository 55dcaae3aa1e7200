//! Three-state region quadtree over a vehicle's sensing square, transmit
//! candidates, and the per-vehicle block inventory.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::cell::CellState;
use crate::error::{Error, Result};
use crate::sensing::{cell_value, occupancy_probability, SensedGrid};

/// Number of nodes in a complete quadtree over levels `0..levels`,
/// i.e. `(4^L - 1) / 3`.
pub const fn candidate_cap(levels: u32) -> usize {
    ((1usize << (2 * levels)) - 1) / 3
}

/// Aggregate state of a block: occupied if any cell is, free if all are,
/// unknown otherwise.
pub fn block_state<I: IntoIterator<Item = CellState>>(cells: I) -> CellState {
    let mut all_free = true;
    let mut any = false;
    for c in cells {
        any = true;
        match c {
            CellState::Occupied => return CellState::Occupied,
            CellState::Free => {}
            CellState::Unknown => all_free = false,
        }
    }
    assert!(any, "block_state of an empty block");
    if all_free {
        CellState::Free
    } else {
        CellState::Unknown
    }
}

/// A transmittable quadtree block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadBlock {
    pub level: u8,
    /// Quadrant path from the root, two bits per level (most significant
    /// first).
    pub path: u32,
    /// World cell coordinates of the block's lower-left cell.
    pub origin: (i64, i64),
    /// Side in finest cells, `2^(L - level)`.
    pub side: usize,
    pub state: CellState,
    /// Sensing time Γ in seconds.
    pub sensed_at: f64,
    pub source: u32,
    /// Occupancy probability p(b).
    pub probability: f64,
}

impl QuadBlock {
    pub fn age(&self, now: f64) -> f64 {
        now - self.sensed_at
    }

    /// Value q(b) at time `now`.
    pub fn value(&self, mu: f64, now: f64) -> f64 {
        block_value(self, mu, now)
    }

    pub fn area_m2(&self, cell_m: f64) -> f64 {
        let w = self.side as f64 * cell_m;
        w * w
    }

    pub fn cell_count(&self) -> usize {
        self.side * self.side
    }

    /// Block centre in world meters.
    pub fn center(&self, cell_m: f64) -> (f64, f64) {
        let h = self.side as f64 / 2.0;
        ((self.origin.0 as f64 + h) * cell_m, (self.origin.1 as f64 + h) * cell_m)
    }
}

/// `q(b) = |2p(b) - 1| · μ^(now - Γ)`.
pub fn block_value(b: &QuadBlock, mu: f64, now: f64) -> f64 {
    debug_assert!(b.sensed_at <= now + 1e-12, "block from the future");
    cell_value(b.probability, (now - b.sensed_at).max(0.0), mu)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadNode {
    pub level: u8,
    pub path: u32,
    /// Offset of the node's lower-left cell inside the square.
    pub local: (usize, usize),
    pub side: usize,
    pub state: CellState,
    /// Every cell inside carries the same state.
    pub uniform: bool,
    pub children: Option<[usize; 4]>,
}

/// Region quadtree with nodes in breadth-first (coarsest-first) order.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadTree {
    pub levels: u8,
    pub origin: (i64, i64),
    pub side: usize,
    pub owner: u32,
    pub nodes: Vec<QuadNode>,
}

/// Decomposes a sensing square of `2^levels` cells per side. A block is
/// split until it is uniform or reaches level `levels`.
pub fn build_quadtree(sensed: &SensedGrid, levels: u8) -> Result<QuadTree> {
    let side = 1usize << levels;
    if sensed.side != side {
        return Err(Error::Dimension(format!("sensing square side {} != 2^{}", sensed.side, levels)));
    }
    let mut nodes: Vec<QuadNode> = Vec::new();
    let mut queue = VecDeque::new();
    queue.push_back((0u8, 0u32, (0usize, 0usize), None::<(usize, usize)>));
    while let Some((level, path, local, parent)) = queue.pop_front() {
        let bside = side >> level;
        let first = sensed.state(local.0, local.1);
        let mut uniform = true;
        for y in local.1..local.1 + bside {
            for x in local.0..local.0 + bside {
                if sensed.state(x, y) != first {
                    uniform = false;
                }
            }
        }
        let state = if uniform {
            first
        } else {
            block_state((local.1..local.1 + bside).flat_map(|y| (local.0..local.0 + bside).map(move |x| (x, y))).map(|(x, y)| sensed.state(x, y)))
        };
        let idx = nodes.len();
        nodes.push(QuadNode { level, path, local, side: bside, state, uniform, children: None });
        if let Some((p, q)) = parent {
            nodes[p].children.get_or_insert([usize::MAX; 4])[q] = idx;
        }
        if !uniform && level < levels {
            let h = bside / 2;
            for q in 0..4usize {
                let (dx, dy) = (q & 1, q >> 1);
                queue.push_back((level + 1, path * 4 + q as u32, (local.0 + dx * h, local.1 + dy * h), Some((idx, q))));
            }
        }
    }
    Ok(QuadTree { levels, origin: sensed.origin, side, owner: sensed.owner, nodes })
}

impl QuadTree {
    pub fn leaves(&self) -> impl Iterator<Item = &QuadNode> {
        self.nodes.iter().filter(|n| n.children.is_none())
    }

    /// Reconstructs the cell grid from the leaves.
    pub fn decompress(&self) -> Vec<CellState> {
        let mut out = vec![CellState::Unknown; self.side * self.side];
        for n in self.leaves() {
            for y in n.local.1..n.local.1 + n.side {
                for x in n.local.0..n.local.0 + n.side {
                    out[y * self.side + x] = n.state;
                }
            }
        }
        out
    }

    /// Candidate slot of each node at level `< levels`, laid out as a
    /// complete tree in breadth-first order.
    pub fn slot_of(&self, node: &QuadNode) -> Option<usize> {
        if node.level >= self.levels {
            None
        } else {
            Some(candidate_cap(node.level as u32) + node.path as usize)
        }
    }

    /// Transmit candidates: one entry per complete-tree slot over levels
    /// `0..L`; slots whose node was pruned under a uniform ancestor are
    /// `None`.
    pub fn candidates(&self, reliability: f64, now: f64) -> Vec<Option<QuadBlock>> {
        let mut slots = vec![None; candidate_cap(self.levels as u32)];
        for n in &self.nodes {
            if let Some(s) = self.slot_of(n) {
                slots[s] = Some(self.block(n, reliability, now));
            }
        }
        slots
    }

    pub fn block(&self, n: &QuadNode, reliability: f64, now: f64) -> QuadBlock {
        QuadBlock {
            level: n.level,
            path: n.path,
            origin: (self.origin.0 + n.local.0 as i64, self.origin.1 + n.local.1 as i64),
            side: n.side,
            state: n.state,
            sensed_at: now,
            source: self.owner,
            probability: occupancy_probability(n.state, reliability),
        }
    }

    /// Debug dump: one object per node with level, quadrant path and state.
    pub fn to_json(&self) -> serde_json::Value {
        let nodes: Vec<_> = self
            .nodes
            .iter()
            .map(|n| {
                serde_json::json!({
                    "level": n.level,
                    "path": path_string(n.path, n.level),
                    "state": n.state,
                    "leaf": n.children.is_none(),
                })
            })
            .collect();
        serde_json::json!({ "levels": self.levels, "origin": [self.origin.0, self.origin.1], "nodes": nodes })
    }

    /// ASCII rendering of the decompressed square, top row first.
    pub fn ascii(&self) -> String {
        let cells = self.decompress();
        let mut s = String::with_capacity(self.side * (self.side + 1));
        for y in (0..self.side).rev() {
            for x in 0..self.side {
                s.push(cells[y * self.side + x].symbol());
            }
            s.push('\n');
        }
        s
    }
}

/// Quadrant digits of a path, root first; empty for the root.
pub fn path_string(path: u32, level: u8) -> String {
    (0..level).rev().map(|i| char::from(b'0' + ((path >> (2 * i)) & 3) as u8)).collect()
}

/// Blocks available for transmission: current-sensing slots `B_c` and a
/// capped list of older or received blocks `B_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockInventory {
    pub current: Vec<Option<QuadBlock>>,
    past: Vec<(u64, QuadBlock)>,
    pub max_past: usize,
    seq: u64,
}

impl BlockInventory {
    pub fn new(current_slots: usize, max_past: usize) -> Self {
        Self { current: vec![None; current_slots], past: Vec::new(), max_past, seq: 0 }
    }

    /// Fixed encoding width `|B_n|_max`.
    pub fn width(&self) -> usize {
        self.current.len() + self.max_past
    }

    pub fn set_current(&mut self, slots: Vec<Option<QuadBlock>>) {
        assert_eq!(slots.len(), self.current.len(), "current slot count changed");
        self.current = slots;
    }

    pub fn past(&self) -> impl Iterator<Item = &QuadBlock> {
        self.past.iter().map(|(_, b)| b)
    }

    pub fn past_len(&self) -> usize {
        self.past.len()
    }

    /// Appends received blocks to `B_p`, then evicts the highest-AoI blocks
    /// (ties: lower value first, then earliest inserted) until the cap holds.
    pub fn apply_received(&mut self, blocks: &[QuadBlock], now: f64, mu: f64) {
        for b in blocks {
            self.past.push((self.seq, b.clone()));
            self.seq += 1;
        }
        while self.past.len() > self.max_past {
            let victim = self
                .past
                .iter()
                .enumerate()
                .min_by(|(_, (sa, a)), (_, (sb, b))| a.sensed_at.total_cmp(&b.sensed_at).then(a.value(mu, now).total_cmp(&b.value(mu, now))).then(sa.cmp(sb)))
                .map(|(i, _)| i)
                .unwrap();
            self.past.remove(victim);
        }
    }

    /// Encoded candidate list of length [`BlockInventory::width`]: current
    /// slots first, then `B_p` newest-first, then padding.
    pub fn candidates(&self) -> Vec<Option<&QuadBlock>> {
        let mut out: Vec<Option<&QuadBlock>> = self.current.iter().map(|b| b.as_ref()).collect();
        let mut past: Vec<&(u64, QuadBlock)> = self.past.iter().collect();
        past.sort_by(|(sa, a), (sb, b)| b.sensed_at.total_cmp(&a.sensed_at).then(sb.cmp(sa)));
        out.extend(past.into_iter().map(|(_, b)| Some(b)));
        out.resize(self.width(), None);
        out
    }

    pub fn clear(&mut self) {
        self.current.iter_mut().for_each(|b| *b = None);
        self.past.clear();
    }
}

/// Bit layout of one block on the wire: level (3 bits), quadrant path
/// (2L bits), state (2 bits), quantized age (8 bits), zero padding up to
/// `block_bits`.
pub fn encode_block(b: &QuadBlock, levels: u8, now: f64, age_quantum_s: f64, block_bits: usize) -> Result<Vec<u8>> {
    let used = 3 + 2 * levels as usize + 2 + 8;
    if levels > 7 || used > block_bits || b.level > levels {
        return Err(Error::Dimension(format!("block does not fit in {block_bits} bits at L={levels}")));
    }
    let mut bits = BitWriter::new(block_bits);
    bits.push(b.level as u64, 3);
    // Left-align the path so every block uses 2L path bits.
    bits.push((b.path as u64) << (2 * (levels - b.level) as u32), 2 * levels as u32);
    bits.push(b.state.code() as u64, 2);
    let age = (b.age(now).max(0.0) / age_quantum_s).round().min(255.0) as u64;
    bits.push(age, 8);
    Ok(bits.finish())
}

/// Inverse of [`encode_block`]: `(level, path, state, quantized age)`.
pub fn decode_block(bytes: &[u8], levels: u8) -> Result<(u8, u32, CellState, u8)> {
    let mut r = BitReader { bytes, pos: 0 };
    let level = r.take(3)? as u8;
    if level > levels {
        return Err(Error::Format(format!("block level {level} above L={levels}")));
    }
    let raw = r.take(2 * levels as u32)?;
    let path = (raw >> (2 * (levels - level) as u32)) as u32;
    let state = CellState::from_code(r.take(2)? as u8).ok_or_else(|| Error::Format("bad state code".into()))?;
    let age = r.take(8)? as u8;
    Ok((level, path, state, age))
}

struct BitWriter {
    bytes: Vec<u8>,
    pos: usize,
}

impl BitWriter {
    fn new(bits: usize) -> Self {
        Self { bytes: vec![0; bits.div_ceil(8)], pos: 0 }
    }

    fn push(&mut self, v: u64, n: u32) {
        for i in (0..n).rev() {
            if (v >> i) & 1 == 1 {
                self.bytes[self.pos / 8] |= 0x80 >> (self.pos % 8);
            }
            self.pos += 1;
        }
    }

    fn finish(self) -> Vec<u8> {
        self.bytes
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl BitReader<'_> {
    fn take(&mut self, n: u32) -> Result<u64> {
        let mut v = 0u64;
        for _ in 0..n {
            let byte = *self.bytes.get(self.pos / 8).ok_or_else(|| Error::Format("truncated block".into()))?;
            v = (v << 1) | ((byte >> (7 - self.pos % 8)) & 1) as u64;
            self.pos += 1;
        }
        Ok(v)
    }
}
