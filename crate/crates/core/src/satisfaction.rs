//! Link satisfaction, the pairwise objective, and feasibility checks for
//! association, allocation and delivery.

use serde::{Deserialize, Serialize};

use crate::channel::{Association, RbAllocation};
use crate::quadtree::QuadBlock;
use crate::sensing::InterestMap;

/// Satisfaction of a receiver with the blocks it got from its sender:
/// `Σ_b (Σ_{x∈b} i(x) / Λ(b)) · q_sender(b)` with Λ in m².
pub fn satisfaction(delivered: &[QuadBlock], interest: &InterestMap, cell_m: f64, mu: f64, now: f64) -> f64 {
    delivered.iter().map(|b| block_satisfaction(b, interest, cell_m, mu, now)).sum()
}

/// Contribution of a single delivered block.
pub fn block_satisfaction(b: &QuadBlock, interest: &InterestMap, cell_m: f64, mu: f64, now: f64) -> f64 {
    let q = b.value(mu, now);
    if q == 0.0 {
        return 0.0;
    }
    interest.block_sum(b.origin, b.side) / b.area_m2(cell_m) * q
}

/// Directional satisfactions `f[rx][tx]` over roster indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SatisfactionMatrix {
    pub n: usize,
    f: Vec<f64>,
}

impl SatisfactionMatrix {
    pub fn new(n: usize) -> Self {
        Self { n, f: vec![0.0; n * n] }
    }

    pub fn get(&self, rx: usize, tx: usize) -> f64 {
        self.f[rx * self.n + tx]
    }

    pub fn set(&mut self, rx: usize, tx: usize, v: f64) {
        self.f[rx * self.n + tx] = v;
    }

    /// Sum over unordered pairs of `f(a, b) · f(b, a)`.
    pub fn objective(&self) -> f64 {
        let mut s = 0.0;
        for a in 0..self.n {
            for b in a + 1..self.n {
                s += self.get(a, b) * self.get(b, a);
            }
        }
        s
    }
}

/// Per-vehicle feasibility of a slot's decisions. `true` means satisfied.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConstraintReport {
    /// Delivered blocks do not exceed the whole-block budget.
    pub within_budget: Vec<bool>,
    /// The selection asked for more blocks than the budget and was cut.
    pub truncated: Vec<bool>,
    pub single_rb: Vec<bool>,
    pub single_partner: Vec<bool>,
    pub symmetric: Vec<bool>,
}

impl ConstraintReport {
    pub fn feasible(&self) -> bool {
        [&self.within_budget, &self.single_rb, &self.single_partner, &self.symmetric].iter().all(|v| v.iter().all(|&ok| ok))
    }
}

/// Evaluates the slot constraints. `sent`, `delivered` and `budget` are
/// block counts per transmitting vehicle.
pub fn check_constraints(assoc: &Association, alloc: &RbAllocation, sent: &[usize], delivered: &[usize], budget: &[usize]) -> ConstraintReport {
    let n = assoc.n;
    let mut r = ConstraintReport::default();
    for a in 0..n {
        r.within_budget.push(delivered[a] <= budget[a] && delivered[a] <= sent[a]);
        r.truncated.push(sent[a] > budget[a]);
        r.single_rb.push(alloc.count(a) <= 1);
        let partners = (0..n).filter(|&b| assoc.get(a, b)).count();
        r.single_partner.push(partners <= 1 && !assoc.get(a, a));
        r.symmetric.push((0..n).all(|b| assoc.get(a, b) == assoc.get(b, a)));
    }
    r
}

/// One row of the per-slot satisfaction CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatisfactionRecord {
    pub slot: usize,
    pub n: u32,
    #[serde(rename = "n'")]
    pub peer: u32,
    pub f: f64,
    pub blocks_sent: usize,
    pub blocks_delivered: usize,
}
