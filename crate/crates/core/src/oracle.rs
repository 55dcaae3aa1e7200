//! Exhaustive references for small instances: best block subset for one
//! link, and best pairing plus RB allocation for up to four vehicles.

use crate::agents::{decode_rsu_action, rsu_branches};
use crate::channel::{compute_rates, Association, GainTable, NetConfig, RbAllocation};
use crate::error::{Error, Result};
use crate::geom::Point;
use crate::quadtree::QuadBlock;
use crate::rng::{stream_rng, Stream};
use crate::satisfaction::{block_satisfaction, SatisfactionMatrix};
use crate::sensing::InterestMap;
use crate::world::Junction;

/// Largest candidate list [`oracle_blocks`] will enumerate.
pub const BLOCK_GUARD: usize = 22;

/// Best subset of candidate indices.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockChoice {
    pub selected: Vec<usize>,
    pub value: f64,
}

/// Exact maximizer of the receiver's satisfaction over subsets of at most
/// `budget` valid candidates. Ties go to the lexicographically smallest
/// index list.
pub fn oracle_blocks(candidates: &[Option<&QuadBlock>], interest: &InterestMap, budget: usize, cell_m: f64, mu: f64, now: f64) -> Result<BlockChoice> {
    if candidates.len() > BLOCK_GUARD {
        return Err(Error::Guard(format!("{} candidates exceed the enumeration guard of {BLOCK_GUARD}", candidates.len())));
    }
    let gain: Vec<Option<f64>> = candidates.iter().map(|c| c.map(|b| block_satisfaction(b, interest, cell_m, mu, now))).collect();
    let valid: u32 = gain.iter().enumerate().filter(|(_, g)| g.is_some()).fold(0, |m, (i, _)| m | (1 << i));
    let mut best = BlockChoice { selected: Vec::new(), value: 0.0 };
    let mut best_mask = 0u32;
    for mask in 1u32..(1u32 << candidates.len()) {
        if mask & !valid != 0 || mask.count_ones() as usize > budget {
            continue;
        }
        let value: f64 = (0..candidates.len()).filter(|i| mask >> i & 1 == 1).map(|i| gain[i].unwrap()).sum();
        if value > best.value || (value == best.value && lex_less(mask, best_mask)) {
            best = BlockChoice { selected: indices(mask), value };
            best_mask = mask;
        }
    }
    Ok(best)
}

/// Same optimum as [`oracle_blocks`] without enumeration: satisfaction is
/// additive over blocks, so the best subset is the `budget` largest
/// positive contributions (ties to the lower index). Not size-guarded.
pub fn top_blocks(candidates: &[Option<&QuadBlock>], interest: &InterestMap, budget: usize, cell_m: f64, mu: f64, now: f64) -> BlockChoice {
    let mut gains: Vec<(usize, f64)> =
        candidates.iter().enumerate().filter_map(|(i, c)| c.map(|b| (i, block_satisfaction(b, interest, cell_m, mu, now)))).filter(|&(_, g)| g > 0.0).collect();
    gains.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    gains.truncate(budget);
    gains.sort_by_key(|&(i, _)| i);
    BlockChoice { selected: gains.iter().map(|&(i, _)| i).collect(), value: gains.iter().map(|&(_, g)| g).sum() }
}

/// Candidate lists up to this size are enumerated by [`best_blocks`].
pub const ENUMERATION_LIMIT: usize = 10;

/// [`oracle_blocks`] for short candidate lists, [`top_blocks`] beyond
/// [`ENUMERATION_LIMIT`].
pub fn best_blocks(candidates: &[Option<&QuadBlock>], interest: &InterestMap, budget: usize, cell_m: f64, mu: f64, now: f64) -> Result<BlockChoice> {
    if candidates.len() <= ENUMERATION_LIMIT {
        oracle_blocks(candidates, interest, budget, cell_m, mu, now)
    } else {
        Ok(top_blocks(candidates, interest, budget, cell_m, mu, now))
    }
}

fn indices(mask: u32) -> Vec<usize> {
    (0..32).filter(|i| mask >> i & 1 == 1).collect()
}

fn lex_less(a: u32, b: u32) -> bool {
    indices(a) < indices(b)
}

/// What the RSU oracle knows about one served vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleVehicle {
    pub position: Point,
    /// The vehicle's transmit candidates (padding as `None`).
    pub candidates: Vec<Option<QuadBlock>>,
    /// The vehicle's own interest as a receiver.
    pub interest: InterestMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RsuChoice {
    /// 0-based network action (pairing branches, then RB branches).
    pub action: Vec<usize>,
    pub assoc: Association,
    pub alloc: RbAllocation,
    pub objective: f64,
    /// Number of (pairing, allocation) candidates evaluated.
    pub evaluated: usize,
}

/// Exhaustive search over pairings and RB pairs with fading disabled and
/// oracle block selection on every link. First best in enumeration order
/// wins ties.
pub fn oracle_rsu(vehicles: &[Option<OracleVehicle>], junction: &Junction, net: &NetConfig, slot_s: f64, cell_m: f64, mu: f64, now: f64) -> Result<RsuChoice> {
    let n = vehicles.len();
    let k = net.resource_blocks;
    if n > 4 || k > 4 {
        return Err(Error::Guard(format!("RSU oracle supports N <= 4 and K <= 4, got N = {n}, K = {k}")));
    }
    let quiet = NetConfig { fading: false, ..net.clone() };
    let positions: Vec<Option<Point>> = vehicles.iter().map(|v| v.as_ref().map(|v| v.position)).collect();
    let gains = GainTable::sample(&positions, junction, &quiet, &mut stream_rng(0, Stream::Fading, 0));
    let widths = rsu_branches(n, k);
    let mut best: Option<RsuChoice> = None;
    let mut evaluated = 0;
    for action in lattice(&widths) {
        let (_, assoc, alloc) = decode_rsu_action(n, k, &action)?;
        evaluated += 1;
        let f = evaluate_links(vehicles, &assoc, &alloc, &gains, &quiet, slot_s, cell_m, mu, now)?;
        let objective = f.objective();
        if best.as_ref().is_none_or(|b| objective > b.objective) {
            best = Some(RsuChoice { action, assoc, alloc, objective, evaluated: 0 });
        }
    }
    let mut best = best.ok_or_else(|| Error::Dimension("no vehicles to pair".into()))?;
    best.evaluated = evaluated;
    Ok(best)
}

/// Satisfaction of every receiver under best block selection with
/// single-slot budgets `floor(R)`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_links(
    vehicles: &[Option<OracleVehicle>],
    assoc: &Association,
    alloc: &RbAllocation,
    gains: &GainTable,
    net: &NetConfig,
    slot_s: f64,
    cell_m: f64,
    mu: f64,
    now: f64,
) -> Result<SatisfactionMatrix> {
    let mut f = SatisfactionMatrix::new(vehicles.len());
    for link in compute_rates(assoc, alloc, gains, net, slot_s)? {
        let (Some(tx), Some(rx)) = (&vehicles[link.tx], &vehicles[link.rx]) else { continue };
        let cands: Vec<Option<&QuadBlock>> = tx.candidates.iter().map(|c| c.as_ref()).collect();
        let choice = best_blocks(&cands, &rx.interest, link.rate.floor() as usize, cell_m, mu, now)?;
        f.set(link.rx, link.tx, choice.value);
    }
    Ok(f)
}

/// Every 0-based tuple below `widths`, in lexicographic order.
fn lattice(widths: &[usize]) -> Vec<Vec<usize>> {
    widths.iter().fold(vec![Vec::new()], |acc, &w| acc.into_iter().flat_map(|p| (0..w).map(move |s| [p.as_slice(), &[s]].concat())).collect())
}
