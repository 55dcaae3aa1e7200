//! Road-side unit: roster, observation, pairing and RB decoding, reward.

use crate::channel::{Association, RbAllocation};
use crate::error::{Error, Result};
use crate::world::VehicleState;

/// Fixed-size roster of served vehicles. A vehicle keeps its slot while it
/// stays in coverage; free slots are filled in entry order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Roster {
    slots: Vec<Option<u32>>,
}

impl Roster {
    pub fn new(n: usize) -> Self {
        Self { slots: vec![None; n] }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn get(&self, slot: usize) -> Option<u32> {
        self.slots[slot]
    }

    pub fn slots(&self) -> &[Option<u32>] {
        &self.slots
    }

    pub fn slot_of(&self, id: u32) -> Option<usize> {
        self.slots.iter().position(|&s| s == Some(id))
    }

    /// Drops vehicles no longer present and admits new ones. `present`
    /// must be in entry order. Returns the slots that changed occupant.
    pub fn refresh(&mut self, present: &[u32]) -> Vec<usize> {
        let mut changed = Vec::new();
        for (i, s) in self.slots.iter_mut().enumerate() {
            if let Some(id) = *s {
                if !present.contains(&id) {
                    *s = None;
                    changed.push(i);
                }
            }
        }
        for &id in present {
            if self.slot_of(id).is_some() {
                continue;
            }
            let Some(free) = self.slots.iter().position(|s| s.is_none()) else { break };
            self.slots[free] = Some(id);
            if !changed.contains(&free) {
                changed.push(free);
            }
        }
        changed
    }

    pub fn clear(&mut self) {
        self.slots.iter_mut().for_each(|s| *s = None);
    }
}

/// Index of the unordered slot pair `a != b` among the `N(N-1)/2` pairs in
/// lexicographic order.
pub fn pair_index(n: usize, a: usize, b: usize) -> usize {
    let (a, b) = if a < b { (a, b) } else { (b, a) };
    a * (2 * n - a - 1) / 2 + (b - a - 1)
}

pub fn rsu_obs_width(n: usize, pair_history: bool) -> usize {
    3 * n + if pair_history { n * (n - 1) / 2 } else { 0 }
}

/// `(x, y, v)` per roster slot, normalized by the world extent and speed
/// cap, absent slots zero; then, when given, one entry per slot pair in
/// [`pair_index`] order.
pub fn encode_rsu_observation(vehicles: &[Option<VehicleState>], pair_history: Option<&[f64]>, extent_m: f64, speed_cap: f64) -> Vec<f32> {
    let mut out = Vec::with_capacity(rsu_obs_width(vehicles.len(), pair_history.is_some()));
    for v in vehicles {
        match v {
            Some(v) => out.extend_from_slice(&[(v.position.x / extent_m) as f32, (v.position.y / extent_m) as f32, (v.velocity / speed_cap) as f32]),
            None => out.extend_from_slice(&[0.0; 3]),
        }
    }
    if let Some(h) = pair_history {
        out.extend(h.iter().map(|&x| x as f32));
    }
    out
}

/// Per-pair share of the episode's frames spent associated.
#[derive(Debug, Clone, PartialEq)]
pub struct PairHistory {
    n: usize,
    frames: usize,
    shares: Vec<f64>,
}

impl PairHistory {
    /// `frames` is the episode length Z.
    pub fn new(n: usize, frames: usize) -> Self {
        Self { n, frames: frames.max(1), shares: vec![0.0; n * n.saturating_sub(1) / 2] }
    }

    pub fn shares(&self) -> &[f64] {
        &self.shares
    }

    pub fn record(&mut self, pairs: &[(usize, usize)]) {
        for &(a, b) in pairs {
            self.shares[pair_index(self.n, a, b)] += 1.0 / self.frames as f64;
        }
    }

    /// Forgets every pair involving `slot` (its occupant changed).
    pub fn forget(&mut self, slot: usize) {
        for other in (0..self.n).filter(|&o| o != slot) {
            self.shares[pair_index(self.n, slot, other)] = 0.0;
        }
    }

    pub fn clear(&mut self) {
        self.shares.iter_mut().for_each(|x| *x = 0.0);
    }
}

/// Branch widths of the RSU network: `⌊N/2⌋` pairing branches of
/// `N - 2i + 1` sub-actions, then `⌊N/2⌋` RB branches of `C(K, 2)`.
pub fn rsu_branches(n: usize, k: usize) -> Vec<usize> {
    let pairs = n / 2;
    (1..=pairs).map(|i| n - 2 * i + 1).chain(std::iter::repeat_n(k * (k - 1) / 2, pairs)).collect()
}

/// Pairs `(a, b)` with `a < b`, in decode order. Sub-actions are 1-based:
/// the lowest unpaired vehicle pairs with the `s`-th lowest remaining one.
pub fn decode_pairs(n: usize, subs: &[usize]) -> Result<Vec<(usize, usize)>> {
    if subs.len() != n / 2 {
        return Err(Error::Dimension(format!("{} pairing sub-actions for N = {n}", subs.len())));
    }
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut pairs = Vec::with_capacity(n / 2);
    for (i, &s) in subs.iter().enumerate() {
        let width = n - 2 * (i + 1) + 1;
        if s == 0 || s > width {
            return Err(Error::SubAction(format!("pairing branch {} takes 1..={width}, got {s}", i + 1)));
        }
        let a = remaining.remove(0);
        let b = remaining.remove(s - 1);
        pairs.push((a, b));
    }
    Ok(pairs)
}

pub fn decode_pairing(n: usize, subs: &[usize]) -> Result<Association> {
    let mut e = Association::new(n);
    for (a, b) in decode_pairs(n, subs)? {
        e.pair(a, b);
    }
    Ok(e)
}

/// The `C(K, 2)` unordered RB pairs in lexicographic order (0-based RBs).
pub fn rb_pairs(k: usize) -> Vec<(usize, usize)> {
    (0..k).flat_map(|a| (a + 1..k).map(move |b| (a, b))).collect()
}

/// RB allocation for decoded pairs. Sub-actions are 1-based indices into
/// [`rb_pairs`]; the lower RB goes to the lower-indexed vehicle.
pub fn decode_rb(pairs: &[(usize, usize)], subs: &[usize], n: usize, k: usize) -> Result<RbAllocation> {
    if subs.len() != pairs.len() {
        return Err(Error::Dimension(format!("{} RB sub-actions for {} pairs", subs.len(), pairs.len())));
    }
    let combos = rb_pairs(k);
    let mut eta = RbAllocation::new(n, k);
    for (&(a, b), &s) in pairs.iter().zip(subs) {
        if s == 0 || s > combos.len() {
            return Err(Error::SubAction(format!("RB branch takes 1..={}, got {s}", combos.len())));
        }
        let (lo, hi) = combos[s - 1];
        eta.set(a, b, lo, true);
        eta.set(b, a, hi, true);
    }
    Ok(eta)
}

/// Pairs, association and RB allocation decoded from one RSU action.
pub type RsuDecision = (Vec<(usize, usize)>, Association, RbAllocation);

/// Decodes a full 0-based RSU action (as produced by the network).
pub fn decode_rsu_action(n: usize, k: usize, action: &[usize]) -> Result<RsuDecision> {
    let half = n / 2;
    if action.len() != 2 * half {
        return Err(Error::Dimension(format!("RSU action of {} entries, expected {}", action.len(), 2 * half)));
    }
    let pair_subs: Vec<usize> = action[..half].iter().map(|a| a + 1).collect();
    let rb_subs: Vec<usize> = action[half..].iter().map(|a| a + 1).collect();
    let pairs = decode_pairs(n, &pair_subs)?;
    let eta = decode_rb(&pairs, &rb_subs, n, k)?;
    let mut e = Association::new(n);
    for &(a, b) in &pairs {
        e.pair(a, b);
    }
    Ok((pairs, e, eta))
}

/// Mean over vehicles of each vehicle's mean per-slot reward in the frame.
/// `per_vehicle` holds the rewards of the slots each vehicle was present;
/// vehicles with no slots are left out.
pub fn rsu_reward(per_vehicle: &[Vec<f64>]) -> f64 {
    let means: Vec<f64> = per_vehicle.iter().filter(|r| !r.is_empty()).map(|r| r.iter().sum::<f64>() / r.len() as f64).collect();
    if means.is_empty() {
        0.0
    } else {
        means.iter().sum::<f64>() / means.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::satisfaction::check_constraints;
    use std::collections::BTreeSet;

    fn matching(n: usize, subs: &[usize]) -> BTreeSet<(usize, usize)> {
        decode_pairs(n, subs).unwrap().into_iter().collect()
    }

    #[test]
    fn worked_examples() {
        assert_eq!(matching(6, &[1, 1, 1]), BTreeSet::from([(0, 1), (2, 3), (4, 5)]));
        assert_eq!(matching(6, &[3, 2, 1]), BTreeSet::from([(0, 3), (1, 4), (2, 5)]));
        let e = decode_pairing(6, &[3, 2, 1]).unwrap();
        assert!(e.get(3, 0) && e.get(0, 3) && !e.get(0, 1));
    }

    fn lattice(widths: &[usize]) -> Vec<Vec<usize>> {
        widths.iter().fold(vec![vec![]], |acc, &w| acc.into_iter().flat_map(|p| (1..=w).map(move |s| [p.clone(), vec![s]].concat())).collect())
    }

    #[test]
    fn pairing_is_a_bijection() {
        for (n, count) in [(2usize, 1usize), (4, 3), (6, 15)] {
            let tuples = lattice(&rsu_branches(n, 2)[..n / 2]);
            assert_eq!(tuples.len(), count);
            let seen: BTreeSet<_> = tuples
                .iter()
                .map(|t| {
                    let m = matching(n, t);
                    let covered: BTreeSet<usize> = m.iter().flat_map(|&(a, b)| [a, b]).collect();
                    assert_eq!(covered.len(), n);
                    m
                })
                .collect();
            assert_eq!(seen.len(), count);
        }
    }

    #[test]
    fn odd_roster_leaves_one_unpaired() {
        let e = decode_pairing(5, &[4, 1]).unwrap();
        assert_eq!(e.pairs(), [(0, 4), (1, 2)]);
        assert_eq!(e.partner(3), None);
    }

    #[test]
    fn out_of_range_sub_actions() {
        assert!(matches!(decode_pairs(4, &[4, 1]), Err(Error::SubAction(_))));
        assert!(matches!(decode_pairs(4, &[0, 1]), Err(Error::SubAction(_))));
        assert!(matches!(decode_rb(&[(0, 1)], &[4], 2, 3), Err(Error::SubAction(_))));
    }

    #[test]
    fn rb_combinations() {
        assert_eq!(rb_pairs(3), [(0, 1), (0, 2), (1, 2)]);
        let eta = decode_rb(&[(0, 1)], &[2], 2, 3).unwrap();
        assert!(eta.get(0, 1, 0) && eta.get(1, 0, 2));
    }

    #[test]
    fn decoded_actions_are_feasible() {
        for n in [2, 3, 4, 5, 6] {
            let k = 4;
            let widths = rsu_branches(n, k);
            for seed in 0..50usize {
                let action: Vec<usize> = widths.iter().enumerate().map(|(i, &w)| (seed * 7 + i * 3) % w).collect();
                let (_, e, eta) = decode_rsu_action(n, k, &action).unwrap();
                let r = check_constraints(&e, &eta, &vec![0; n], &vec![0; n], &vec![0; n]);
                assert!(r.feasible(), "{n} {action:?}");
                for (a, b) in e.pairs() {
                    assert_ne!(eta.link_of(a).unwrap().1, eta.link_of(b).unwrap().1);
                }
            }
        }
    }

    #[test]
    fn overlapping_rb_choices_are_allowed() {
        let (_, _, eta) = decode_rsu_action(4, 3, &[0, 0, 0, 0]).unwrap();
        assert!(eta.transmits_on(0, 0) && eta.transmits_on(2, 0));
    }

    #[test]
    fn roster_keeps_slots() {
        let mut r = Roster::new(3);
        assert_eq!(r.refresh(&[7, 8]), [0, 1]);
        assert_eq!(r.refresh(&[8, 9, 10, 11]), [0, 2]);
        assert_eq!(r.slots(), [Some(9), Some(8), Some(10)]);
        assert!(r.refresh(&[9, 8, 10]).is_empty());
    }

    #[test]
    fn rsu_observation_width() {
        let obs = encode_rsu_observation(&[None, None, None, None], None, 160.0, 14.0);
        assert_eq!(obs, vec![0.0; 12]);
        let h = [0.1, 0.0, 0.0, 0.0, 0.0, 0.2];
        let obs = encode_rsu_observation(&[None, None, None, None], Some(&h), 160.0, 14.0);
        assert_eq!(obs.len(), rsu_obs_width(4, true));
        assert_eq!(&obs[12..], &[0.1, 0.0, 0.0, 0.0, 0.0, 0.2]);
    }

    #[test]
    fn pair_indices_are_dense() {
        for n in 2..8 {
            let mut seen: Vec<usize> = (0..n).flat_map(|a| (a + 1..n).map(move |b| pair_index(n, a, b))).collect();
            assert!((0..n).all(|a| (0..n).filter(|&b| b != a).all(|b| pair_index(n, a, b) == pair_index(n, b, a))));
            seen.sort();
            assert_eq!(seen, (0..n * (n - 1) / 2).collect::<Vec<_>>());
        }
    }

    #[test]
    fn pair_history_shares() {
        let mut h = PairHistory::new(4, 10);
        h.record(&[(0, 2), (1, 3)]);
        h.record(&[(0, 2), (1, 3)]);
        h.record(&[(0, 1), (2, 3)]);
        assert!((h.shares()[pair_index(4, 0, 2)] - 0.2).abs() < 1e-12);
        assert!((h.shares()[pair_index(4, 2, 3)] - 0.1).abs() < 1e-12);
        h.forget(2);
        assert_eq!(h.shares()[pair_index(4, 0, 2)], 0.0);
        assert_eq!(h.shares()[pair_index(4, 3, 2)], 0.0);
        assert!((h.shares()[pair_index(4, 1, 3)] - 0.2).abs() < 1e-12);
        h.clear();
        assert!(h.shares().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rsu_reward_goldens() {
        assert_eq!(rsu_reward(&[vec![0.0; 5], vec![0.0; 5]]), 0.0);
        assert_eq!(rsu_reward(&[vec![2.5; 5], vec![2.5; 5]]), 2.5);
        let a = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let b = vec![0.0, 0.0, 1.0, 0.0, 4.0];
        assert!((rsu_reward(&[a, b]) - (3.0 + 1.0) / 2.0).abs() < 1e-12);
        // Partial presence averages over the slots present.
        assert!((rsu_reward(&[vec![2.0, 4.0], vec![], vec![1.0; 5]]) - 2.0).abs() < 1e-12);
    }
}
