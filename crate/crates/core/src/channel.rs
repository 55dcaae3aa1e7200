//! Link classification, path loss with block fading, and per-slot block
//! rates over the allocated resource blocks.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::world::{Arm, Junction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkClass {
    Los,
    Wlos,
    Nlos,
}

impl LinkClass {
    pub fn name(self) -> &'static str {
        match self {
            LinkClass::Los => "LOS",
            LinkClass::Wlos => "WLOS",
            LinkClass::Nlos => "NLOS",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    /// Number of resource blocks K.
    pub resource_blocks: usize,
    pub rb_bandwidth_hz: f64,
    pub tx_power_dbm: f64,
    pub noise_dbm_per_hz: f64,
    pub carrier_hz: f64,
    /// Block (packet) size M in bits.
    pub block_bits: usize,
    pub los_intercept_db: f64,
    pub los_slope_db: f64,
    pub wlos_extra_db: f64,
    pub nlos_extra_db: f64,
    pub nlos_corner_db_per_m: f64,
    pub fading: bool,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            resource_blocks: 10,
            rb_bandwidth_hz: 180e3,
            tx_power_dbm: 10.0,
            noise_dbm_per_hz: -174.0,
            carrier_hz: 5.9e9,
            block_bits: 800,
            los_intercept_db: 38.77,
            los_slope_db: 16.7,
            wlos_extra_db: 5.0,
            nlos_extra_db: 15.0,
            nlos_corner_db_per_m: 0.4,
            fading: true,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resource_blocks < 2 {
            return Err(Error::Config(format!("resource_blocks must be >= 2, got {}", self.resource_blocks)));
        }
        if !(self.rb_bandwidth_hz > 0.0) || self.block_bits == 0 {
            return Err(Error::Config("rb_bandwidth_hz and block_bits must be positive".into()));
        }
        Ok(())
    }

    pub fn tx_power_w(&self) -> f64 {
        dbm_to_w(self.tx_power_dbm)
    }

    /// Noise power N0·ω over one resource block, in watts.
    pub fn noise_w(&self) -> f64 {
        dbm_to_w(self.noise_dbm_per_hz) * self.rb_bandwidth_hz
    }

    /// Path loss in dB for a link of class `class` over `d` meters; `d_corner`
    /// is the shorter endpoint distance to the junction centre.
    pub fn path_loss_db(&self, class: LinkClass, d: f64, d_corner: f64) -> f64 {
        let base = self.los_intercept_db + self.los_slope_db * d.max(1.0).log10();
        match class {
            LinkClass::Los => base,
            LinkClass::Wlos => base + self.wlos_extra_db,
            LinkClass::Nlos => base + self.nlos_extra_db + self.nlos_corner_db_per_m * d_corner,
        }
    }
}

pub fn dbm_to_w(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn w_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

pub fn classify_los(a: Point, b: Point, junction: &Junction) -> LinkClass {
    if junction.blocked(a, b) {
        return LinkClass::Nlos;
    }
    match (junction.arm(a), junction.arm(b)) {
        (Arm::Road(x), Arm::Road(y)) if x != y => LinkClass::Wlos,
        _ => LinkClass::Los,
    }
}

/// Linear channel gain of one (link, RB, slot) draw.
pub fn link_gain<R: Rng + ?Sized>(cfg: &NetConfig, class: LinkClass, d: f64, d_corner: f64, rng: &mut R) -> f64 {
    let mean = 10f64.powf(-cfg.path_loss_db(class, d, d_corner) / 10.0);
    if cfg.fading {
        // Unit-mean exponential power (Rayleigh amplitude).
        let u: f64 = rng.random();
        mean * -(1.0 - u).ln().min(-f64::MIN_POSITIVE)
    } else {
        mean
    }
}

/// Vehicle pairing matrix E over roster indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Association {
    pub n: usize,
    e: Vec<bool>,
}

impl Association {
    pub fn new(n: usize) -> Self {
        Self { n, e: vec![false; n * n] }
    }

    pub fn get(&self, a: usize, b: usize) -> bool {
        self.e[a * self.n + b]
    }

    /// Sets a single directed entry; use [`Association::pair`] for
    /// well-formed pairings.
    pub fn set(&mut self, a: usize, b: usize, v: bool) {
        self.e[a * self.n + b] = v;
    }

    pub fn pair(&mut self, a: usize, b: usize) {
        self.set(a, b, true);
        self.set(b, a, true);
    }

    pub fn partner(&self, a: usize) -> Option<usize> {
        (0..self.n).find(|&b| self.get(a, b))
    }

    /// Unordered pairs `(a, b)` with `a < b`.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for a in 0..self.n {
            for b in a + 1..self.n {
                if self.get(a, b) {
                    out.push((a, b));
                }
            }
        }
        out
    }
}

/// RB allocation η: `get(tx, rx, k)` is true when `tx` sends to `rx` on RB `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RbAllocation {
    pub n: usize,
    pub k: usize,
    eta: Vec<bool>,
}

impl RbAllocation {
    pub fn new(n: usize, k: usize) -> Self {
        Self { n, k, eta: vec![false; n * n * k] }
    }

    fn idx(&self, tx: usize, rx: usize, k: usize) -> usize {
        (tx * self.n + rx) * self.k + k
    }

    pub fn get(&self, tx: usize, rx: usize, k: usize) -> bool {
        self.eta[self.idx(tx, rx, k)]
    }

    pub fn set(&mut self, tx: usize, rx: usize, k: usize, v: bool) {
        let i = self.idx(tx, rx, k);
        self.eta[i] = v;
    }

    /// Number of (receiver, RB) entries used by `tx`.
    pub fn count(&self, tx: usize) -> usize {
        (0..self.n).flat_map(|rx| (0..self.k).map(move |k| (rx, k))).filter(|&(rx, k)| self.get(tx, rx, k)).count()
    }

    /// First (receiver, RB) used by `tx`.
    pub fn link_of(&self, tx: usize) -> Option<(usize, usize)> {
        (0..self.n).flat_map(|rx| (0..self.k).map(move |k| (rx, k))).find(|&(rx, k)| self.get(tx, rx, k))
    }

    pub fn transmits_on(&self, tx: usize, k: usize) -> bool {
        (0..self.n).any(|rx| self.get(tx, rx, k))
    }
}

/// Per-slot gains `h[tx][rx][k]` and link classes.
#[derive(Debug, Clone, PartialEq)]
pub struct GainTable {
    pub n: usize,
    pub k: usize,
    h: Vec<f64>,
    class: Vec<LinkClass>,
}

impl GainTable {
    /// Draws gains between all present vehicles on all RBs. Absent roster
    /// slots (`None`) get zero gain.
    pub fn sample<R: Rng + ?Sized>(positions: &[Option<Point>], junction: &Junction, cfg: &NetConfig, rng: &mut R) -> Self {
        let n = positions.len();
        let k = cfg.resource_blocks;
        let mut h = vec![0.0; n * n * k];
        let mut class = vec![LinkClass::Los; n * n];
        for tx in 0..n {
            for rx in 0..n {
                let (Some(a), Some(b)) = (positions[tx], positions[rx]) else { continue };
                if tx == rx {
                    continue;
                }
                let c = classify_los(a, b, junction);
                class[tx * n + rx] = c;
                let d_corner = a.dist(junction.center).min(b.dist(junction.center));
                for kk in 0..k {
                    h[(tx * n + rx) * k + kk] = link_gain(cfg, c, a.dist(b), d_corner, rng);
                }
            }
        }
        Self { n, k, h, class }
    }

    pub fn from_fn(n: usize, k: usize, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut h = vec![0.0; n * n * k];
        for tx in 0..n {
            for rx in 0..n {
                for kk in 0..k {
                    h[(tx * n + rx) * k + kk] = f(tx, rx, kk);
                }
            }
        }
        Self { n, k, h, class: vec![LinkClass::Los; n * n] }
    }

    pub fn gain(&self, tx: usize, rx: usize, k: usize) -> f64 {
        self.h[(tx * self.n + rx) * self.k + k]
    }

    pub fn class(&self, tx: usize, rx: usize) -> LinkClass {
        self.class[tx * self.n + rx]
    }
}

/// Outcome of one directed link in a slot.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkRate {
    pub tx: usize,
    pub rx: usize,
    pub rb: usize,
    pub gain: f64,
    pub interference_w: f64,
    /// Blocks per slot (real; floored at delivery).
    pub rate: f64,
}

/// Rates of every allocated directed link, in blocks per slot.
pub fn compute_rates(assoc: &Association, alloc: &RbAllocation, gains: &GainTable, cfg: &NetConfig, slot_s: f64) -> Result<Vec<LinkRate>> {
    if assoc.n != alloc.n || gains.n != alloc.n || gains.k != alloc.k {
        return Err(Error::Dimension("association, allocation and gains disagree".into()));
    }
    let n = alloc.n;
    for tx in 0..n {
        if alloc.count(tx) > 1 {
            return Err(Error::Constraint { constraint: "one-rb-per-transmitter", detail: format!("vehicle {tx} holds {} RBs", alloc.count(tx)) });
        }
    }
    for (a, b) in assoc.pairs() {
        if let (Some((_, ka)), Some((_, kb))) = (alloc.link_of(a), alloc.link_of(b)) {
            if ka == kb {
                return Err(Error::Constraint { constraint: "orthogonal-pair-rbs", detail: format!("pair ({a}, {b}) shares RB {ka}") });
            }
        }
    }
    let p = cfg.tx_power_w();
    let noise = cfg.noise_w();
    let scale = slot_s / cfg.block_bits as f64;
    let mut out = Vec::new();
    for tx in 0..n {
        let Some((rx, k)) = alloc.link_of(tx) else { continue };
        let interference: f64 = (0..n).filter(|&i| i != tx && i != rx && alloc.transmits_on(i, k)).map(|i| p * gains.gain(i, rx, k)).sum();
        let h = gains.gain(tx, rx, k);
        let rate = if assoc.get(tx, rx) { scale * cfg.rb_bandwidth_hz * (1.0 + p * h / (noise + interference)).log2() } else { 0.0 };
        out.push(LinkRate { tx, rx, rb: k, gain: h, interference_w: interference, rate });
    }
    Ok(out)
}

/// Integerizes a real rate across the slots of a frame: the fractional
/// residue carries over so long-run deliveries match the rate.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DeliveryBucket {
    credit: f64,
}

impl DeliveryBucket {
    /// Adds this slot's rate and returns the whole-block budget.
    pub fn budget(&mut self, rate: f64) -> usize {
        self.credit += rate.max(0.0);
        let cap = self.credit.floor();
        self.credit -= cap;
        cap as usize
    }

    pub fn reset(&mut self) {
        self.credit = 0.0;
    }
}

/// Picks which of `sent` arrive given a whole-block budget: all of them if
/// they fit, otherwise a uniform random subset (original order kept).
pub fn select_delivered<T: Clone, R: Rng + ?Sized>(sent: &[T], budget: usize, rng: &mut R) -> Vec<T> {
    if sent.len() <= budget {
        return sent.to_vec();
    }
    let mut idx = sample(rng, sent.len(), budget).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| sent[i].clone()).collect()
}

/// One row of the channel trace CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRecord {
    pub slot: usize,
    pub n: u32,
    #[serde(rename = "n'")]
    pub peer: u32,
    pub k: usize,
    pub class: LinkClass,
    pub h_db: f64,
    #[serde(rename = "I_dBm")]
    pub i_dbm: f64,
    #[serde(rename = "R")]
    pub rate: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use crate::world::WorldConfig;
    use proptest::prelude::*;

    fn no_fading() -> NetConfig {
        NetConfig { fading: false, ..NetConfig::default() }
    }

    fn single_pair(k: usize) -> (Association, RbAllocation) {
        let mut e = Association::new(2);
        e.pair(0, 1);
        let mut a = RbAllocation::new(2, k);
        a.set(0, 1, 0, true);
        a.set(1, 0, 1, true);
        (e, a)
    }

    #[test]
    fn classes() {
        let j = Junction::new(&WorldConfig::default());
        let c = j.center;
        // Same eastbound lane.
        assert_eq!(classify_los(Point::new(10.0, c.y - 2.0), Point::new(60.0, c.y - 2.0), &j), LinkClass::Los);
        // West arm to south arm through the corner building.
        assert_eq!(classify_los(Point::new(c.x - 40.0, c.y - 2.0), Point::new(c.x + 2.0, c.y - 40.0), &j), LinkClass::Nlos);
        // Close to the box on perpendicular arms: the diagonal stays clear.
        assert_eq!(classify_los(Point::new(c.x - 6.0, c.y - 2.0), Point::new(c.x - 2.0, c.y - 6.0), &j), LinkClass::Wlos);
    }

    #[test]
    fn deterministic_los_gain() {
        let cfg = no_fading();
        let mut rng = stream_rng(0, Stream::Fading, 0);
        let h = link_gain(&cfg, LinkClass::Los, 10.0, 0.0, &mut rng);
        let oracle = 10f64.powf(-(38.77 + 16.7) / 10.0);
        assert!((h - oracle).abs() / oracle < 1e-12);
        for d in [1.0, 5.0, 50.0, 150.0] {
            assert!(link_gain(&cfg, LinkClass::Nlos, d, 0.0, &mut rng) < link_gain(&cfg, LinkClass::Los, d, 0.0, &mut rng));
        }
        // d = 0 clamps to 1 m.
        assert_eq!(link_gain(&cfg, LinkClass::Los, 0.0, 0.0, &mut rng), link_gain(&cfg, LinkClass::Los, 1.0, 0.0, &mut rng));
    }

    #[test]
    fn fading_draws_differ_across_rbs() {
        let j = Junction::new(&WorldConfig::default());
        let pos = [Some(Point::new(20.0, 78.0)), Some(Point::new(40.0, 78.0))];
        let mut rng = stream_rng(1, Stream::Fading, 0);
        let g = GainTable::sample(&pos, &j, &NetConfig::default(), &mut rng);
        assert_ne!(g.gain(0, 1, 0), g.gain(0, 1, 1));
        // Unit-mean fading.
        let cfg = NetConfig::default();
        let mean: f64 = (0..20000).map(|_| link_gain(&cfg, LinkClass::Los, 1.0, 0.0, &mut rng)).sum::<f64>() / 20000.0;
        let base = 10f64.powf(-3.877);
        assert!((mean / base - 1.0).abs() < 0.03);
    }

    #[test]
    fn single_pair_closed_form() {
        let cfg = no_fading();
        let (e, a) = single_pair(3);
        let g = GainTable::from_fn(2, 3, |_, _, _| 1e-9);
        let rates = compute_rates(&e, &a, &g, &cfg, 0.002).unwrap();
        let snr = cfg.tx_power_w() * 1e-9 / cfg.noise_w();
        let oracle = 0.002 / 800.0 * 180e3 * (1.0 + snr).log2();
        assert_eq!(rates.len(), 2);
        for r in rates {
            assert_eq!(r.interference_w, 0.0);
            assert!((r.rate - oracle).abs() < 1e-9);
        }
    }

    #[test]
    fn unpaired_link_has_zero_rate() {
        let (_, a) = single_pair(3);
        let g = GainTable::from_fn(2, 3, |_, _, _| 1e-9);
        let rates = compute_rates(&Association::new(2), &a, &g, &no_fading(), 0.002).unwrap();
        assert!(rates.iter().all(|r| r.rate == 0.0));
    }

    #[test]
    fn unit_sanity() {
        let r: f64 = 0.002 * 180e3 * 2.22 / 800.0;
        assert!((r - 1.0).abs() < 1e-3);
    }

    #[test]
    fn co_channel_pairs_interfere() {
        let cfg = no_fading();
        let mut e = Association::new(4);
        e.pair(0, 1);
        e.pair(2, 3);
        let mut a = RbAllocation::new(4, 2);
        a.set(0, 1, 0, true);
        a.set(1, 0, 1, true);
        a.set(2, 3, 0, true);
        a.set(3, 2, 1, true);
        let g = GainTable::from_fn(4, 2, |tx, rx, _| if tx / 2 == rx / 2 { 1e-9 } else { 1e-11 });
        let shared = compute_rates(&e, &a, &g, &cfg, 0.002).unwrap();
        let (e1, a1) = single_pair(2);
        let alone = compute_rates(&e1, &a1, &GainTable::from_fn(2, 2, |_, _, _| 1e-9), &cfg, 0.002).unwrap();
        for r in &shared {
            assert!(r.interference_w > 0.0);
            assert!(r.rate < alone[0].rate);
        }
    }

    #[test]
    fn constraint_violations_are_named() {
        let (e, mut a) = single_pair(3);
        a.set(1, 0, 0, true);
        let g = GainTable::from_fn(2, 3, |_, _, _| 1e-9);
        match compute_rates(&e, &a, &g, &no_fading(), 0.002) {
            Err(Error::Constraint { constraint, .. }) => assert_eq!(constraint, "one-rb-per-transmitter"),
            other => panic!("{other:?}"),
        }
        let mut a = RbAllocation::new(2, 3);
        a.set(0, 1, 2, true);
        a.set(1, 0, 2, true);
        match compute_rates(&e, &a, &g, &no_fading(), 0.002) {
            Err(Error::Constraint { constraint, .. }) => assert_eq!(constraint, "orthogonal-pair-rbs"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bucket_preserves_long_run_rate() {
        let mut b = DeliveryBucket::default();
        let total: usize = (0..1000).map(|_| b.budget(0.3)).sum();
        assert!((299..=300).contains(&total));
        b.reset();
        assert_eq!(b.budget(2.7), 2);
        assert_eq!(b.budget(0.3), 1);
    }

    #[test]
    fn delivered_subset() {
        let mut rng = stream_rng(3, Stream::Delivery, 0);
        let sent = [1, 2, 3, 4, 5];
        assert_eq!(select_delivered(&sent, 9, &mut rng), sent);
        let d = select_delivered(&sent, 2, &mut rng);
        assert_eq!(d.len(), 2);
        assert!(d[0] < d[1]);
        assert!(select_delivered(&sent, 0, &mut rng).is_empty());
    }

    proptest! {
        #[test]
        fn rate_monotone(h in 1e-14f64..1e-6, scale in 1.0f64..10.0, i in 0.0f64..1e-10) {
            let cfg = no_fading();
            let rate = |h: f64, interf: f64| 0.002 / 800.0 * cfg.rb_bandwidth_hz * (1.0 + cfg.tx_power_w() * h / (cfg.noise_w() + interf)).log2();
            prop_assert!(rate(h * scale, i) >= rate(h, i));
            prop_assert!(rate(h, i * scale + 1e-15) <= rate(h, i));
            let (e, a) = single_pair(2);
            let g = GainTable::from_fn(2, 2, |_, _, _| h);
            let r = compute_rates(&e, &a, &g, &cfg, 0.002).unwrap();
            prop_assert!((r[0].rate - rate(h, 0.0)).abs() <= 1e-9 * r[0].rate.max(1.0));
        }
    }
}
