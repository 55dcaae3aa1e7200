use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{
    decode_rsu_action, encode_rsu_observation, encode_vehicle_observation, mask_send, rsu_reward, selected_blocks, ObsContext, PairHistory, Roster,
};
use crate::channel::{compute_rates, select_delivered, w_to_dbm, Association, ChannelRecord, DeliveryBucket, GainTable, LinkClass, RbAllocation};
use crate::error::{Error, Result};
use crate::federation::{aggregate, broadcast, spread, RoundRecord};
use crate::geom::Point;
use crate::oracle::{best_blocks, oracle_rsu, OracleVehicle};
use crate::quadtree::{build_quadtree, candidate_cap, BlockInventory, QuadBlock};
use crate::rl::BdqAgent;
use crate::rng::{stream_rng, SimRng, Stream};
use crate::satisfaction::{satisfaction, SatisfactionMatrix, SatisfactionRecord};
use crate::sensing::{sense, InterestMap, PerceptionMap};
use crate::world::{GroundTruth, MobilityTrace, VehicleState, World};

use super::config::ExperimentConfig;

/// How actions are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// The agents' networks (ε-greedy while learning, greedy otherwise).
    Trained,
    /// Uniform random sub-actions everywhere.
    Random,
    /// Exhaustive RSU search and best block subsets per link.
    Oracle,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trained" => Ok(Mode::Trained),
            "random" => Ok(Mode::Random),
            "oracle" => Ok(Mode::Oracle),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

/// The RSU agent and one vehicle agent per roster slot.
#[derive(Debug, Clone)]
pub struct Agents {
    pub rsu: BdqAgent<f32>,
    pub vehicles: Vec<BdqAgent<f32>>,
}

impl Agents {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let seed = cfg.world.seed;
        let rsu = BdqAgent::new(cfg.rsu_spec()?, cfg.rsu_train(), stream_rng(seed, Stream::Agent, 0))?;
        let vehicles = (0..cfg.n())
            .map(|i| BdqAgent::new(cfg.vehicle_spec()?, cfg.vehicle_train(), stream_rng(seed, Stream::Agent, 1 + i as u64)))
            .collect::<Result<_>>()?;
        Ok(Self { rsu, vehicles })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.rsu.save(&dir.join("rsu.bdq"))?;
        for (i, v) in self.vehicles.iter().enumerate() {
            v.save(&dir.join(format!("vehicle_{i}.bdq")))?;
        }
        Ok(())
    }

    /// Agents shaped by `cfg` with weights read from `dir`.
    pub fn load(cfg: &ExperimentConfig, dir: &Path) -> Result<Self> {
        let mut a = Self::new(cfg)?;
        a.rsu.load(&dir.join("rsu.bdq"))?;
        for (i, v) in a.vehicles.iter_mut().enumerate() {
            v.load(&dir.join(format!("vehicle_{i}.bdq")))?;
        }
        Ok(a)
    }
}

/// One metrics CSV row: a vehicle slot step or an RSU frame step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub episode: usize,
    pub frame: usize,
    /// Slot within the episode; empty for RSU rows.
    pub slot: Option<usize>,
    pub agent: String,
    pub reward: f64,
    pub epsilon: f64,
    pub loss: Option<f64>,
    /// Link rate for vehicles, mean link rate over the frame for the RSU.
    pub rate: f64,
    /// Pairwise objective of the slot (frame mean for the RSU).
    pub objective: f64,
}

/// Everything that happened on one directed link in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkEvent {
    pub episode: usize,
    /// Trace slot.
    pub slot: usize,
    pub tx: usize,
    pub rx: usize,
    pub tx_id: u32,
    pub rx_id: u32,
    pub rb: usize,
    pub class: LinkClass,
    pub gain: f64,
    pub interference_w: f64,
    pub rate: f64,
    pub budget: usize,
    pub sent: usize,
    pub delivered: usize,
    /// Receiver satisfaction before scaling.
    pub satisfaction: f64,
    /// Sender reward.
    pub reward: f64,
    /// Best achievable sender reward from the same candidates and budget.
    pub oracle_reward: Option<f64>,
}

impl LinkEvent {
    pub fn channel_record(&self) -> ChannelRecord {
        ChannelRecord {
            slot: self.slot,
            n: self.tx_id,
            peer: self.rx_id,
            k: self.rb,
            class: self.class,
            h_db: 10.0 * self.gain.log10(),
            i_dbm: w_to_dbm(self.interference_w),
            rate: self.rate,
        }
    }

    pub fn satisfaction_record(&self) -> SatisfactionRecord {
        SatisfactionRecord { slot: self.slot, n: self.rx_id, peer: self.tx_id, f: self.satisfaction, blocks_sent: self.sent, blocks_delivered: self.delivered }
    }
}

/// Receives the simulation's outputs; every method defaults to a no-op.
pub trait Sink {
    fn step(&mut self, _row: &MetricsRow) {}
    fn link(&mut self, _event: &LinkEvent) {}
    fn round(&mut self, _record: &RoundRecord) {}
}

/// Discards everything.
pub struct NullSink;

impl Sink for NullSink {}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeSummary {
    pub vehicle_steps: usize,
    /// Mean sender reward over vehicle steps.
    pub vehicle_reward: f64,
    pub rsu_reward: f64,
    pub mean_rate: f64,
}

struct Pending {
    state: Vec<f32>,
    action: Vec<usize>,
    reward: f64,
}

struct VehicleRt {
    map: PerceptionMap,
    inventory: BlockInventory,
    bucket: DeliveryBucket,
    pending: Option<Pending>,
}

impl VehicleRt {
    fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            map: PerceptionMap::new(cfg.world.grid_side()),
            inventory: BlockInventory::new(candidate_cap(cfg.levels as u32), cfg.max_past_blocks),
            bucket: DeliveryBucket::default(),
            pending: None,
        }
    }
}

/// A rollout environment over one mobility trace.
pub struct Env {
    cfg: ExperimentConfig,
    world: World,
    trace: MobilityTrace,
    gt: GroundTruth,
    roster: Roster,
    history: PairHistory,
    rt: Vec<VehicleRt>,
    sensor_rng: SimRng,
    fading_rng: SimRng,
    delivery_rng: SimRng,
    policy_rng: SimRng,
    frames: usize,
}

impl Env {
    /// `stream` separates the random streams of environments sharing a
    /// seed (training and evaluation).
    pub fn new(cfg: &ExperimentConfig, trace: MobilityTrace, stream: u64) -> Result<Self> {
        cfg.validate()?;
        let world = World::new(cfg.world.clone());
        let gt = world.static_layer().clone();
        let seed = cfg.world.seed;
        Ok(Self {
            roster: Roster::new(cfg.n()),
            history: PairHistory::new(cfg.n(), cfg.frames_per_episode),
            rt: (0..cfg.n()).map(|_| VehicleRt::new(cfg)).collect(),
            sensor_rng: stream_rng(seed, Stream::Sensor, stream),
            fading_rng: stream_rng(seed, Stream::Fading, stream),
            delivery_rng: stream_rng(seed, Stream::Delivery, stream),
            policy_rng: stream_rng(seed, Stream::Agent, 1000 + stream),
            cfg: cfg.clone(),
            world,
            trace,
            gt,
            frames: 0,
        })
    }

    pub fn trace(&self) -> &MobilityTrace {
        &self.trace
    }

    /// Latest valid episode start.
    pub fn max_start(&self) -> usize {
        self.trace.len() - self.cfg.episode_slots()
    }

    fn vehicle_state(&self, t: usize, id: u32) -> Option<VehicleState> {
        let s = self.trace.sample(t, id)?;
        let info = self.trace.info(id)?;
        Some(VehicleState::from_sample(s, info, self.cfg.reliability, self.cfg.sensing_radius_m))
    }

    fn flush(agent: Option<&mut BdqAgent<f32>>, p: Pending, learn: bool) -> Result<()> {
        if let (Some(a), true) = (agent, learn) {
            a.observe(&p.state, &p.action, p.reward, &p.state, true)?;
        }
        Ok(())
    }

    /// Runs Z frames of X slots starting at trace slot `start`. With
    /// `learn`, agents explore, store transitions and train, and vehicle
    /// models are averaged at frame ends when federation is on.
    pub fn run_episode(
        &mut self,
        episode: usize,
        start: usize,
        mut agents: Option<&mut Agents>,
        mode: Mode,
        learn: bool,
        sink: &mut dyn Sink,
    ) -> Result<EpisodeSummary> {
        if start > self.max_start() {
            return Err(Error::Config(format!("episode start {start} beyond trace end")));
        }
        if mode == Mode::Trained && agents.is_none() {
            return Err(Error::Config("trained mode needs agents".into()));
        }
        if let Some(a) = agents.as_deref() {
            if a.vehicles.len() != self.cfg.n() {
                return Err(Error::Dimension(format!("{} vehicle agents for {} roster slots", a.vehicles.len(), self.cfg.n())));
            }
        }
        let learn = learn && mode == Mode::Trained;
        let cfg = self.cfg.clone();
        let n = cfg.n();
        let k = cfg.net.resource_blocks;
        let x = cfg.slots_per_frame;
        let scale = cfg.reward_scale();
        let side = cfg.sensing_side();
        let cell_m = cfg.cell_m();
        let rsu_branches = cfg.rsu_spec()?.branches;

        self.roster.clear();
        self.history.clear();
        for rt in &mut self.rt {
            *rt = VehicleRt::new(&cfg);
        }
        let mut rsu_pending: Option<Pending> = None;
        let mut summary = EpisodeSummary::default();
        let mut reward_sum = 0.0;
        let mut rate_sum = 0.0;
        let mut rate_count = 0usize;

        for frame in 0..cfg.frames_per_episode {
            let t0 = start + frame * x;
            let present: Vec<u32> = self.trace.at(t0).iter().map(|s| s.id).collect();
            for slot in self.roster.refresh(&present) {
                if let Some(p) = self.rt[slot].pending.take() {
                    Self::flush(agents.as_deref_mut().map(|a| &mut a.vehicles[slot]), p, learn)?;
                }
                self.rt[slot] = VehicleRt::new(&cfg);
                self.history.forget(slot);
            }
            for rt in &mut self.rt {
                rt.bucket.reset();
            }

            let mut frame_rewards: Vec<Vec<f64>> = vec![Vec::new(); n];
            let mut frame_rate = (0.0, 0usize);
            let mut frame_objective = 0.0;
            let mut rsu_loss = None;
            let mut rsu_obs = Vec::new();
            let mut rsu_action = Vec::new();
            let mut full_alloc = RbAllocation::new(n, k);
            let mut partner: Vec<Option<usize>> = vec![None; n];
            let mut states: Vec<Option<VehicleState>> = vec![None; n];

            for s in 0..x {
                let t = t0 + s;
                let now = t as f64 * cfg.world.slot_s;
                self.world.fill_ground_truth(&self.trace, t, &mut self.gt);
                states = (0..n).map(|i| self.roster.get(i).and_then(|id| self.vehicle_state(t, id))).collect();

                // Sensing, own-map update and current candidate blocks.
                for i in 0..n {
                    let Some(v) = states[i].as_ref() else {
                        if let Some(p) = self.rt[i].pending.take() {
                            Self::flush(agents.as_deref_mut().map(|a| &mut a.vehicles[i]), p, learn)?;
                        }
                        continue;
                    };
                    let sensed = sense(v, &self.gt, side, now, &mut self.sensor_rng);
                    self.rt[i].map.absorb(&sensed, cfg.reliability);
                    let tree = build_quadtree(&sensed, cfg.levels)?;
                    self.rt[i].inventory.set_current(tree.candidates(cfg.reliability, now));
                }
                let interest: Vec<Option<InterestMap>> =
                    (0..n).map(|i| states[i].as_ref().map(|v| InterestMap::build(v, &self.rt[i].map, cell_m, now, cfg.t_int_s, cfg.mu))).collect();

                if s == 0 {
                    let history = cfg.rsu_pair_history.then(|| self.history.shares());
                    rsu_obs = encode_rsu_observation(&states, history, cfg.world.extent_m, cfg.speed_cap);
                    if let Some(p) = rsu_pending.take() {
                        if let (Some(a), true) = (agents.as_deref_mut(), learn) {
                            rsu_loss = a.rsu.observe(&p.state, &p.action, p.reward, &rsu_obs, false)?;
                        }
                    }
                    rsu_action = match mode {
                        Mode::Trained => agents.as_deref_mut().unwrap().rsu.act(&rsu_obs, learn)?,
                        Mode::Random => random_action(&rsu_branches, &mut self.policy_rng),
                        Mode::Oracle => {
                            let vs: Vec<Option<OracleVehicle>> = (0..n)
                                .map(|i| {
                                    states[i].as_ref().map(|v| OracleVehicle {
                                        position: v.position,
                                        candidates: self.rt[i].inventory.candidates().into_iter().map(|c| c.cloned()).collect(),
                                        interest: interest[i].clone().unwrap_or_else(InterestMap::empty),
                                    })
                                })
                                .collect();
                            oracle_rsu(&vs, &self.world.junction, &cfg.net, cfg.world.slot_s, cell_m, cfg.mu, now)?.action
                        }
                    };
                    let (pairs, _, alloc) = decode_rsu_action(n, k, &rsu_action)?;
                    full_alloc = alloc;
                    partner = vec![None; n];
                    let live: Vec<(usize, usize)> = pairs.iter().copied().filter(|&(a, b)| states[a].is_some() && states[b].is_some()).collect();
                    self.history.record(&live);
                    for (a, b) in pairs {
                        partner[a] = Some(b);
                        partner[b] = Some(a);
                    }
                }

                // Links whose both ends are present this slot.
                let active: Vec<bool> = (0..n).map(|i| states[i].is_some() && partner[i].is_some_and(|p| states[p].is_some())).collect();
                let mut assoc = Association::new(n);
                let mut alloc = RbAllocation::new(n, k);
                for i in (0..n).filter(|&i| active[i]) {
                    let p = partner[i].unwrap();
                    if i < p {
                        assoc.pair(i, p);
                    }
                    if let Some((rx, rb)) = full_alloc.link_of(i) {
                        alloc.set(i, rx, rb, true);
                    }
                }
                let positions: Vec<Option<Point>> = states.iter().map(|v| v.as_ref().map(|v| v.position)).collect();
                let gains = GainTable::sample(&positions, &self.world.junction, &cfg.net, &mut self.fading_rng);
                let links = compute_rates(&assoc, &alloc, &gains, &cfg.net, cfg.world.slot_s)?;

                // Observations; they also close the previous slot's transitions.
                let ctx = ObsContext {
                    levels: cfg.levels,
                    extent_m: cfg.world.extent_m,
                    speed_cap: cfg.speed_cap,
                    sensing_radius: cfg.sensing_radius_m,
                    cell_m,
                    mu: cfg.mu,
                    now,
                };
                let mut obs: Vec<Vec<f32>> = vec![Vec::new(); n];
                let mut losses: Vec<Option<f64>> = vec![None; n];
                for i in 0..n {
                    let Some(v) = states[i].as_ref() else { continue };
                    let peer = partner[i].and_then(|p| states[p].as_ref());
                    obs[i] = encode_vehicle_observation(&self.rt[i].inventory.candidates(), v, peer, &ctx);
                    if let Some(p) = self.rt[i].pending.take() {
                        if let (Some(a), true) = (agents.as_deref_mut(), learn) {
                            losses[i] = a.vehicles[i].observe(&p.state, &p.action, p.reward, &obs[i], false)?;
                        }
                    }
                }

                // Content selection, delivery and satisfaction.
                let mut deliveries: Vec<(usize, Vec<QuadBlock>)> = Vec::new();
                let mut f = SatisfactionMatrix::new(n);
                let mut slot_reward: Vec<Option<(f64, f64)>> = vec![None; n];
                for l in &links {
                    let (tx, rx) = (l.tx, l.rx);
                    let budget = self.rt[tx].bucket.budget(l.rate);
                    let rx_interest = interest[rx].as_ref().unwrap();
                    let cands = self.rt[tx].inventory.candidates();
                    let best = if mode == Mode::Oracle || cfg.oracle_counterfactual {
                        Some(best_blocks(&cands, rx_interest, budget, cell_m, cfg.mu, now)?)
                    } else {
                        None
                    };
                    let mut bits = match mode {
                        Mode::Trained => {
                            let a = agents.as_deref_mut().unwrap().vehicles[tx].act(&obs[tx], learn)?;
                            if cfg.flat_dqn {
                                (0..cands.len()).map(|j| (a[0] >> j) & 1).collect()
                            } else {
                                a
                            }
                        }
                        Mode::Random => random_action(&vec![2; cands.len()], &mut self.policy_rng),
                        Mode::Oracle => {
                            let mut b = vec![0; cands.len()];
                            best.as_ref().unwrap().selected.iter().for_each(|&j| b[j] = 1);
                            b
                        }
                    };
                    mask_send(&mut bits, &cands);
                    let sent = selected_blocks(&bits, &cands);
                    let delivered = select_delivered(&sent, budget, &mut self.delivery_rng);
                    let sat = satisfaction(&delivered, rx_interest, cell_m, cfg.mu, now);
                    let reward = scale * sat;
                    f.set(rx, tx, reward);
                    slot_reward[tx] = Some((reward, l.rate));
                    let event = LinkEvent {
                        episode,
                        slot: t,
                        tx,
                        rx,
                        tx_id: self.roster.get(tx).unwrap(),
                        rx_id: self.roster.get(rx).unwrap(),
                        rb: l.rb,
                        class: gains.class(tx, rx),
                        gain: l.gain,
                        interference_w: l.interference_w,
                        rate: l.rate,
                        budget,
                        sent: sent.len(),
                        delivered: delivered.len(),
                        satisfaction: sat,
                        reward,
                        oracle_reward: best.map(|b| scale * b.value),
                    };
                    sink.link(&event);
                    let action = if cfg.flat_dqn { vec![bits.iter().enumerate().map(|(j, &b)| b << j).sum()] } else { bits };
                    self.rt[tx].pending = Some(Pending { state: std::mem::take(&mut obs[tx]), action, reward });
                    deliveries.push((rx, delivered));
                }
                for (rx, blocks) in &deliveries {
                    for b in blocks {
                        self.rt[*rx].map.fuse(b.origin, b.side, b.probability, b.sensed_at, now, cfg.mu);
                    }
                    self.rt[*rx].inventory.apply_received(blocks, now, cfg.mu);
                }

                let objective = f.objective();
                frame_objective += objective;
                for i in (0..n).filter(|&i| states[i].is_some()) {
                    let Some((reward, rate)) = slot_reward[i] else {
                        frame_rewards[i].push(0.0);
                        continue;
                    };
                    frame_rewards[i].push(reward);
                    frame_rate.0 += rate;
                    frame_rate.1 += 1;
                    reward_sum += reward;
                    summary.vehicle_steps += 1;
                    let epsilon = match (mode, agents.as_deref()) {
                        (Mode::Trained, Some(a)) if learn => a.vehicles[i].epsilon(),
                        (Mode::Random, _) => 1.0,
                        _ => 0.0,
                    };
                    sink.step(&MetricsRow {
                        episode,
                        frame,
                        slot: Some(frame * x + s),
                        agent: format!("v{i}"),
                        reward,
                        epsilon,
                        loss: losses[i],
                        rate,
                        objective,
                    });
                }
            }

            let reward = rsu_reward(&frame_rewards);
            let epsilon = match (mode, agents.as_deref()) {
                (Mode::Trained, Some(a)) if learn => a.rsu.epsilon(),
                (Mode::Random, _) => 1.0,
                _ => 0.0,
            };
            let mean_rate = if frame_rate.1 > 0 { frame_rate.0 / frame_rate.1 as f64 } else { 0.0 };
            rate_sum += frame_rate.0;
            rate_count += frame_rate.1;
            sink.step(&MetricsRow {
                episode,
                frame,
                slot: None,
                agent: "rsu".into(),
                reward,
                epsilon,
                loss: rsu_loss,
                rate: mean_rate,
                objective: frame_objective / x as f64,
            });
            summary.rsu_reward += reward / cfg.frames_per_episode as f64;
            rsu_pending = Some(Pending { state: rsu_obs, action: rsu_action, reward });

            self.frames += 1;
            if learn && cfg.fed.enabled && self.frames.is_multiple_of(cfg.fed.period_frames) {
                let participants: Vec<usize> = (0..n).filter(|&i| states[i].is_some()).collect();
                if let (Some(a), true) = (agents.as_deref_mut(), participants.len() >= 2) {
                    let record = federate(a, &participants, self.frames)?;
                    sink.round(&record);
                }
            }
        }

        for i in 0..n {
            if let Some(p) = self.rt[i].pending.take() {
                Self::flush(agents.as_deref_mut().map(|a| &mut a.vehicles[i]), p, learn)?;
            }
        }
        if let Some(p) = rsu_pending.take() {
            Self::flush(agents.map(|a| &mut a.rsu), p, learn)?;
        }
        if summary.vehicle_steps > 0 {
            summary.vehicle_reward = reward_sum / summary.vehicle_steps as f64;
        }
        if rate_count > 0 {
            summary.mean_rate = rate_sum / rate_count as f64;
        }
        Ok(summary)
    }
}

/// Averages the online networks of `participants` and hands the result
/// back to each of them. Target networks stay local.
pub fn federate(agents: &mut Agents, participants: &[usize], frame: usize) -> Result<RoundRecord> {
    let models: Vec<&[f32]> = participants.iter().map(|&i| agents.vehicles[i].online.params()).collect();
    let spread_before = spread(&models)?;
    let global = aggregate(&models)?;
    let mut slots: Vec<&mut [f32]> =
        agents.vehicles.iter_mut().enumerate().filter(|(i, _)| participants.contains(i)).map(|(_, a)| a.online.params_mut()).collect();
    broadcast(&global, &mut slots)?;
    let models: Vec<&[f32]> = participants.iter().map(|&i| agents.vehicles[i].online.params()).collect();
    let spread_after = spread(&models)?;
    Ok(RoundRecord { frame, participants: participants.len(), spread_before, spread_after })
}

fn random_action(branches: &[usize], rng: &mut SimRng) -> Vec<usize> {
    branches.iter().map(|&j| rng.random_range(0..j)).collect()
}
