use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::{rsu_branches, rsu_obs_width, vehicle_obs_width};
use crate::channel::NetConfig;
use crate::error::{Error, Result};
use crate::federation::FedConfig;
use crate::quadtree::candidate_cap;
use crate::rl::{NetSpec, TrainConfig};
use crate::world::WorldConfig;

/// Everything one experiment needs. Serialized as a single flat JSON
/// object; the finest cell side is derived as `2r / 2^L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub world: WorldConfig,
    #[serde(flatten)]
    pub net: NetConfig,
    #[serde(flatten)]
    pub train: TrainConfig,
    #[serde(flatten)]
    pub fed: FedConfig,
    /// Maximum quadtree depth L.
    pub levels: u8,
    pub sensing_radius_m: f64,
    /// Sensor reliability λ.
    pub reliability: f64,
    /// Information decay base μ per second.
    pub mu: f64,
    /// Interest horizon in seconds.
    pub t_int_s: f64,
    /// Past-block slots B_max_p in the vehicle candidate list.
    pub max_past_blocks: usize,
    /// X.
    pub slots_per_frame: usize,
    /// Z.
    pub frames_per_episode: usize,
    pub episodes: usize,
    /// Episodes between greedy evaluations; 0 disables them.
    pub eval_period: usize,
    pub eval_episodes: usize,
    /// Vehicles in each generated trace.
    pub trace_vehicles: usize,
    pub trace_slots: usize,
    /// Length of the held-out evaluation trace.
    pub eval_trace_slots: usize,
    pub eval_seed: u64,
    pub trunk: Vec<usize>,
    pub branch_hidden: usize,
    /// When set, ε decays over this fraction of each agent's planned steps
    /// instead of `eps_decay_steps`.
    pub eps_decay_fraction: Option<f64>,
    /// Vehicle agents use a single flat head over all send subsets.
    pub flat_dqn: bool,
    pub max_flat_outputs: usize,
    /// Multiplier on satisfaction; defaults to `1e4` times the finest cell
    /// area.
    pub reward_scale: Option<f64>,
    /// Speed normalizer for observations.
    pub speed_cap: f64,
    /// Episodes between checkpoints; 0 writes only the final one.
    pub checkpoint_period: usize,
    /// Append each slot pair's share of past frames spent associated to the
    /// RSU observation.
    pub rsu_pair_history: bool,
    /// Emit channel and satisfaction traces during training.
    pub log_links: bool,
    /// Score the exact best block subset next to every link during
    /// evaluation.
    pub oracle_counterfactual: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut c = Self {
            world: WorldConfig::default(),
            net: NetConfig { resource_blocks: 4, ..NetConfig::default() },
            train: TrainConfig { buffer_capacity: 100_000, ..TrainConfig::default() },
            fed: FedConfig::default(),
            levels: 3,
            sensing_radius_m: 20.0,
            reliability: 1.0,
            mu: 0.9,
            t_int_s: 2.0,
            max_past_blocks: 4,
            slots_per_frame: 5,
            frames_per_episode: 10,
            episodes: 2000,
            eval_period: 100,
            eval_episodes: 10,
            trace_vehicles: 30,
            trace_slots: 30_000,
            eval_trace_slots: 20_000,
            eval_seed: 1_000_003,
            trunk: vec![64, 64],
            branch_hidden: 16,
            eps_decay_fraction: Some(0.5),
            flat_dqn: false,
            max_flat_outputs: 1 << 16,
            reward_scale: None,
            speed_cap: 20.0,
            checkpoint_period: 0,
            rsu_pair_history: true,
            log_links: false,
            oracle_counterfactual: false,
        };
        c.world.cell_m = c.derived_cell_m();
        c
    }
}

impl ExperimentConfig {
    /// Full-size parameters: K = 10, L = 5, 512/256 trunk with 128-unit
    /// branches, 10^6 replay slots.
    pub fn full_scale() -> Self {
        let mut c = Self {
            net: NetConfig::default(),
            train: TrainConfig::default(),
            levels: 5,
            max_past_blocks: 10,
            trunk: vec![512, 256],
            branch_hidden: 128,
            ..Self::default()
        };
        c.world.cell_m = c.derived_cell_m();
        c
    }

    pub fn derived_cell_m(&self) -> f64 {
        2.0 * self.sensing_radius_m / (1u64 << self.levels.min(30)) as f64
    }

    /// Parses a flat JSON object over `base`. Unknown keys and a `cell_m`
    /// that disagrees with the derived value are rejected.
    pub fn from_json_str(text: &str, base: &Self) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        let obj = raw.as_object().ok_or_else(|| Error::Config("configuration must be a JSON object".into()))?;
        let mut merged = serde_json::to_value(base)?;
        let known: BTreeSet<String> = merged.as_object().map(|m| m.keys().cloned().collect()).unwrap_or_default();
        let map = merged.as_object_mut().expect("config serializes to an object");
        for (k, v) in obj {
            if !known.contains(k) {
                return Err(Error::Config(format!("unknown field `{k}`")));
            }
            map.insert(k.clone(), v.clone());
        }
        let mut cfg: Self = serde_json::from_value(merged).map_err(|e| Error::Config(e.to_string()))?;
        let derived = cfg.derived_cell_m();
        if obj.contains_key("cell_m") && (cfg.world.cell_m - derived).abs() > 1e-9 {
            return Err(Error::Config(format!("cell_m {} disagrees with 2r/2^L = {derived}", cfg.world.cell_m)));
        }
        cfg.world.cell_m = derived;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, base: &Self) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text, base)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.levels == 0 || self.levels > 6 {
            return bad(format!("levels must lie in 1..=6, got {}", self.levels));
        }
        if (self.world.cell_m - self.derived_cell_m()).abs() > 1e-9 {
            return bad("cell_m must equal 2 * sensing_radius_m / 2^levels".into());
        }
        self.world.validate()?;
        self.net.validate()?;
        self.train.validate()?;
        self.fed.validate()?;
        if self.world.grid_side() < 1 << self.levels {
            return bad("the sensing square does not fit in the world".into());
        }
        if !(self.sensing_radius_m > 0.0) || !(self.t_int_s > 0.0) || !(self.speed_cap > 0.0) {
            return bad("sensing_radius_m, t_int_s and speed_cap must be positive".into());
        }
        if !(self.reliability > 0.0 && self.reliability <= 1.0) {
            return bad("reliability must lie in (0, 1]".into());
        }
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return bad("mu must lie in (0, 1)".into());
        }
        if self.slots_per_frame == 0 || self.frames_per_episode == 0 {
            return bad("slots_per_frame and frames_per_episode must be at least 1".into());
        }
        if self.episodes == 0 {
            return bad("episodes must be at least 1".into());
        }
        if self.eval_period > 0 && self.eval_episodes == 0 {
            return bad("eval_episodes must be at least 1 when evaluation is enabled".into());
        }
        if self.trace_vehicles < 2 {
            return bad("trace_vehicles must be at least 2".into());
        }
        if self.trace_slots < self.episode_slots() || self.eval_trace_slots < self.episode_slots() {
            return bad("traces must be at least one episode long".into());
        }
        if let Some(f) = self.eps_decay_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return bad("eps_decay_fraction must lie in (0, 1]".into());
            }
        }
        if let Some(s) = self.reward_scale {
            if !(s > 0.0) {
                return bad("reward_scale must be positive".into());
            }
        }
        if self.trunk.is_empty() || self.trunk.contains(&0) {
            return bad("trunk widths must be a non-empty list of positive sizes".into());
        }
        self.vehicle_spec()?;
        self.rsu_spec()?;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.world.n_max
    }

    pub fn episode_slots(&self) -> usize {
        self.slots_per_frame * self.frames_per_episode
    }

    pub fn cell_m(&self) -> f64 {
        self.world.cell_m
    }

    /// Side of the sensing square in cells.
    pub fn sensing_side(&self) -> usize {
        1 << self.levels
    }

    /// Current-tree slots plus past-block slots.
    pub fn candidate_slots(&self) -> usize {
        candidate_cap(self.levels as u32) + self.max_past_blocks
    }

    pub fn reward_scale(&self) -> f64 {
        self.reward_scale.unwrap_or(1e4 * self.world.cell_m * self.world.cell_m)
    }

    pub fn vehicle_spec(&self) -> Result<NetSpec> {
        let w = self.candidate_slots();
        let input = vehicle_obs_width(w);
        if self.flat_dqn {
            NetSpec::flat_dqn(input, self.trunk.clone(), self.branch_hidden, w, self.max_flat_outputs)
        } else {
            let spec = NetSpec { input, trunk: self.trunk.clone(), branch_hidden: self.branch_hidden, branches: vec![2; w] };
            spec.validate()?;
            Ok(spec)
        }
    }

    pub fn rsu_spec(&self) -> Result<NetSpec> {
        let spec = NetSpec {
            input: rsu_obs_width(self.n(), self.rsu_pair_history),
            trunk: self.trunk.clone(),
            branch_hidden: self.branch_hidden,
            branches: rsu_branches(self.n(), self.net.resource_blocks),
        };
        spec.validate()?;
        Ok(spec)
    }

    fn with_decay(&self, planned_steps: usize) -> TrainConfig {
        let mut t = self.train.clone();
        if let Some(f) = self.eps_decay_fraction {
            t.eps_decay_steps = ((planned_steps as f64 * f).round() as u64).max(1);
        }
        t
    }

    /// One step per slot per vehicle.
    pub fn vehicle_train(&self) -> TrainConfig {
        self.with_decay(self.episodes * self.episode_slots())
    }

    /// One step per frame.
    pub fn rsu_train(&self) -> TrainConfig {
        self.with_decay(self.episodes * self.frames_per_episode)
    }
}
