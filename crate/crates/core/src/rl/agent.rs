//! A learning agent: online and target networks, optimizer, replay and
//! exploration schedule.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::rl::adam::Adam;
use crate::rl::checkpoint::{load_into, write_checkpoint};
use crate::rl::net::{td_targets, Bdq, NetSpec};
use crate::rl::replay::{Batch, ReplayBuffer};
use crate::rl::schedule::{act_epsilon_greedy, EpsilonSchedule};
use crate::rng::SimRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub gamma: f64,
    /// Agent steps between hard target syncs.
    pub target_sync: u64,
    /// Agent steps before the first gradient step.
    pub warmup: u64,
    pub buffer_capacity: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Steps over which ε decays linearly; 0 means no exploration.
    pub eps_decay_steps: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub grad_clip: Option<f64>,
    /// Agent steps between gradient steps.
    pub train_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            batch: 64,
            gamma: 0.99,
            target_sync: 1000,
            warmup: 1000,
            buffer_capacity: 1_000_000,
            eps_start: 1.0,
            eps_end: 0.0,
            eps_decay_steps: 100_000,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            grad_clip: Some(10.0),
            train_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.lr > 0.0 && self.batch > 0 && self.target_sync > 0 && self.buffer_capacity > 0 && self.train_every > 0;
        if !positive {
            return Err(Error::Config("lr, batch, target_sync, buffer_capacity and train_every must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.eps_start) || !(0.0..=1.0).contains(&self.eps_end) {
            return Err(Error::Config("epsilon bounds must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn schedule(&self) -> EpsilonSchedule {
        EpsilonSchedule { start: self.eps_start, end: self.eps_end, decay_steps: self.eps_decay_steps }
    }
}

/// Sidecar metadata stored next to a binary checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub net: NetSpec,
    pub train: TrainConfig,
    pub steps: u64,
    pub updates: u64,
}

#[derive(Debug, Clone)]
pub struct BdqAgent<T> {
    pub online: Bdq<T>,
    pub target: Bdq<T>,
    pub cfg: TrainConfig,
    adam: Adam<T>,
    replay: ReplayBuffer<T>,
    rng: SimRng,
    steps: u64,
    updates: u64,
    grads: Vec<T>,
    batch: Batch<T>,
}

impl<T: Scalar> BdqAgent<T> {
    /// Builds an agent; `rng` seeds the initial weights and then drives
    /// exploration and minibatch sampling.
    pub fn new(spec: NetSpec, cfg: TrainConfig, mut rng: SimRng) -> Result<Self> {
        cfg.validate()?;
        let online = Bdq::new(spec.clone(), &mut rng)?;
        let target = online.clone();
        let n = online.param_count();
        let j = spec.branches.len();
        Ok(Self {
            adam: Adam::new(n, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.grad_clip),
            replay: ReplayBuffer::new(cfg.buffer_capacity, spec.input, j),
            online,
            target,
            cfg,
            rng,
            steps: 0,
            updates: 0,
            grads: vec![T::zero(); n],
            batch: Batch::default(),
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn replay_len(&self) -> usize {
        self.replay.len()
    }

    pub fn epsilon(&self) -> f64 {
        self.cfg.schedule().value(self.steps)
    }

    /// ε-greedy when `explore`, greedy otherwise.
    pub fn act(&mut self, state: &[T], explore: bool) -> Result<Vec<usize>> {
        let eps = if explore { self.epsilon() } else { 0.0 };
        act_epsilon_greedy(&self.online, state, eps, &mut self.rng)
    }

    /// Uniformly random sub-actions, one per branch.
    pub fn act_random(&mut self) -> Vec<usize> {
        use rand::Rng;
        self.online.spec().branches.iter().map(|&j| self.rng.random_range(0..j)).collect()
    }

    /// Records a transition and, past warm-up, trains and syncs on
    /// schedule. Returns the loss when a gradient step ran.
    pub fn observe(&mut self, state: &[T], action: &[usize], reward: f64, next: &[T], terminal: bool) -> Result<Option<f64>> {
        self.replay.push(state, action, T::lit(reward), next, terminal);
        self.steps += 1;
        let mut loss = None;
        if self.steps > self.cfg.warmup && self.steps.is_multiple_of(self.cfg.train_every) {
            loss = Some(self.train_step()?);
        }
        if self.steps.is_multiple_of(self.cfg.target_sync) {
            self.sync_target();
        }
        Ok(loss)
    }

    /// One gradient step on a fresh minibatch.
    pub fn train_step(&mut self) -> Result<f64> {
        let mut batch = std::mem::take(&mut self.batch);
        self.replay.sample(self.cfg.batch, &mut self.rng, &mut batch);
        let y = td_targets(&self.online, &self.target, &batch.next_states, &batch.rewards, &batch.terminal, T::lit(self.cfg.gamma))?;
        let loss = self.online.loss_and_grads(&batch.states, &batch.actions, &y, &mut self.grads)?;
        self.adam.step(self.online.params_mut(), &self.grads);
        self.updates += 1;
        self.batch = batch;
        Ok(loss.to_f64_lossy())
    }

    pub fn sync_target(&mut self) {
        self.target.copy_from(&self.online);
    }

    /// Writes `path` (binary weights) and `path.json` (metadata).
    pub fn save(&self, path: &Path) -> Result<()> {
        write_checkpoint(&self.online, BufWriter::new(File::create(path)?))?;
        let meta = CheckpointMeta { net: self.online.spec().clone(), train: self.cfg.clone(), steps: self.steps, updates: self.updates };
        serde_json::to_writer_pretty(BufWriter::new(File::create(sidecar(path))?), &meta)?;
        Ok(())
    }

    /// Loads weights into both networks.
    pub fn load(&mut self, path: &Path) -> Result<()> {
        load_into(&mut self.online, BufReader::new(File::open(path)?))?;
        self.sync_target();
        Ok(())
    }
}

pub fn sidecar(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}
