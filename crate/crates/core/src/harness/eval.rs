use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::config::ExperimentConfig;
use super::metrics::{ccdf_table, dominates, CcdfPoint};
use super::sim::{Agents, Env, LinkEvent, Mode, Sink};
use super::train::eval_trace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub mode: Mode,
    pub episodes: usize,
    /// Vehicle steps (directed link slots) scored.
    pub samples: usize,
    pub mean_reward: f64,
    pub mean_rate: f64,
    pub positive_fraction: f64,
    pub mean_oracle_reward: Option<f64>,
    /// Whether the best-subset CCDF is everywhere at least the policy's.
    pub oracle_dominates: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub slot: usize,
    pub n: u32,
    #[serde(rename = "n'")]
    pub peer: u32,
    pub reward: f64,
    pub rate: f64,
    pub oracle_reward: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub summary: EvalSummary,
    pub rewards: Vec<RewardRecord>,
    pub ccdf: Vec<CcdfPoint>,
    pub links: Vec<LinkEvent>,
}

#[derive(Default)]
struct Collect {
    links: Vec<LinkEvent>,
}

impl Sink for Collect {
    fn link(&mut self, e: &LinkEvent) {
        self.links.push(e.clone());
    }
}

/// Rolls the chosen policy over the whole held-out trace in consecutive
/// episodes without learning. With `out`, writes `rewards.csv`,
/// `ccdf.csv`, `channel.csv`, `satisfaction.csv` and `summary.json`.
pub fn run_eval(cfg: &ExperimentConfig, agents: Option<&mut Agents>, mode: Mode, out: Option<&Path>) -> Result<EvalOutcome> {
    cfg.validate()?;
    if mode == Mode::Trained && agents.is_none() {
        return Err(Error::Config("trained mode needs a checkpoint".into()));
    }
    let mut env = Env::new(cfg, eval_trace(cfg)?, 2)?;
    let episodes = cfg.eval_trace_slots / cfg.episode_slots();
    let mut sink = Collect::default();
    let mut agents = agents;
    for ep in 0..episodes {
        env.run_episode(ep, ep * cfg.episode_slots(), agents.as_deref_mut(), mode, false, &mut sink)?;
    }
    let links = sink.links;
    let rewards: Vec<RewardRecord> = links
        .iter()
        .map(|e| RewardRecord { slot: e.slot, n: e.tx_id, peer: e.rx_id, reward: e.reward, rate: e.rate, oracle_reward: e.oracle_reward })
        .collect();
    let values: Vec<f64> = rewards.iter().map(|r| r.reward).collect();
    let oracle: Vec<f64> = rewards.iter().filter_map(|r| r.oracle_reward).collect();
    let count = values.len().max(1) as f64;
    let has_oracle = !oracle.is_empty() && oracle.len() == values.len();
    let summary = EvalSummary {
        mode,
        episodes,
        samples: values.len(),
        mean_reward: values.iter().sum::<f64>() / count,
        mean_rate: rewards.iter().map(|r| r.rate).sum::<f64>() / count,
        positive_fraction: values.iter().filter(|&&v| v > 0.0).count() as f64 / count,
        mean_oracle_reward: has_oracle.then(|| oracle.iter().sum::<f64>() / count),
        oracle_dominates: has_oracle.then(|| dominates(&oracle, &values)),
    };
    let ccdf = ccdf_table(&values, 101);

    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("rewards.csv"))?));
        rewards.iter().try_for_each(|r| w.serialize(r))?;
        w.flush()?;
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("ccdf.csv"))?));
        ccdf.iter().try_for_each(|r| w.serialize(r))?;
        w.flush()?;
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("channel.csv"))?));
        links.iter().try_for_each(|e| w.serialize(e.channel_record()))?;
        w.flush()?;
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("satisfaction.csv"))?));
        links.iter().try_for_each(|e| w.serialize(e.satisfaction_record()))?;
        w.flush()?;
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    }
    Ok(EvalOutcome { summary, rewards, ccdf, links })
}
