use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::rng::{stream_rng, Stream};
use crate::world::{generate_trace, MobilityTrace};

use super::config::ExperimentConfig;
use super::metrics::CsvSink;
use super::sim::{Agents, Env, EpisodeSummary, Mode, NullSink, Sink};

/// Mean greedy performance at one evaluation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    /// Training episodes completed.
    pub episode: usize,
    pub vehicle_reward: f64,
    pub rsu_reward: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub agents: Agents,
    pub episodes: Vec<EpisodeSummary>,
    pub evals: Vec<EvalPoint>,
}

pub fn training_trace(cfg: &ExperimentConfig) -> Result<MobilityTrace> {
    generate_trace(&cfg.world, cfg.trace_vehicles, cfg.trace_slots, cfg.world.seed)
}

/// The held-out trace, generated from `eval_seed`.
pub fn eval_trace(cfg: &ExperimentConfig) -> Result<MobilityTrace> {
    generate_trace(&cfg.world, cfg.trace_vehicles, cfg.eval_trace_slots, cfg.eval_seed)
}

/// Greedy rollouts of `episodes` episodes at the given starts; returns the
/// mean vehicle reward (over vehicle steps) and mean RSU reward.
pub fn greedy_score(env: &mut Env, agents: &mut Agents, starts: &[usize]) -> Result<(f64, f64)> {
    let mut reward = 0.0;
    let mut steps = 0;
    let mut rsu = 0.0;
    for (i, &s) in starts.iter().enumerate() {
        let e = env.run_episode(i, s, Some(agents), Mode::Trained, false, &mut NullSink)?;
        reward += e.vehicle_reward * e.vehicle_steps as f64;
        steps += e.vehicle_steps;
        rsu += e.rsu_reward;
    }
    Ok((if steps > 0 { reward / steps as f64 } else { 0.0 }, rsu / starts.len().max(1) as f64))
}

/// Trains all agents per the two-timescale loop. With `out`, writes
/// `config.json`, `metrics.csv`, `eval.csv`, optional link and round
/// logs, and checkpoints under `out/checkpoints`.
pub fn run_training(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut env = Env::new(cfg, training_trace(cfg)?, 0)?;
    let mut eval_env = Env::new(cfg, eval_trace(cfg)?, 1)?;
    let mut agents = Agents::new(cfg)?;
    let mut starts = stream_rng(cfg.world.seed, Stream::Episode, 0);
    let mut eval_rng = stream_rng(cfg.eval_seed, Stream::Eval, 0);
    let eval_starts: Vec<usize> = (0..cfg.eval_episodes).map(|_| eval_rng.random_range(0..=eval_env.max_start())).collect();

    let mut sink = match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("config.json"), cfg.to_json()?)?;
            Some(CsvSink::create(dir, cfg.log_links, cfg.fed.enabled)?)
        }
        None => None,
    };
    let mut eval_csv = match out {
        Some(dir) => Some(csv::Writer::from_writer(BufWriter::new(File::create(dir.join("eval.csv"))?))),
        None => None,
    };

    let mut episodes = Vec::with_capacity(cfg.episodes);
    let mut evals = Vec::new();
    for ep in 0..cfg.episodes {
        let start = starts.random_range(0..=env.max_start());
        let s: &mut dyn Sink = match sink.as_mut() {
            Some(s) => s,
            None => &mut NullSink,
        };
        episodes.push(env.run_episode(ep, start, Some(&mut agents), Mode::Trained, true, s)?);
        if let Some(s) = sink.as_mut() {
            s.flush()?;
        }
        let done = ep + 1;
        if cfg.eval_period > 0 && done % cfg.eval_period == 0 {
            let (vehicle_reward, rsu_reward) = greedy_score(&mut eval_env, &mut agents, &eval_starts)?;
            let point = EvalPoint { episode: done, vehicle_reward, rsu_reward };
            if let Some(w) = eval_csv.as_mut() {
                w.serialize(&point)?;
                w.flush()?;
            }
            evals.push(point);
        }
        if let Some(dir) = out {
            if (cfg.checkpoint_period > 0 && done % cfg.checkpoint_period == 0) || done == cfg.episodes {
                agents.save(&dir.join("checkpoints"))?;
            }
        }
    }
    Ok(TrainOutcome { agents, episodes, evals })
}
