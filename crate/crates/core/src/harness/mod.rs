//! Experiment configuration, the two-timescale simulation and training
//! loop, evaluation protocols and metrics export.

mod config;
mod eval;
mod metrics;
mod sim;
mod train;

pub use config::ExperimentConfig;
pub use eval::{run_eval, EvalOutcome, EvalSummary, RewardRecord};
pub use metrics::{
    ccdf_at, ccdf_table, dominates, export_plotdata, moving_average, percentile, plot_rows, read_metrics, vehicle_episode_rewards, CcdfPoint, CsvSink,
    MemorySink, PlotRow,
};
pub use sim::{federate, Agents, Env, EpisodeSummary, LinkEvent, MetricsRow, Mode, NullSink, Sink};
pub use train::{eval_trace, greedy_score, run_training, training_trace, EvalPoint, TrainOutcome};
