//! `coperc`: train, evaluate and inspect cooperative-perception agents.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coperception::harness::{export_plotdata, run_eval, run_training, Agents, ExperimentConfig, Mode};
use coperception::Error;

/// Environment variable naming the default output directory.
const OUT_ENV: &str = "COPERC_OUT_DIR";

#[derive(Parser)]
#[command(name = "coperc", version, about = "Cooperative perception simulator with BDQ agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Flat JSON experiment config; omitted keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the full-size parameter set instead of desk scale.
    #[arg(long)]
    full_scale: bool,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the episode count.
    #[arg(long)]
    episodes: Option<usize>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let base = if self.full_scale { ExperimentConfig::full_scale() } else { ExperimentConfig::default() };
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p, &base)?,
            None => base,
        };
        if let Some(s) = self.seed {
            cfg.world.seed = s;
        }
        if let Some(e) = self.episodes {
            cfg.episodes = e;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train the RSU and vehicle agents.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory (default: $COPERC_OUT_DIR or ./out).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Roll a policy over the held-out trace and report rewards.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "trained")]
        mode: String,
        /// Checkpoint directory written by `train` (trained mode only).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the exhaustive-search reference policy.
    Oracle {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Smooth a metrics CSV into learning curves with spread bands.
    Plotdata {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long, default_value_t = 1000)]
        window: usize,
        /// Output CSV (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config and print it with all defaults filled in.
    ValidateConfig {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn out_dir(arg: Option<PathBuf>) -> PathBuf {
    arg.or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"))
}

fn evaluate(cfg: &ExperimentConfig, mode: Mode, checkpoint: Option<&Path>, out: &Path) -> Result<(), Error> {
    let mut agents = match (mode, checkpoint) {
        (Mode::Trained, Some(dir)) => Some(Agents::load(cfg, dir)?),
        (Mode::Trained, None) => return Err(Error::Config("trained mode needs --checkpoint".into())),
        _ => None,
    };
    let r = run_eval(cfg, agents.as_mut(), mode, Some(out))?;
    println!("{}", serde_json::to_string_pretty(&r.summary)?);
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Train { config, out } => {
            let cfg = config.load()?;
            let dir = out_dir(out);
            let r = run_training(&cfg, Some(&dir))?;
            let last = r.evals.last().map_or(f64::NAN, |e| e.vehicle_reward);
            println!("trained {} episodes into {} (last greedy vehicle reward {last})", cfg.episodes, dir.display());
        }
        Command::Eval { config, mode, checkpoint, out } => {
            let cfg = config.load()?;
            evaluate(&cfg, mode.parse()?, checkpoint.as_deref(), &out_dir(out))?;
        }
        Command::Oracle { config, out } => {
            let cfg = config.load()?;
            evaluate(&cfg, Mode::Oracle, None, &out_dir(out))?;
        }
        Command::Plotdata { metrics, window, out } => {
            let input = BufReader::new(File::open(&metrics)?);
            match out {
                Some(p) => {
                    export_plotdata(input, window, BufWriter::new(File::create(p)?))?;
                }
                None => {
                    export_plotdata(input, window, io::stdout().lock())?;
                }
            }
        }
        Command::ValidateConfig { config } => {
            let cfg = config.load()?;
            let mut stdout = io::stdout().lock();
            writeln!(stdout, "{}", cfg.to_json()?)?;
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Dimension(_) => 3,
        Error::Constraint { .. } | Error::SubAction(_) => 4,
        Error::Guard(_) => 5,
        Error::Format(_) | Error::Json(_) => 6,
        Error::Io(_) | Error::Csv(_) => 7,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", e.class());
            ExitCode::from(exit_code(&e))
        }
    }
}
