use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;

use motion_ae::cli::commands::{self, GradcheckConfig, SummarizeConfig};
use motion_ae::cli::formats::read_json;
use motion_ae::cli::synth::SynthConfig;
use motion_ae::stack::StackConfig;
use motion_ae::Result;

#[derive(Parser)]
#[command(
    name = "motion-ae",
    version,
    about = "Online object-motion summarization with stacked sparse LSTM autoencoders"
)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Generate a synthetic surveillance dataset.
    Synth {
        #[arg(long)]
        seed: Option<u64>,
        /// JSON file with SynthConfig fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Offline greedy training on still sequences of a dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// JSON file with StackConfig fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Train on a seeded subsample of this many still sequences.
        #[arg(long)]
        max_sequences: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Segment, score and online-update over a dataset's stream.
    Summarize {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// JSON file with SummarizeConfig fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a summary against the dataset's ground truth.
    Eval {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic and finite-difference gradients.
    Gradcheck {
        #[arg(long)]
        seed: Option<u64>,
        /// JSON file with GradcheckConfig fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    path.map_or_else(|| Ok(T::default()), read_json)
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("serializable report")
    );
}

fn run(verb: Verb) -> Result<bool> {
    let mut log = io::stderr();
    match verb {
        Verb::Synth { seed, config, out } => {
            let mut cfg: SynthConfig = load(config.as_deref())?;
            cfg.seed = seed.unwrap_or(cfg.seed);
            let ds = commands::cmd_synth(&cfg, &out)?;
            eprintln!(
                "wrote {} trajectories, {} ground-truth clips to {}",
                ds.trajectories.len(),
                ds.ground_truth.len(),
                out.display()
            );
        }
        Verb::Train {
            data,
            seed,
            config,
            max_sequences,
            out,
        } => {
            let mut cfg: StackConfig = load(config.as_deref())?;
            cfg.seed = seed.unwrap_or(cfg.seed);
            let r = commands::cmd_train(&data, &cfg, max_sequences, &out, &mut io::stdout())?;
            if let Some(last) = r.history.iter().rfind(|e| e.layer == 0) {
                eprintln!("layer 0 loss {:.6} -> {:.6}", r.initial_loss, last.loss);
            }
        }
        Verb::Summarize {
            data,
            model,
            config,
            out,
        } => {
            let cfg: SummarizeConfig = load(config.as_deref())?;
            let s = commands::cmd_summarize(&data, &model, &cfg, &out)?;
            eprintln!("scored {} clips to {}", s.clips.len(), out.display());
        }
        Verb::Eval { scores, data, out } => {
            let report = commands::cmd_eval(&scores, &data, out.as_deref(), &mut log)?;
            print_json(&report);
        }
        Verb::Gradcheck { seed, config, out } => {
            let mut cfg: GradcheckConfig = load(config.as_deref())?;
            cfg.seed = seed.unwrap_or(cfg.seed);
            let report = commands::cmd_gradcheck(&cfg, out.as_deref(), &mut log)?;
            println!(
                "{} ({} cases, max relative error {:.3e})",
                if report.passed { "PASS" } else { "FAIL" },
                report.cases.len(),
                report.max_rel_err
            );
            return Ok(report.passed);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse().verb) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
