//! `sursmr`: command-line front end for ratio aggregation, proxy labelling,
//! training, evaluation and prediction. Every command prints its report as
//! JSON on stdout and exits non-zero on any error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sursmr_core::commands::{self, DataArgs, Phase};
use sursmr_core::io::{load_run_config, RunConfig, CONFIG_ENV};
use sursmr_core::labelgen::BuiltinScorer;
use sursmr_core::model::Variant;
use sursmr_core::quality::{MachinePopulation, RatioKind};
use sursmr_core::train::{GradModule, GradcheckConfig, Precision, SyntheticSpec};
use sursmr_core::{Error, Exec};

#[derive(Parser)]
#[command(name = "sursmr", version, about = "Satisfied user / machine ratio toolkit")]
struct Cli {
    /// TOML run configuration (falls back to the environment variable).
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Seed override for the command's randomness.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 runs single-threaded (bit-reproducible either way).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Numeric precision; only "double" is supported.
    #[arg(long, global = true)]
    precision: Option<Precision>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Data {
    #[arg(long)]
    manifest: PathBuf,
    /// SUR targets: proxy-label or ratio-curve file.
    #[arg(long)]
    sur: Option<PathBuf>,
    /// SMR targets: ratio-curve file.
    #[arg(long)]
    smr: Option<PathBuf>,
    /// Split assignment file; drawn from the config when absent.
    #[arg(long)]
    split: Option<PathBuf>,
}

impl Data {
    fn args(&self) -> DataArgs {
        DataArgs {
            manifest: self.manifest.clone(),
            sur: self.sur.clone(),
            smr: self.smr.clone(),
            split: self.split.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Per-rung satisfaction ratios from binary records.
    Aggregate {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// sur (human records) or smr (machine records).
        #[arg(long)]
        kind: RatioKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Threshold-plus-noise machine verdicts for every ladder.
    SimulateMachines {
        #[arg(long)]
        manifest: PathBuf,
        /// Per-machine rung thresholds, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        thresholds: Vec<u32>,
        #[arg(long, default_value_t = 0.0)]
        flip_rate: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Built-in full-reference scores for every rung.
    Score {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "psnr,ssim")]
        scorers: Vec<BuiltinScorer>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Proxy SUR labels from external and/or built-in scores.
    Labelgen {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        scores: Option<PathBuf>,
        /// Built-in scorers computed from the manifest images.
        #[arg(long, value_delimiter = ',')]
        builtin: Vec<BuiltinScorer>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ladder-level train/val/test assignment.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Joint training on proxy SUR + SMR targets.
    Pretrain(TrainCmd),
    /// Training on ground-truth targets, optionally from a checkpoint.
    Finetune(TrainCmd),
    /// Metrics and predictions of a checkpoint on one split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: Data,
        /// train, val, test or all.
        #[arg(long, default_value = "test")]
        part: String,
        /// Require the checkpoint to hold this variant.
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long)]
        out: PathBuf,
    },
    /// SUR/SMR predictions for every rung of a manifest.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trains and tests each architecture variant under one config.
    Ablate {
        #[command(flatten)]
        data: Data,
        #[arg(long, value_delimiter = ',')]
        variants: Vec<Variant>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of every module's analytic gradients.
    Gradcheck {
        #[arg(long, value_delimiter = ',')]
        modules: Vec<GradModule>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Writes a synthetic ladder corpus with records and scores.
    Synth {
        #[arg(long, default_value_t = 8)]
        ladders: usize,
        #[arg(long, default_value_t = 6)]
        rungs: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0.0)]
        flip_rate: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct TrainCmd {
    #[command(flatten)]
    data: Data,
    /// Checkpoint to warm-start from.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Overrides the configured model variant.
    #[arg(long)]
    variant: Option<Variant>,
    /// Output directory for checkpoint.json and report.json.
    #[arg(long)]
    out: PathBuf,
}

fn print<T: Serialize>(report: &T) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(report)?;
    println!("{text}");
    Ok(())
}

fn train(phase: Phase, cmd: &TrainCmd, cfg: &mut RunConfig, path: Option<&Path>, exec: Exec) -> Result<(), Error> {
    if let Some(v) = cmd.variant {
        cfg.model.variant = v;
    }
    let report = commands::train(phase, &cmd.data.args(), cmd.init.as_deref(), cfg, path, &cmd.out, exec)?;
    print(&report)
}

fn run(cli: Cli) -> Result<(), Error> {
    let (mut cfg, path) = load_run_config(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.train.seed = s;
        cfg.split.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.train.workers = w;
    }
    if let Some(p) = cli.precision {
        cfg.train.precision = p;
    }
    let seed = cli.seed.unwrap_or(cfg.train.seed);
    Exec::with_workers(cfg.train.workers, |exec| match &cli.command {
        Command::Aggregate { records, manifest, kind, out } => print(&commands::aggregate(records, manifest, *kind, out)?),
        Command::SimulateMachines {
            manifest,
            thresholds,
            flip_rate,
            out,
        } => {
            let pop = MachinePopulation::new(thresholds.clone(), *flip_rate);
            print(&commands::simulate_machines(manifest, &pop, seed, out)?)
        }
        Command::Score { manifest, scorers, out } => {
            print(&commands::score(manifest, scorers, &cfg.labelgen, out, exec)?)
        }
        Command::Labelgen {
            manifest,
            scores,
            builtin,
            out,
        } => print(&commands::labelgen(manifest, scores.as_deref(), builtin, &cfg.labelgen, out, exec)?),
        Command::Split { manifest, out } => print(&commands::split(manifest, &cfg.split, out)?),
        Command::Pretrain(cmd) => train(Phase::Pretrain, cmd, &mut cfg.clone(), path.as_deref(), exec),
        Command::Finetune(cmd) => train(Phase::Finetune, cmd, &mut cfg.clone(), path.as_deref(), exec),
        Command::Evaluate {
            checkpoint,
            data,
            part,
            variant,
            out,
        } => print(&commands::evaluate_checkpoint(checkpoint, &data.args(), part, *variant, &cfg, out, exec)?),
        Command::Predict {
            checkpoint,
            manifest,
            variant,
            out,
        } => print(&commands::predict(checkpoint, manifest, *variant, out, exec)?),
        Command::Ablate { data, variants, out } => {
            let variants = if variants.is_empty() {
                Variant::ABLATIONS.to_vec()
            } else {
                variants.clone()
            };
            print(&commands::ablate(&data.args(), &variants, &cfg, out, exec)?)
        }
        Command::Gradcheck { modules, out } => {
            let modules = if modules.is_empty() {
                GradModule::ALL.to_vec()
            } else {
                modules.clone()
            };
            let config = GradcheckConfig {
                seed,
                ..Default::default()
            };
            print(&commands::gradcheck(&modules, &config, out.as_deref())?)
        }
        Command::Synth {
            ladders,
            rungs,
            size,
            flip_rate,
            out,
        } => {
            let spec = SyntheticSpec {
                ladders: *ladders,
                rungs: *rungs,
                width: *size,
                height: *size,
                flip_rate: *flip_rate,
                seed,
                ..Default::default()
            };
            print(&commands::synth(&spec, out, exec)?)
        }
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
