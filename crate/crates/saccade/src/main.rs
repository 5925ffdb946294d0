use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use saccade::config::RunConfig;
use saccade::error::{Error, Result};
use saccade::run::{self, EvalTarget};
use saccade_core::data::Split;
use saccade_core::scanpath::{AnalyzeConfig, DEFAULT_THRESHOLD};

#[derive(Parser)]
#[command(name = "saccade", version, about = "Hard visual attention lab: train, evaluate and trace RAM/DRAM/MRAM")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Flat key = value configuration file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one config key (repeatable), e.g. `--set model=ram`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(self.set.iter().map(String::as_str))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(clap::Args)]
struct TargetArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Dataset root (defaults to $SACCADE_DATA, then ./data).
    #[arg(long)]
    data_root: Option<PathBuf>,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    /// Training subset size used when the checkpoint was trained (0 = all).
    #[arg(long, default_value_t = 0)]
    train_limit: usize,
    #[arg(long, default_value_t = 0.1)]
    val_fraction: f64,
}

impl TargetArgs {
    fn target(&self, limit: usize) -> EvalTarget {
        let root = RunConfig {
            data_root: self.data_root.clone(),
            ..RunConfig::default()
        }
        .data_root();
        EvalTarget {
            data_root: root,
            split: self.split.into(),
            limit,
            batch_size: self.batch_size,
            train_limit: self.train_limit,
            val_fraction: self.val_fraction,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model; writes a per-run directory of artifacts.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Run directory (default: <output_dir>/<timestamp>-<config hash>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Accuracy, parameter count and inference time of a checkpoint.
    Eval {
        #[command(flatten)]
        target: TargetArgs,
        /// Evaluate only the first N images (0 = all).
        #[arg(long, default_value_t = 0)]
        limit: usize,
        #[arg(long)]
        json: bool,
    },
    /// Write episode traces of a checkpoint as JSON lines.
    Trace {
        #[command(flatten)]
        target: TargetArgs,
        #[arg(long, short = 'n', default_value_t = 100)]
        n_images: usize,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Fixation/saccade statistics of a trace log.
    Analyze {
        traces: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        /// KDE bandwidth, or `auto` for Scott's rule.
        #[arg(long, default_value = "auto")]
        bandwidth: String,
        /// Also report per class label.
        #[arg(long)]
        by_label: bool,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Train or reuse a matrix of configurations and print a results table.
    Compare {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// One line of `key=value` overrides per table row.
        matrix: PathBuf,
        /// Also write the table here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let mut stderr = std::io::stderr();
    match cli.cmd {
        Cmd::Train { cfg, out } => {
            let summary = run::train(&cfg.resolve()?, out, &mut stderr)?;
            println!("{}", summary.run_dir.display());
        }
        Cmd::Eval { target, limit, json } => {
            let r = run::eval(&target.checkpoint, &target.target(limit))?;
            if json {
                println!("{}", serde_json::to_string_pretty(&r).map_err(|e| Error::Format(e.to_string()))?);
            } else {
                println!("model\t{}", r.model);
                println!("dataset\t{} ({}, {} images)", r.dataset, r.split, r.images);
                println!("params\t{}", r.params);
                println!("accuracy\t{:.4}", r.accuracy);
                println!("ms_per_image\t{:.3}", r.ms_per_image);
            }
        }
        Cmd::Trace { target, n_images, out } => {
            let n = run::trace(&target.checkpoint, &target.target(0), n_images, &out)?;
            eprintln!("wrote {n} traces to {}", out.display());
        }
        Cmd::Analyze {
            traces,
            threshold,
            bandwidth,
            by_label,
            out,
        } => {
            let bandwidth = match bandwidth.as_str() {
                "auto" => None,
                v => Some(
                    v.parse::<f64>()
                        .map_err(|_| Error::Usage(format!("bandwidth must be a number or 'auto', got '{v}'")))?,
                ),
            };
            let cfg = AnalyzeConfig {
                threshold,
                bandwidth,
                ..AnalyzeConfig::default()
            };
            let r = run::analyze(&traces, &cfg, by_label, &out)?;
            let s = &r.summary;
            println!(
                "{} paths, {} fixations: mean duration {:.3}, median {:.1}; mean saccade {:.3} px; mixed {:.3}",
                s.paths, s.fixations, s.mean_duration, s.median_duration, s.mean_distance, s.mixed_fraction
            );
        }
        Cmd::Compare { cfg, matrix, out } => {
            let base = cfg.resolve()?;
            let text = std::fs::read_to_string(&matrix).map_err(|e| Error::io(&matrix, e))?;
            let table = run::compare(&base, &text, &mut stderr)?;
            print!("{table}");
            if let Some(p) = out {
                std::fs::write(&p, &table).map_err(|e| Error::io(&p, e))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { saccade::error::EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
