//! `sedkit` command-line front end: corpus generation, augmentation dumps,
//! training, evaluation and ablation grids.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "sedkit", version, about = "Semi-supervised sound event detection experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Configuration shared by every subcommand. Precedence: `--set` and named flags, then `--config`, then defaults.
#[derive(Debug, Args, Default)]
pub struct ConfigArgs {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one key, e.g. `--set epochs=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub method: Option<String>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let mut pairs = Vec::new();
        for s in &self.set {
            let (k, v) = s.split_once('=').ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{s}`")))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        if let Some(seed) = self.seed {
            pairs.push(("seed".into(), seed.to_string()));
        }
        if let Some(m) = &self.method {
            pairs.push(("method".into(), m.clone()));
        }
        if let Some(e) = self.epochs {
            pairs.push(("epochs".into(), e.to_string()));
        }
        cfg.apply_pairs(&pairs)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic corpus.
    SynthData {
        #[arg(long)]
        out: PathBuf,
        /// Replace an existing dataset directory.
        #[arg(long)]
        force: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Apply one sampled augmentation policy per clip and dump audio, labels and policies.
    Augment {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "train_strong")]
        split: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        epoch: u64,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train one model.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Score a checkpoint on a split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Score the EMA teacher instead of the student.
        #[arg(long)]
        use_teacher: bool,
        #[arg(long, default_value_t = 0.45)]
        median_s: f64,
        /// JSON report path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an ablation grid over all configured seeds.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        table: u8,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::SynthData { out, force, cfg } => {
            let ds = commands::synth_data(&cfg.resolve()?, &out, force)?;
            println!("wrote {} clips to {}", ds.n_clips(), out.display());
        }
        Command::Augment { data, split, out, epoch, cfg } => {
            let n = commands::augment(&cfg.resolve()?, &data, &split, &out, epoch)?;
            println!("augmented {n} clips into {}", out.display());
        }
        Command::Train { data, out, cfg } => {
            let s = commands::train_cmd(&cfg.resolve()?, &data, &out)?;
            println!("test collar F1 {:.4} (seed {})", s.test_collar_f1, s.seed);
        }
        Command::Evaluate { checkpoint, data, split, use_teacher, median_s, out } => {
            let report = commands::evaluate_cmd(&checkpoint, &data, &split, use_teacher, median_s, out.as_deref())?;
            print!("{}", report.to_table(None));
        }
        Command::Ablate { data, out, table, cfg } => {
            let rows = commands::ablate(&cfg.resolve()?, &data, &out, table)?;
            print!("{}", commands::table_text(&rows));
        }
    }
    Ok(())
}
