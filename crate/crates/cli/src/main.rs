use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use witness_cli::commands::{self, configure_threads};
use witness_cli::{CliError, ExperimentConfig, ExperimentKind};

#[derive(Parser)]
#[command(name = "cvwitness", version, about = "Train and evaluate a hybrid CV entanglement witness")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Build and archive the labeled dataset.
    Dataset(RunArgs),
    /// Train the hybrid model and evaluate it on the test split.
    Train(RunArgs),
    /// Fit the SVM and MLP baselines on engineered and matched features.
    Baselines(RunArgs),
    /// Retrain under each per-layer photon-loss level.
    LossSweep(RunArgs),
    /// Aggregate every metrics.csv below --out into a summary table.
    Report {
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment file; without it the two-mode preset is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed applied to every random stream.
    #[arg(long, value_parser = clap::value_parser!(u64).range(..=witness_cli::config::MAX_SEED))]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Shots per readout setting at evaluation.
    #[arg(long)]
    shots: Option<u32>,
    /// Evaluate with exact probabilities.
    #[arg(long)]
    analytic: bool,
}

impl RunArgs {
    fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::preset(ExperimentKind::TwoMode),
        };
        if let Some(s) = self.seed {
            cfg.override_seed(s);
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        if let Some(n) = self.shots {
            cfg.evaluation.shots = n;
        }
        if self.analytic {
            cfg.evaluation.analytic = true;
        }
        if self.threads == Some(0) {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        cfg.validate()?;
        if let Some(n) = self.threads {
            configure_threads(n);
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.verb {
        Verb::Dataset(a) => {
            let m = commands::cmd_dataset(&a.resolve()?)?;
            println!("labels {:?}, families {:?}", m.label_counts, m.family_counts);
        }
        Verb::Train(a) => {
            let r = commands::cmd_train(&a.resolve()?)?;
            println!("{}", commands::format_summary(std::slice::from_ref(&r.metrics)));
        }
        Verb::Baselines(a) => {
            let r = commands::cmd_baselines(&a.resolve()?)?;
            println!("{}", commands::format_summary(&r.rows));
        }
        Verb::LossSweep(a) => {
            for r in commands::cmd_loss_sweep(&a.resolve()?)? {
                println!(
                    "{:<16} loss {:.3}  acc {:.4} [{:.4}, {:.4}]  AUC {:.4}",
                    r.model, r.loss_p, r.accuracy, r.ci_low, r.ci_high, r.auc
                );
            }
        }
        Verb::Report { out } => {
            let (_, table) = commands::cmd_report(&out)?;
            print!("{table}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
