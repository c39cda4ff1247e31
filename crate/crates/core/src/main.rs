use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use flowcast::config::{ExperimentConfig, ModelName};
use flowcast::eval::format_sig6;
use flowcast::experiment::{checkpoint_path, cmd_generate, cmd_predict, cmd_report, cmd_run};
use flowcast::Result;

/// Ride-demand forecasting experiments on a synthetic city grid.
#[derive(Debug, Parser)]
#[command(name = "flowcast", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML experiment config; every key is optional.
    #[arg(long, global = true, env = "FLOWCAST_CONFIG")]
    config: Option<PathBuf>,
    /// Experiment seed (overrides the config).
    #[arg(long, global = true, env = "FLOWCAST_SEED")]
    seed: Option<u64>,
    /// Comma-separated subset of dema,lasso,rnn,gru,lstm.
    #[arg(long, global = true, env = "FLOWCAST_MODELS")]
    models: Option<String>,
    /// Directory holding the dataset and all outputs.
    #[arg(long, global = true, env = "FLOWCAST_WORKDIR")]
    workdir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic request CSV and calendar into the workdir.
    Generate,
    /// Ingest, train every model, evaluate and write the report.
    Run,
    /// Forecast the slot after `--slot` with a saved checkpoint.
    Predict {
        /// Checkpoint file; defaults to the workdir checkpoint of `--model`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Model whose workdir checkpoint to use when `--checkpoint` is absent.
        #[arg(long, default_value = "gru")]
        model: String,
        /// Last observed slot index (needs 3 earlier slots of history).
        #[arg(long)]
        slot: usize,
    },
    /// Print the summary table of the last run.
    Report,
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(models) = &c.models {
        cfg.models = ModelName::parse_list(models)?;
    }
    if let Some(dir) = &c.workdir {
        cfg.workdir = dir.clone();
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    if !matches!(cli.command, Command::Generate) {
        cfg.validate()?;
    }
    match cli.command {
        Command::Generate => {
            cfg.validate_dataset()?;
            let s = cmd_generate(&cfg)?;
            println!(
                "wrote {} requests over {} days ({} slots) with seed {}",
                s.rows, s.n_days, s.n_slots, s.seed
            );
            println!("requests: {}", s.requests.display());
            println!("calendar: {}", s.calendar.display());
        }
        Command::Run => {
            let s = cmd_run(&cfg)?;
            print!("{}", s.report.summary_table());
            println!("report: {}", s.report_dir.display());
            println!("config digest: {}", s.manifest.config_digest);
        }
        Command::Predict {
            checkpoint,
            model,
            slot,
        } => {
            let path = match checkpoint {
                Some(p) => p,
                None => checkpoint_path(&cfg, ModelName::parse(&model)?),
            };
            let f = cmd_predict(&cfg, &path, slot)?;
            println!("# {} forecast for slot {}", f.model.name(), f.target_slot);
            println!("region_id,demand");
            for (r, v) in f.region_ids.iter().zip(&f.values) {
                println!("{r},{}", format_sig6(*v));
            }
        }
        Command::Report => print!("{}", cmd_report(&cfg)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
