mod config;
mod log;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Args, Parser, Subcommand};

use config::RunConfig;

/// Fluid bolus response prediction pipeline. Each subcommand runs one stage
/// and hands off through files in the output directory.
#[derive(Parser)]
#[command(name = "fbt", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Flat `key = value` config file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed for generation, splitting and training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for every artifact and log (default `out`).
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Series length: 12, 36 or 72.
    #[arg(long, global = true)]
    timesteps: Option<String>,
    /// lasso, ridge, mlp, lstm, gru, lstm_attn or gru_attn.
    #[arg(long, global = true)]
    algorithm: Option<String>,
    /// raw or distributed.
    #[arg(long, global = true)]
    representation: Option<String>,
    /// time_aggregated or time_series.
    #[arg(long, global = true)]
    setting: Option<String>,
    /// Override any config key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, global = true, value_name = "FILE")]
    patients: Option<PathBuf>,
    #[arg(long, global = true, value_name = "FILE")]
    events: Option<PathBuf>,
    #[arg(long, global = true, value_name = "FILE")]
    cohort: Option<PathBuf>,
    #[arg(long, global = true, value_name = "FILE")]
    features: Option<PathBuf>,
    #[arg(long, global = true, value_name = "FILE")]
    split: Option<PathBuf>,
    #[arg(long, global = true, value_name = "FILE")]
    model: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic cohort: patients.csv, events.csv, manifest.csv.
    Generate {
        #[arg(long)]
        n_patients: Option<usize>,
        /// none, static_sparse or temporal_late.
        #[arg(long)]
        signal_mode: Option<String>,
        #[arg(long)]
        prevalence: Option<f64>,
    },
    /// Validate the input files and write ingest_report.txt.
    Ingest,
    /// Detect first FBT episodes and label them: cohort.csv.
    Cohort,
    /// Build the feature table for the chosen setting and the split.
    Featurize,
    /// Train one model: model_<tag>.json.
    Train,
    /// Score a trained model on the test split: eval_<tag>.json.
    Eval,
    /// Train and score every algorithm × timesteps × representation cell.
    Grid,
    /// Mean attention weight per timestep for an attention model.
    #[command(alias = "plot-data")]
    Attention,
    /// Print the fully resolved configuration.
    Config,
}

fn resolve(g: &GlobalArgs, command: &Command) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &g.config {
        cfg.apply_file(path)?;
    }
    for pair in &g.set {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| anyhow!("--set expects KEY=VALUE, found `{pair}`"))?;
        cfg.set(k, v)?;
    }
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    let flags = [
        ("seed", g.seed.map(|s| s.to_string())),
        ("out_dir", path(&g.out_dir)),
        ("timesteps", g.timesteps.clone()),
        ("algorithm", g.algorithm.clone()),
        ("representation", g.representation.clone()),
        ("setting", g.setting.clone()),
        ("patients", path(&g.patients)),
        ("events", path(&g.events)),
        ("cohort", path(&g.cohort)),
        ("features", path(&g.features)),
        ("split", path(&g.split)),
        ("model", path(&g.model)),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    if let Command::Generate {
        n_patients,
        signal_mode,
        prevalence,
    } = command
    {
        if let Some(n) = n_patients {
            cfg.set("n_patients", &n.to_string())?;
        }
        if let Some(m) = signal_mode {
            cfg.set("signal_mode", m)?;
        }
        if let Some(p) = prevalence {
            cfg.set("prevalence", &p.to_string())?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve(&cli.global, &cli.command)?;
    match cli.command {
        Command::Generate { .. } => stages::generate_cmd(&cfg),
        Command::Ingest => stages::ingest_cmd(&cfg),
        Command::Cohort => stages::cohort_cmd(&cfg),
        Command::Featurize => stages::featurize_cmd(&cfg),
        Command::Train => stages::train_cmd(&cfg),
        Command::Eval => stages::eval_cmd(&cfg),
        Command::Grid => stages::grid_cmd(&cfg),
        Command::Attention => stages::attention_cmd(&cfg),
        Command::Config => {
            print!("{}", cfg.to_text());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
