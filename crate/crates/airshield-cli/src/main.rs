//! AirShield pipeline CLI: emulate wireless telemetry, poison it with FGSM,
//! attribute and detect the poisoning, export instruction-tuning data, and
//! evaluate an LLM endpoint (or the offline mock) on the incident.

mod config;
mod report;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;
use stages::StageError;

#[derive(Parser)]
#[command(name = "airshield", version, about = "Adversarial wireless telemetry pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the report directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the gateway backend (mock | remote).
    #[arg(long)]
    backend: Option<String>,
}

#[derive(Args)]
struct TrainRegressorArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Refit on the perturbed features from labeled.csv instead of the clean
    /// records; writes regressor_poisoned.txt.
    #[arg(long)]
    poisoned: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic scene and write records.csv.
    Emulate(CommonArgs),
    /// Fit the path-loss regressor and write regressor.txt.
    TrainRegressor(TrainRegressorArgs),
    /// Poison the records and write labeled.csv plus degradation.txt.
    Attack(CommonArgs),
    /// Compute Shapley attributions and write the attribution CSVs.
    Attribute(CommonArgs),
    /// Train the benign/malicious detector and write detector.txt.
    TrainDetector(CommonArgs),
    /// Score the detector on the test split and write detector_metrics.txt.
    Evaluate(CommonArgs),
    /// Export instruction-tuning JSONL files for the train/test splits.
    ExportSft(CommonArgs),
    /// Classify the test split through the configured LLM backend.
    ClassifyLlm(CommonArgs),
    /// Run the three explainability prompts against one incident.
    Explain(CommonArgs),
    /// Run every stage in order and write the incident report.
    RunExperiment(CommonArgs),
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::TrainRegressor(a) => &a.common,
            Command::Emulate(a)
            | Command::Attack(a)
            | Command::Attribute(a)
            | Command::TrainDetector(a)
            | Command::Evaluate(a)
            | Command::ExportSft(a)
            | Command::ClassifyLlm(a)
            | Command::Explain(a)
            | Command::RunExperiment(a) => a,
        }
    }
}

fn load_config(args: &CommonArgs) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| format!("cannot read config {}: {e}", args.config.display()))?;
    let mut cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| format!("bad config: {e}"))?;
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.report_dir = out.clone();
    }
    if let Some(backend) = &args.backend {
        let kind = match backend.as_str() {
            "mock" => airshield_gateway::BackendKind::Mock,
            "remote" => airshield_gateway::BackendKind::Remote,
            other => return Err(format!("unknown backend `{other}` (expected mock|remote)")),
        };
        match &mut cfg.gateway {
            Some(gw) => gw.backend = kind,
            None => {
                let mut gw = airshield_gateway::GatewayConfig::mock();
                gw.backend = kind;
                cfg.gateway = Some(gw);
            }
        }
    }
    cfg.cascade_seeds();
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(command: &Command, cfg: &ExperimentConfig) -> Result<(), StageError> {
    match command {
        Command::Emulate(_) => {
            let n = stages::stage_emulate(cfg)?;
            eprintln!("emulate: {n} records");
            Ok(())
        }
        Command::TrainRegressor(args) => {
            if args.poisoned {
                let (mse, r2) = stages::stage_train_regressor_poisoned(cfg)?;
                eprintln!(
                    "train-regressor --poisoned: clean-data mse = {mse:.4}, r_squared = {r2:.4}"
                );
                Ok(())
            } else {
                stages::stage_train_regressor(cfg)
            }
        }
        Command::Attack(_) => {
            let report = stages::stage_attack(cfg)?;
            eprintln!(
                "attack: delta_mse_pct = {:.3}, delta_r2_pct = {:.3}",
                report.delta_mse_pct, report.delta_r2_pct
            );
            Ok(())
        }
        Command::Attribute(_) => stages::stage_attribute(cfg).map(|_| ()),
        Command::TrainDetector(_) => stages::stage_train_detector(cfg),
        Command::Evaluate(_) => {
            let m = stages::stage_evaluate(cfg)?;
            eprintln!(
                "evaluate: macro precision = {:.4}, recall = {:.4}, f1 = {:.4}",
                m.precision, m.recall, m.f1
            );
            Ok(())
        }
        Command::ExportSft(_) => stages::stage_export_sft(cfg).map(|_| ()),
        Command::ClassifyLlm(_) => {
            let eval = stages::stage_classify_llm(cfg)?;
            eprintln!(
                "classify-llm: macro f1 = {:.4}, unparseable = {}, transport failures = {}",
                eval.macro_metrics.f1, eval.unparseable_count, eval.transport_failure_count
            );
            Ok(())
        }
        Command::Explain(_) => stages::stage_explain(cfg),
        Command::RunExperiment(_) => report::run_experiment(cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load_config(cli.command.common()) {
        Ok(cfg) => cfg,
        Err(message) => {
            eprintln!("config error: {message}");
            return ExitCode::from(2);
        }
    };
    match dispatch(&cli.command, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.stage.exit_code())
        }
    }
}
