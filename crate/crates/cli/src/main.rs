mod commands;
mod engine;
mod error;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand};

use commands::{AblateArgs, BenchArgs, BuildArgs, DpArgs, EvaluateArgs, FlopsArgs, RetrieveArgs, ScenarioArg, UpdateArgs};
use engine::RetrieverKind;
use error::CliError;

/// Generative, dense and sparse retrieval over a corpus that grows in time.
#[derive(Debug, Parser)]
#[command(name = "dynir", version, arg_required_else_help = true)]
struct Cli {
    /// Seed for every randomized component.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Index a corpus slice and train the retriever on it.
    Build(BuildArgs),
    /// Add unindexed documents without touching model parameters.
    UpdateIndex(UpdateArgs),
    /// Continue training on a corpus slice, re-indexing where required.
    UpdateModel(UpdateArgs),
    /// Query a saved index.
    Retrieve(RetrieveArgs),
    /// Run one scenario end to end and write a JSON/CSV report.
    Evaluate(EvaluateArgs),
    /// Compare retrievers with and without the query date prefix.
    Ablate(AblateArgs),
    /// Analytic inference FLOPs from a cost model config.
    Flops(FlopsArgs),
    /// Indexing time, storage and latency at one or more index sizes.
    Bench(BenchArgs),
    /// Dynamic-parameter selection between two parameter snapshots.
    DpAnalyze(DpArgs),
}

impl Command {
    /// Cross-flag checks clap cannot express.
    fn validate(&self) -> Result<(), String> {
        match self {
            Command::Build(a) => a.retriever.validate(),
            Command::Evaluate(a) => {
                a.retriever.validate()?;
                if a.eval.scenario != ScenarioArg::Static && a.eval.new_queries.is_none() {
                    return Err("--new-queries is required unless --scenario static".into());
                }
                if a.eval.initial_queries.is_none() {
                    return Err("--initial-queries is required".into());
                }
                Ok(())
            }
            Command::Ablate(a) => {
                if a.retrievers.contains(&RetrieverKind::GrMultiview) && a.tuning.pseudo.is_none() {
                    return Err("gr-multiview requires --pseudo".into());
                }
                if !a.synthetic {
                    if a.eval.initial_queries.is_none() {
                        return Err("--initial-queries is required without --synthetic".into());
                    }
                    if a.eval.scenario != ScenarioArg::Static && a.eval.new_queries.is_none() {
                        return Err("--new-queries is required unless --scenario static".into());
                    }
                }
                Ok(())
            }
            Command::Bench(a) => a.retriever.validate(),
            Command::DpAnalyze(a) if !(a.percentile > 0.0 && a.percentile < 100.0) => {
                Err("--percentile must lie strictly between 0 and 100".into())
            }
            _ => Ok(()),
        }
    }

    /// Where the command's report goes, if it writes one to disk.
    fn report_path(&self) -> Option<PathBuf> {
        match self {
            Command::Build(a) => Some(commands::build_report_path(a)),
            Command::UpdateIndex(a) => Some(commands::update_report_path(a, "update-index")),
            Command::UpdateModel(a) => Some(commands::update_report_path(a, "update-model")),
            Command::Retrieve(a) => a.out.clone(),
            Command::Evaluate(a) => Some(a.out.join("report.json")),
            Command::Ablate(a) => Some(a.out.join("ablation.json")),
            Command::Flops(a) => a.out.clone(),
            Command::Bench(a) => Some(a.out.join("bench.json")),
            Command::DpAnalyze(a) => a.out.clone(),
        }
    }

    fn run(&self, seed: u64) -> Result<(), CliError> {
        match self {
            Command::Build(a) => commands::build(a, seed),
            Command::UpdateIndex(a) => commands::update_index(a),
            Command::UpdateModel(a) => commands::update_model(a),
            Command::Retrieve(a) => commands::retrieve(a),
            Command::Evaluate(a) => commands::evaluate(a, seed),
            Command::Ablate(a) => commands::ablate(a, seed),
            Command::Flops(a) => commands::flops(a),
            Command::Bench(a) => commands::bench(a, seed),
            Command::DpAnalyze(a) => commands::dp_analyze(a),
        }
    }
}

fn usage_error(msg: impl std::fmt::Display) -> ! {
    Cli::command().error(ErrorKind::ArgumentConflict, msg).exit()
}

fn init_threads() {
    let Ok(raw) = std::env::var("DYNIR_THREADS") else {
        return;
    };
    match raw.trim().parse::<usize>() {
        Ok(n) if n >= 1 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("DYNIR_THREADS ignored: {e}");
            }
        }
        _ => usage_error(format!("DYNIR_THREADS must be a positive integer, got {raw:?}")),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(msg) = cli.command.validate() {
        usage_error(msg);
    }
    init_threads();
    match cli.command.run(cli.seed) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = serde_json::to_string_pretty(&e.report()).expect("error serializes");
            eprintln!("error: {e}");
            match cli.command.report_path() {
                Some(p) => {
                    if let Err(io) = std::fs::create_dir_all(p.parent().unwrap_or(&p))
                        .and_then(|_| std::fs::write(&p, format!("{body}\n")))
                    {
                        eprintln!("could not write {}: {io}", p.display());
                    }
                }
                None => {
                    let _ = writeln!(std::io::stdout(), "{body}");
                }
            }
            ExitCode::FAILURE
        }
    }
}
