//! Pipeline command line: synth -> filter -> select -> score over JSON
//! Lines files, with a run manifest next to every output.
//!
//! Exit codes: 0 on success, 1 for stage errors, 2 for config errors.

mod config;
mod manifest;
mod stages;
mod util;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::PipelineConfig;
use manifest::{RunManifest, StageReport};

#[derive(Debug, Parser)]
#[command(name = "planforge", version, about = "Planning-data synthesis, verification, and scoring pipelines")]
struct Cli {
    /// Pipeline configuration file (JSON). Built-in defaults otherwise.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed, overriding the config value.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for stage-internal parallelism.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Directory for remote-backend response caching.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct OutArg {
    /// Output file (JSON Lines unless noted).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize task-decomposition plan samples.
    SynthPlans {
        #[arg(long)]
        count: Option<usize>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Synthesize golden-plan tool-call trajectories.
    SynthTrajectories {
        #[arg(long)]
        count: Option<usize>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Generate accepted scheduling instances with canonical answers.
    SynthSchedules {
        /// trip, meeting, or calendar.
        #[arg(long)]
        domain: Option<String>,
        #[arg(long)]
        count: Option<usize>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Build workflow DAG samples with distractor candidates.
    SynthWorkflows {
        #[arg(long)]
        count: Option<usize>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Construct long-horizon tasks, seed trajectories, and scaled samples.
    SynthLonghorizon {
        #[arg(long)]
        count: Option<usize>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Remove near-duplicate samples from a JSON Lines corpus.
    Dedup {
        #[arg(long, value_name = "FILE")]
        r#in: PathBuf,
        /// Hamming threshold in [0, 64].
        #[arg(long)]
        threshold: Option<u32>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Novelty-greedy subset selection over an embedding matrix.
    Select {
        /// Embedding file (row-major f32 with a .meta.json sidecar).
        #[arg(long, value_name = "FILE")]
        r#in: PathBuf,
        #[arg(long)]
        budget: Option<usize>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Score samples against gold standards with the rule-based reward.
    Score {
        /// decomposition, tool_plan, scheduling, workflow, or long_horizon.
        #[arg(long)]
        task: String,
        #[arg(long, value_name = "FILE")]
        r#in: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// Chain/graph F1 between predicted and gold workflow graphs.
    EvalF1 {
        #[arg(long, value_name = "FILE")]
        r#in: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// Evaluate objective formulas on a JSON input file.
    MathCheck {
        #[arg(long, value_name = "FILE")]
        r#in: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<(PipelineConfig, String), String> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
            serde_json::from_str::<PipelineConfig>(&text)
                .map_err(|e| format!("invalid config {}: {e}", path.display()))?
        }
        None => PipelineConfig::fallback(0),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let canonical = serde_json::to_string(&config).expect("config serializes");
    Ok((config, canonical))
}

fn run(cli: &Cli, config: &PipelineConfig) -> anyhow::Result<(StageReport, PathBuf)> {
    let generator = config.generator(cli.cache_dir.as_ref());
    let embedder = config.embedder(cli.cache_dir.as_ref());
    match &cli.command {
        Command::SynthPlans { count, out } => {
            let count = count.unwrap_or(config.synth_plans.count);
            Ok((
                stages::synth::synth_plans(config, &*generator, count, &out.out)?,
                out.out.clone(),
            ))
        }
        Command::SynthTrajectories { count, out } => {
            let count = count.unwrap_or(config.synth_trajectories.count);
            Ok((
                stages::synth::synth_trajectories(config, &*generator, &*embedder, count, &out.out)?,
                out.out.clone(),
            ))
        }
        Command::SynthSchedules { domain, count, out } => {
            let count = count.unwrap_or(config.synth_schedules.count);
            Ok((
                stages::schedules::synth_schedules(
                    config,
                    domain.as_deref(),
                    count,
                    cli.jobs,
                    &out.out,
                )?,
                out.out.clone(),
            ))
        }
        Command::SynthWorkflows { count, out } => {
            let count = count.unwrap_or(config.synth_workflows.count);
            Ok((
                stages::synth::synth_workflows(config, count, &out.out)?,
                out.out.clone(),
            ))
        }
        Command::SynthLonghorizon { count, out } => {
            let count = count.unwrap_or(config.synth_longhorizon.count);
            Ok((
                stages::longhorizon::synth_longhorizon(
                    config, &*generator, &*embedder, count, &out.out,
                )?,
                out.out.clone(),
            ))
        }
        Command::Dedup { r#in, threshold, out } => Ok((
            stages::data::run_dedup(config, r#in, *threshold, &out.out)?,
            out.out.clone(),
        )),
        Command::Select { r#in, budget, out } => Ok((
            stages::data::run_select(config, r#in, *budget, &out.out)?,
            out.out.clone(),
        )),
        Command::Score { task, r#in, out } => Ok((
            stages::scoring::run_score(config, &*embedder, task, r#in, cli.jobs, &out.out)?,
            out.out.clone(),
        )),
        Command::EvalF1 { r#in, out } => Ok((
            stages::scoring::run_eval_f1(config, &*embedder, r#in, cli.jobs, &out.out)?,
            out.out.clone(),
        )),
        Command::MathCheck { r#in, out } => {
            let report = stages::scoring::run_math_check(config, r#in, out.as_deref())?;
            let manifest_anchor = out.clone().unwrap_or_else(|| r#in.clone());
            Ok((report, manifest_anchor))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (config, canonical) = match load_config(&cli) {
        Ok(pair) => pair,
        Err(message) => {
            eprintln!("config error: {message}");
            return ExitCode::from(2);
        }
    };
    match run(&cli, &config) {
        Ok((report, out)) => {
            let stage = report.stage.clone();
            let emitted = report.emitted;
            let dropped = report.dropped;
            let manifest = RunManifest::single_stage(&canonical, config.seed, report);
            if let Err(e) = manifest.write_next_to(&out) {
                eprintln!("stage error: cannot write manifest: {e}");
                return ExitCode::from(1);
            }
            eprintln!("{stage}: emitted {emitted}, dropped {dropped}");
            ExitCode::SUCCESS
        }
        Err(error) => {
            let stage = stage_name(&cli.command);
            eprintln!("stage error in {stage}: {error:#}");
            ExitCode::from(1)
        }
    }
}

fn stage_name(command: &Command) -> &'static str {
    match command {
        Command::SynthPlans { .. } => "synth-plans",
        Command::SynthTrajectories { .. } => "synth-trajectories",
        Command::SynthSchedules { .. } => "synth-schedules",
        Command::SynthWorkflows { .. } => "synth-workflows",
        Command::SynthLonghorizon { .. } => "synth-longhorizon",
        Command::Dedup { .. } => "dedup",
        Command::Select { .. } => "select",
        Command::Score { .. } => "score",
        Command::EvalF1 { .. } => "eval-f1",
        Command::MathCheck { .. } => "math-check",
    }
}
