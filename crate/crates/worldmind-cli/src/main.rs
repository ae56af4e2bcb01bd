//! `worldmind` command-line harness.
//!
//! Subcommands: `run` (learn-then-freeze suite run), `transfer` (evaluate a
//! backend with and without an imported repository), `ablate` (the four
//! experience-flag arms). Outputs land in the chosen directory as
//! report.json / report.csv / repository.json plus per-task trajectory logs.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::fs;
use std::path::{Path, PathBuf};
use worldmind::backends::{ChatBackend, ReqwestTransport, ScriptedBackend, WireBackend};
use worldmind::bench::{
    ablation_run, run_suite, transfer_experiment, BackendFactory, MetricsReport, RunOptions,
    SuiteOutcome, TaskSuite,
};
use worldmind::engine::EpisodeConfig;
use worldmind::repo::Repository;

#[derive(Parser)]
#[command(name = "worldmind", about = "Embodied-agent experience-learning harness", version)]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Run a task suite: learning phase, frozen evaluation, reports.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Initial repository: a repository.json path, or "none".
        #[arg(long, default_value = "none")]
        repo: String,
        /// Interleaved mode: keep learning during evaluation.
        #[arg(long)]
        online: bool,
        /// Parallel eval workers (frozen evaluation only).
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Evaluate backend B twice: empty repository vs one learned elsewhere.
    Transfer {
        /// Repository exported by the source model.
        #[arg(long = "repo-a")]
        repo_a: PathBuf,
        /// Backend under test.
        #[arg(long = "backend-b")]
        backend_b: String,
        #[arg(long)]
        suite: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long = "step-budget", default_value_t = 30)]
        step_budget: u32,
        #[arg(short = 'k', long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the four ablation arms (full, -goal, -process, -both).
    Ablate {
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Suite file (JSON).
    #[arg(long)]
    suite: PathBuf,
    /// Backend spec: scripted:<file> or wire:<model_id>.
    #[arg(long)]
    backend: String,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Disable goal-experience retrieval and learning.
    #[arg(long = "no-goal-exp")]
    no_goal_exp: bool,
    /// Disable process-experience retrieval and learning.
    #[arg(long = "no-process-exp")]
    no_process_exp: bool,
    #[arg(long = "step-budget", default_value_t = 30)]
    step_budget: u32,
    /// Retrieval depth per experience kind.
    #[arg(short = 'k', long, default_value_t = 5)]
    k: usize,
    /// World seed recorded into episode states.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Backend spec parser. Scripted backends are cloneable; wire backends are
/// rebuilt per factory call.
enum BackendSpec {
    Scripted(Box<ScriptedBackend>),
    Wire(String),
}

impl BackendSpec {
    fn parse(spec: &str) -> Result<Self> {
        if let Some(path) = spec.strip_prefix("scripted:") {
            let backend = ScriptedBackend::load(Path::new(path))
                .with_context(|| format!("loading scripted backend {path}"))?;
            Ok(BackendSpec::Scripted(Box::new(backend)))
        } else if let Some(model_id) = spec.strip_prefix("wire:") {
            Ok(BackendSpec::Wire(model_id.to_string()))
        } else {
            bail!("backend spec must be scripted:<file> or wire:<model_id>, got {spec:?}")
        }
    }

    fn factory(&self) -> impl Fn() -> Box<dyn ChatBackend> + Sync + '_ {
        move || match self {
            BackendSpec::Scripted(backend) => Box::new((**backend).clone()),
            BackendSpec::Wire(model_id) => Box::new(
                WireBackend::<ReqwestTransport>::from_env(model_id.clone())
                    .expect("WORLDMIND_API_BASE must be set for wire backends"),
            ),
        }
    }
}

fn episode_config(common: &CommonArgs) -> EpisodeConfig {
    EpisodeConfig {
        step_budget: common.step_budget,
        retrieval_k: common.k,
        use_process: !common.no_process_exp,
        use_goal: !common.no_goal_exp,
        ..EpisodeConfig::default()
    }
}

fn write_outputs(out: &Path, outcome: &SuiteOutcome) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join("report.json"), outcome.report.to_json())?;
    fs::write(out.join("report.csv"), outcome.report.to_csv())?;
    fs::write(out.join("repository.json"), outcome.repository.export())?;
    let traj_dir = out.join("trajectories");
    fs::create_dir_all(&traj_dir)?;
    for (task_id, trajectory) in &outcome.trajectories {
        fs::write(traj_dir.join(format!("{task_id}.jsonl")), trajectory.to_jsonl())?;
    }
    Ok(())
}

fn print_summary(label: &str, report: &MetricsReport) {
    println!(
        "{label}: sr_mean={:.3} gc_mean={:.3} | success={} invalid={} timeout={} wrong_term={} aborted={}",
        report.sr_mean,
        report.gc_mean,
        report.histogram.success,
        report.histogram.invalid_actions,
        report.histogram.timeout,
        report.histogram.wrong_termination,
        report.histogram.aborted
    );
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Commands::Run {
            common,
            repo,
            online,
            jobs,
        } => {
            let suite = TaskSuite::load(&common.suite)?;
            let spec = BackendSpec::parse(&common.backend)?;
            let repository = if repo == "none" {
                Repository::new()
            } else {
                Repository::load(Path::new(&repo)).context("loading initial repository")?
            };
            let options = RunOptions {
                config: episode_config(&common),
                jobs,
                online,
                seed: common.seed,
                backend_desc: common.backend.clone(),
            };
            let factory = spec.factory();
            let factory_ref: BackendFactory = &factory;
            let outcome = run_suite(&suite, &options, factory_ref, repository)?;
            write_outputs(&common.out, &outcome)?;
            print_summary(&suite.name, &outcome.report);
            println!("wrote {}", common.out.display());
        }
        Commands::Transfer {
            repo_a,
            backend_b,
            suite,
            out,
            step_budget,
            k,
            seed,
        } => {
            let suite = TaskSuite::load(&suite)?;
            let spec = BackendSpec::parse(&backend_b)?;
            let imported = Repository::load(&repo_a).context("loading repository A")?;
            let options = RunOptions {
                config: EpisodeConfig {
                    step_budget,
                    retrieval_k: k,
                    ..EpisodeConfig::default()
                },
                jobs: 1,
                online: false,
                seed,
                backend_desc: backend_b.clone(),
            };
            let factory = spec.factory();
            let factory_ref: BackendFactory = &factory;
            let transfer = transfer_experiment(imported, &suite, &options, factory_ref)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("report_baseline.json"), transfer.baseline.to_json())?;
            fs::write(out.join("report_baseline.csv"), transfer.baseline.to_csv())?;
            fs::write(
                out.join("report_transfer.json"),
                transfer.with_imported.to_json(),
            )?;
            fs::write(out.join("report_transfer.csv"), transfer.with_imported.to_csv())?;
            let delta = serde_json::json!({
                "sr_delta": transfer.sr_delta,
                "gc_delta": transfer.gc_delta,
            });
            fs::write(
                out.join("delta.json"),
                format!("{}\n", serde_json::to_string_pretty(&delta)?),
            )?;
            print_summary("baseline", &transfer.baseline);
            print_summary("with imported repo", &transfer.with_imported);
            println!(
                "delta: sr {:+.3} gc {:+.3}",
                transfer.sr_delta, transfer.gc_delta
            );
        }
        Commands::Ablate { common } => {
            let suite = TaskSuite::load(&common.suite)?;
            let spec = BackendSpec::parse(&common.backend)?;
            let options = RunOptions {
                config: episode_config(&common),
                jobs: 1,
                online: false,
                seed: common.seed,
                backend_desc: common.backend.clone(),
            };
            let factory = spec.factory();
            let factory_ref: BackendFactory = &factory;
            let ablation = ablation_run(&suite, &options, factory_ref)?;
            fs::create_dir_all(&common.out)?;
            fs::write(common.out.join("ablation.csv"), ablation.to_csv())?;
            for (arm, report) in &ablation.rows {
                let slug = arm.replace('-', "no_");
                fs::write(
                    common.out.join(format!("report_{slug}.json")),
                    report.to_json(),
                )?;
                print_summary(arm, report);
            }
        }
    }
    Ok(())
}
