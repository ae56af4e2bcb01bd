//! Benchmark harness: task suites, the learn-then-freeze protocol, metric
//! aggregation, repository transfer, and ablation arms.
//!
//! Phase 1 runs the learning split sequentially while the repository
//! accumulates; phase 2 freezes the repository and runs the eval split
//! (parallelizable, each worker on a clone of the frozen store). Reports are
//! byte-deterministic for scripted backends: stable row order and floats
//! rounded to three decimals.

use crate::backends::ChatBackend;
use crate::engine::{
    classify_outcome, run_episode, EpisodeConfig, ErrorCategory, Providers, Trajectory,
};
use crate::repo::Repository;
use crate::sim::{build_catalog, load_world_file, SimError};
use crate::types::Goal;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("suite error: {0}")]
    Suite(String),
    #[error("simulation error: {0}")]
    Sim(#[from] SimError),
    #[error("goal error: {0}")]
    Goal(#[from] crate::types::GoalError),
    #[error("repository error: {0}")]
    Repo(#[from] crate::repo::RepoError),
    #[error("online mode requires --jobs 1")]
    OnlineRequiresSequential,
    #[error("repository changed during frozen evaluation")]
    RepositoryMutated,
    #[error("io error: {0}")]
    Io(String),
}

/// One task: a world file plus a goal.
#[derive(Debug, Clone)]
pub struct TaskDef {
    pub id: String,
    pub world: PathBuf,
    pub goal: Goal,
}

#[derive(Debug, Clone, Default)]
pub struct SuiteSplit {
    pub learning: Vec<String>,
    pub eval: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct TaskSuite {
    pub name: String,
    pub tasks: Vec<TaskDef>,
    pub split: SuiteSplit,
}

#[derive(Debug, Deserialize)]
struct SuiteDoc {
    name: String,
    tasks: Vec<TaskDoc>,
    split: SplitDoc,
}

#[derive(Debug, Deserialize)]
struct TaskDoc {
    id: String,
    world: String,
    #[serde(default)]
    goal: Option<Goal>,
    #[serde(default)]
    goal_file: Option<String>,
}

#[derive(Debug, Deserialize)]
struct SplitDoc {
    #[serde(default)]
    learning: Vec<String>,
    eval: Vec<String>,
}

impl TaskSuite {
    /// Loads a suite document; world and goal paths resolve relative to the
    /// suite file's directory. Learning and eval splits must be disjoint and
    /// reference declared task ids.
    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Io(format!("{}: {e}", path.display())))?;
        let doc: SuiteDoc =
            serde_json::from_str(&text).map_err(|e| BenchError::Suite(e.to_string()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));

        let mut tasks = Vec::with_capacity(doc.tasks.len());
        let mut seen = std::collections::HashSet::new();
        for task in doc.tasks {
            if !seen.insert(task.id.clone()) {
                return Err(BenchError::Suite(format!("duplicate task id {:?}", task.id)));
            }
            let goal = match (task.goal, task.goal_file) {
                (Some(goal), None) => goal,
                (None, Some(rel)) => Goal::load(&base.join(rel))?,
                _ => {
                    return Err(BenchError::Suite(format!(
                        "task {:?} needs exactly one of goal or goal_file",
                        task.id
                    )))
                }
            };
            if goal.conditions.is_empty() {
                return Err(BenchError::Suite(format!("task {:?} goal has no conditions", task.id)));
            }
            tasks.push(TaskDef {
                id: task.id,
                world: base.join(task.world),
                goal,
            });
        }

        for id in doc.split.learning.iter().chain(doc.split.eval.iter()) {
            if !tasks.iter().any(|t| &t.id == id) {
                return Err(BenchError::Suite(format!("split references unknown task {id:?}")));
            }
        }
        for id in &doc.split.learning {
            if doc.split.eval.contains(id) {
                return Err(BenchError::Suite(format!(
                    "task {id:?} appears in both learning and eval splits"
                )));
            }
        }

        Ok(Self {
            name: doc.name,
            tasks,
            split: SuiteSplit {
                learning: doc.split.learning,
                eval: doc.split.eval,
            },
        })
    }

    fn task(&self, id: &str) -> &TaskDef {
        self.tasks
            .iter()
            .find(|t| t.id == id)
            .expect("split ids validated at load")
    }
}

/// How a suite run executes.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: EpisodeConfig,
    pub jobs: usize,
    /// Interleaved mode: learning stays enabled through the eval split.
    pub online: bool,
    pub seed: u64,
    pub backend_desc: String,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            config: EpisodeConfig::default(),
            jobs: 1,
            online: false,
            seed: 0,
            backend_desc: String::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskRow {
    pub task_id: String,
    pub sr: bool,
    pub gc: f64,
    pub category: String,
    pub steps: u32,
    pub wp_added: u32,
    pub wg_added: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorHistogram {
    pub success: u32,
    pub invalid_actions: u32,
    pub timeout: u32,
    pub wrong_termination: u32,
    /// Infrastructure failures, excluded from the four-way taxonomy.
    pub aborted: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub step_budget: u32,
    pub invalid_streak_cap: u32,
    pub retrieval_k: usize,
    pub learning_enabled: bool,
    pub use_process: bool,
    pub use_goal: bool,
    pub history_tail_len: usize,
    pub max_goal_heuristics: usize,
    pub jobs: usize,
    pub online: bool,
    pub seed: u64,
    pub backend: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub suite: String,
    pub config: ConfigEcho,
    pub sr_mean: f64,
    pub gc_mean: f64,
    pub histogram: ErrorHistogram,
    pub repository_digest: String,
    pub per_task: Vec<TaskRow>,
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

impl MetricsReport {
    fn from_rows(
        suite: &TaskSuite,
        options: &RunOptions,
        eval_config: &EpisodeConfig,
        rows: Vec<TaskRow>,
        repository: &Repository,
    ) -> Self {
        let mut histogram = ErrorHistogram::default();
        let mut sr_sum = 0.0;
        let mut gc_sum = 0.0;
        let mut scored = 0usize;
        for row in &rows {
            match row.category.as_str() {
                "Success" => histogram.success += 1,
                "InvalidActions" => histogram.invalid_actions += 1,
                "Timeout" => histogram.timeout += 1,
                "WrongTermination" => histogram.wrong_termination += 1,
                _ => histogram.aborted += 1,
            }
            if row.category != "Aborted" {
                sr_sum += if row.sr { 1.0 } else { 0.0 };
                gc_sum += row.gc;
                scored += 1;
            }
        }
        let sr_mean = if scored == 0 { 0.0 } else { sr_sum / scored as f64 };
        let gc_mean = if scored == 0 { 0.0 } else { gc_sum / scored as f64 };
        Self {
            suite: suite.name.clone(),
            config: ConfigEcho {
                step_budget: eval_config.step_budget,
                invalid_streak_cap: eval_config.invalid_streak_cap,
                retrieval_k: eval_config.retrieval_k,
                learning_enabled: eval_config.learning_enabled,
                use_process: eval_config.use_process,
                use_goal: eval_config.use_goal,
                history_tail_len: eval_config.history_tail_len,
                max_goal_heuristics: eval_config.max_goal_heuristics,
                jobs: options.jobs,
                online: options.online,
                seed: options.seed,
                backend: options.backend_desc.clone(),
            },
            sr_mean: round3(sr_mean),
            gc_mean: round3(gc_mean),
            histogram,
            repository_digest: repository.digest(),
            per_task: rows,
        }
    }

    /// Pretty JSON document with a trailing newline; byte-stable.
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    /// One row per task: task_id, sr, gc, category, steps, wp_added, wg_added.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("task_id,sr,gc,category,steps,wp_added,wg_added\n");
        for row in &self.per_task {
            out.push_str(&format!(
                "{},{},{:.3},{},{},{},{}\n",
                row.task_id,
                u8::from(row.sr),
                row.gc,
                row.category,
                row.steps,
                row.wp_added,
                row.wg_added
            ));
        }
        out
    }
}

/// A suite run's artifacts: the report, the post-learning repository, and the
/// per-task trajectories in eval order (learning trajectories first).
pub struct SuiteOutcome {
    pub report: MetricsReport,
    pub repository: Repository,
    pub trajectories: Vec<(String, Trajectory)>,
}

pub type BackendFactory<'a> = &'a (dyn Fn() -> Box<dyn ChatBackend> + Sync);

fn run_task(
    task: &TaskDef,
    config: &EpisodeConfig,
    seed: u64,
    repository: &mut Repository,
    backend: &mut dyn ChatBackend,
) -> (TaskRow, Option<Trajectory>) {
    let prepared = load_world_file(&task.world).map(|w| w.with_seed(seed));
    let world = match prepared {
        Ok(world) => world,
        Err(_) => return (aborted_row(&task.id), None),
    };
    let catalog = build_catalog(&world);
    let mut task_config = config.clone();
    task_config.profile = world.profile;
    let providers = Providers::deterministic();
    match run_episode(
        world,
        &task.goal,
        &catalog,
        repository,
        backend,
        &providers,
        &task_config,
    ) {
        Ok(outcome) => {
            let category = classify_outcome(&outcome.result);
            let row = TaskRow {
                task_id: task.id.clone(),
                sr: outcome.result.sr,
                gc: round3(outcome.result.gc),
                category: category_name(category).to_string(),
                steps: outcome.result.steps_used,
                wp_added: outcome.result.wp_added,
                wg_added: outcome.result.wg_added,
            };
            (row, Some(outcome.trajectory))
        }
        Err(_) => (aborted_row(&task.id), None),
    }
}

fn category_name(category: ErrorCategory) -> &'static str {
    category.as_str()
}

fn aborted_row(task_id: &str) -> TaskRow {
    TaskRow {
        task_id: task_id.to_string(),
        sr: false,
        gc: 0.0,
        category: "Aborted".to_string(),
        steps: 0,
        wp_added: 0,
        wg_added: 0,
    }
}

/// Runs the full two-phase protocol. Learning tasks run sequentially through
/// one backend instance while the repository accumulates; eval tasks run
/// against the frozen repository (in parallel when `jobs > 1`, each worker on
/// its own clone and backend). In online mode evaluation keeps learning and
/// must stay sequential.
pub fn run_suite(
    suite: &TaskSuite,
    options: &RunOptions,
    make_backend: BackendFactory,
    repository_in: Repository,
) -> Result<SuiteOutcome, BenchError> {
    if options.online && options.jobs > 1 {
        return Err(BenchError::OnlineRequiresSequential);
    }
    let mut repository = repository_in;
    let mut trajectories: Vec<(String, Trajectory)> = Vec::new();

    // phase 1: learning
    if options.config.learning_enabled && !suite.split.learning.is_empty() {
        let mut backend = make_backend();
        for id in &suite.split.learning {
            let task = suite.task(id);
            let (_row, trajectory) = run_task(
                task,
                &options.config,
                options.seed,
                &mut repository,
                backend.as_mut(),
            );
            if let Some(t) = trajectory {
                trajectories.push((id.clone(), t));
            }
        }
    }

    // phase 2: evaluation
    let mut eval_config = options.config.clone();
    if !options.online {
        eval_config.learning_enabled = false;
    }
    let frozen_digest = repository.digest();

    let mut rows: Vec<TaskRow> = Vec::with_capacity(suite.split.eval.len());
    if options.jobs > 1 {
        repository.warm_cache(&crate::repo::HashedBowEmbedder);
        let tasks: Vec<&TaskDef> = suite.split.eval.iter().map(|id| suite.task(id)).collect();
        let chunk_size = tasks.len().div_ceil(options.jobs).max(1);
        let chunk_results = std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for (worker, chunk) in tasks.chunks(chunk_size).enumerate() {
                let eval_config = eval_config.clone();
                let frozen = repository.clone();
                let seed = options.seed;
                handles.push((
                    worker,
                    scope.spawn(move || {
                        let mut backend = make_backend();
                        let mut local_repo = frozen;
                        let mut results = Vec::new();
                        for task in chunk {
                            results.push(run_task(
                                task,
                                &eval_config,
                                seed,
                                &mut local_repo,
                                backend.as_mut(),
                            ));
                        }
                        results
                    }),
                ));
            }
            let mut collected: Vec<(usize, Vec<(TaskRow, Option<Trajectory>)>)> = handles
                .into_iter()
                .map(|(worker, handle)| (worker, handle.join().expect("worker panicked")))
                .collect();
            collected.sort_by_key(|(worker, _)| *worker);
            collected
        });
        for (_, results) in chunk_results {
            for (row, trajectory) in results {
                if let Some(t) = trajectory {
                    trajectories.push((row.task_id.clone(), t));
                }
                rows.push(row);
            }
        }
    } else {
        let mut backend = make_backend();
        for id in &suite.split.eval {
            let task = suite.task(id);
            let (row, trajectory) = run_task(
                task,
                &eval_config,
                options.seed,
                &mut repository,
                backend.as_mut(),
            );
            if let Some(t) = trajectory {
                trajectories.push((id.clone(), t));
            }
            rows.push(row);
        }
    }

    if !options.online && repository.digest() != frozen_digest {
        return Err(BenchError::RepositoryMutated);
    }

    let report = MetricsReport::from_rows(suite, options, &eval_config, rows, &repository);
    Ok(SuiteOutcome {
        report,
        repository,
        trajectories,
    })
}

/// Transfer run: evaluates a backend twice with learning disabled — once with
/// an empty repository and once with the imported one — and reports the
/// deltas.
pub struct TransferOutcome {
    pub baseline: MetricsReport,
    pub with_imported: MetricsReport,
    pub sr_delta: f64,
    pub gc_delta: f64,
}

pub fn transfer_experiment(
    imported: Repository,
    suite: &TaskSuite,
    options: &RunOptions,
    make_backend: BackendFactory,
) -> Result<TransferOutcome, BenchError> {
    let mut frozen = options.clone();
    frozen.config.learning_enabled = false;
    frozen.online = false;

    let baseline = run_suite(suite, &frozen, make_backend, Repository::new())?.report;
    let with_imported = run_suite(suite, &frozen, make_backend, imported)?.report;
    let sr_delta = round3(with_imported.sr_mean - baseline.sr_mean);
    let gc_delta = round3(with_imported.gc_mean - baseline.gc_mean);
    Ok(TransferOutcome {
        baseline,
        with_imported,
        sr_delta,
        gc_delta,
    })
}

/// The four ablation arms in fixed order. Each arm starts from an empty
/// repository and runs learn-then-freeze with its flags; the no-experience
/// arm degenerates to a plain reactive baseline.
pub const ABLATION_ARMS: [(&str, bool, bool); 4] = [
    ("full", true, true),
    ("-goal", true, false),
    ("-process", false, true),
    ("-both", false, false),
];

pub struct AblationOutcome {
    pub rows: Vec<(String, MetricsReport)>,
}

impl AblationOutcome {
    /// Four-line summary table: arm, sr_mean, gc_mean, histogram columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "arm,sr_mean,gc_mean,success,invalid_actions,timeout,wrong_termination,aborted\n",
        );
        for (arm, report) in &self.rows {
            out.push_str(&format!(
                "{},{:.3},{:.3},{},{},{},{},{}\n",
                arm,
                report.sr_mean,
                report.gc_mean,
                report.histogram.success,
                report.histogram.invalid_actions,
                report.histogram.timeout,
                report.histogram.wrong_termination,
                report.histogram.aborted
            ));
        }
        out
    }
}

pub fn ablation_run(
    suite: &TaskSuite,
    options: &RunOptions,
    make_backend: BackendFactory,
) -> Result<AblationOutcome, BenchError> {
    let mut rows = Vec::with_capacity(ABLATION_ARMS.len());
    for (arm, use_process, use_goal) in ABLATION_ARMS {
        let mut arm_options = options.clone();
        arm_options.config.learning_enabled = true;
        arm_options.config.use_process = use_process;
        arm_options.config.use_goal = use_goal;
        let outcome = run_suite(suite, &arm_options, make_backend, Repository::new())?;
        rows.push((arm.to_string(), outcome.report));
    }
    Ok(AblationOutcome { rows })
}
