//! Dataset runs: compose contexts for every task, call a backend, score
//! with chrF and write per-run artifacts.
//!
//! A run directory holds `contexts.jsonl`, `predictions.jsonl`,
//! `results.jsonl`, `summary.json` and `summary.txt`. Records appear in
//! dataset order and carry no timestamps, so identical runs produce
//! identical bytes.

pub mod backend;
pub mod cache;
pub mod presets;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::compose::{compose_context, ComposeOptions, ContextBundle, Retrieval, RetrievalIndex, StrategyConfig};
use crate::exec::Exec;
use crate::ingest::{load_tasks, scan_repository, CompletionTask, IngestError, Repository, ScanOptions};
use crate::metrics::{aggregate_report, chrf, ChrfConfig, Report, ScoreRow};

pub use backend::{BackendKind, CompletionBackend, CopyOracle, EmitOnly, External, Prediction};
pub use cache::IndexCache;
pub use presets::{preset, preset_names};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown preset {name:?}; known presets: {known}")]
    UnknownPreset { name: String, known: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },
    #[error("backend failed: {0}")]
    Backend(String),
    #[error("the external backend needs a program")]
    MissingProgram,
    #[error("comparison needs at least two runs, got {0}")]
    TooFewRuns(usize),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dataset: PathBuf,
    /// Directory holding one sub-directory per `repo_id`.
    pub repos_root: PathBuf,
    /// Label recorded in the summary, usually the preset name.
    pub strategy_name: String,
    pub strategy: StrategyConfig,
    pub backend: BackendKind,
    pub external: Option<External>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub jobs: Option<usize>,
    pub options: ComposeOptions,
    pub chrf: ChrfConfig,
    pub scan: ScanOptions,
}

impl RunConfig {
    pub fn new(dataset: impl Into<PathBuf>, repos_root: impl Into<PathBuf>, strategy_name: impl Into<String>, strategy: StrategyConfig, out_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            dataset: dataset.into(),
            repos_root: repos_root.into(),
            strategy_name: strategy_name.into(),
            strategy,
            backend: BackendKind::CopyOracle,
            external: None,
            seed: 0,
            out_dir: out_dir.into(),
            jobs: None,
            options: ComposeOptions::default(),
            chrf: ChrfConfig::default(),
            scan: ScanOptions::default(),
        }
    }

    fn exec(&self) -> Exec {
        Exec::for_jobs(self.jobs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskFailure {
    pub task_id: String,
    pub stage: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub strategy: String,
    pub config: StrategyConfig,
    pub backend: BackendKind,
    pub seed: u64,
    pub dataset_sha256: String,
    pub tasks: usize,
    pub composed: usize,
    pub truncated: usize,
    pub mean_context_tokens: f64,
    pub scored: usize,
    pub failed: usize,
    pub report: Option<Report>,
    pub failures: Vec<TaskFailure>,
}

impl RunSummary {
    pub fn mean_chrf(&self) -> Option<f64> {
        self.report.as_ref().map(|r| r.overall.mean)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "strategy  {}\nbackend   {:?}\ntasks     {}\ncomposed  {}\ntruncated {}\nscored    {}\nfailed    {}\nmean ctx  {:.1} tokens\n",
            self.strategy, self.backend, self.tasks, self.composed, self.truncated, self.scored, self.failed, self.mean_context_tokens,
        );
        if let Some(report) = &self.report {
            out.push('\n');
            out.push_str(&report.to_table());
        }
        out
    }
}

#[derive(Serialize)]
struct ResultRow<'a> {
    task_id: &'a str,
    chrf: f64,
}

fn sha256_file(path: &Path) -> Result<String, HarnessError> {
    let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), HarnessError> {
    let file = fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        let line = serde_json::to_string(&row).expect("rows serialize");
        writeln!(w, "{line}").map_err(|e| HarnessError::io(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// One `{task_id, chrf}` line per row.
pub fn write_results(path: &Path, rows: &[ScoreRow]) -> Result<(), HarnessError> {
    write_jsonl(
        path,
        rows.iter().map(|r| ResultRow {
            task_id: &r.task_id,
            chrf: r.chrf,
        }),
    )
}

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

/// Loads every repository referenced by `tasks`; failures are kept per repo.
pub fn load_repositories(
    tasks: &[CompletionTask],
    repos_root: &Path,
    config: &StrategyConfig,
    scan: &ScanOptions,
) -> BTreeMap<String, Result<Repository, String>> {
    let mut repos = BTreeMap::new();
    for t in tasks {
        if repos.contains_key(&t.repo_id) {
            continue;
        }
        let loaded = scan_repository(&repos_root.join(&t.repo_id), config.language, scan)
            .map(|(repo, report)| {
                for s in &report.skipped {
                    log::debug!("{}: skipped {} ({:?})", t.repo_id, s.path, s.reason);
                }
                repo
            })
            .map_err(|e| e.to_string());
        repos.insert(t.repo_id.clone(), loaded);
    }
    repos
}

/// Composes a bundle per task in dataset order.
pub fn compose_all(
    tasks: &[CompletionTask],
    repos: &BTreeMap<String, Result<Repository, String>>,
    strategy: &StrategyConfig,
    options: &ComposeOptions,
    cache: &IndexCache,
    exec: Exec,
) -> Vec<Result<ContextBundle, String>> {
    let needs_index = strategy.retrieval == Retrieval::Bm25 && (strategy.k > 0 || strategy.budget_rule.is_some());
    let mut indexes: HashMap<&str, Result<Arc<RetrievalIndex>, String>> = HashMap::new();
    for (id, repo) in repos {
        let index = match repo {
            Err(e) => Err(e.clone()),
            Ok(_) if !needs_index => RetrievalIndex::from_items(strategy.granularity, Vec::new(), options.bm25, exec)
                .map(Arc::new)
                .map_err(|e| e.to_string()),
            Ok(repo) => cache
                .get_or_build(repo, strategy.granularity, options.bm25, exec)
                .map_err(|e| e.to_string()),
        };
        indexes.insert(id.as_str(), index);
    }
    exec.map(tasks, |task| {
        let repo = match repos.get(&task.repo_id) {
            Some(Ok(r)) => r,
            Some(Err(e)) => return Err(e.clone()),
            None => return Err(format!("repository {} was not loaded", task.repo_id)),
        };
        let index = indexes[task.repo_id.as_str()].as_ref().map_err(Clone::clone)?;
        compose_context(task, repo, strategy, index, options).map_err(|e| e.to_string())
    })
}

pub struct RunOutcome {
    pub summary: RunSummary,
    pub out_dir: PathBuf,
}

impl RunOutcome {
    pub fn success(&self) -> bool {
        self.summary.failed == 0
    }
}

pub fn backend_for(config: &RunConfig) -> Result<Box<dyn CompletionBackend>, HarnessError> {
    Ok(match config.backend {
        BackendKind::CopyOracle => Box::new(CopyOracle),
        BackendKind::EmitOnly => Box::new(EmitOnly),
        BackendKind::External => Box::new(config.external.clone().ok_or(HarnessError::MissingProgram)?),
    })
}

pub fn run_strategy(config: &RunConfig, cache: &IndexCache) -> Result<RunOutcome, HarnessError> {
    let exec = config.exec();
    exec.install(config.jobs, || run_inner(config, cache, exec))
}

fn run_inner(config: &RunConfig, cache: &IndexCache, exec: Exec) -> Result<RunOutcome, HarnessError> {
    let tasks = load_tasks(&config.dataset)?;
    let dataset_sha256 = sha256_file(&config.dataset)?;
    let backend = backend_for(config)?;
    let out = &config.out_dir;
    fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;

    let mut options = config.options;
    options.seed = config.seed;
    let repos = load_repositories(&tasks, &config.repos_root, &config.strategy, &config.scan);
    let bundles = compose_all(&tasks, &repos, &config.strategy, &options, cache, exec);

    let mut failures = Vec::new();
    let mut composed = Vec::new();
    for (task, bundle) in tasks.iter().zip(&bundles) {
        match bundle {
            Ok(b) => composed.push(backend::Request { task, bundle: b }),
            Err(e) => failures.push(TaskFailure {
                task_id: task.task_id.clone(),
                stage: "compose".into(),
                error: e.clone(),
            }),
        }
    }
    let contexts_path = out.join("contexts.jsonl");
    write_jsonl(&contexts_path, composed.iter().map(|r| r.bundle))?;

    let truncated = composed.iter().filter(|r| r.bundle.truncated).count();
    let mean_context_tokens = if composed.is_empty() {
        0.0
    } else {
        composed.iter().map(|r| r.bundle.estimated_tokens as f64).sum::<f64>() / composed.len() as f64
    };

    let mut rows = Vec::new();
    if backend.predicts() {
        let completions = backend.complete(&composed, &contexts_path, out)?;
        let mut predictions = Vec::new();
        for (req, completion) in composed.iter().zip(completions) {
            match completion {
                Ok(text) => {
                    if let Some(truth) = &req.task.ground_truth {
                        rows.push(ScoreRow {
                            task_id: req.task.task_id.clone(),
                            repo_id: req.task.repo_id.clone(),
                            chrf: chrf(&text, truth, &config.chrf),
                        });
                    }
                    predictions.push(Prediction {
                        task_id: req.task.task_id.clone(),
                        completion: text,
                    });
                }
                Err(e) => failures.push(TaskFailure {
                    task_id: req.task.task_id.clone(),
                    stage: "backend".into(),
                    error: e,
                }),
            }
        }
        write_jsonl(&out.join("predictions.jsonl"), &predictions)?;
        write_results(&out.join("results.jsonl"), &rows)?;
    }

    let order: HashMap<&str, usize> = tasks.iter().enumerate().map(|(i, t)| (t.task_id.as_str(), i)).collect();
    failures.sort_by_key(|f| order.get(f.task_id.as_str()).copied());
    let summary = RunSummary {
        strategy: config.strategy_name.clone(),
        config: config.strategy.clone(),
        backend: config.backend,
        seed: config.seed,
        dataset_sha256,
        tasks: tasks.len(),
        composed: composed.len(),
        truncated,
        mean_context_tokens,
        scored: rows.len(),
        failed: failures.len(),
        report: aggregate_report(&rows).ok(),
        failures,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_text(&out.join("summary.json"), &(json + "\n"))?;
    write_text(&out.join("summary.txt"), &summary.to_text())?;
    Ok(RunOutcome {
        summary,
        out_dir: out.clone(),
    })
}

/// Scores `predictions` against the ground truth in `tasks`. Tasks without
/// ground truth are ignored; a missing prediction is a failure.
pub fn score_predictions(tasks: &[CompletionTask], predictions: &[Prediction], config: &ChrfConfig) -> (Vec<ScoreRow>, Vec<TaskFailure>) {
    let by_id: HashMap<&str, &str> = predictions.iter().map(|p| (p.task_id.as_str(), p.completion.as_str())).collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for t in tasks {
        let Some(truth) = &t.ground_truth else { continue };
        match by_id.get(t.task_id.as_str()) {
            Some(pred) => rows.push(ScoreRow {
                task_id: t.task_id.clone(),
                repo_id: t.repo_id.clone(),
                chrf: chrf(pred, truth, config),
            }),
            None => failures.push(TaskFailure {
                task_id: t.task_id.clone(),
                stage: "score".into(),
                error: "no prediction".into(),
            }),
        }
    }
    (rows, failures)
}

pub fn read_summary(path: &Path) -> Result<RunSummary, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Malformed {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub strategy: String,
    pub tasks: usize,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    /// Mean chrF minus the first run's mean.
    pub delta: Option<f64>,
    pub best_mean: bool,
    pub best_median: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub warnings: Vec<String>,
}

impl Comparison {
    pub fn to_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.strategy.len()).chain(["strategy".len()]).max().unwrap_or(8);
        let cell = |v: Option<f64>, best: bool| match v {
            Some(v) => format!("{v:.4}{}", if best { "*" } else { " " }),
            None => "-".to_owned(),
        };
        let mut out = format!("{:<width$}  {:>6}  {:>8}  {:>8}  {:>8}\n", "strategy", "tasks", "mean", "median", "delta");
        for r in &self.rows {
            let delta = r.delta.map_or("-".to_owned(), |d| format!("{d:+.4}"));
            out.push_str(&format!(
                "{:<width$}  {:>6}  {:>8}  {:>8}  {:>8}\n",
                r.strategy,
                r.tasks,
                cell(r.mean, r.best_mean),
                cell(r.median, r.best_median),
                delta
            ));
        }
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}

pub fn compare_runs(runs: &[RunSummary]) -> Result<Comparison, HarnessError> {
    if runs.len() < 2 {
        return Err(HarnessError::TooFewRuns(runs.len()));
    }
    let stat = |r: &RunSummary, f: fn(&Report) -> f64| r.report.as_ref().map(f);
    let means: Vec<Option<f64>> = runs.iter().map(|r| stat(r, |p| p.overall.mean)).collect();
    let medians: Vec<Option<f64>> = runs.iter().map(|r| stat(r, |p| p.overall.median)).collect();
    let best = |vals: &[Option<f64>]| vals.iter().flatten().copied().fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
    let (best_mean, best_median) = (best(&means), best(&medians));
    let rows = runs
        .iter()
        .enumerate()
        .map(|(i, r)| ComparisonRow {
            strategy: r.strategy.clone(),
            tasks: r.tasks,
            mean: means[i],
            median: medians[i],
            delta: means[i].zip(means[0]).map(|(m, base)| m - base),
            best_mean: means[i].is_some() && means[i] == best_mean,
            best_median: medians[i].is_some() && medians[i] == best_median,
        })
        .collect();
    let mut warnings = Vec::new();
    if runs.iter().any(|r| r.tasks != runs[0].tasks) {
        warnings.push("runs cover different numbers of tasks".to_owned());
    }
    if runs.iter().any(|r| r.dataset_sha256 != runs[0].dataset_sha256) {
        warnings.push("runs were made on different datasets".to_owned());
    }
    Ok(Comparison { rows, warnings })
}
