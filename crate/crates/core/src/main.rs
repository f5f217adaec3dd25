//! `fimctx` command-line harness.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use fimctx::compose::{ComposeOptions, StrategyConfig};
use fimctx::exec::Exec;
use fimctx::harness::{
    self, backend::read_predictions, compare_runs, load_repositories, preset, read_summary, run_strategy, BackendKind,
    External, IndexCache, RunConfig,
};
use fimctx::index::Bm25Params;
use fimctx::ingest::{load_tasks, repo_stats, scan_repository, Language, Repository, ScanOptions, SourceFile};
use fimctx::metrics::{aggregate_report, ChrfConfig};
use fimctx::parser::{chunk_file, parse_units, ChunkMode, ScopeLimits};

#[derive(Parser)]
#[command(name = "fimctx", version, about = "Repository context collection for fill-in-the-middle completion")]
struct Cli {
    /// TOML file with defaults for any flag; command-line flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the source files of a repository and what was skipped.
    Scan {
        root: PathBuf,
        #[arg(long)]
        language: Option<Language>,
        #[arg(long)]
        json: bool,
    },
    /// Dump structural units or chunks of one file as JSON.
    Chunk {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Standard)]
        mode: ModeArg,
        /// Print raw units instead of chunks.
        #[arg(long)]
        units: bool,
        #[arg(long)]
        language: Option<Language>,
    },
    /// Compose context bundles and print them as JSON Lines.
    Compose {
        #[command(flatten)]
        common: Common,
        /// Only this task.
        #[arg(long)]
        task: Option<String>,
    },
    /// Compose, complete, score and write a run directory.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        backend: Option<BackendKind>,
        /// Program for the external backend.
        #[arg(long)]
        program: Option<String>,
        /// Extra argument for the external program (repeatable).
        #[arg(long = "backend-arg")]
        backend_args: Vec<String>,
        /// Directory for cached indexes.
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
    /// Score a predictions file against a dataset.
    Score {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        predictions: PathBuf,
        /// Also write results.jsonl and summary.json here.
        #[arg(long, env = "FIMCTX_OUT")]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Compare two or more run summaries.
    Compare {
        #[arg(required = true, num_args = 2..)]
        summaries: Vec<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Files-per-repository statistics for a directory of repositories.
    Stats {
        #[arg(long)]
        repos: Option<PathBuf>,
        #[arg(long)]
        language: Option<Language>,
        #[arg(long)]
        json: bool,
    },
    /// List the named strategies.
    Presets,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Directory with one sub-directory per repository id.
    #[arg(long)]
    repos: Option<PathBuf>,
    #[arg(long, conflicts_with = "strategy")]
    preset: Option<String>,
    /// JSON strategy file.
    #[arg(long)]
    strategy: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Token budget override.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, env = "FIMCTX_OUT")]
    out: Option<PathBuf>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long)]
    jobs: Option<usize>,
    /// Language for presets that do not fix one.
    #[arg(long)]
    language: Option<Language>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Standard,
    MethodLevel,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    dataset: Option<PathBuf>,
    repos: Option<PathBuf>,
    preset: Option<String>,
    strategy: Option<PathBuf>,
    backend: Option<BackendKind>,
    program: Option<String>,
    #[serde(default)]
    backend_args: Vec<String>,
    seed: Option<u64>,
    budget: Option<usize>,
    out: Option<PathBuf>,
    jobs: Option<usize>,
    language: Option<Language>,
    cache_dir: Option<PathBuf>,
    #[serde(default)]
    scope: ScopeLimits,
    #[serde(default)]
    bm25: Bm25Params,
    #[serde(default)]
    chrf: ChrfConfig,
}

fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Strategy and label from `--strategy`/`--preset`, falling back to the config file.
fn resolve_strategy(common: &Common, cfg: &FileConfig) -> Result<(String, StrategyConfig)> {
    let language = common.language.or(cfg.language).unwrap_or(Language::Python);
    let from_file = |path: &Path| -> Result<(String, StrategyConfig)> {
        let json = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let config = StrategyConfig::from_json(&json).with_context(|| format!("strategy file {}", path.display()))?;
        let name = path.file_stem().map_or("custom".into(), |s| s.to_string_lossy().into_owned());
        Ok((name, config))
    };
    let (name, mut config) = match (&common.preset, &common.strategy) {
        (Some(p), _) => (p.clone(), preset(p, language)?),
        (None, Some(path)) => from_file(path)?,
        (None, None) => match (&cfg.preset, &cfg.strategy) {
            (Some(p), _) => (p.clone(), preset(p, language)?),
            (None, Some(path)) => from_file(path)?,
            (None, None) => bail!("pass --preset or --strategy (see `fimctx presets`)"),
        },
    };
    if let Some(budget) = common.budget.or(cfg.budget) {
        config.token_budget = budget;
        config.validate()?;
    }
    Ok((name, config))
}

fn require(path: Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    path.with_context(|| format!("missing --{flag}"))
}

fn cmd_scan(root: &Path, language: Language, json: bool) -> Result<()> {
    let (repo, report) = scan_repository(root, language, &ScanOptions::default())?;
    if json {
        let files: Vec<_> = repo
            .files()
            .iter()
            .map(|f| serde_json::json!({"path": f.path, "lines": f.line_count}))
            .collect();
        let out = serde_json::json!({"repo_id": repo.id, "files": files, "skipped": report.skipped});
        println!("{}", serde_json::to_string_pretty(&out)?);
    } else {
        for f in repo.files() {
            println!("{:>7}  {}", f.line_count, f.path);
        }
        println!("{} files, {} skipped", repo.len(), report.skipped.len());
        for s in &report.skipped {
            println!("skipped {} ({:?})", s.path, s.reason);
        }
    }
    Ok(())
}

fn cmd_chunk(file: &Path, mode: ModeArg, units: bool, language: Option<Language>) -> Result<()> {
    let language = language
        .or_else(|| Language::from_path(file))
        .with_context(|| format!("cannot tell the language of {}; pass --language", file.display()))?;
    let text = fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    let source = SourceFile::new(file.to_string_lossy(), text, language);
    let json = if units {
        serde_json::to_string_pretty(&parse_units(&source))?
    } else {
        let mode = match mode {
            ModeArg::Standard => ChunkMode::Standard,
            ModeArg::MethodLevel => ChunkMode::MethodLevel,
        };
        serde_json::to_string_pretty(&chunk_file(&source, mode))?
    };
    println!("{json}");
    Ok(())
}

fn cmd_compose(common: Common, task_filter: Option<String>, cfg: FileConfig) -> Result<ExitCode> {
    let (_, strategy) = resolve_strategy(&common, &cfg)?;
    let dataset = require(common.dataset.or(cfg.dataset), "dataset")?;
    let repos_root = require(common.repos.or(cfg.repos), "repos")?;
    let mut tasks = load_tasks(&dataset)?;
    if let Some(id) = &task_filter {
        tasks.retain(|t| &t.task_id == id);
        if tasks.is_empty() {
            bail!("no task {id} in {}", dataset.display());
        }
    }
    let options = ComposeOptions {
        scope: cfg.scope,
        bm25: cfg.bm25,
        seed: common.seed.or(cfg.seed).unwrap_or(0),
    };
    let jobs = common.jobs.or(cfg.jobs);
    let exec = Exec::for_jobs(jobs);
    let repos = load_repositories(&tasks, &repos_root, &strategy, &ScanOptions { exec, ..ScanOptions::default() });
    let cache = IndexCache::new();
    let bundles = exec.install(jobs, || harness::compose_all(&tasks, &repos, &strategy, &options, &cache, exec));
    let mut sink: Box<dyn Write> = match common.out.or(cfg.out) {
        Some(path) => Box::new(BufWriter::new(
            fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let mut failed = 0;
    for (task, bundle) in tasks.iter().zip(bundles) {
        match bundle {
            Ok(b) => writeln!(sink, "{}", serde_json::to_string(&b)?)?,
            Err(e) => {
                failed += 1;
                eprintln!("{}: {e}", task.task_id);
            }
        }
    }
    sink.flush()?;
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

struct RunFlags {
    backend: Option<BackendKind>,
    program: Option<String>,
    backend_args: Vec<String>,
    cache_dir: Option<PathBuf>,
}

fn cmd_run(common: Common, flags: RunFlags, cfg: FileConfig) -> Result<ExitCode> {
    let (name, strategy) = resolve_strategy(&common, &cfg)?;
    let dataset = require(common.dataset.or(cfg.dataset), "dataset")?;
    let repos_root = require(common.repos.or(cfg.repos), "repos")?;
    let out = common
        .out
        .or(cfg.out)
        .unwrap_or_else(|| PathBuf::from("runs").join(&name));
    let mut run = RunConfig::new(dataset, repos_root, name, strategy, out);
    run.backend = flags.backend.or(cfg.backend).unwrap_or(BackendKind::CopyOracle);
    if let Some(program) = flags.program.or(cfg.program) {
        let args = if flags.backend_args.is_empty() { cfg.backend_args } else { flags.backend_args };
        run.external = Some(External { program, args });
    }
    run.seed = common.seed.or(cfg.seed).unwrap_or(0);
    run.jobs = common.jobs.or(cfg.jobs);
    run.options = ComposeOptions {
        scope: cfg.scope,
        bm25: cfg.bm25,
        seed: run.seed,
    };
    run.chrf = cfg.chrf;
    run.chrf.validate()?;
    run.scan.exec = Exec::for_jobs(run.jobs);

    let cache = match flags.cache_dir.or(cfg.cache_dir) {
        Some(dir) => IndexCache::with_dir(dir),
        None => IndexCache::new(),
    };
    let outcome = run_strategy(&run, &cache)?;
    print!("{}", outcome.summary.to_text());
    println!("\nwrote {}", outcome.out_dir.display());
    for f in &outcome.summary.failures {
        eprintln!("{} [{}]: {}", f.task_id, f.stage, f.error);
    }
    Ok(if outcome.success() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_score(dataset: PathBuf, predictions: &Path, out: Option<PathBuf>, json: bool, cfg: &FileConfig) -> Result<ExitCode> {
    let tasks = load_tasks(&dataset)?;
    let preds = read_predictions(predictions)?;
    cfg.chrf.validate()?;
    let (rows, failures) = harness::score_predictions(&tasks, &preds, &cfg.chrf);
    for f in &failures {
        eprintln!("{}: {}", f.task_id, f.error);
    }
    let report = aggregate_report(&rows).context("nothing to score")?;
    if let Some(dir) = out {
        fs::create_dir_all(&dir)?;
        harness::write_results(&dir.join("results.jsonl"), &rows)?;
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    }
    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", report.to_table());
    }
    Ok(if failures.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_compare(paths: &[PathBuf], json: bool) -> Result<()> {
    let runs = paths
        .iter()
        .map(|p| read_summary(p))
        .collect::<Result<Vec<_>, _>>()?;
    let comparison = compare_runs(&runs)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&comparison)?);
    } else {
        print!("{}", comparison.to_table());
    }
    Ok(())
}

fn cmd_stats(root: &Path, language: Language, json: bool) -> Result<()> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .with_context(|| format!("reading {}", root.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    let repos = dirs
        .iter()
        .map(|d| scan_repository(d, language, &ScanOptions::default()).map(|(r, _)| r))
        .collect::<Result<Vec<Repository>, _>>()?;
    let stats = repo_stats(&repos)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&stats)?);
    } else {
        print!("{}", stats.to_table(&language.to_string()));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    let cfg = load_config(cli.config.as_deref())?;
    let default_language = cfg.language.unwrap_or(Language::Python);
    match cli.command {
        Command::Scan { root, language, json } => cmd_scan(&root, language.unwrap_or(default_language), json)?,
        Command::Chunk { file, mode, units, language } => cmd_chunk(&file, mode, units, language)?,
        Command::Compose { common, task } => return cmd_compose(common, task, cfg),
        Command::Run {
            common,
            backend,
            program,
            backend_args,
            cache_dir,
        } => {
            let flags = RunFlags {
                backend,
                program,
                backend_args,
                cache_dir,
            };
            return cmd_run(common, flags, cfg);
        }
        Command::Score { dataset, predictions, out, json } => {
            let dataset = require(dataset.or(cfg.dataset.clone()), "dataset")?;
            return cmd_score(dataset, &predictions, out, json, &cfg);
        }
        Command::Compare { summaries, json } => cmd_compare(&summaries, json)?,
        Command::Stats { repos, language, json } => {
            let root = require(repos.or(cfg.repos.clone()), "repos")?;
            cmd_stats(&root, language.unwrap_or(default_language), json)?
        }
        Command::Presets => {
            for name in harness::preset_names() {
                println!("{name}");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
