//! Repository scanning, task loading and corpus statistics.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use walkdir::WalkDir;

use crate::exec::Exec;

pub const DEFAULT_MAX_FILE_BYTES: u64 = 1 << 20;

const VCS_DIRS: &[&str] = &[".git", ".hg", ".svn", ".bzr", "CVS", "_darcs"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("repository root {0} does not exist or is not a directory")]
    MissingRoot(PathBuf),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON at line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("missing field {field} at line {line}")]
    MissingField { field: &'static str, line: usize },
    #[error("field {field} at line {line} has the wrong type")]
    BadField { field: &'static str, line: usize },
    #[error("cannot summarize an empty list of repositories")]
    NoRepositories,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Python,
    Kotlin,
}

impl Language {
    pub fn extensions(self) -> &'static [&'static str] {
        match self {
            Language::Python => &["py"],
            Language::Kotlin => &["kt", "kts"],
        }
    }

    pub fn from_path(path: &Path) -> Option<Language> {
        match path.extension()?.to_str()? {
            "py" => Some(Language::Python),
            "kt" | "kts" => Some(Language::Kotlin),
            _ => None,
        }
    }

    pub fn admits(self, path: &Path) -> bool {
        Language::from_path(path) == Some(self)
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Language::Python => "python",
            Language::Kotlin => "kotlin",
        })
    }
}

impl std::str::FromStr for Language {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "python" | "py" => Ok(Language::Python),
            "kotlin" | "kt" => Ok(Language::Kotlin),
            other => Err(format!("unknown language {other:?} (expected python or kotlin)")),
        }
    }
}

/// Number of newline-delimited lines; a trailing newline does not open a new line.
pub fn count_lines(text: &str) -> usize {
    text.lines().count()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFile {
    /// Repository-relative, `/`-separated.
    pub path: String,
    pub text: String,
    pub language: Language,
    pub line_count: usize,
}

impl SourceFile {
    pub fn new(path: impl Into<String>, text: impl Into<String>, language: Language) -> Self {
        let text = text.into();
        let line_count = count_lines(&text);
        SourceFile {
            path: path.into(),
            text,
            language,
            line_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Repository {
    pub id: String,
    files: Vec<SourceFile>,
}

impl Repository {
    /// Sorts `files` by path. Later duplicates of a path are dropped.
    pub fn new(id: impl Into<String>, mut files: Vec<SourceFile>) -> Self {
        files.sort_by(|a, b| a.path.cmp(&b.path));
        files.dedup_by(|b, a| a.path == b.path);
        Repository { id: id.into(), files }
    }

    pub fn files(&self) -> &[SourceFile] {
        &self.files
    }

    pub fn get(&self, path: &str) -> Option<&SourceFile> {
        self.files
            .binary_search_by(|f| f.path.as_str().cmp(path))
            .ok()
            .map(|i| &self.files[i])
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    NotUtf8,
    TooLarge,
    Unreadable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub path: String,
    pub reason: SkipReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanReport {
    pub skipped: Vec<SkippedFile>,
}

impl ScanReport {
    pub fn count(&self, reason: SkipReason) -> usize {
        self.skipped.iter().filter(|s| s.reason == reason).count()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ScanOptions {
    pub max_file_bytes: u64,
    pub exec: Exec,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            max_file_bytes: DEFAULT_MAX_FILE_BYTES,
            exec: Exec::default(),
        }
    }
}

fn is_skipped_dir(name: &str) -> bool {
    name.starts_with('.') || VCS_DIRS.contains(&name)
}

enum Loaded {
    File(SourceFile),
    Skipped(SkippedFile),
}

/// Loads every file under `root` whose extension matches `language`.
///
/// The repository id is the final component of `root`.
pub fn scan_repository(
    root: &Path,
    language: Language,
    opts: &ScanOptions,
) -> Result<(Repository, ScanReport), IngestError> {
    if !root.is_dir() {
        return Err(IngestError::MissingRoot(root.to_path_buf()));
    }
    fs::read_dir(root).map_err(|source| IngestError::Io {
        path: root.to_path_buf(),
        source,
    })?;

    let mut candidates = Vec::new();
    let walker = WalkDir::new(root)
        .follow_links(false)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| {
            e.depth() == 0
                || !e.file_type().is_dir()
                || !e.file_name().to_str().is_some_and(is_skipped_dir)
        });
    for entry in walker.filter_map(Result::ok) {
        if entry.file_type().is_file() && language.admits(entry.path()) {
            let rel = entry
                .path()
                .strip_prefix(root)
                .unwrap_or(entry.path())
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            candidates.push((rel, entry.into_path()));
        }
    }

    let max = opts.max_file_bytes;
    let loaded = opts.exec.map(&candidates, |(rel, abs)| {
        let skip = |reason| {
            Loaded::Skipped(SkippedFile {
                path: rel.clone(),
                reason,
            })
        };
        match fs::metadata(abs) {
            Ok(m) if m.len() > max => return skip(SkipReason::TooLarge),
            Err(_) => return skip(SkipReason::Unreadable),
            Ok(_) => {}
        }
        match fs::read(abs) {
            Ok(bytes) => match String::from_utf8(bytes) {
                Ok(text) => Loaded::File(SourceFile::new(rel.clone(), text, language)),
                Err(_) => skip(SkipReason::NotUtf8),
            },
            Err(_) => skip(SkipReason::Unreadable),
        }
    });

    let mut files = Vec::new();
    let mut report = ScanReport::default();
    for item in loaded {
        match item {
            Loaded::File(f) => files.push(f),
            Loaded::Skipped(s) => report.skipped.push(s),
        }
    }
    report.skipped.sort_by(|a, b| a.path.cmp(&b.path));
    let id = root
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok((Repository::new(id, files), report))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionTask {
    pub task_id: String,
    pub repo_id: String,
    pub target_path: String,
    pub prefix: String,
    pub suffix: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recent_files: Option<Vec<String>>,
}

fn required_str(obj: &serde_json::Map<String, Value>, field: &'static str, line: usize) -> Result<String, IngestError> {
    match obj.get(field) {
        None | Some(Value::Null) => Err(IngestError::MissingField { field, line }),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(IngestError::BadField { field, line }),
    }
}

fn parse_task_line(raw: &str, line: usize) -> Result<CompletionTask, IngestError> {
    let value: Value = serde_json::from_str(raw).map_err(|e| IngestError::MalformedLine {
        line,
        message: e.to_string(),
    })?;
    let Value::Object(obj) = value else {
        return Err(IngestError::MalformedLine {
            line,
            message: "expected a JSON object".into(),
        });
    };
    let ground_truth = match obj.get("ground_truth") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(IngestError::BadField { field: "ground_truth", line }),
    };
    let recent_files = match obj.get("recent_files") {
        None | Some(Value::Null) => None,
        Some(Value::Array(items)) => Some(
            items
                .iter()
                .map(|v| v.as_str().map(str::to_owned))
                .collect::<Option<Vec<_>>>()
                .ok_or(IngestError::BadField { field: "recent_files", line })?,
        ),
        Some(_) => return Err(IngestError::BadField { field: "recent_files", line }),
    };
    Ok(CompletionTask {
        task_id: required_str(&obj, "task_id", line)?,
        repo_id: required_str(&obj, "repo_id", line)?,
        target_path: required_str(&obj, "target_path", line)?,
        prefix: required_str(&obj, "prefix", line)?,
        suffix: required_str(&obj, "suffix", line)?,
        ground_truth,
        recent_files,
    })
}

/// Reads a JSON-Lines task file. Blank lines are ignored; line numbers in
/// errors are 1-based physical lines.
pub fn load_tasks(path: &Path) -> Result<Vec<CompletionTask>, IngestError> {
    let file = fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_tasks(BufReader::new(file)).map_err(|e| match e {
        IngestError::Io { source, .. } => IngestError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

pub fn parse_tasks<R: BufRead>(reader: R) -> Result<Vec<CompletionTask>, IngestError> {
    let mut tasks = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| IngestError::Io {
            path: PathBuf::new(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        tasks.push(parse_task_line(&line, idx + 1)?);
    }
    Ok(tasks)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepoStats {
    pub repos: usize,
    pub min: usize,
    pub median: f64,
    pub mean: f64,
    pub max: usize,
}

impl RepoStats {
    pub fn from_counts(counts: &[usize]) -> Result<RepoStats, IngestError> {
        if counts.is_empty() {
            return Err(IngestError::NoRepositories);
        }
        let mut sorted = counts.to_vec();
        sorted.sort_unstable();
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2] as f64
        } else {
            (sorted[n / 2 - 1] as f64 + sorted[n / 2] as f64) / 2.0
        };
        let total: usize = sorted.iter().sum();
        Ok(RepoStats {
            repos: n,
            min: sorted[0],
            median,
            mean: total as f64 / n as f64,
            max: sorted[n - 1],
        })
    }

    pub fn to_table(&self, label: &str) -> String {
        let width = label.len().max("Dataset".len());
        format!(
            "{:<width$}  {:>6}  {:>6}  {:>8}  {:>8}  {:>6}\n{:<width$}  {:>6}  {:>6}  {:>8.1}  {:>8.1}  {:>6}\n",
            "Dataset", "#Repos", "Min", "Median", "Mean", "Max",
            label, self.repos, self.min, self.median, self.mean, self.max,
        )
    }
}

/// Files-per-repository summary.
pub fn repo_stats(repos: &[Repository]) -> Result<RepoStats, IngestError> {
    let counts: Vec<usize> = repos.iter().map(Repository::len).collect();
    RepoStats::from_counts(&counts)
}
