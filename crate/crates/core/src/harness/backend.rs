//! Completion backends.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::compose::ContextBundle;
use crate::ingest::CompletionTask;

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    /// Returns the task's ground truth.
    CopyOracle,
    /// Writes contexts only; no predictions.
    EmitOnly,
    /// Runs an external program over the whole batch.
    External,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "copy-oracle" => Ok(BackendKind::CopyOracle),
            "emit-only" => Ok(BackendKind::EmitOnly),
            "external" => Ok(BackendKind::External),
            other => Err(format!("unknown backend {other:?} (expected copy-oracle, emit-only or external)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub task_id: String,
    pub completion: String,
}

/// One composed task handed to a backend.
pub struct Request<'a> {
    pub task: &'a CompletionTask,
    pub bundle: &'a ContextBundle,
}

pub trait CompletionBackend: Sync {
    fn name(&self) -> &'static str;

    /// False for backends that only emit contexts.
    fn predicts(&self) -> bool {
        true
    }

    /// Completions in request order. `contexts` is the already written
    /// contexts.jsonl for the same requests.
    fn complete(&self, requests: &[Request<'_>], contexts: &Path, scratch: &Path) -> Result<Vec<Result<String, String>>, HarnessError>;
}

pub struct CopyOracle;

impl CompletionBackend for CopyOracle {
    fn name(&self) -> &'static str {
        "copy-oracle"
    }

    fn complete(&self, requests: &[Request<'_>], _: &Path, _: &Path) -> Result<Vec<Result<String, String>>, HarnessError> {
        Ok(requests
            .iter()
            .map(|r| {
                r.task
                    .ground_truth
                    .clone()
                    .ok_or_else(|| "task has no ground truth to copy".to_owned())
            })
            .collect())
    }
}

pub struct EmitOnly;

impl CompletionBackend for EmitOnly {
    fn name(&self) -> &'static str {
        "emit-only"
    }

    fn predicts(&self) -> bool {
        false
    }

    fn complete(&self, requests: &[Request<'_>], _: &Path, _: &Path) -> Result<Vec<Result<String, String>>, HarnessError> {
        Ok(requests.iter().map(|_| Ok(String::new())).collect())
    }
}

/// Invoked as `program [args...] <contexts.jsonl> <predictions.jsonl>`; it
/// must write one `{task_id, completion}` line per task it answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct External {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>, HarnessError> {
    let file = fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let p: Prediction = serde_json::from_str(&line).map_err(|e| HarnessError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(p);
    }
    Ok(out)
}

impl CompletionBackend for External {
    fn name(&self) -> &'static str {
        "external"
    }

    fn complete(&self, requests: &[Request<'_>], contexts: &Path, scratch: &Path) -> Result<Vec<Result<String, String>>, HarnessError> {
        let out = scratch.join("backend-predictions.jsonl");
        let status = Command::new(&self.program)
            .args(&self.args)
            .arg(contexts)
            .arg(&out)
            .status()
            .map_err(|e| HarnessError::Backend(format!("cannot start {}: {e}", self.program)))?;
        if !status.success() {
            return Err(HarnessError::Backend(format!("{} exited with {status}", self.program)));
        }
        let mut by_id: HashMap<String, String> = read_predictions(&out)?
            .into_iter()
            .map(|p| (p.task_id, p.completion))
            .collect();
        let _ = fs::remove_file(&out);
        Ok(requests
            .iter()
            .map(|r| {
                by_id
                    .remove(&r.task.task_id)
                    .ok_or_else(|| "external backend returned no completion".to_owned())
            })
            .collect())
    }
}
