//! chrF (character n-gram F-score) and per-run aggregation.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("no scored rows to aggregate")]
    Empty,
    #[error("invalid chrF configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChrfConfig {
    pub max_n: usize,
    pub beta: f64,
    pub strip_whitespace: bool,
}

impl Default for ChrfConfig {
    fn default() -> Self {
        ChrfConfig {
            max_n: 6,
            beta: 2.0,
            strip_whitespace: true,
        }
    }
}

impl ChrfConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.max_n == 0 {
            return Err(MetricsError::Config("max_n must be at least 1".into()));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(MetricsError::Config("beta must be positive".into()));
        }
        Ok(())
    }
}

fn prepare(text: &str, strip_whitespace: bool) -> Vec<char> {
    if strip_whitespace {
        text.chars().filter(|c| !c.is_whitespace()).collect()
    } else {
        text.chars().collect()
    }
}

/// Counts of every length-`n` character window.
pub fn char_ngrams(chars: &[char], n: usize) -> HashMap<&[char], usize> {
    let mut out = HashMap::new();
    if n == 0 || chars.len() < n {
        return out;
    }
    for w in chars.windows(n) {
        *out.entry(w).or_insert(0) += 1;
    }
    out
}

/// Convenience wrapper over [`char_ngrams`] that owns its keys.
pub fn text_ngrams(text: &str, n: usize, strip_whitespace: bool) -> BTreeMap<String, usize> {
    let chars = prepare(text, strip_whitespace);
    char_ngrams(&chars, n)
        .into_iter()
        .map(|(k, v)| (k.iter().collect(), v))
        .collect()
}

/// Sentence-level chrF in `[0, 1]`.
///
/// Precision and recall are averaged arithmetically over the n-gram orders
/// in `1..=max_n`; an order is skipped when neither side has n-grams of
/// that length.
pub fn chrf(hypothesis: &str, reference: &str, config: &ChrfConfig) -> f64 {
    let hyp = prepare(hypothesis, config.strip_whitespace);
    let refs = prepare(reference, config.strip_whitespace);
    match (hyp.is_empty(), refs.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut precision = 0.0;
    let mut recall = 0.0;
    let mut orders = 0usize;
    for n in 1..=config.max_n.max(1) {
        let h = char_ngrams(&hyp, n);
        let r = char_ngrams(&refs, n);
        let h_total: usize = h.values().sum();
        let r_total: usize = r.values().sum();
        if h_total == 0 && r_total == 0 {
            continue;
        }
        let matched: usize = h
            .iter()
            .map(|(g, &c)| r.get(g).map_or(0, |&rc| rc.min(c)))
            .sum();
        if h_total > 0 {
            precision += matched as f64 / h_total as f64;
        }
        if r_total > 0 {
            recall += matched as f64 / r_total as f64;
        }
        orders += 1;
    }
    if orders == 0 {
        return 0.0;
    }
    let p = precision / orders as f64;
    let r = recall / orders as f64;
    let beta2 = config.beta * config.beta;
    let denom = beta2 * p + r;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + beta2) * p * r / denom
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub task_id: String,
    pub repo_id: String,
    pub chrf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
}

impl Summary {
    fn of(values: &mut [f64]) -> Summary {
        values.sort_by(f64::total_cmp);
        let n = values.len();
        let median = if n % 2 == 1 {
            values[n / 2]
        } else {
            (values[n / 2 - 1] + values[n / 2]) / 2.0
        };
        Summary {
            count: n,
            mean: values.iter().sum::<f64>() / n as f64,
            median,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub overall: Summary,
    pub by_repo: BTreeMap<String, Summary>,
}

impl Report {
    pub fn to_table(&self) -> String {
        let width = self
            .by_repo
            .keys()
            .map(String::len)
            .chain(["repository".len(), "ALL".len()])
            .max()
            .unwrap_or(10);
        let mut out = format!("{:<width$}  {:>6}  {:>8}  {:>8}\n", "repository", "tasks", "mean", "median");
        for (repo, s) in &self.by_repo {
            out.push_str(&format!("{:<width$}  {:>6}  {:>8.4}  {:>8.4}\n", repo, s.count, s.mean, s.median));
        }
        let s = &self.overall;
        out.push_str(&format!("{:<width$}  {:>6}  {:>8.4}  {:>8.4}\n", "ALL", s.count, s.mean, s.median));
        out
    }
}

pub fn aggregate_report(rows: &[ScoreRow]) -> Result<Report, MetricsError> {
    if rows.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut all: Vec<f64> = rows.iter().map(|r| r.chrf).collect();
    let mut per_repo: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in rows {
        per_repo.entry(r.repo_id.clone()).or_default().push(r.chrf);
    }
    Ok(Report {
        overall: Summary::of(&mut all),
        by_repo: per_repo
            .into_iter()
            .map(|(k, mut v)| (k, Summary::of(&mut v)))
            .collect(),
    })
}
