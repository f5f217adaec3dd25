//! Turning ranked retrieval items into a token-budgeted context bundle.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::exec::Exec;
use crate::index::{build_query, Bm25Index, Bm25Params, IndexError};
use crate::ingest::{CompletionTask, Language, Repository, SourceFile};
use crate::parser::{chunk_method_level, chunk_standard, local_scope, ScopeLimits, UnitKind};

pub const DEFAULT_TOKEN_BUDGET: usize = 8_192;

#[derive(Debug, Error)]
pub enum ComposeError {
    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),
    #[error("token budget {budget} cannot hold the suffix alone ({suffix_tokens} tokens)")]
    Unsatisfiable { budget: usize, suffix_tokens: usize },
    #[error("index was built at {built:?} granularity, strategy needs {wanted:?}")]
    GranularityMismatch { built: Granularity, wanted: Granularity },
    #[error(transparent)]
    Index(#[from] IndexError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Granularity {
    WholeFile,
    StandardChunk,
    MethodChunk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Order {
    /// Most relevant item first.
    Descending,
    /// Most relevant item last, next to the prefix.
    Ascending,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Retrieval {
    #[default]
    Bm25,
    /// One recently modified file, see [`recent_baseline`].
    Recent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetRule {
    pub min_tokens: usize,
    pub extra_items: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    pub granularity: Granularity,
    pub k: usize,
    pub order: Order,
    #[serde(default)]
    pub local_scope: bool,
    #[serde(default)]
    pub budget_rule: Option<BudgetRule>,
    #[serde(default = "default_budget")]
    pub token_budget: usize,
    pub language: Language,
    #[serde(default)]
    pub retrieval: Retrieval,
}

fn default_budget() -> usize {
    DEFAULT_TOKEN_BUDGET
}

impl StrategyConfig {
    pub fn new(granularity: Granularity, k: usize, order: Order, language: Language) -> Self {
        StrategyConfig {
            granularity,
            k,
            order,
            local_scope: false,
            budget_rule: None,
            token_budget: DEFAULT_TOKEN_BUDGET,
            language,
            retrieval: Retrieval::Bm25,
        }
    }

    pub fn validate(&self) -> Result<(), ComposeError> {
        if self.token_budget == 0 {
            return Err(ComposeError::InvalidStrategy("token_budget must be positive".into()));
        }
        if let Some(rule) = self.budget_rule {
            if rule.min_tokens == 0 || rule.extra_items == 0 {
                return Err(ComposeError::InvalidStrategy(
                    "budget_rule needs positive min_tokens and extra_items".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<Self, ComposeError> {
        let config: StrategyConfig =
            serde_json::from_str(json).map_err(|e| ComposeError::InvalidStrategy(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }
}

/// Engine settings shared by every strategy.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComposeOptions {
    pub scope: ScopeLimits,
    pub bm25: Bm25Params,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextItem {
    pub path: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBundle {
    pub task_id: String,
    #[serde(rename = "context")]
    pub items: Vec<ContextItem>,
    pub prefix: String,
    pub suffix: String,
    pub truncated: bool,
    pub estimated_tokens: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ContextBundle {
    pub fn new(task_id: impl Into<String>, items: Vec<ContextItem>, prefix: String, suffix: String) -> Self {
        let mut bundle = ContextBundle {
            task_id: task_id.into(),
            items,
            prefix,
            suffix,
            truncated: false,
            estimated_tokens: 0,
            warnings: Vec::new(),
        };
        bundle.estimated_tokens = bundle.estimate();
        bundle
    }

    /// Sum of the per-piece estimates of items, prefix and suffix.
    pub fn estimate(&self) -> usize {
        self.items.iter().map(|i| estimate_tokens(&i.text)).sum::<usize>()
            + estimate_tokens(&self.prefix)
            + estimate_tokens(&self.suffix)
    }
}

/// `ceil(chars / 4)`.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

pub fn order_items<T>(mut ranked: Vec<T>, order: Order) -> Vec<T> {
    if order == Order::Ascending {
        ranked.reverse();
    }
    ranked
}

/// Tops up `selected` (a prefix of `ranked_full`) with `extra_items` more
/// entries when its token estimate is strictly below `min_tokens`.
pub fn apply_budget_rule<T: Clone>(
    ranked_full: &[T],
    selected: Vec<T>,
    rule: Option<BudgetRule>,
    tokens: impl Fn(&T) -> usize,
) -> Vec<T> {
    let Some(rule) = rule else {
        return selected;
    };
    let total: usize = selected.iter().map(&tokens).sum();
    if total >= rule.min_tokens {
        return selected;
    }
    let mut out = selected;
    let from = out.len().min(ranked_full.len());
    let to = (from + rule.extra_items).min(ranked_full.len());
    out.extend_from_slice(&ranked_full[from..to]);
    out
}

/// Drops items from the front, then characters from the front of the
/// prefix, until the bundle fits `token_budget`.
pub fn truncate_left(mut bundle: ContextBundle, token_budget: usize) -> Result<ContextBundle, ComposeError> {
    let suffix_tokens = estimate_tokens(&bundle.suffix);
    if suffix_tokens > token_budget {
        return Err(ComposeError::Unsatisfiable {
            budget: token_budget,
            suffix_tokens,
        });
    }
    let mut total = bundle.estimate();
    let mut dropped = 0;
    while total > token_budget && dropped < bundle.items.len() {
        total -= estimate_tokens(&bundle.items[dropped].text);
        dropped += 1;
    }
    if dropped > 0 {
        bundle.items.drain(..dropped);
        bundle.truncated = true;
    }
    if total > token_budget {
        let keep_chars = (token_budget - suffix_tokens) * 4;
        let chars = bundle.prefix.chars().count();
        let cut = bundle
            .prefix
            .char_indices()
            .nth(chars.saturating_sub(keep_chars))
            .map_or(bundle.prefix.len(), |(i, _)| i);
        bundle.prefix.drain(..cut);
        bundle.truncated = true;
    }
    bundle.estimated_tokens = bundle.estimate();
    Ok(bundle)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalItem {
    pub id: String,
    pub path: String,
    pub kind: Option<UnitKind>,
    pub text: String,
}

/// BM25 over a repository's files or chunks. Built once per repository and
/// granularity; the target file is excluded per query.
#[derive(Debug, Clone)]
pub struct RetrievalIndex {
    granularity: Granularity,
    items: Vec<RetrievalItem>,
    bm25: Bm25Index,
    by_path: HashMap<String, Vec<usize>>,
}

pub fn retrieval_items(repo: &Repository, granularity: Granularity, exec: Exec) -> Vec<RetrievalItem> {
    let per_file = exec.map(repo.files(), |f: &SourceFile| -> Vec<RetrievalItem> {
        match granularity {
            Granularity::WholeFile => vec![RetrievalItem {
                id: f.path.clone(),
                path: f.path.clone(),
                kind: None,
                text: f.text.clone(),
            }],
            Granularity::StandardChunk | Granularity::MethodChunk => {
                let chunks = if granularity == Granularity::StandardChunk {
                    chunk_standard(f)
                } else {
                    chunk_method_level(f)
                };
                chunks
                    .into_iter()
                    .map(|c| RetrievalItem {
                        id: c.chunk_id,
                        path: c.source_path,
                        kind: Some(c.kind),
                        text: c.text,
                    })
                    .collect()
            }
        }
    });
    per_file.into_iter().flatten().collect()
}

impl RetrievalIndex {
    pub fn build(repo: &Repository, granularity: Granularity, params: Bm25Params, exec: Exec) -> Result<Self, ComposeError> {
        Self::from_items(granularity, retrieval_items(repo, granularity, exec), params, exec)
    }

    pub fn from_items(
        granularity: Granularity,
        items: Vec<RetrievalItem>,
        params: Bm25Params,
        exec: Exec,
    ) -> Result<Self, ComposeError> {
        let pairs: Vec<(String, String)> = items.iter().map(|i| (i.id.clone(), i.text.clone())).collect();
        let bm25 = Bm25Index::build(&pairs, params, exec)?;
        Ok(Self::with_bm25(granularity, items, bm25))
    }

    /// Pairs a previously built (for instance, cached) BM25 index with its items.
    pub fn with_bm25(granularity: Granularity, items: Vec<RetrievalItem>, bm25: Bm25Index) -> Self {
        let mut by_path: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, item) in items.iter().enumerate() {
            by_path.entry(item.path.clone()).or_default().push(i);
        }
        RetrievalIndex {
            granularity,
            items,
            bm25,
            by_path,
        }
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    pub fn items(&self) -> &[RetrievalItem] {
        &self.items
    }

    pub fn bm25(&self) -> &Bm25Index {
        &self.bm25
    }

    /// Item indices whose source is `path`.
    pub fn items_from(&self, path: &str) -> &[usize] {
        self.by_path.get(path).map_or(&[], Vec::as_slice)
    }
}

/// Prefix and suffix as the strategy sees them, trimmed to the enclosing
/// block when `local_scope` is set.
pub fn task_window(task: &CompletionTask, repo: &Repository, config: &StrategyConfig, options: &ComposeOptions) -> (String, String) {
    if !config.local_scope {
        return (task.prefix.clone(), task.suffix.clone());
    }
    let stand_in;
    let file = match repo.get(&task.target_path) {
        Some(f) => f,
        None => {
            let text = format!("{}{}", task.prefix, task.suffix);
            stand_in = SourceFile::new(task.target_path.clone(), text, config.language);
            &stand_in
        }
    };
    let scope = local_scope(task, file, &options.scope);
    (scope.prefix, scope.suffix)
}

pub fn compose_context(
    task: &CompletionTask,
    repo: &Repository,
    config: &StrategyConfig,
    index: &RetrievalIndex,
    options: &ComposeOptions,
) -> Result<ContextBundle, ComposeError> {
    config.validate()?;
    let (prefix, suffix) = task_window(task, repo, config, options);
    let bundle = match config.retrieval {
        Retrieval::Recent => {
            let mut bundle = recent_baseline(task, repo, options.seed);
            bundle.prefix = prefix;
            bundle.suffix = suffix;
            bundle.estimated_tokens = bundle.estimate();
            bundle
        }
        Retrieval::Bm25 => {
            if index.granularity != config.granularity {
                return Err(ComposeError::GranularityMismatch {
                    built: index.granularity,
                    wanted: config.granularity,
                });
            }
            let query = build_query(&prefix, &suffix);
            let extra = config.budget_rule.map_or(0, |r| r.extra_items);
            let ranked: Vec<usize> = index
                .bm25
                .rank_excluding(&query, config.k + extra, index.items_from(&task.target_path))
                .into_iter()
                .map(|r| r.idx)
                .collect();
            let selected = ranked[..config.k.min(ranked.len())].to_vec();
            let chosen = apply_budget_rule(&ranked, selected, config.budget_rule, |&i| {
                estimate_tokens(&index.items[i].text)
            });
            let items = order_items(chosen, config.order)
                .into_iter()
                .map(|i| ContextItem {
                    path: index.items[i].path.clone(),
                    text: index.items[i].text.clone(),
                })
                .collect();
            ContextBundle::new(task.task_id.clone(), items, prefix, suffix)
        }
    };
    truncate_left(bundle, config.token_budget)
}

/// Lines strictly above which a recent file is eligible.
pub const RECENT_MIN_LINES: usize = 10;

fn task_rng(seed: u64, task_id: &str) -> ChaCha8Rng {
    let digest = Sha256::new().chain_update(seed.to_le_bytes()).chain_update(task_id.as_bytes()).finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// The file a recent-files baseline would pick, if any: the first listed
/// recent file that exists and has more than ten lines, otherwise a
/// seeded random non-target file.
pub fn recent_choice<'r>(task: &CompletionTask, repo: &'r Repository, seed: u64) -> Option<&'r SourceFile> {
    let recent = task
        .recent_files
        .iter()
        .flatten()
        .filter(|p| **p != task.target_path)
        .filter_map(|p| repo.get(p))
        .find(|f| f.line_count > RECENT_MIN_LINES);
    if recent.is_some() {
        return recent;
    }
    let candidates: Vec<&SourceFile> = repo.files().iter().filter(|f| f.path != task.target_path).collect();
    if candidates.is_empty() {
        return None;
    }
    let pick = task_rng(seed, &task.task_id).random_range(0..candidates.len());
    Some(candidates[pick])
}

pub fn recent_baseline(task: &CompletionTask, repo: &Repository, seed: u64) -> ContextBundle {
    let items = recent_choice(task, repo, seed)
        .map(|f| ContextItem {
            path: f.path.clone(),
            text: f.text.clone(),
        })
        .into_iter()
        .collect::<Vec<_>>();
    let empty = items.is_empty();
    let mut bundle = ContextBundle::new(task.task_id.clone(), items, task.prefix.clone(), task.suffix.clone());
    if empty {
        let msg = format!("repository {} has no candidate files for the recent baseline", repo.id);
        log::warn!("{}: {msg}", task.task_id);
        bundle.warnings.push(msg);
    }
    bundle
}
