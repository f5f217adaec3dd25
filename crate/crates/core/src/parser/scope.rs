//! Local-scope trimming of a task's prefix and suffix.
//!
//! The mask sits at `prefix.len()`. When the target file is exactly
//! `prefix + middle + suffix` the file itself is analysed; otherwise the
//! structure is recovered from `prefix + suffix`, which never needs the
//! missing middle.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use super::{innermost, scope_blocks, LineIndex, StructuralUnit};
use crate::ingest::{CompletionTask, SourceFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScopeLimits {
    /// Characters of prefix kept when the mask is outside every block.
    pub max_prefix_chars: usize,
    /// Characters of suffix kept when the mask is outside every block.
    pub max_suffix_chars: usize,
}

impl Default for ScopeLimits {
    fn default() -> Self {
        ScopeLimits {
            max_prefix_chars: 6_000,
            max_suffix_chars: 3_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalScope {
    pub prefix: String,
    pub suffix: String,
    /// Enclosing block in the coordinates of the analysed text.
    pub block: Option<StructuralUnit>,
}

fn last_chars(s: &str, n: usize) -> &str {
    let count = s.chars().count();
    if count <= n {
        return s;
    }
    let idx = s.char_indices().nth(count - n).map_or(s.len(), |(i, _)| i);
    &s[idx..]
}

fn first_chars(s: &str, n: usize) -> &str {
    let idx = s.char_indices().nth(n).map_or(s.len(), |(i, _)| i);
    &s[..idx]
}

fn floor_boundary(s: &str, mut idx: usize) -> usize {
    idx = idx.min(s.len());
    while !s.is_char_boundary(idx) {
        idx -= 1;
    }
    idx
}

pub fn local_scope(task: &CompletionTask, file: &SourceFile, limits: &ScopeLimits) -> LocalScope {
    let (prefix, suffix) = (task.prefix.as_str(), task.suffix.as_str());
    let whole = &file.text;
    let (text, suffix_start): (Cow<'_, str>, usize) = if whole.len() >= prefix.len() + suffix.len()
        && whole.starts_with(prefix)
        && whole.ends_with(suffix)
    {
        (Cow::Borrowed(whole.as_str()), whole.len() - suffix.len())
    } else {
        (Cow::Owned(format!("{prefix}{suffix}")), prefix.len())
    };
    let mask = prefix.len();
    let blocks = scope_blocks(&text, file.language, Some(mask));
    match innermost(&blocks, mask) {
        Some(block) => {
            let start = floor_boundary(prefix, block.start);
            let keep = floor_boundary(suffix, block.end.saturating_sub(suffix_start));
            LocalScope {
                prefix: prefix[start..].to_owned(),
                suffix: suffix[..keep].to_owned(),
                block: Some(LineIndex::new(&text).unit(block)),
            }
        }
        None => LocalScope {
            prefix: last_chars(prefix, limits.max_prefix_chars).to_owned(),
            suffix: first_chars(suffix, limits.max_suffix_chars).to_owned(),
            block: None,
        },
    }
}

pub fn trim_prefix_local_scope(task: &CompletionTask, file: &SourceFile, limits: &ScopeLimits) -> String {
    local_scope(task, file, limits).prefix
}

pub fn trim_suffix_local_scope(task: &CompletionTask, file: &SourceFile, limits: &ScopeLimits) -> String {
    local_scope(task, file, limits).suffix
}
