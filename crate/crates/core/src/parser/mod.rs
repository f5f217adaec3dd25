//! Lightweight structural parsing of Python and Kotlin sources.
//!
//! Both parsers are total: any input yields a sorted, non-overlapping list of
//! units, and every byte outside a unit is ASCII whitespace. Python structure
//! is recovered from indentation (with a small lexer for strings, brackets
//! and line continuations); Kotlin structure from brace matching over a lexer
//! that understands strings, templates, character literals and comments.

mod kotlin;
mod python;
mod scope;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Language, SourceFile};

pub use scope::{local_scope, trim_prefix_local_scope, trim_suffix_local_scope, LocalScope, ScopeLimits};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum UnitKind {
    Import,
    Class,
    Function,
    DecoratedFunction,
    ObjectDecl,
    InterfaceDecl,
    ExpressionStmt,
    Docstring,
    PackageDecl,
    TopLevelProperty,
    Other,
}

impl UnitKind {
    /// Kinds dropped by chunking.
    pub fn is_import_like(self) -> bool {
        matches!(self, UnitKind::Import | UnitKind::PackageDecl)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("cursor {cursor} is outside the file (length {len})")]
    CursorOutOfRange { cursor: usize, len: usize },
}

/// Half-open byte range with a kind, before line numbers are attached.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Span {
    pub kind: UnitKind,
    pub start: usize,
    pub end: usize,
}

/// Top-level units plus, for each class unit, the start offsets of its
/// methods.
pub(crate) struct Outline {
    pub units: Vec<Span>,
    pub methods: Vec<Vec<(usize, UnitKind)>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralUnit {
    pub kind: UnitKind,
    pub byte_start: usize,
    pub byte_end: usize,
    /// 1-based line of `byte_start`.
    pub line_start: usize,
    /// 1-based line of the last byte.
    pub line_end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub source_path: String,
    pub kind: UnitKind,
    pub byte_start: usize,
    pub byte_end: usize,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkMode {
    Standard,
    MethodLevel,
}

pub(crate) struct LineIndex {
    starts: Vec<usize>,
}

impl LineIndex {
    pub fn new(text: &str) -> Self {
        let mut starts = vec![0];
        starts.extend(text.bytes().enumerate().filter(|(_, b)| *b == b'\n').map(|(i, _)| i + 1));
        LineIndex { starts }
    }

    /// 1-based line containing `offset`.
    pub fn line_of(&self, offset: usize) -> usize {
        self.starts.partition_point(|&s| s <= offset)
    }

    pub fn unit(&self, span: Span) -> StructuralUnit {
        StructuralUnit {
            kind: span.kind,
            byte_start: span.start,
            byte_end: span.end,
            line_start: self.line_of(span.start),
            line_end: self.line_of(span.end.saturating_sub(1).max(span.start)),
        }
    }
}

pub(crate) fn outline(text: &str, language: Language) -> Outline {
    match language {
        Language::Python => python::outline(text),
        Language::Kotlin => kotlin::outline(text),
    }
}

/// Class, function and object declarations at every nesting depth. `mask`
/// marks the position of a missing span, which Python treats as code.
pub(crate) fn scope_blocks(text: &str, language: Language, mask: Option<usize>) -> Vec<Span> {
    match language {
        Language::Python => python::scope_blocks(text, mask),
        Language::Kotlin => kotlin::scope_blocks(text),
    }
}

/// Innermost block containing `cursor`; both ends are inclusive.
pub(crate) fn innermost(blocks: &[Span], cursor: usize) -> Option<Span> {
    blocks
        .iter()
        .filter(|b| b.start <= cursor && cursor <= b.end)
        .max_by(|a, b| a.start.cmp(&b.start).then(b.end.cmp(&a.end)))
        .copied()
}

/// Moves `pos` back to the start of its line when only spaces or tabs precede it.
pub(crate) fn line_start_if_indented(bytes: &[u8], pos: usize) -> usize {
    let mut p = pos;
    while p > 0 && matches!(bytes[p - 1], b' ' | b'\t') {
        p -= 1;
    }
    if p == 0 || bytes[p - 1] == b'\n' {
        p
    } else {
        pos
    }
}

fn rtrim(bytes: &[u8], start: usize, mut end: usize) -> usize {
    while end > start && bytes[end - 1].is_ascii_whitespace() {
        end -= 1;
    }
    end
}

pub fn parse_units(file: &SourceFile) -> Vec<StructuralUnit> {
    let index = LineIndex::new(&file.text);
    outline(&file.text, file.language)
        .units
        .into_iter()
        .map(|s| index.unit(s))
        .collect()
}

fn make_chunk(file: &SourceFile, kind: UnitKind, start: usize, end: usize) -> Chunk {
    Chunk {
        chunk_id: format!("{}:{}-{}", file.path, start, end),
        source_path: file.path.clone(),
        kind,
        byte_start: start,
        byte_end: end,
        text: file.text[start..end].to_owned(),
    }
}

/// Every unit except imports and package declarations, in file order.
pub fn chunk_standard(file: &SourceFile) -> Vec<Chunk> {
    outline(&file.text, file.language)
        .units
        .into_iter()
        .filter(|u| !u.kind.is_import_like())
        .map(|u| make_chunk(file, u.kind, u.start, u.end))
        .collect()
}

/// Like [`chunk_standard`], but a class with methods becomes a header chunk
/// followed by one chunk per method. Class-level code between methods stays
/// with the preceding piece, so no non-whitespace byte is lost.
pub fn chunk_method_level(file: &SourceFile) -> Vec<Chunk> {
    let bytes = file.text.as_bytes();
    let Outline { units, methods } = outline(&file.text, file.language);
    let mut out = Vec::new();
    for (unit, splits) in units.into_iter().zip(methods) {
        if unit.kind.is_import_like() {
            continue;
        }
        let splits: Vec<_> = splits
            .into_iter()
            .filter(|&(s, _)| s > unit.start && s < unit.end)
            .collect();
        if unit.kind != UnitKind::Class || splits.is_empty() {
            out.push(make_chunk(file, unit.kind, unit.start, unit.end));
            continue;
        }
        let mut bounds = vec![(unit.start, UnitKind::Class)];
        bounds.extend(splits);
        for (i, &(start, kind)) in bounds.iter().enumerate() {
            let end = bounds.get(i + 1).map_or(unit.end, |b| b.0);
            let end = rtrim(bytes, start, end);
            if end > start {
                out.push(make_chunk(file, kind, start, end));
            }
        }
    }
    out
}

pub fn chunk_file(file: &SourceFile, mode: ChunkMode) -> Vec<Chunk> {
    match mode {
        ChunkMode::Standard => chunk_standard(file),
        ChunkMode::MethodLevel => chunk_method_level(file),
    }
}

/// The innermost class, function or object declaration containing `cursor`.
pub fn enclosing_block(file: &SourceFile, cursor: usize) -> Result<Option<StructuralUnit>, ParseError> {
    if cursor > file.text.len() {
        return Err(ParseError::CursorOutOfRange {
            cursor,
            len: file.text.len(),
        });
    }
    let blocks = scope_blocks(&file.text, file.language, None);
    Ok(innermost(&blocks, cursor).map(|b| LineIndex::new(&file.text).unit(b)))
}

/// All scope blocks of a file, outermost first.
pub fn scope_units(file: &SourceFile) -> Vec<StructuralUnit> {
    let index = LineIndex::new(&file.text);
    let mut blocks = scope_blocks(&file.text, file.language, None);
    blocks.sort_by(|a, b| a.start.cmp(&b.start).then(b.end.cmp(&a.end)));
    blocks.into_iter().map(|b| index.unit(b)).collect()
}
