//! Brace-matching structure for Kotlin.
//!
//! A first pass labels every byte as code, comment or string literal
//! (templates inside strings are code, nested block comments are handled).
//! Statements are then split at newlines of nesting depth zero unless the
//! line obviously continues.

use std::cmp::Reverse;

use super::{line_start_if_indented, Outline, Span, UnitKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ByteClass {
    Code,
    Comment,
    Str,
}

#[derive(Debug, Clone, Copy)]
enum Frame {
    Code,
    Template { braces: usize },
    Str,
    RawStr,
}

const MODIFIERS: &[&str] = &[
    "public", "private", "protected", "internal", "open", "final", "abstract", "sealed", "data", "enum",
    "inner", "override", "suspend", "inline", "noinline", "crossinline", "tailrec", "operator", "infix",
    "external", "annotation", "value", "const", "lateinit", "expect", "actual", "companion", "vararg",
];

fn char_literal_len(bytes: &[u8], i: usize) -> Option<usize> {
    let lead = *bytes.get(i + 1)?;
    if lead == b'\\' {
        let limit = (i + 9).min(bytes.len());
        return (i + 2..limit)
            .take_while(|&j| bytes[j] != b'\n')
            .find(|&j| bytes[j] == b'\'')
            .map(|j| j - i + 1);
    }
    if lead == b'\'' || lead == b'\n' {
        return None;
    }
    let width = match lead {
        0xf0..=0xff => 4,
        0xe0..=0xef => 3,
        0xc0..=0xdf => 2,
        _ => 1,
    };
    (bytes.get(i + 1 + width) == Some(&b'\'')).then_some(width + 2)
}

fn classify_bytes(bytes: &[u8]) -> Vec<ByteClass> {
    let n = bytes.len();
    let mut cls = vec![ByteClass::Code; n];
    let mut stack = vec![Frame::Code];
    let mut i = 0;
    while i < n {
        let b = bytes[i];
        let top = *stack.last().unwrap_or(&Frame::Code);
        match top {
            Frame::Code | Frame::Template { .. } => {
                if b == b'/' && bytes.get(i + 1) == Some(&b'/') {
                    while i < n && bytes[i] != b'\n' {
                        cls[i] = ByteClass::Comment;
                        i += 1;
                    }
                } else if b == b'/' && bytes.get(i + 1) == Some(&b'*') {
                    let mut depth = 0usize;
                    while i < n {
                        if bytes[i] == b'/' && bytes.get(i + 1) == Some(&b'*') {
                            depth += 1;
                            cls[i] = ByteClass::Comment;
                            cls[i + 1] = ByteClass::Comment;
                            i += 2;
                        } else if bytes[i] == b'*' && bytes.get(i + 1) == Some(&b'/') {
                            cls[i] = ByteClass::Comment;
                            cls[i + 1] = ByteClass::Comment;
                            i += 2;
                            depth -= 1;
                            if depth == 0 {
                                break;
                            }
                        } else {
                            cls[i] = ByteClass::Comment;
                            i += 1;
                        }
                    }
                } else if bytes[i..].starts_with(b"\"\"\"") {
                    cls[i..i + 3].fill(ByteClass::Str);
                    stack.push(Frame::RawStr);
                    i += 3;
                } else if b == b'"' {
                    cls[i] = ByteClass::Str;
                    stack.push(Frame::Str);
                    i += 1;
                } else if b == b'\'' {
                    match char_literal_len(bytes, i) {
                        Some(len) => {
                            cls[i..i + len].fill(ByteClass::Str);
                            i += len;
                        }
                        None => i += 1,
                    }
                } else if let Some(Frame::Template { braces }) = stack.last_mut() {
                    if b == b'{' {
                        *braces += 1;
                    } else if b == b'}' {
                        if *braces == 0 {
                            cls[i] = ByteClass::Str;
                            stack.pop();
                        } else {
                            *braces -= 1;
                        }
                    }
                    i += 1;
                } else {
                    i += 1;
                }
            }
            Frame::Str => {
                if b == b'\n' {
                    // Unterminated literal: the newline is code again.
                    stack.pop();
                } else if b == b'\\' {
                    cls[i] = ByteClass::Str;
                    if bytes.get(i + 1).is_some_and(|&c| c != b'\n') {
                        cls[i + 1] = ByteClass::Str;
                        i += 2;
                    } else {
                        i += 1;
                    }
                } else if b == b'"' {
                    cls[i] = ByteClass::Str;
                    stack.pop();
                    i += 1;
                } else if b == b'$' && bytes.get(i + 1) == Some(&b'{') {
                    cls[i..i + 2].fill(ByteClass::Str);
                    stack.push(Frame::Template { braces: 0 });
                    i += 2;
                } else {
                    cls[i] = ByteClass::Str;
                    i += 1;
                }
            }
            Frame::RawStr => {
                if bytes[i..].starts_with(b"\"\"\"") {
                    while i < n && bytes[i] == b'"' {
                        cls[i] = ByteClass::Str;
                        i += 1;
                    }
                    stack.pop();
                } else if b == b'$' && bytes.get(i + 1) == Some(&b'{') {
                    cls[i..i + 2].fill(ByteClass::Str);
                    stack.push(Frame::Template { braces: 0 });
                    i += 2;
                } else {
                    cls[i] = ByteClass::Str;
                    i += 1;
                }
            }
        }
    }
    cls
}

fn is_ident_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b >= 0x80
}

#[derive(Debug, Clone, Copy)]
struct Stmt {
    kind: UnitKind,
    start: usize,
    end: usize,
    /// Interior of the declaration body braces.
    body: Option<(usize, usize)>,
}

fn is_scope(kind: UnitKind) -> bool {
    matches!(
        kind,
        UnitKind::Class | UnitKind::ObjectDecl | UnitKind::InterfaceDecl | UnitKind::Function
    )
}

struct Kotlin<'a> {
    bytes: &'a [u8],
    cls: Vec<ByteClass>,
}

impl<'a> Kotlin<'a> {
    fn new(text: &'a str) -> Self {
        let bytes = text.as_bytes();
        Kotlin {
            bytes,
            cls: classify_bytes(bytes),
        }
    }

    fn is_code_ws(&self, i: usize) -> bool {
        self.cls[i] == ByteClass::Code && self.bytes[i].is_ascii_whitespace()
    }

    fn skip_trivia(&self, mut i: usize, hi: usize) -> usize {
        while i < hi && (self.is_code_ws(i) || self.cls[i] == ByteClass::Comment) {
            i += 1;
        }
        i
    }

    fn word_at(&self, i: usize, hi: usize) -> &'a [u8] {
        let mut j = i;
        while j < hi && self.cls[j] == ByteClass::Code && is_ident_byte(self.bytes[j]) {
            j += 1;
        }
        &self.bytes[i..j]
    }

    fn skip_group(&self, mut i: usize, hi: usize) -> usize {
        let mut depth = 0usize;
        while i < hi {
            if self.cls[i] == ByteClass::Code {
                match self.bytes[i] {
                    b'(' | b'[' => depth += 1,
                    b')' | b']' => {
                        depth = depth.saturating_sub(1);
                        if depth == 0 {
                            return i + 1;
                        }
                    }
                    _ => {}
                }
            }
            i += 1;
        }
        hi
    }

    /// Kind of the statement at `start` and the offset of its first token
    /// after annotations and modifiers.
    fn head(&self, start: usize, hi: usize) -> (UnitKind, usize) {
        let mut i = start;
        let mut saw_word = false;
        loop {
            i = self.skip_trivia(i, hi);
            if i >= hi {
                return (UnitKind::Other, hi);
            }
            if self.cls[i] == ByteClass::Code && self.bytes[i] == b'@' {
                i += 1;
                while i < hi
                    && self.cls[i] == ByteClass::Code
                    && (is_ident_byte(self.bytes[i]) || matches!(self.bytes[i], b'.' | b':'))
                {
                    i += 1;
                }
                if i < hi && self.cls[i] == ByteClass::Code && matches!(self.bytes[i], b'(' | b'[') {
                    i = self.skip_group(i, hi);
                }
                continue;
            }
            let word = self.word_at(i, hi);
            if word.is_empty() {
                let kind = if saw_word { UnitKind::ExpressionStmt } else { UnitKind::Other };
                return (kind, i);
            }
            if MODIFIERS.iter().any(|m| m.as_bytes() == word) {
                saw_word = true;
                i += word.len();
                continue;
            }
            let kind = match word {
                b"package" => UnitKind::PackageDecl,
                b"import" => UnitKind::Import,
                b"class" => UnitKind::Class,
                b"object" => UnitKind::ObjectDecl,
                b"interface" => UnitKind::InterfaceDecl,
                b"fun" => {
                    let next = self.skip_trivia(i + 3, hi);
                    if next < hi && self.word_at(next, hi) == b"interface" {
                        UnitKind::InterfaceDecl
                    } else {
                        UnitKind::Function
                    }
                }
                b"val" | b"var" => UnitKind::TopLevelProperty,
                b"typealias" => UnitKind::Other,
                _ => UnitKind::ExpressionStmt,
            };
            return (kind, i);
        }
    }

    fn next_line_continues(&self, nl: usize, hi: usize) -> bool {
        let q = self.skip_trivia(nl + 1, hi);
        if q >= hi || self.cls[q] != ByteClass::Code {
            return false;
        }
        let rest = &self.bytes[q..hi];
        let starts = |p: &[u8]| rest.starts_with(p);
        if (starts(b".") && !starts(b".."))
            || starts(b"?.")
            || starts(b"?:")
            || starts(b"&&")
            || starts(b"||")
            || starts(b"->")
            || starts(b"{")
            || (starts(b"=") && !starts(b"=="))
            || (starts(b":") && !starts(b"::"))
        {
            return true;
        }
        let word = self.word_at(q, hi);
        match word {
            b"else" | b"catch" | b"finally" | b"where" | b"by" | b"get" | b"set" => true,
            b"private" | b"protected" | b"internal" | b"public" => {
                let after = self.skip_trivia(q + word.len(), hi);
                after < hi && matches!(self.word_at(after, hi), b"get" | b"set")
            }
            _ => false,
        }
    }

    fn trim_end(&self, start: usize, mut end: usize) -> usize {
        while end > start + 1 && self.bytes[end - 1].is_ascii_whitespace() {
            end -= 1;
        }
        end
    }

    /// Scans one statement starting at a non-trivia byte. Returns the
    /// statement and the offset to resume from.
    fn statement(&self, start: usize, hi: usize) -> (Stmt, usize) {
        let (kind, first_token) = self.head(start, hi);
        let wants_body = is_scope(kind);
        let mut depth = 0usize;
        let mut body_open = None;
        let mut body = None;
        let mut saw_eq = false;
        let mut last2 = [0u8; 2];
        let mut i = start;
        loop {
            if i >= hi {
                let end = self.trim_end(start, hi);
                return (Stmt { kind, start, end, body }, hi);
            }
            let b = self.bytes[i];
            match self.cls[i] {
                ByteClass::Comment => {
                    i += 1;
                    continue;
                }
                ByteClass::Str => {
                    last2 = [last2[1], b'"'];
                    i += 1;
                    continue;
                }
                ByteClass::Code => {}
            }
            match b {
                b'{' | b'(' | b'[' => {
                    if b == b'{'
                        && depth == 0
                        && wants_body
                        && body_open.is_none()
                        && i >= first_token
                        && !(kind == UnitKind::Function && saw_eq)
                    {
                        body_open = Some(i);
                    }
                    depth += 1;
                }
                b'}' | b')' | b']' => {
                    if depth > 0 {
                        depth -= 1;
                        if depth == 0 && b == b'}' && body.is_none() {
                            if let Some(open) = body_open {
                                body = Some((open + 1, i));
                            }
                        }
                    }
                }
                b';' if depth == 0 => {
                    return (Stmt { kind, start, end: i + 1, body }, i + 1);
                }
                b'=' if depth == 0 => saw_eq = true,
                b'\n' if depth == 0 && i >= first_token && !self.line_continues(last2, i, hi) => {
                    let end = self.trim_end(start, i);
                    return (Stmt { kind, start, end, body }, i + 1);
                }
                _ => {}
            }
            if !b.is_ascii_whitespace() {
                last2 = [last2[1], b];
            }
            i += 1;
        }
    }

    fn line_continues(&self, last2: [u8; 2], nl: usize, hi: usize) -> bool {
        let [prev, last] = last2;
        let dangling = match last {
            b'=' | b':' | b',' | b'.' | b'&' | b'|' => true,
            b'+' => prev != b'+',
            b'-' => prev != b'-',
            b'>' => prev == b'-',
            _ => false,
        };
        dangling || self.next_line_continues(nl, hi)
    }

    fn split(&self, lo: usize, hi: usize) -> Vec<Stmt> {
        let mut out = Vec::new();
        let mut pos = lo;
        while pos < hi {
            if self.is_code_ws(pos) {
                pos += 1;
                continue;
            }
            if self.cls[pos] == ByteClass::Comment {
                let start = pos;
                let end = loop {
                    while pos < hi && self.cls[pos] == ByteClass::Comment {
                        pos += 1;
                    }
                    let end = pos;
                    let mut q = pos;
                    let mut newlines = 0;
                    while q < hi && self.is_code_ws(q) {
                        newlines += usize::from(self.bytes[q] == b'\n');
                        q += 1;
                    }
                    if q < hi && self.cls[q] == ByteClass::Comment && newlines < 2 {
                        pos = q;
                    } else {
                        break end;
                    }
                };
                out.push(Stmt {
                    kind: UnitKind::Other,
                    start,
                    end,
                    body: None,
                });
                pos = end;
                continue;
            }
            let (stmt, next) = self.statement(pos, hi);
            out.push(stmt);
            pos = next;
        }
        out
    }

    /// Split points for the methods of a class body. A comment block that
    /// sits directly above a method travels with it.
    fn method_starts(&self, body: (usize, usize)) -> Vec<(usize, UnitKind)> {
        let children = self.split(body.0, body.1);
        let mut out = Vec::new();
        for (idx, child) in children.iter().enumerate() {
            if child.kind != UnitKind::Function {
                continue;
            }
            let mut start = child.start;
            if let Some(prev) = idx.checked_sub(1).map(|p| children[p]) {
                let gap = &self.bytes[prev.end..child.start];
                let newlines = gap.iter().filter(|&&b| b == b'\n').count();
                if prev.kind == UnitKind::Other
                    && self.cls[prev.start] == ByteClass::Comment
                    && newlines == 1
                    && gap.iter().all(u8::is_ascii_whitespace)
                {
                    start = prev.start;
                }
            }
            out.push((line_start_if_indented(self.bytes, start), UnitKind::Function));
        }
        out
    }

    fn scope_blocks(&self) -> Vec<Span> {
        let mut out = Vec::new();
        let mut work = vec![(0, self.bytes.len())];
        while let Some((lo, hi)) = work.pop() {
            for stmt in self.split(lo, hi) {
                if !is_scope(stmt.kind) {
                    continue;
                }
                out.push(Span {
                    kind: stmt.kind,
                    start: line_start_if_indented(self.bytes, stmt.start),
                    end: stmt.end,
                });
                if let Some(body) = stmt.body {
                    work.push(body);
                }
            }
        }
        out.sort_by_key(|s| (s.start, Reverse(s.end)));
        out
    }
}

pub(super) fn outline(text: &str) -> Outline {
    let kt = Kotlin::new(text);
    let stmts = kt.split(0, text.len());
    let methods = stmts
        .iter()
        .map(|s| match (s.kind, s.body) {
            (UnitKind::Class, Some(body)) => kt.method_starts(body),
            _ => Vec::new(),
        })
        .collect();
    let units = stmts
        .into_iter()
        .map(|s| Span {
            kind: s.kind,
            start: s.start,
            end: s.end,
        })
        .collect();
    Outline { units, methods }
}

pub(super) fn scope_blocks(text: &str) -> Vec<Span> {
    Kotlin::new(text).scope_blocks()
}
