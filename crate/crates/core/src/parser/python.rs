//! Indentation-based structure for Python.

use super::{Outline, Span, UnitKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LineClass {
    Blank,
    Comment,
    /// Starts a logical line.
    Code,
    /// Inside a string, bracket or backslash continuation.
    Continuation,
}

#[derive(Debug, Clone, Copy)]
struct Line {
    start: usize,
    /// Excludes the line terminator.
    end: usize,
    /// Leading spaces, tabs and form feeds; each counts as one.
    indent: usize,
    class: LineClass,
}

impl Line {
    fn code_start(&self) -> usize {
        self.start + self.indent
    }
}

fn scan_lines(text: &str, mask: Option<usize>) -> Vec<Line> {
    let bytes = text.as_bytes();
    let mut lines = Vec::new();
    let mut string: Option<(u8, bool)> = None;
    let mut depth = 0usize;
    let mut backslash = false;
    let mut start = 0;
    while start < bytes.len() {
        let (mut end, next) = match bytes[start..].iter().position(|&b| b == b'\n') {
            Some(p) => (start + p, start + p + 1),
            None => (bytes.len(), bytes.len()),
        };
        if end > start && bytes[end - 1] == b'\r' {
            end -= 1;
        }
        let continuing = string.is_some() || depth > 0 || backslash;
        backslash = false;
        let indent = bytes[start..end]
            .iter()
            .take_while(|b| matches!(b, b' ' | b'\t' | b'\x0c'))
            .count();
        let body = start + indent;
        let mut class = if continuing {
            LineClass::Continuation
        } else if body == end {
            LineClass::Blank
        } else if bytes[body] == b'#' {
            LineClass::Comment
        } else {
            LineClass::Code
        };
        // The missing middle sits on this line, so it is code at this depth.
        if class == LineClass::Blank && indent > 0 && mask.is_some_and(|m| m >= start && m <= end) {
            class = LineClass::Code;
        }

        let mut i = if continuing { start } else { body };
        let mut escaped_eol = false;
        while i < end {
            let b = bytes[i];
            if let Some((quote, triple)) = string {
                if b == b'\\' {
                    if i + 1 >= end {
                        escaped_eol = true;
                    }
                    i += 2;
                    continue;
                }
                if b == quote {
                    if !triple {
                        string = None;
                        i += 1;
                        continue;
                    }
                    if i + 2 < end && bytes[i + 1] == quote && bytes[i + 2] == quote {
                        string = None;
                        i += 3;
                        continue;
                    }
                }
                i += 1;
                continue;
            }
            match b {
                b'#' => break,
                b'"' | b'\'' => {
                    if i + 2 < end && bytes[i + 1] == b && bytes[i + 2] == b {
                        string = Some((b, true));
                        i += 3;
                    } else {
                        string = Some((b, false));
                        i += 1;
                    }
                }
                b'(' | b'[' | b'{' => {
                    depth += 1;
                    i += 1;
                }
                b')' | b']' | b'}' => {
                    depth = depth.saturating_sub(1);
                    i += 1;
                }
                b'\\' => {
                    if i + 1 >= end {
                        backslash = true;
                    }
                    i += 1;
                }
                _ => i += 1,
            }
        }
        if let Some((_, false)) = string {
            if !escaped_eol {
                string = None;
            }
        }
        lines.push(Line {
            start,
            end,
            indent,
            class,
        });
        start = next;
    }
    lines
}

fn is_ident_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b >= 0x80
}

fn starts_with_word(s: &[u8], word: &str) -> bool {
    s.starts_with(word.as_bytes()) && s.get(word.len()).is_none_or(|&b| !is_ident_byte(b))
}

fn is_def(s: &[u8]) -> bool {
    if starts_with_word(s, "def") {
        return true;
    }
    if starts_with_word(s, "async") {
        let rest = &s[5..];
        let skip = rest.iter().take_while(|b| matches!(b, b' ' | b'\t')).count();
        return skip > 0 && starts_with_word(&rest[skip..], "def");
    }
    false
}

fn is_class(s: &[u8]) -> bool {
    starts_with_word(s, "class")
}

fn is_decorator(s: &[u8]) -> bool {
    s.first() == Some(&b'@')
}

fn is_import(s: &[u8]) -> bool {
    starts_with_word(s, "import") || starts_with_word(s, "from")
}

fn is_clause(s: &[u8]) -> bool {
    ["else", "elif", "except", "finally"].iter().any(|w| starts_with_word(s, w))
}

/// A statement consisting of a single string literal, optionally followed by a comment.
fn is_string_stmt(s: &[u8]) -> bool {
    let mut i = 0;
    while i < s.len() && i < 2 && b"rRbBuUfF".contains(&s[i]) {
        i += 1;
    }
    let Some(&quote) = s.get(i) else {
        return false;
    };
    if quote != b'"' && quote != b'\'' {
        return false;
    }
    let triple = s[i..].starts_with(&[quote, quote, quote]);
    let mut j = i + if triple { 3 } else { 1 };
    loop {
        if j >= s.len() {
            return false;
        }
        let b = s[j];
        if b == b'\\' {
            j += 2;
            continue;
        }
        if triple {
            if s[j..].starts_with(&[quote, quote, quote]) {
                j += 3;
                break;
            }
        } else if b == quote {
            j += 1;
            break;
        } else if b == b'\n' {
            return false;
        }
        j += 1;
    }
    let rest = &s[j..];
    let k = rest.iter().take_while(|b| b.is_ascii_whitespace()).count();
    k == rest.len() || rest[k] == b'#'
}

struct Structure<'a> {
    bytes: &'a [u8],
    lines: Vec<Line>,
}

impl<'a> Structure<'a> {
    fn new(text: &'a str, mask: Option<usize>) -> Self {
        Structure {
            bytes: text.as_bytes(),
            lines: scan_lines(text, mask),
        }
    }

    fn head(&self, i: usize) -> &'a [u8] {
        let l = self.lines[i];
        &self.bytes[l.code_start()..l.end]
    }

    /// Last physical line of the logical line starting at `i`.
    fn stmt_last(&self, i: usize) -> usize {
        let mut j = i;
        while j + 1 < self.lines.len() && self.lines[j + 1].class == LineClass::Continuation {
            j += 1;
        }
        j
    }

    /// Last line of the block headed at `i`: every following line indented
    /// deeper than `indent`, with blank and shallow comment lines absorbed
    /// only when deeper code follows.
    fn block_last(&self, i: usize, indent: usize) -> usize {
        let mut last = self.stmt_last(i);
        let mut j = last + 1;
        while j < self.lines.len() {
            let l = self.lines[j];
            match l.class {
                LineClass::Blank => j += 1,
                LineClass::Comment if l.indent > indent => {
                    last = j;
                    j += 1;
                }
                LineClass::Comment => j += 1,
                LineClass::Code if l.indent > indent => {
                    last = self.stmt_last(j);
                    j = last + 1;
                }
                LineClass::Code => break,
                LineClass::Continuation => {
                    last = j;
                    j += 1;
                }
            }
        }
        last
    }

    /// Follows a run of decorators starting at `i` to the decorated
    /// statement. Returns the line of the `def`/`class` and its kind, or the
    /// last decorator line when nothing decoratable follows.
    fn decorated_target(&self, i: usize) -> (usize, Option<UnitKind>) {
        let indent = self.lines[i].indent;
        let mut j = i;
        loop {
            let last = self.stmt_last(j);
            let mut k = last + 1;
            while k < self.lines.len() && matches!(self.lines[k].class, LineClass::Blank | LineClass::Comment) {
                k += 1;
            }
            if k >= self.lines.len() || self.lines[k].class != LineClass::Code || self.lines[k].indent != indent {
                return (last, None);
            }
            let s = self.head(k);
            if is_decorator(s) {
                j = k;
            } else if is_def(s) {
                return (k, Some(UnitKind::DecoratedFunction));
            } else if is_class(s) {
                return (k, Some(UnitKind::Class));
            } else {
                return (last, None);
            }
        }
    }

    fn units(&self) -> Vec<(Span, Option<usize>)> {
        let lines = &self.lines;
        let n = lines.len();
        let mut out: Vec<(Span, Option<usize>)> = Vec::new();
        let mut i = 0;
        while i < n {
            let line = lines[i];
            match line.class {
                LineClass::Blank => i += 1,
                LineClass::Comment => {
                    let mut j = i;
                    while j + 1 < n && lines[j + 1].class == LineClass::Comment {
                        j += 1;
                    }
                    out.push((span(UnitKind::Other, line.code_start(), lines[j].end), None));
                    i = j + 1;
                }
                LineClass::Continuation => {
                    let last = self.block_last(i, 0);
                    out.push((span(UnitKind::Other, line.code_start(), lines[last].end), None));
                    i = last + 1;
                }
                LineClass::Code if line.indent > 0 => {
                    let last = self.block_last(i, 0);
                    out.push((span(UnitKind::Other, line.code_start(), lines[last].end), None));
                    i = last + 1;
                }
                LineClass::Code => {
                    let s = self.head(i);
                    let mut header = None;
                    let (kind, last) = if is_decorator(s) {
                        match self.decorated_target(i) {
                            (t, Some(kind)) => {
                                header = Some(t);
                                (kind, self.block_last(t, 0))
                            }
                            (last, None) => (UnitKind::Other, last),
                        }
                    } else if is_def(s) {
                        (UnitKind::Function, self.block_last(i, 0))
                    } else if is_class(s) {
                        header = Some(i);
                        (UnitKind::Class, self.block_last(i, 0))
                    } else if is_import(s) {
                        (UnitKind::Import, self.block_last(i, 0))
                    } else if is_string_stmt(&self.bytes[line.start..lines[self.stmt_last(i)].end]) {
                        (UnitKind::Docstring, self.block_last(i, 0))
                    } else {
                        (UnitKind::ExpressionStmt, self.block_last(i, 0))
                    };
                    let end = lines[last].end;
                    if kind == UnitKind::ExpressionStmt && is_clause(s) {
                        if let Some((prev, _)) = out.last_mut() {
                            if prev.kind == UnitKind::ExpressionStmt {
                                prev.end = end;
                                i = last + 1;
                                continue;
                            }
                        }
                    }
                    let header = header.filter(|_| kind == UnitKind::Class);
                    out.push((span(kind, line.start, end), header));
                    i = last + 1;
                }
            }
        }
        out
    }

    /// Methods nested exactly one level inside the class headed at line `h`.
    fn method_starts(&self, h: usize, class_end: usize) -> Vec<(usize, UnitKind)> {
        let lines = &self.lines;
        let class_indent = lines[h].indent;
        let header_last = self.stmt_last(h);
        let Some(body_indent) = lines[header_last + 1..]
            .iter()
            .take_while(|l| l.start < class_end)
            .find(|l| l.class == LineClass::Code && l.indent > class_indent)
            .map(|l| l.indent)
        else {
            return Vec::new();
        };
        let mut out = Vec::new();
        let mut j = header_last + 1;
        while j < lines.len() && lines[j].start < class_end {
            let l = lines[j];
            if l.class == LineClass::Code && l.indent == body_indent {
                let s = self.head(j);
                if is_decorator(s) {
                    let (t, kind) = self.decorated_target(j);
                    if kind == Some(UnitKind::DecoratedFunction) {
                        out.push((l.start, UnitKind::DecoratedFunction));
                    }
                    j = t + 1;
                    continue;
                }
                if is_def(s) {
                    out.push((l.start, UnitKind::Function));
                }
            }
            j += 1;
        }
        out
    }

    fn scope_blocks(&self) -> Vec<Span> {
        let lines = &self.lines;
        let mut out = Vec::new();
        let mut i = 0;
        while i < lines.len() {
            let line = lines[i];
            if line.class != LineClass::Code {
                i += 1;
                continue;
            }
            let s = self.head(i);
            if is_decorator(s) {
                let (t, kind) = self.decorated_target(i);
                if let Some(kind) = kind {
                    let last = self.block_last(t, line.indent);
                    out.push(span(kind, line.start, lines[last].end));
                }
                i = t + 1;
                continue;
            }
            let kind = if is_def(s) {
                Some(UnitKind::Function)
            } else if is_class(s) {
                Some(UnitKind::Class)
            } else {
                None
            };
            if let Some(kind) = kind {
                let last = self.block_last(i, line.indent);
                out.push(span(kind, line.start, lines[last].end));
            }
            i += 1;
        }
        out
    }
}

fn span(kind: UnitKind, start: usize, end: usize) -> Span {
    Span { kind, start, end }
}

pub(super) fn outline(text: &str) -> Outline {
    let st = Structure::new(text, None);
    let mut units = Vec::new();
    let mut methods = Vec::new();
    for (unit, header) in st.units() {
        methods.push(header.map(|h| st.method_starts(h, unit.end)).unwrap_or_default());
        units.push(unit);
    }
    Outline { units, methods }
}

pub(super) fn scope_blocks(text: &str, mask: Option<usize>) -> Vec<Span> {
    Structure::new(text, mask).scope_blocks()
}
