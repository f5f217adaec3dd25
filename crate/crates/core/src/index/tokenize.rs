use serde::{Deserialize, Serialize};

/// Bumped whenever tokenization output changes; part of index cache keys.
pub const TOKENIZER_VERSION: &str = "code-tokens/1";

/// Lowercase alphanumeric tokens, never empty.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenStream(Vec<String>);

impl TokenStream {
    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<String> {
        self.0
    }

    pub fn extend(&mut self, other: TokenStream) {
        self.0.extend(other.0);
    }
}

fn push_lower(piece: &str, out: &mut Vec<String>) {
    let token: String = piece.chars().flat_map(char::to_lowercase).filter(|c| c.is_alphanumeric()).collect();
    if !token.is_empty() {
        out.push(token);
    }
}

/// Splits an alphanumeric run at lower→upper transitions and before the
/// last capital of an acronym that precedes a lowercase letter
/// (`HTTPServer` → `HTTP`, `Server`).
fn split_camel(word: &str, out: &mut Vec<String>) {
    let chars: Vec<(usize, char)> = word.char_indices().collect();
    let mut start = 0;
    for k in 1..chars.len() {
        let (idx, c) = chars[k];
        let prev = chars[k - 1].1;
        let boundary = c.is_uppercase()
            && (prev.is_lowercase()
                || (prev.is_uppercase() && chars.get(k + 1).is_some_and(|&(_, n)| n.is_lowercase())));
        if boundary {
            push_lower(&word[start..idx], out);
            start = idx;
        }
    }
    push_lower(&word[start..], out);
}

/// Splits on every non-alphanumeric character (underscores included), then
/// at camelCase boundaries, and lowercases.
pub fn tokenize_code(text: &str) -> TokenStream {
    let mut tokens = Vec::new();
    for word in text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
        split_camel(word, &mut tokens);
    }
    TokenStream(tokens)
}

/// Query tokens: the prefix followed by the suffix.
pub fn build_query(prefix: &str, suffix: &str) -> TokenStream {
    let mut q = tokenize_code(prefix);
    q.extend(tokenize_code(suffix));
    q
}
