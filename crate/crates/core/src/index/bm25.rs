//! Okapi BM25 over an inverted index.
//!
//! score(D, Q) = Σ_{t ∈ Q} idf(t) · f(t, D) · (k1 + 1) / (f(t, D) + k1 · (1 − b + b · |D| / avgdl))
//! with idf(t) = ln((N − df + 0.5) / (df + 0.5) + 1). Repeated query tokens
//! contribute once per occurrence.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tokenize::{tokenize_code, TokenStream, TOKENIZER_VERSION};
use crate::exec::Exec;

pub const INDEX_FORMAT: &str = "fimctx-bm25/1";

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("duplicate item id {0}")]
    DuplicateId(String),
    #[error("unknown item id {0}")]
    UnknownItem(String),
    #[error("invalid BM25 parameters k1={k1} b={b}")]
    InvalidParams { k1: f64, b: f64 },
    #[error("unsupported index format {found:?} (expected {expected:?})")]
    Format { found: String, expected: String },
    #[error("index dump: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<(), IndexError> {
        let ok = self.k1.is_finite() && self.k1 > 0.0 && (0.0..=1.0).contains(&self.b);
        if ok {
            Ok(())
        } else {
            Err(IndexError::InvalidParams { k1: self.k1, b: self.b })
        }
    }
}

/// Non-negative inverse document frequency.
pub fn idf(n_docs: f64, doc_freq: f64) -> f64 {
    ((n_docs - doc_freq + 0.5) / (doc_freq + 0.5) + 1.0).ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ranked {
    pub idx: usize,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct Bm25Index {
    params: Bm25Params,
    ids: Vec<String>,
    lookup: HashMap<String, usize>,
    doc_len: Vec<u64>,
    total_len: u64,
    vocab: HashMap<String, u32>,
    terms: Vec<String>,
    doc_freq: Vec<u32>,
    postings: Vec<Vec<(u32, u32)>>,
    /// Per document, `(term, tf)` sorted by term id.
    doc_terms: Vec<Vec<(u32, u32)>>,
}

#[derive(Serialize, Deserialize)]
struct DumpItem {
    id: String,
    len: u64,
    terms: BTreeMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct Dump {
    format: String,
    tokenizer: String,
    params: Bm25Params,
    items: Vec<DumpItem>,
}

fn count_terms(tokens: &TokenStream) -> BTreeMap<String, u32> {
    let mut counts = BTreeMap::new();
    for t in tokens.as_slice() {
        *counts.entry(t.clone()).or_insert(0) += 1;
    }
    counts
}

impl Bm25Index {
    /// Tokenizes and indexes `(item_id, text)` pairs.
    pub fn build(items: &[(String, String)], params: Bm25Params, exec: Exec) -> Result<Self, IndexError> {
        let counts = exec.map(items, |(_, text)| {
            let tokens = tokenize_code(text);
            (tokens.len() as u64, count_terms(&tokens))
        });
        let ids = items.iter().map(|(id, _)| id.clone()).collect();
        Self::from_counts(ids, counts, params)
    }

    /// Indexes already-tokenized items.
    pub fn from_tokens(items: Vec<(String, TokenStream)>, params: Bm25Params) -> Result<Self, IndexError> {
        let (ids, counts) = items
            .into_iter()
            .map(|(id, t)| (id, (t.len() as u64, count_terms(&t))))
            .unzip();
        Self::from_counts(ids, counts, params)
    }

    fn from_counts(
        ids: Vec<String>,
        counts: Vec<(u64, BTreeMap<String, u32>)>,
        params: Bm25Params,
    ) -> Result<Self, IndexError> {
        params.validate()?;
        let mut lookup = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if lookup.insert(id.clone(), i).is_some() {
                return Err(IndexError::DuplicateId(id.clone()));
            }
        }
        let mut index = Bm25Index {
            params,
            ids,
            lookup,
            doc_len: Vec::with_capacity(counts.len()),
            total_len: 0,
            vocab: HashMap::new(),
            terms: Vec::new(),
            doc_freq: Vec::new(),
            postings: Vec::new(),
            doc_terms: Vec::with_capacity(counts.len()),
        };
        for (doc, (len, terms)) in counts.into_iter().enumerate() {
            index.doc_len.push(len);
            index.total_len += len;
            let mut row = Vec::with_capacity(terms.len());
            for (term, tf) in terms {
                let tid = match index.vocab.get(&term) {
                    Some(&t) => t,
                    None => {
                        let t = index.terms.len() as u32;
                        index.vocab.insert(term.clone(), t);
                        index.terms.push(term);
                        index.doc_freq.push(0);
                        index.postings.push(Vec::new());
                        t
                    }
                };
                index.doc_freq[tid as usize] += 1;
                index.postings[tid as usize].push((doc as u32, tf));
                row.push((tid, tf));
            }
            row.sort_unstable_by_key(|&(t, _)| t);
            index.doc_terms.push(row);
        }
        Ok(index)
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, idx: usize) -> &str {
        &self.ids[idx]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.vocab.get(term).map_or(0, |&t| self.doc_freq[t as usize] as usize)
    }

    pub fn avg_len(&self) -> f64 {
        if self.ids.is_empty() {
            0.0
        } else {
            self.total_len as f64 / self.ids.len() as f64
        }
    }

    fn tf(&self, doc: usize, term: u32) -> u32 {
        let row = &self.doc_terms[doc];
        row.binary_search_by_key(&term, |&(t, _)| t).map_or(0, |i| row[i].1)
    }

    /// Known query terms with multiplicities, in first-occurrence order.
    fn group_query(&self, query: &TokenStream) -> Vec<(u32, u32)> {
        let mut order: Vec<(u32, u32)> = Vec::new();
        let mut slot: HashMap<u32, usize> = HashMap::new();
        for tok in query.as_slice() {
            if let Some(&t) = self.vocab.get(tok) {
                match slot.get(&t) {
                    Some(&i) => order[i].1 += 1,
                    None => {
                        slot.insert(t, order.len());
                        order.push((t, 1));
                    }
                }
            }
        }
        order
    }

    fn weight(&self, idf: f64, tf: u32, len: u64, avg_len: f64) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = tf as f64;
        idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len as f64 / avg_len))
    }

    pub fn score(&self, query: &TokenStream, item_id: &str) -> Result<f64, IndexError> {
        let doc = self
            .position(item_id)
            .ok_or_else(|| IndexError::UnknownItem(item_id.to_owned()))?;
        let n = self.ids.len() as f64;
        let avg = self.avg_len();
        let mut score = 0.0;
        for (term, qcount) in self.group_query(query) {
            let tf = self.tf(doc, term);
            if tf == 0 {
                continue;
            }
            let idf = idf(n, self.doc_freq[term as usize] as f64);
            score += qcount as f64 * self.weight(idf, tf, self.doc_len[doc], avg);
        }
        Ok(score)
    }

    /// Top `k` items by score (descending, ties by ascending id), scored as
    /// if the `excluded` items had never been indexed.
    pub fn rank_excluding(&self, query: &TokenStream, k: usize, excluded: &[usize]) -> Vec<Ranked> {
        let n = self.ids.len();
        let mut skip = vec![false; n];
        let mut removed_len = 0u64;
        let mut removed = 0usize;
        for &e in excluded {
            if e < n && !skip[e] {
                skip[e] = true;
                removed += 1;
                removed_len += self.doc_len[e];
            }
        }
        let live = n - removed;
        if k == 0 || live == 0 {
            return Vec::new();
        }
        let avg = (self.total_len - removed_len) as f64 / live as f64;
        let excluded_docs: Vec<usize> = (0..n).filter(|&d| skip[d]).collect();

        let mut scores = vec![0.0f64; n];
        for (term, qcount) in self.group_query(query) {
            let gone = excluded_docs.iter().filter(|&&d| self.tf(d, term) > 0).count();
            let df = self.doc_freq[term as usize] as usize - gone;
            if df == 0 {
                continue;
            }
            let idf = idf(live as f64, df as f64);
            for &(doc, tf) in &self.postings[term as usize] {
                let doc = doc as usize;
                if !skip[doc] {
                    scores[doc] += qcount as f64 * self.weight(idf, tf, self.doc_len[doc], avg);
                }
            }
        }

        let cmp = |a: &Ranked, b: &Ranked| -> Ordering {
            b.score
                .total_cmp(&a.score)
                .then_with(|| self.ids[a.idx].cmp(&self.ids[b.idx]))
        };
        let mut ranked: Vec<Ranked> = (0..n)
            .filter(|&d| !skip[d])
            .map(|idx| Ranked { idx, score: scores[idx] })
            .collect();
        if ranked.len() > k {
            ranked.select_nth_unstable_by(k - 1, cmp);
            ranked.truncate(k);
        }
        ranked.sort_by(cmp);
        ranked
    }

    /// [`Self::rank_excluding`] keyed by item id.
    pub fn rank_top_k(&self, query: &TokenStream, k: usize, exclude: Option<&HashSet<String>>) -> Vec<(String, f64)> {
        let excluded: Vec<usize> = exclude
            .into_iter()
            .flatten()
            .filter_map(|id| self.position(id))
            .collect();
        self.rank_excluding(query, k, &excluded)
            .into_iter()
            .map(|r| (self.ids[r.idx].clone(), r.score))
            .collect()
    }

    pub fn to_json(&self) -> String {
        let items = (0..self.ids.len())
            .map(|d| DumpItem {
                id: self.ids[d].clone(),
                len: self.doc_len[d],
                terms: self.doc_terms[d]
                    .iter()
                    .map(|&(t, tf)| (self.terms[t as usize].clone(), tf))
                    .collect(),
            })
            .collect();
        let dump = Dump {
            format: INDEX_FORMAT.to_owned(),
            tokenizer: TOKENIZER_VERSION.to_owned(),
            params: self.params,
            items,
        };
        serde_json::to_string(&dump).expect("index dump serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, IndexError> {
        let dump: Dump = serde_json::from_str(json)?;
        if dump.format != INDEX_FORMAT {
            return Err(IndexError::Format {
                found: dump.format,
                expected: INDEX_FORMAT.to_owned(),
            });
        }
        if dump.tokenizer != TOKENIZER_VERSION {
            return Err(IndexError::Format {
                found: dump.tokenizer,
                expected: TOKENIZER_VERSION.to_owned(),
            });
        }
        let (ids, counts) = dump.items.into_iter().map(|i| (i.id, (i.len, i.terms))).unzip();
        Self::from_counts(ids, counts, dump.params)
    }
}
