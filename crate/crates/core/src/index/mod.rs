//! Code-aware tokenization and BM25 ranking.

mod bm25;
mod tokenize;

pub use bm25::{idf, Bm25Index, Bm25Params, IndexError, Ranked, INDEX_FORMAT};
pub use tokenize::{build_query, tokenize_code, TokenStream, TOKENIZER_VERSION};
