//! Context collection for repository-level fill-in-the-middle completion.
//!
//! The pipeline scans a repository ([`ingest`]), splits source files into
//! structural units ([`parser`]), ranks files or chunks with BM25 against the
//! prefix and suffix of a completion task ([`index`]), assembles an ordered,
//! token-budgeted context bundle ([`compose`]), and scores completions with
//! chrF ([`metrics`]). [`harness`] ties these together for dataset runs.

pub mod compose;
pub mod exec;
pub mod harness;
pub mod index;
pub mod ingest;
pub mod metrics;
pub mod parser;

pub use compose::{
    compose_context, recent_baseline, ContextBundle, ContextItem, Granularity, Order,
    RetrievalIndex, StrategyConfig,
};
pub use exec::Exec;
pub use index::{build_query, tokenize_code, Bm25Index, Bm25Params};
pub use ingest::{load_tasks, repo_stats, scan_repository, CompletionTask, Language, Repository, SourceFile};
pub use metrics::{chrf, ChrfConfig};
pub use parser::{chunk_method_level, chunk_standard, enclosing_block, parse_units, Chunk, UnitKind};
