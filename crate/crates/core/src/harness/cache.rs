//! Retrieval indexes keyed by repository content, granularity and tokenizer.

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use sha2::{Digest, Sha256};

use crate::compose::{retrieval_items, ComposeError, Granularity, RetrievalIndex};
use crate::exec::Exec;
use crate::index::{Bm25Index, Bm25Params, TOKENIZER_VERSION};
use crate::ingest::Repository;

/// SHA-256 over every file's path and text, in path order.
pub fn repo_hash(repo: &Repository) -> String {
    let mut h = Sha256::new();
    for f in repo.files() {
        h.update((f.path.len() as u64).to_le_bytes());
        h.update(f.path.as_bytes());
        h.update((f.text.len() as u64).to_le_bytes());
        h.update(f.text.as_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub repo_hash: String,
    pub granularity: Granularity,
    pub tokenizer: &'static str,
    params: (u64, u64),
}

impl CacheKey {
    pub fn new(repo: &Repository, granularity: Granularity, params: Bm25Params) -> Self {
        CacheKey {
            repo_hash: repo_hash(repo),
            granularity,
            tokenizer: TOKENIZER_VERSION,
            params: (params.k1.to_bits(), params.b.to_bits()),
        }
    }

    fn file_name(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("{}|{:?}|{}|{:?}", self.repo_hash, self.granularity, self.tokenizer, self.params));
        format!("{}.json", hex::encode(h.finalize()))
    }
}

/// In-memory index cache with an optional on-disk layer holding BM25 dumps.
#[derive(Debug, Default)]
pub struct IndexCache {
    memory: Mutex<HashMap<CacheKey, Arc<RetrievalIndex>>>,
    dir: Option<PathBuf>,
    hits: AtomicUsize,
    builds: AtomicUsize,
}

impl IndexCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_dir(dir: impl Into<PathBuf>) -> Self {
        IndexCache {
            dir: Some(dir.into()),
            ..Self::default()
        }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    /// Number of BM25 indexes built from scratch.
    pub fn builds(&self) -> usize {
        self.builds.load(Ordering::Relaxed)
    }

    pub fn get_or_build(
        &self,
        repo: &Repository,
        granularity: Granularity,
        params: Bm25Params,
        exec: Exec,
    ) -> Result<Arc<RetrievalIndex>, ComposeError> {
        let key = CacheKey::new(repo, granularity, params);
        if let Some(found) = self.memory.lock().expect("cache lock").get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(Arc::clone(found));
        }
        let items = retrieval_items(repo, granularity, exec);
        let index = match self.load(&key, &items) {
            Some(bm25) => {
                self.hits.fetch_add(1, Ordering::Relaxed);
                RetrievalIndex::with_bm25(granularity, items, bm25)
            }
            None => {
                self.builds.fetch_add(1, Ordering::Relaxed);
                let index = RetrievalIndex::from_items(granularity, items, params, exec)?;
                self.store(&key, index.bm25());
                index
            }
        };
        let index = Arc::new(index);
        self.memory
            .lock()
            .expect("cache lock")
            .insert(key, Arc::clone(&index));
        Ok(index)
    }

    fn load(&self, key: &CacheKey, items: &[crate::compose::RetrievalItem]) -> Option<Bm25Index> {
        let path = self.dir.as_ref()?.join(key.file_name());
        let json = fs::read_to_string(&path).ok()?;
        let bm25 = match Bm25Index::from_json(&json) {
            Ok(b) => b,
            Err(e) => {
                log::warn!("ignoring cached index {}: {e}", path.display());
                return None;
            }
        };
        let aligned = bm25.len() == items.len() && items.iter().enumerate().all(|(i, it)| bm25.id(i) == it.id);
        aligned.then_some(bm25)
    }

    fn store(&self, key: &CacheKey, bm25: &Bm25Index) {
        let Some(dir) = &self.dir else { return };
        let path = dir.join(key.file_name());
        if let Err(e) = fs::create_dir_all(dir).and_then(|_| fs::write(&path, bm25.to_json())) {
            log::warn!("cannot write index cache {}: {e}", path.display());
        }
    }
}
