//! In-memory exact vector index over knowledge documents.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::path::Path;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use super::embed::{cosine, EmbedError, Embedder, HashedNgramEmbedder};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct KnowledgeDoc {
    pub doc_id: String,
    pub title: String,
    pub body: String,
    #[serde(default)]
    pub tags: Vec<String>,
}

impl KnowledgeDoc {
    pub fn text(&self) -> String {
        format!("{}\n{}", self.title, self.body)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RetrievalHit {
    pub doc_id: String,
    pub similarity: f64,
    pub rerank_score: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("duplicate docId `{0}`")]
    DuplicateId(String),
    #[error("document `{0}` has an empty body")]
    EmptyBody(String),
    #[error("document `{doc_id}` cannot be embedded: {source}")]
    Embed { doc_id: String, source: EmbedError },
    #[error("knowledge store is empty")]
    EmptyStore,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("query vector has dimension {got}, store uses {expected}")]
    Dimension { got: usize, expected: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Orders hits by `key` descending, then docId ascending.
pub fn hit_order(key: impl Fn(&RetrievalHit) -> f64) -> impl Fn(&RetrievalHit, &RetrievalHit) -> Ordering {
    move |a, b| key(b).total_cmp(&key(a)).then_with(|| a.doc_id.cmp(&b.doc_id))
}

/// An immutable, fully embedded set of documents.
#[derive(Debug, Clone, Default)]
pub struct StoreSnapshot {
    docs: Vec<KnowledgeDoc>,
    vectors: Vec<Vec<f64>>,
    version: u64,
}

impl StoreSnapshot {
    pub fn build(docs: Vec<KnowledgeDoc>, embedder: &dyn Embedder, version: u64) -> Result<Self, StoreError> {
        let mut seen = HashSet::new();
        let mut vectors = Vec::with_capacity(docs.len());
        for d in &docs {
            if !seen.insert(d.doc_id.clone()) {
                return Err(StoreError::DuplicateId(d.doc_id.clone()));
            }
            if d.body.trim().is_empty() {
                return Err(StoreError::EmptyBody(d.doc_id.clone()));
            }
            let v = embedder.embed(&d.text()).map_err(|source| StoreError::Embed {
                doc_id: d.doc_id.clone(),
                source,
            })?;
            vectors.push(v);
        }
        Ok(StoreSnapshot { docs, vectors, version })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn docs(&self) -> &[KnowledgeDoc] {
        &self.docs
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn doc(&self, doc_id: &str) -> Option<&KnowledgeDoc> {
        self.docs.iter().find(|d| d.doc_id == doc_id)
    }

    /// Exact top-k by cosine; ties go to the smaller docId.
    pub fn retrieve(&self, query: &[f64], k: usize) -> Result<Vec<RetrievalHit>, StoreError> {
        if k == 0 {
            return Err(StoreError::ZeroK);
        }
        if self.docs.is_empty() {
            return Err(StoreError::EmptyStore);
        }
        let expected = self.vectors[0].len();
        if query.len() != expected {
            return Err(StoreError::Dimension { got: query.len(), expected });
        }
        let mut hits: Vec<RetrievalHit> = self
            .docs
            .iter()
            .zip(&self.vectors)
            .map(|(d, v)| {
                let s = cosine(query, v);
                RetrievalHit {
                    doc_id: d.doc_id.clone(),
                    similarity: s,
                    rerank_score: s,
                }
            })
            .collect();
        let order = hit_order(|h| h.similarity);
        let k = k.min(hits.len());
        if k < hits.len() {
            hits.select_nth_unstable_by(k - 1, &order);
            hits.truncate(k);
        }
        hits.sort_by(order);
        Ok(hits)
    }
}

/// Parses JSON Lines, one document per line; blank lines are skipped.
pub fn parse_jsonl(text: &str) -> Result<Vec<KnowledgeDoc>, StoreError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| StoreError::Parse { line: i + 1, source }))
        .collect()
}

/// Knowledge store whose snapshot is swapped atomically on re-ingest.
pub struct KnowledgeStore {
    embedder: Arc<dyn Embedder>,
    current: RwLock<Arc<StoreSnapshot>>,
}

impl std::fmt::Debug for KnowledgeStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KnowledgeStore").field("docs", &self.snapshot().len()).finish()
    }
}

impl KnowledgeStore {
    pub fn new(embedder: Arc<dyn Embedder>) -> Self {
        KnowledgeStore {
            embedder,
            current: RwLock::new(Arc::new(StoreSnapshot::default())),
        }
    }

    pub fn with_docs(embedder: Arc<dyn Embedder>, docs: Vec<KnowledgeDoc>) -> Result<Self, StoreError> {
        let store = KnowledgeStore::new(embedder);
        store.replace(docs)?;
        Ok(store)
    }

    pub fn builtin() -> Self {
        let store = KnowledgeStore::new(Arc::new(HashedNgramEmbedder::default()));
        store
            .ingest_jsonl(crate::defaults::KNOWLEDGE_JSONL)
            .expect("built-in knowledge parses");
        store
    }

    pub fn embedder(&self) -> &dyn Embedder {
        self.embedder.as_ref()
    }

    pub fn snapshot(&self) -> Arc<StoreSnapshot> {
        self.current.read().expect("store lock poisoned").clone()
    }

    /// Builds a new snapshot off-lock and swaps it in. A failed ingest
    /// leaves the current snapshot untouched.
    pub fn replace(&self, docs: Vec<KnowledgeDoc>) -> Result<Arc<StoreSnapshot>, StoreError> {
        let version = self.snapshot().version + 1;
        let next = Arc::new(StoreSnapshot::build(docs, self.embedder.as_ref(), version)?);
        *self.current.write().expect("store lock poisoned") = next.clone();
        Ok(next)
    }

    pub fn ingest_jsonl(&self, text: &str) -> Result<Arc<StoreSnapshot>, StoreError> {
        self.replace(parse_jsonl(text)?)
    }

    pub fn ingest_path(&self, path: &Path) -> Result<Arc<StoreSnapshot>, StoreError> {
        self.ingest_jsonl(&std::fs::read_to_string(path)?)
    }

    pub fn retrieve_text(&self, query: &str, k: usize) -> Result<(Arc<StoreSnapshot>, Vec<RetrievalHit>), StoreError> {
        let snap = self.snapshot();
        let v = self.embedder.embed(query).map_err(|source| StoreError::Embed {
            doc_id: "<query>".into(),
            source,
        })?;
        let hits = snap.retrieve(&v, k)?;
        Ok((snap, hits))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, body: &str) -> KnowledgeDoc {
        KnowledgeDoc {
            doc_id: id.into(),
            title: String::new(),
            body: body.into(),
            tags: vec![],
        }
    }

    #[test]
    fn singleton_and_boundaries() {
        let e = HashedNgramEmbedder::default();
        let snap = StoreSnapshot::build(vec![doc("d", "transfer limits")], &e, 1).unwrap();
        let q = e.embed("anything").unwrap();
        let hits = snap.retrieve(&q, 1).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].doc_id, "d");
        assert!(matches!(snap.retrieve(&q, 0), Err(StoreError::ZeroK)));
        assert!(matches!(StoreSnapshot::default().retrieve(&q, 1), Err(StoreError::EmptyStore)));
        let snap = StoreSnapshot::build(vec![doc("b", "x y"), doc("a", "x y"), doc("c", "zz")], &e, 1).unwrap();
        let hits = snap.retrieve(&e.embed("x y").unwrap(), 10).unwrap();
        assert_eq!(hits.iter().map(|h| h.doc_id.as_str()).collect::<Vec<_>>(), ["a", "b", "c"]);
    }

    #[test]
    fn ingest_rejects_bad_input_and_keeps_snapshot() {
        let store = KnowledgeStore::new(Arc::new(HashedNgramEmbedder::default()));
        store.replace(vec![doc("a", "one")]).unwrap();
        assert!(matches!(store.replace(vec![doc("a", "x"), doc("a", "y")]), Err(StoreError::DuplicateId(_))));
        assert!(matches!(store.replace(vec![doc("b", "  ")]), Err(StoreError::EmptyBody(_))));
        assert!(matches!(store.ingest_jsonl("{\"docId\":1}\n"), Err(StoreError::Parse { line: 1, .. })));
        assert_eq!(store.snapshot().len(), 1);
        assert_eq!(store.snapshot().version(), 1);
    }
}
