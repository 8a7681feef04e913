//! Second-pass ordering of retrieved documents.

use std::collections::BTreeSet;

use super::embed::words;
use super::store::{hit_order, KnowledgeDoc, RetrievalHit};

pub const DEFAULT_ALPHA: f64 = 0.7;

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "at", "be", "can", "do", "does", "for", "how", "i", "in", "is", "it", "me", "my",
    "of", "on", "or", "the", "to", "what", "whats", "s", "with", "you", "your",
];

pub fn content_terms(text: &str) -> BTreeSet<String> {
    words(text).into_iter().filter(|w| !STOPWORDS.contains(&w.as_str())).collect()
}

/// Share of the query's content terms that appear in the document.
pub fn lexical_overlap(query: &str, doc_text: &str) -> f64 {
    let q = content_terms(query);
    if q.is_empty() {
        return 0.0;
    }
    let d = content_terms(doc_text);
    q.intersection(&d).count() as f64 / q.len() as f64
}

pub trait RelevanceScorer: Send + Sync {
    fn score(&self, query: &str, hit: &RetrievalHit, doc: &KnowledgeDoc) -> f64;
}

/// `alpha * similarity + (1 - alpha) * lexical overlap`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlendScorer {
    pub alpha: f64,
}

impl Default for BlendScorer {
    fn default() -> Self {
        BlendScorer { alpha: DEFAULT_ALPHA }
    }
}

impl RelevanceScorer for BlendScorer {
    fn score(&self, query: &str, hit: &RetrievalHit, doc: &KnowledgeDoc) -> f64 {
        self.alpha * hit.similarity + (1.0 - self.alpha) * lexical_overlap(query, &doc.text())
    }
}

/// Rescores and sorts hits; docs are looked up by id in `docs`.
pub fn rerank(
    query: &str,
    hits: Vec<RetrievalHit>,
    docs: &[KnowledgeDoc],
    scorer: &dyn RelevanceScorer,
) -> Vec<RetrievalHit> {
    let mut out: Vec<RetrievalHit> = hits
        .into_iter()
        .map(|mut h| {
            if let Some(d) = docs.iter().find(|d| d.doc_id == h.doc_id) {
                h.rerank_score = scorer.score(query, &h, d);
            }
            h
        })
        .collect();
    out.sort_by(hit_order(|h| h.rerank_score));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlap_counts_query_terms() {
        assert_eq!(lexical_overlap("daily transfer limit", "The daily limit is RM50,000"), 2.0 / 3.0);
        assert_eq!(lexical_overlap("the and", "anything"), 0.0);
    }
}
