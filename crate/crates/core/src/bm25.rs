//! Okapi BM25 ranking over a small in-memory corpus.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::text::folded_words;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone)]
struct Document {
    id: String,
    counts: BTreeMap<String, u32>,
    len: usize,
}

#[derive(Debug, Clone)]
pub struct Bm25Index {
    docs: Vec<Document>,
    df: BTreeMap<String, usize>,
    avgdl: f64,
    params: Bm25Params,
}

/// `ln((N - df + 0.5) / (df + 0.5) + 1)`; never negative.
pub fn idf(n_docs: usize, df: usize) -> f64 {
    let n = n_docs as f64;
    let df = df as f64;
    libm::log((n - df + 0.5) / (df + 0.5) + 1.0)
}

/// Contribution of one query term to one document.
pub fn term_score(tf: f64, idf: f64, dl: f64, avgdl: f64, p: Bm25Params) -> f64 {
    if tf <= 0.0 {
        return 0.0;
    }
    let norm = if avgdl > 0.0 { dl / avgdl } else { 0.0 };
    idf * tf * (p.k1 + 1.0) / (tf + p.k1 * (1.0 - p.b + p.b * norm))
}

impl Bm25Index {
    /// # Panics
    /// If `k1 <= 0` or `b` lies outside `[0, 1]`.
    pub fn build<I, S, T>(docs: I, params: Bm25Params) -> Self
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: AsRef<str>,
    {
        assert!(params.k1 > 0.0, "k1 must be positive");
        assert!((0.0..=1.0).contains(&params.b), "b must lie in [0, 1]");
        let mut out = Vec::new();
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for (id, text) in docs {
            let words = folded_words(text.as_ref());
            let len = words.len();
            let mut counts = BTreeMap::new();
            for w in words {
                *counts.entry(w).or_insert(0) += 1;
            }
            for term in counts.keys() {
                *df.entry(term.clone()).or_insert(0) += 1;
            }
            out.push(Document {
                id: id.into(),
                counts,
                len,
            });
        }
        let total: usize = out.iter().map(|d| d.len).sum();
        let avgdl = if out.is_empty() {
            0.0
        } else {
            total as f64 / out.len() as f64
        };
        Bm25Index {
            docs: out,
            df,
            avgdl,
            params,
        }
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn df(&self, term: &str) -> usize {
        self.df.get(term).copied().unwrap_or(0)
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    fn query_terms(query: &str) -> BTreeSet<String> {
        folded_words(query).into_iter().collect()
    }

    fn score_terms(&self, doc: &Document, terms: &BTreeSet<String>) -> f64 {
        let n = self.docs.len();
        terms
            .iter()
            .map(|t| {
                let tf = doc.counts.get(t).copied().unwrap_or(0) as f64;
                term_score(tf, idf(n, self.df(t)), doc.len as f64, self.avgdl, self.params)
            })
            .sum()
    }

    /// Score of document `idx` for `query`. Repeated query words count once.
    pub fn score(&self, idx: usize, query: &str) -> f64 {
        self.score_terms(&self.docs[idx], &Self::query_terms(query))
    }

    /// Top `top_k` documents by score, ties broken by ascending id. An
    /// empty query (no words) returns nothing.
    pub fn search(&self, query: &str, top_k: usize) -> Vec<(String, f64)> {
        let terms = Self::query_terms(query);
        if terms.is_empty() || top_k == 0 {
            return Vec::new();
        }
        let mut scored: Vec<(&str, f64)> = self
            .docs
            .iter()
            .map(|d| (d.id.as_str(), self.score_terms(d, &terms)))
            .collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.0.cmp(b.0))
        });
        scored
            .into_iter()
            .take(top_k)
            .map(|(id, s)| (String::from(id), s))
            .collect()
    }
}
