//! Datasets, label maps and corpus retrieval.
//!
//! Every dataset is read from one JSON Lines shape:
//!
//! ```text
//! {"id": "...", "claim": "...", "evidence": ["...", "..."], "label": "..."}
//! ```
//!
//! `evidence` may also be a single string. Multi-sentence evidence is
//! joined into one paragraph with single spaces before verification.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use natver_core::bm25::{Bm25Index, Bm25Params};
use natver_core::Verdict;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub claim: String,
    #[serde(default, deserialize_with = "one_or_many")]
    pub evidence: Vec<String>,
    pub label: String,
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<String>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Ev {
        One(String),
        Many(Vec<String>),
    }
    Ok(match Option::<Ev>::deserialize(d)? {
        None => Vec::new(),
        Some(Ev::One(s)) => vec![s],
        Some(Ev::Many(v)) => v,
    })
}

impl Instance {
    /// Evidence sentences as one paragraph.
    pub fn evidence_text(&self) -> String {
        self.evidence
            .iter()
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSpace {
    TwoWay,
    ThreeWay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMap {
    pub name: String,
    pub label_space: LabelSpace,
    /// Dataset label to verdict.
    pub labels: BTreeMap<String, Verdict>,
    /// Dataset label that NotEnoughInfo predictions count as (two-way only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fold_not_enough_info: Option<String>,
    /// Labels whose rows are dropped at load time.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded: Vec<String>,
}

impl LabelMap {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let map: LabelMap =
            serde_json::from_str(&text).map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::input(format!("label map {}: {msg}", self.name)));
        if let Some(l) = self.excluded.iter().find(|l| self.labels.contains_key(*l)) {
            return bad(format!("{l} is both mapped and excluded"));
        }
        let mapped: Vec<Verdict> = self.labels.values().copied().collect();
        match self.label_space {
            LabelSpace::ThreeWay => {
                for v in Verdict::ALL {
                    if !mapped.contains(&v) {
                        return bad(format!("no label maps to {v}"));
                    }
                }
                if self.fold_not_enough_info.is_some() {
                    return bad("fold_not_enough_info is only meaningful for two-way maps".into());
                }
            }
            LabelSpace::TwoWay => {
                if mapped.contains(&Verdict::NotEnoughInfo) {
                    return bad("a two-way map cannot use NotEnoughInfo".into());
                }
                for v in [Verdict::Supported, Verdict::Refuted] {
                    if !mapped.contains(&v) {
                        return bad(format!("no label maps to {v}"));
                    }
                }
                match &self.fold_not_enough_info {
                    None => return bad("two-way maps need fold_not_enough_info".into()),
                    Some(l) if !self.labels.contains_key(l) => return bad(format!("fold target {l} is not a label")),
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// Verdict classes that take part in scoring, in canonical order.
    pub fn classes(&self) -> Vec<Verdict> {
        match self.label_space {
            LabelSpace::ThreeWay => Verdict::ALL.to_vec(),
            LabelSpace::TwoWay => vec![Verdict::Supported, Verdict::Refuted],
        }
    }

    pub fn gold(&self, label: &str) -> Option<Verdict> {
        self.labels.get(label).copied()
    }

    /// Maps a three-way prediction into this label space.
    pub fn fold(&self, predicted: Verdict) -> Verdict {
        match (self.label_space, predicted) {
            (LabelSpace::TwoWay, Verdict::NotEnoughInfo) => self
                .fold_not_enough_info
                .as_deref()
                .and_then(|l| self.gold(l))
                .unwrap_or(Verdict::Refuted),
            (_, v) => v,
        }
    }

    pub fn is_excluded(&self, label: &str) -> bool {
        self.excluded.iter().any(|l| l == label)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub instances: Vec<Instance>,
    /// Rows dropped because their label is excluded.
    pub dropped: usize,
}

/// Reads a JSONL dataset. With a label map, labels are checked and
/// excluded rows dropped.
pub fn load_dataset(path: &Path, labels: Option<&LabelMap>) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut instances = Vec::new();
    let mut dropped = 0;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let at = |msg: String| Error::input(format!("{}:{n}: {msg}", path.display()));
        let inst: Instance = serde_json::from_str(&line).map_err(|e| at(e.to_string()))?;
        if inst.claim.trim().is_empty() {
            return Err(at("empty claim".into()));
        }
        if let Some(map) = labels {
            if map.is_excluded(&inst.label) {
                dropped += 1;
                continue;
            }
            if map.gold(&inst.label).is_none() {
                return Err(at(format!("label {:?} is not in label map {}", inst.label, map.name)));
            }
        }
        instances.push(inst);
    }
    if dropped > 0 {
        warn!("{}: dropped {dropped} rows with excluded labels", path.display());
    }
    Ok(Dataset { instances, dropped })
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, row).map_err(|e| Error::input(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_dataset(path: &Path, instances: &[Instance]) -> Result<()> {
    write_jsonl(path, instances)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
}

/// BM25 retrieval over a JSONL corpus of `{"id", "text"}` rows.
#[derive(Debug, Clone)]
pub struct Corpus {
    docs: BTreeMap<String, String>,
    index: Bm25Index,
}

impl Corpus {
    pub fn new(docs: Vec<Document>) -> Self {
        let index = Bm25Index::build(
            docs.iter().map(|d| (d.id.clone(), d.text.as_str())),
            Bm25Params::default(),
        );
        Corpus {
            docs: docs.into_iter().map(|d| (d.id, d.text)).collect(),
            index,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut docs = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let doc: Document =
                serde_json::from_str(&line).map_err(|e| Error::input(format!("{}:{}: {e}", path.display(), i + 1)))?;
            docs.push(doc);
        }
        if docs.is_empty() {
            return Err(Error::input(format!("{}: corpus is empty", path.display())));
        }
        Ok(Corpus::new(docs))
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Top `k` documents for `query` as `(id, score)`.
    pub fn search(&self, query: &str, k: usize) -> Vec<(String, f64)> {
        let hits = self.index.search(query, k);
        if hits.is_empty() {
            warn!("query {query:?} has no searchable terms");
        }
        hits
    }

    /// Fills in evidence for instances that have none.
    pub fn attach_evidence(&self, instances: &mut [Instance], k: usize) {
        for inst in instances.iter_mut().filter(|i| i.evidence.is_empty()) {
            inst.evidence = self
                .search(&inst.claim, k)
                .into_iter()
                .filter_map(|(id, _)| self.docs.get(&id).cloned())
                .collect();
        }
    }
}
