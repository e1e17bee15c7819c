//! Prompt templates and the question bank.
//!
//! Layout of a template directory:
//!
//! ```text
//! chunking.txt            placeholder {C}
//! alignment.txt           placeholders {E}, {C}, {CH-1..N}
//! direct_qa.txt           placeholders {E}, {C}
//! natops/<natop>/<i>.txt  one question per file, placeholders X and Y
//! ```
//!
//! The files shipped under `templates/` are compiled in and used when no
//! directory is given.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use natver_core::NatOp;

use crate::error::{Error, Result};

pub const QA_SUFFIX: &str = "Answer Yes or No.";
pub const CHUNK_LIST_PLACEHOLDER: &str = "{CH-1..N}";

macro_rules! builtin {
    ($($path:expr),+) => {
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../templates/", $($path),+))
    };
}

macro_rules! builtin_bank {
    ($($op:literal),*) => {
        [$(( $op, [
            builtin!("natops/", $op, "/1.txt"),
            builtin!("natops/", $op, "/2.txt"),
            builtin!("natops/", $op, "/3.txt"),
            builtin!("natops/", $op, "/4.txt"),
            builtin!("natops/", $op, "/5.txt"),
            builtin!("natops/", $op, "/6.txt"),
            builtin!("natops/", $op, "/7.txt"),
            builtin!("natops/", $op, "/8.txt"),
            builtin!("natops/", $op, "/9.txt"),
            builtin!("natops/", $op, "/10.txt"),
        ])),*]
    };
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub chunking: String,
    pub alignment: String,
    pub direct_qa: String,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Single-pass placeholder substitution; substituted text is never
/// rescanned.
fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while !rest.is_empty() {
        let next = values
            .iter()
            .filter_map(|(k, v)| rest.find(k).map(|i| (i, *k, *v)))
            .min_by_key(|(i, _, _)| *i);
        match next {
            Some((i, k, v)) => {
                out.push_str(&rest[..i]);
                out.push_str(v);
                rest = &rest[i + k.len()..];
            }
            None => {
                out.push_str(rest);
                break;
            }
        }
    }
    out
}

fn require(name: &str, text: &str, placeholders: &[&str]) -> Result<()> {
    for p in placeholders {
        if !text.contains(p) {
            return Err(Error::input(format!("template {name} lacks placeholder {p}")));
        }
    }
    Ok(())
}

impl PromptTemplates {
    pub fn builtin() -> Self {
        PromptTemplates {
            chunking: builtin!("chunking.txt").to_string(),
            alignment: builtin!("alignment.txt").to_string(),
            direct_qa: builtin!("direct_qa.txt").to_string(),
        }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let t = PromptTemplates {
            chunking: read(&dir.join("chunking.txt"))?,
            alignment: read(&dir.join("alignment.txt"))?,
            direct_qa: read(&dir.join("direct_qa.txt"))?,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        require("chunking.txt", &self.chunking, &["{C}"])?;
        require(
            "alignment.txt",
            &self.alignment,
            &["{E}", "{C}", CHUNK_LIST_PLACEHOLDER],
        )?;
        require("direct_qa.txt", &self.direct_qa, &["{E}", "{C}"])
    }

    pub fn chunking_prompt(&self, claim: &str) -> String {
        fill(&self.chunking, &[("{C}", claim)])
    }

    pub fn alignment_prompt(&self, evidence: &str, claim: &str, chunks: &[&str]) -> String {
        let list = chunks
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{}. {c}", i + 1))
            .collect::<Vec<_>>()
            .join("\n");
        fill(
            &self.alignment,
            &[("{E}", evidence), ("{C}", claim), (CHUNK_LIST_PLACEHOLDER, &list)],
        )
    }

    pub fn direct_prompt(&self, evidence: &str, claim: &str) -> String {
        fill(&self.direct_qa, &[("{E}", evidence), ("{C}", claim)])
    }
}

/// Question templates per assignable operator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateBank {
    templates: BTreeMap<NatOp, Vec<String>>,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Replaces the standalone letters `X` and `Y` with the quoted chunk and
/// evidence, then appends the Yes/No instruction.
pub fn instantiate(template: &str, chunk: &str, evidence: &str) -> String {
    let chars: Vec<char> = template.trim().chars().collect();
    let mut out = String::with_capacity(template.len() + chunk.len() + evidence.len() + 24);
    for (i, &c) in chars.iter().enumerate() {
        let standalone = (c == 'X' || c == 'Y')
            && (i == 0 || !is_word_char(chars[i - 1]))
            && chars.get(i + 1).is_none_or(|n| !is_word_char(*n));
        if standalone {
            out.push('"');
            out.push_str(if c == 'X' { chunk } else { evidence });
            out.push('"');
        } else {
            out.push(c);
        }
    }
    out.push(' ');
    out.push_str(QA_SUFFIX);
    out
}

impl TemplateBank {
    pub fn new(templates: BTreeMap<NatOp, Vec<String>>) -> Result<Self> {
        for op in NatOp::ASSIGNABLE {
            let list = templates
                .get(&op)
                .ok_or_else(|| Error::input(format!("no templates for {op}")))?;
            if list.is_empty() {
                return Err(Error::input(format!("no templates for {op}")));
            }
            for t in list {
                if !(t.contains('X') && t.contains('Y')) {
                    return Err(Error::input(format!("template for {op} lacks X or Y: {t:?}")));
                }
            }
        }
        if templates.contains_key(&NatOp::Independence) {
            return Err(Error::input("independence has no templates"));
        }
        Ok(TemplateBank { templates })
    }

    pub fn builtin() -> Self {
        let raw = builtin_bank!(
            "equivalence",
            "forward_entailment",
            "reverse_entailment",
            "negation",
            "alternation"
        );
        let templates = raw
            .into_iter()
            .map(|(name, files)| {
                let op: NatOp = name.parse().expect("builtin operator name");
                (op, files.iter().map(|s| s.trim().to_string()).collect())
            })
            .collect();
        TemplateBank::new(templates).expect("builtin bank is valid")
    }

    /// Reads `natops/<natop>/*.txt` under `dir`, ordered by numeric file stem.
    pub fn load(dir: &Path) -> Result<Self> {
        let mut templates = BTreeMap::new();
        for op in NatOp::ASSIGNABLE {
            let sub = dir.join("natops").join(op.name());
            let entries = fs::read_dir(&sub).map_err(|e| Error::io(&sub, e))?;
            let mut files: Vec<(u64, std::path::PathBuf)> = Vec::new();
            for entry in entries {
                let path = entry.map_err(|e| Error::io(&sub, e))?.path();
                if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                    continue;
                }
                let idx = path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .and_then(|s| s.parse::<u64>().ok())
                    .ok_or_else(|| Error::input(format!("{}: file stem must be a number", path.display())))?;
                files.push((idx, path));
            }
            files.sort();
            let list = files
                .iter()
                .map(|(_, p)| read(p).map(|s| s.trim().to_string()))
                .collect::<Result<Vec<_>>>()?;
            templates.insert(op, list);
        }
        TemplateBank::new(templates)
    }

    pub fn templates(&self, op: NatOp) -> &[String] {
        self.templates.get(&op).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn sizes(&self) -> BTreeMap<NatOp, usize> {
        self.templates.iter().map(|(op, v)| (*op, v.len())).collect()
    }

    pub fn min_size(&self) -> usize {
        self.templates.values().map(Vec::len).min().unwrap_or(0)
    }
}
