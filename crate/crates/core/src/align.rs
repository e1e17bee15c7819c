//! Alignment post-processing, explanation signals and the block layout of
//! alignment completions.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use alloc::{format, vec};
use core::fmt;

use crate::text::{fold, word_ranges};

pub use crate::proof::Signal;

/// Removes every word of `raw` that does not occur in `evidence`.
///
/// Kept words form runs of consecutive raw words; each run is copied
/// verbatim from `raw` (interior punctuation included) and runs are joined
/// by a single space. Punctuation at run edges is dropped. Matching is
/// case-insensitive on alphanumeric words. A run of length one is a valid
/// evidence sequence, so a word survives exactly when it appears somewhere
/// in the evidence.
pub fn post_process_alignment(raw: &str, evidence: &str) -> String {
    let evidence_words: alloc::collections::BTreeSet<String> =
        word_ranges(evidence).into_iter().map(|r| fold(&evidence[r])).collect();
    let words = word_ranges(raw);
    let keep: Vec<bool> = words
        .iter()
        .map(|r| evidence_words.contains(&fold(&raw[r.clone()])))
        .collect();

    let mut out = String::new();
    let mut i = 0;
    while i < words.len() {
        if !keep[i] {
            i += 1;
            continue;
        }
        let start = words[i].start;
        let mut j = i;
        while j + 1 < words.len() && keep[j + 1] {
            j += 1;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&raw[start..words[j].end]);
        i = j + 1;
    }
    out
}

/// Words of `alignment` that do not occur in `evidence`.
pub fn unfaithful_words(alignment: &str, evidence: &str) -> Vec<String> {
    let evidence_words: alloc::collections::BTreeSet<String> =
        word_ranges(evidence).into_iter().map(|r| fold(&evidence[r])).collect();
    word_ranges(alignment)
        .into_iter()
        .map(|r| fold(&alignment[r]))
        .filter(|w| !evidence_words.contains(w))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SignalLexicon {
    support: Vec<String>,
    refute: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlappingLexicon(pub String);

impl fmt::Display for OverlappingLexicon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "keyword {:?} is listed as both support and refute", self.0)
    }
}

impl SignalLexicon {
    pub fn new<S: AsRef<str>>(support: &[S], refute: &[S]) -> Result<Self, OverlappingLexicon> {
        let norm = |v: &[S]| -> Vec<String> {
            v.iter()
                .map(|s| s.as_ref().trim().to_lowercase())
                .filter(|s| !s.is_empty())
                .collect()
        };
        let support = norm(support);
        let refute = norm(refute);
        if let Some(dup) = support.iter().find(|s| refute.contains(s)) {
            return Err(OverlappingLexicon(dup.clone()));
        }
        Ok(SignalLexicon { support, refute })
    }

    pub fn support(&self) -> &[String] {
        &self.support
    }

    pub fn refute(&self) -> &[String] {
        &self.refute
    }
}

impl Default for SignalLexicon {
    fn default() -> Self {
        SignalLexicon::new(
            &["supports", "confirms", "matches", "consistent with", "is a paraphrase"],
            &["refutes", "contradicts", "does not match", "inconsistent", "negates"],
        )
        .expect("default lexicon is disjoint")
    }
}

/// True if `needle` occurs in `haystack` delimited by non-alphanumeric
/// characters (or the string edges) on both sides.
fn contains_phrase(haystack: &str, needle: &str) -> bool {
    let mut from = 0;
    while let Some(pos) = haystack[from..].find(needle) {
        let start = from + pos;
        let end = start + needle.len();
        let before_ok = haystack[..start]
            .chars()
            .next_back()
            .is_none_or(|c| !c.is_alphanumeric());
        let after_ok = haystack[end..].chars().next().is_none_or(|c| !c.is_alphanumeric());
        if before_ok && after_ok {
            return true;
        }
        from = start + haystack[start..].chars().next().map_or(1, char::len_utf8);
    }
    false
}

/// Keyword search over an explanation. Conflicting matches yield no signal.
pub fn parse_signal(explanation: &str, lexicon: &SignalLexicon) -> Option<Signal> {
    let text = explanation.to_lowercase();
    let sup = lexicon.support.iter().any(|k| contains_phrase(&text, k));
    let refu = lexicon.refute.iter().any(|k| contains_phrase(&text, k));
    match (sup, refu) {
        (true, false) => Some(Signal::Support),
        (false, true) => Some(Signal::Refute),
        _ => None,
    }
}

/// One parsed block of an alignment completion.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AlignmentBlock {
    pub chunk: String,
    pub alignment: String,
    pub explanation: String,
}

pub fn chunk_label(i: usize) -> String {
    format!("Chunk {i}:")
}

pub fn alignment_label(i: usize) -> String {
    format!("Alignment {i}:")
}

pub fn explanation_label(i: usize) -> String {
    format!("Explanation {i}:")
}

/// Renders blocks in the layout [`parse_alignment_blocks`] reads.
/// Block numbers start at 1.
pub fn render_alignment_blocks(blocks: &[AlignmentBlock]) -> String {
    let mut out = String::new();
    for (i, b) in blocks.iter().enumerate() {
        let n = i + 1;
        out.push_str(&format!("{} {}\n", chunk_label(n), b.chunk));
        out.push_str(&format!("{} {}\n", alignment_label(n), b.alignment));
        out.push_str(&format!("{} {}\n", explanation_label(n), b.explanation));
    }
    out
}

fn strip_label<'a>(line: &'a str, label: &str) -> Option<&'a str> {
    let line = line.trim_start_matches(|c: char| c.is_whitespace() || c == '*' || c == '-' || c == '#');
    let head = line.get(..label.len())?;
    if head.eq_ignore_ascii_case(label) {
        Some(line[label.len()..].trim_start_matches('*').trim())
    } else {
        None
    }
}

/// Parses `n` numbered blocks. A block without an alignment line is `None`;
/// a missing explanation line parses as an empty explanation.
pub fn parse_alignment_blocks(text: &str, n: usize) -> Vec<Option<AlignmentBlock>> {
    let mut chunks = vec![None; n];
    let mut aligns = vec![None; n];
    let mut expls = vec![None; n];
    for line in text.lines() {
        for i in 0..n {
            let k = i + 1;
            if let Some(rest) = strip_label(line, &chunk_label(k)) {
                chunks[i].get_or_insert_with(|| rest.to_string());
            } else if let Some(rest) = strip_label(line, &alignment_label(k)) {
                aligns[i].get_or_insert_with(|| rest.to_string());
            } else if let Some(rest) = strip_label(line, &explanation_label(k)) {
                expls[i].get_or_insert_with(|| rest.to_string());
            } else {
                continue;
            }
            break;
        }
    }
    (0..n)
        .map(|i| {
            let alignment = aligns[i].take()?;
            Some(AlignmentBlock {
                chunk: chunks[i].take().unwrap_or_default(),
                alignment,
                explanation: expls[i].take().unwrap_or_default(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn post_process_examples() {
        let e = "The Hobbit was published in 1937.";
        assert_eq!(post_process_alignment("published in 1937", e), "published in 1937");
        assert_eq!(post_process_alignment("lorem ipsum", e), "");
        let e = "Book A was published in 1994 and book B was published in 1999";
        assert_eq!(post_process_alignment("published before 1999", e), "published 1999");
        assert_eq!(post_process_alignment("PUBLISHED, in 1999!", e), "PUBLISHED, in 1999");
    }

    #[test]
    fn post_process_is_idempotent_on_sample() {
        let e = "alpha beta, gamma delta";
        for raw in ["beta, zeta gamma", "x alpha y delta z", "", "...", "gamma-delta"] {
            let once = post_process_alignment(raw, e);
            assert_eq!(post_process_alignment(&once, e), once);
            assert!(unfaithful_words(&once, e).is_empty());
        }
    }

    #[test]
    fn signal_examples() {
        let lex = SignalLexicon::default();
        assert_eq!(
            parse_signal("The evidence SUPPORTS the claim", &lex),
            Some(Signal::Support)
        );
        assert_eq!(parse_signal("", &lex), None);
        assert_eq!(parse_signal("It supports part and contradicts part.", &lex), None);
        assert_eq!(
            parse_signal("The years are inconsistent with the claim", &lex),
            Some(Signal::Refute)
        );
        assert_eq!(parse_signal("The dates do not match.", &lex), None);
        assert_eq!(parse_signal("The dates does not match.", &lex), Some(Signal::Refute));
    }

    #[test]
    fn overlapping_lexicon_rejected() {
        assert!(SignalLexicon::new(&["a", "B"], &["b"]).is_err());
    }

    #[test]
    fn block_round_trip_and_degraded() {
        let blocks = vec![
            AlignmentBlock {
                chunk: "Harry Potter".into(),
                alignment: "Harry Potter".into(),
                explanation: "The evidence matches the chunk.".into(),
            },
            AlignmentBlock {
                chunk: "was published before".into(),
                alignment: "published in 1997".into(),
                explanation: "".into(),
            },
        ];
        let text = render_alignment_blocks(&blocks);
        let parsed: Vec<_> = parse_alignment_blocks(&text, 2)
            .into_iter()
            .map(Option::unwrap)
            .collect();
        assert_eq!(parsed, blocks);

        let text = "**Chunk 1:** a\n**Alignment 1:** b\nExplanation 1: c\nChunk 2: d\n";
        let parsed = parse_alignment_blocks(text, 2);
        assert_eq!(parsed[0].as_ref().unwrap().alignment, "b");
        assert!(parsed[1].is_none());
    }

    #[test]
    fn block_numbers_do_not_collide() {
        let text = "Alignment 11: eleven\nAlignment 1: one\n";
        let parsed = parse_alignment_blocks(text, 11);
        assert_eq!(parsed[0].as_ref().unwrap().alignment, "one");
        assert_eq!(parsed[10].as_ref().unwrap().alignment, "eleven");
    }
}
