//! Claim chunk spans.
//!
//! A claim is a sequence of units (backend tokens, or whitespace-led pieces
//! when no tokenizer is involved). Each unit carries its preceding
//! whitespace. A break before a unit starts a new chunk; the whitespace in
//! front of a chunk is kept out of the chunk text and restored by
//! [`ClaimChunks::reconstruct`].

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use crate::proof::TextSpan;
use crate::text::byte_to_char_offset;

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClaimChunks {
    pub claim: String,
    pub chunks: Vec<TextSpan>,
    /// Unit index at which each chunk after the first begins.
    pub separator_positions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChunkError {
    EmptyClaim,
    /// Unit boundaries do not tile the claim.
    BadUnits,
}

impl fmt::Display for ChunkError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChunkError::EmptyClaim => f.write_str("claim is empty after trimming"),
            ChunkError::BadUnits => f.write_str("unit boundaries do not cover the claim"),
        }
    }
}

/// Splits `text` into whitespace-led pieces: every piece is a run of
/// whitespace followed by a run of non-whitespace, except possibly a
/// trailing whitespace-only piece. Newlines are pieces of their own.
pub fn whitespace_units(text: &str) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut seen_word = false;
    for (i, ch) in text.char_indices() {
        if ch == '\n' {
            if i > start {
                out.push(start..i);
            }
            out.push(i..i + 1);
            start = i + 1;
            seen_word = false;
        } else if ch.is_whitespace() {
            if seen_word {
                out.push(start..i);
                start = i;
                seen_word = false;
            }
        } else {
            seen_word = true;
        }
    }
    if start < text.len() {
        out.push(start..text.len());
    }
    out
}

impl ClaimChunks {
    /// Builds chunks from units given by their byte lengths and the unit
    /// indices that a break was emitted before. Breaks may repeat, sit at
    /// the edges or produce whitespace-only segments; those are repaired
    /// here the same way [`normalize_chunks`] repairs them.
    pub fn from_units(claim: &str, unit_lens: &[usize], breaks_before: &[usize]) -> Result<Self, ChunkError> {
        if claim.trim().is_empty() {
            return Err(ChunkError::EmptyClaim);
        }
        let mut bounds = Vec::with_capacity(unit_lens.len() + 1);
        bounds.push(0usize);
        for len in unit_lens {
            let next = bounds[bounds.len() - 1] + len;
            bounds.push(next);
        }
        if bounds[bounds.len() - 1] != claim.len() || bounds.iter().any(|&b| !claim.is_char_boundary(b)) {
            return Err(ChunkError::BadUnits);
        }
        let n_units = unit_lens.len();

        let mut cuts: Vec<usize> = breaks_before
            .iter()
            .copied()
            .filter(|&b| b > 0 && b < n_units)
            .collect();
        cuts.sort_unstable();
        cuts.dedup();

        // Segments as unit ranges.
        let mut segments: Vec<Range<usize>> = Vec::with_capacity(cuts.len() + 1);
        let mut prev = 0;
        for c in cuts {
            segments.push(prev..c);
            prev = c;
        }
        segments.push(prev..n_units);

        let is_blank = |seg: &Range<usize>| claim[bounds[seg.start]..bounds[seg.end]].trim().is_empty();

        // Blank segments fold into the following segment, or into the
        // previous one when they trail.
        let mut merged: Vec<Range<usize>> = Vec::with_capacity(segments.len());
        let mut pending_start: Option<usize> = None;
        for seg in segments {
            if is_blank(&seg) {
                pending_start.get_or_insert(seg.start);
                continue;
            }
            let start = pending_start.take().unwrap_or(seg.start);
            merged.push(start..seg.end);
        }
        if pending_start.is_some() {
            if let Some(last) = merged.last_mut() {
                last.end = n_units;
            }
        }

        let mut chunks = Vec::with_capacity(merged.len());
        let mut separator_positions = Vec::with_capacity(merged.len().saturating_sub(1));
        for (i, seg) in merged.iter().enumerate() {
            if i > 0 {
                separator_positions.push(seg.start);
            }
            let raw = &claim[bounds[seg.start]..bounds[seg.end]];
            let lead = raw.len() - raw.trim_start().len();
            let text = raw.trim();
            let byte_start = bounds[seg.start] + lead;
            let byte_end = byte_start + text.len();
            chunks.push(TextSpan::new(
                byte_to_char_offset(claim, byte_start),
                byte_to_char_offset(claim, byte_end),
                text,
            ));
        }
        Ok(ClaimChunks {
            claim: String::from(claim),
            chunks,
            separator_positions,
        })
    }

    /// The whole claim as a single chunk.
    pub fn single(claim: &str) -> Result<Self, ChunkError> {
        ClaimChunks::from_units(claim, &[claim.len()], &[])
    }

    /// Reassembles the claim from the chunks and the whitespace between them.
    pub fn reconstruct(&self) -> String {
        let mut out = String::with_capacity(self.claim.len());
        let mut chars = self.claim.chars();
        let mut pos = 0;
        for span in &self.chunks {
            out.extend(chars.by_ref().take(span.start - pos));
            out.push_str(&span.text);
            for _ in 0..span.char_len() {
                chars.next();
            }
            pos = span.end;
        }
        out.extend(chars);
        out
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.chunks.iter().map(|c| c.text.as_str())
    }

    /// Checks the span invariants: non-empty, ordered, non-overlapping,
    /// text matching the claim and only whitespace between chunks.
    pub fn check_invariants(&self) -> bool {
        let mut pos = 0;
        let chars: Vec<char> = self.claim.chars().collect();
        for span in &self.chunks {
            if span.text.is_empty() || span.start < pos || span.end <= span.start {
                return false;
            }
            if span.end > chars.len() {
                return false;
            }
            if !chars[pos..span.start].iter().all(|c| c.is_whitespace()) {
                return false;
            }
            let actual: String = chars[span.start..span.end].iter().collect();
            if actual != span.text {
                return false;
            }
            pos = span.end;
        }
        !self.chunks.is_empty() && chars[pos..].iter().all(|c| c.is_whitespace())
    }
}

/// Normalizes a raw segmentation given as consecutive strings whose
/// concatenation is the claim: blank segments merge into a neighbour.
pub fn normalize_chunks(segments: &[&str]) -> Result<ClaimChunks, ChunkError> {
    let claim: String = segments.concat();
    let lens: Vec<usize> = segments.iter().map(|s| s.len()).collect();
    let breaks: Vec<usize> = (1..segments.len()).collect();
    ClaimChunks::from_units(&claim, &lens, &breaks)
}

/// Derives chunks from free-form model output, one chunk per line. Each
/// line is located in the claim by its first word at or after the previous
/// line; a break goes before that word. Lines that cannot be located are
/// ignored, so the result always tiles the claim.
pub fn chunks_from_lines(claim: &str, output: &str) -> Result<ClaimChunks, ChunkError> {
    use crate::text::{fold, word_ranges};

    if claim.trim().is_empty() {
        return Err(ChunkError::EmptyClaim);
    }
    let units = whitespace_units(claim);
    let claim_words = word_ranges(claim);
    let mut cursor_word = 0;
    let mut break_bytes = Vec::new();
    for line in output.lines() {
        let line_words = word_ranges(line);
        let Some(first) = line_words.first() else {
            continue;
        };
        let key = fold(&line[first.clone()]);
        let n_line = line_words.len();
        if let Some(found) = (cursor_word..claim_words.len()).find(|&i| fold(&claim[claim_words[i].clone()]) == key) {
            break_bytes.push(claim_words[found].start);
            cursor_word = (found + n_line).min(claim_words.len());
        }
    }
    // Map break byte offsets to unit indices: a break goes before the unit
    // containing the word start.
    let mut breaks = Vec::new();
    for b in break_bytes {
        if let Some(idx) = units.iter().position(|u| u.contains(&b)) {
            breaks.push(idx);
        }
    }
    let lens: Vec<usize> = units.iter().map(|u| u.len()).collect();
    ClaimChunks::from_units(claim, &lens, &breaks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn texts(c: &ClaimChunks) -> Vec<&str> {
        c.texts().collect()
    }

    #[test]
    fn normalize_examples() {
        let c = normalize_chunks(&["a", "", "b"]).unwrap();
        assert_eq!(texts(&c), vec!["a", "b"]);
        let c = normalize_chunks(&["a"]).unwrap();
        assert_eq!(texts(&c), vec!["a"]);
        let c = normalize_chunks(&["", " ", "a b"]).unwrap();
        assert_eq!(texts(&c), vec!["a b"]);
        assert_eq!(c.reconstruct(), " a b");
        assert!(c.check_invariants());
    }

    #[test]
    fn trailing_blank_merges_backwards() {
        let c = normalize_chunks(&["one two", "  "]).unwrap();
        assert_eq!(texts(&c), vec!["one two"]);
        assert_eq!(c.reconstruct(), "one two  ");
    }

    #[test]
    fn whitespace_moves_out_of_chunks() {
        let claim = "The book was published";
        let units = whitespace_units(claim);
        let lens: Vec<usize> = units.iter().map(|u| u.len()).collect();
        let c = ClaimChunks::from_units(claim, &lens, &[2]).unwrap();
        assert_eq!(texts(&c), vec!["The book", "was published"]);
        assert_eq!(c.chunks[1].start, 9);
        assert_eq!(c.separator_positions, vec![2]);
        assert_eq!(c.reconstruct(), claim);
    }

    #[test]
    fn empty_claim_rejected() {
        assert_eq!(ClaimChunks::single("  "), Err(ChunkError::EmptyClaim));
        assert_eq!(ClaimChunks::from_units("ab", &[1], &[]), Err(ChunkError::BadUnits));
    }

    #[test]
    fn units_tile_text() {
        for s in ["", "a", " a  b\n\nc ", "x\t y \n", "\n"] {
            let units = whitespace_units(s);
            let joined: String = units.iter().map(|u| &s[u.clone()]).collect();
            assert_eq!(joined, s);
        }
        let s = "a b";
        let u: Vec<&str> = whitespace_units(s).into_iter().map(|r| &s[r]).collect();
        assert_eq!(u, vec!["a", " b"]);
    }

    #[test]
    fn lines_reconcile_onto_claim() {
        let claim = "Harry Potter was published before  the Hobbit.";
        let c = chunks_from_lines(claim, "Harry Potter\nwas published before\nthe hobbit.\n").unwrap();
        assert_eq!(texts(&c), vec!["Harry Potter", "was published before", "the Hobbit."]);
        assert_eq!(c.reconstruct(), claim);
        // Hallucinated lines are ignored.
        let c = chunks_from_lines(claim, "Completely different\n").unwrap();
        assert_eq!(texts(&c), vec![claim]);
    }
}
