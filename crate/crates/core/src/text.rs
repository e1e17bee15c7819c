//! Word-level text helpers shared by the alignment filter and the retriever.

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

/// A word is a maximal run of alphanumeric characters. Everything else
/// (whitespace, punctuation, symbols) separates words.
pub fn word_ranges(s: &str) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in s.char_indices() {
        match (ch.is_alphanumeric(), start) {
            (true, None) => start = Some(i),
            (false, Some(st)) => {
                out.push(st..i);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(st) = start {
        out.push(st..s.len());
    }
    out
}

/// Case-folded comparison key for a word.
pub fn fold(word: &str) -> String {
    word.chars().flat_map(char::to_lowercase).collect()
}

/// Case-folded words of `s`, in order.
pub fn folded_words(s: &str) -> Vec<String> {
    word_ranges(s).into_iter().map(|r| fold(&s[r])).collect()
}

pub fn byte_to_char_offset(s: &str, byte: usize) -> usize {
    s[..byte].chars().count()
}

pub fn char_to_byte_offset(s: &str, chars: usize) -> Option<usize> {
    if chars == 0 {
        return Some(0);
    }
    s.char_indices()
        .map(|(i, _)| i)
        .chain(core::iter::once(s.len()))
        .nth(chars)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn words_split_on_punctuation() {
        let s = "Hello, world! It's 1,000.";
        let w: Vec<&str> = word_ranges(s).into_iter().map(|r| &s[r]).collect();
        assert_eq!(w, vec!["Hello", "world", "It", "s", "1", "000"]);
        assert_eq!(folded_words("ÉCOLE Ünï"), vec!["école", "ünï"]);
        assert!(word_ranges("  ... ").is_empty());
    }

    #[test]
    fn offsets() {
        let s = "aé b";
        assert_eq!(byte_to_char_offset(s, 3), 2);
        assert_eq!(char_to_byte_offset(s, 2), Some(3));
        assert_eq!(char_to_byte_offset(s, 4), Some(5));
        assert_eq!(char_to_byte_offset(s, 5), None);
    }
}
