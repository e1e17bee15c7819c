//! Answer parsing for the single-prompt multiple-choice baseline.

use alloc::string::String;

use crate::dfa::Verdict;

const LABELS: [(&str, Verdict); 7] = [
    ("not enough information", Verdict::NotEnoughInfo),
    ("not enough info", Verdict::NotEnoughInfo),
    ("nei", Verdict::NotEnoughInfo),
    ("supported", Verdict::Supported),
    ("supports", Verdict::Supported),
    ("refuted", Verdict::Refuted),
    ("refutes", Verdict::Refuted),
];

fn letter_verdict(c: char) -> Option<Verdict> {
    match c.to_ascii_lowercase() {
        'a' => Some(Verdict::Supported),
        'b' => Some(Verdict::Refuted),
        'c' => Some(Verdict::NotEnoughInfo),
        _ => None,
    }
}

fn boundary(c: Option<char>) -> bool {
    c.is_none_or(|c| !c.is_alphanumeric())
}

/// Maps a completion to a verdict. Accepts an option letter (`A)`, `b.`,
/// `C:` or a bare letter as the whole answer) or a label word, case
/// insensitively; the earliest match in the text wins.
pub fn parse_direct_answer(completion: &str) -> Option<Verdict> {
    let text: String = completion.to_lowercase();
    let trimmed = text.trim();
    if trimmed.chars().count() == 1 {
        if let Some(v) = trimmed.chars().next().and_then(letter_verdict) {
            return Some(v);
        }
    }

    let mut best: Option<(usize, Verdict)> = None;
    let mut consider = |pos: usize, v: Verdict| {
        if best.is_none_or(|(p, _)| pos < p) {
            best = Some((pos, v));
        }
    };

    for (i, c) in text.char_indices() {
        let Some(v) = letter_verdict(c) else { continue };
        let before = text[..i].chars().next_back();
        let after = text[i + c.len_utf8()..].chars().next();
        if boundary(before) && matches!(after, Some(')') | Some('.') | Some(':')) {
            consider(i, v);
            break;
        }
    }
    for (label, v) in LABELS {
        let mut from = 0;
        while let Some(p) = text[from..].find(label) {
            let start = from + p;
            let end = start + label.len();
            if boundary(text[..start].chars().next_back()) && boundary(text[end..].chars().next()) {
                consider(start, v);
                break;
            }
            from = end;
        }
    }
    best.map(|(_, v)| v)
}
