use std::collections::{BTreeMap, BTreeSet};

use natver_core::align::{post_process_alignment, unfaithful_words};
use natver_core::assign::{ensemble_score, select_natop, weights_from_confidences, CandidateList};
use natver_core::bm25::{idf, term_score, Bm25Index, Bm25Params};
use natver_core::chunk::{normalize_chunks, whitespace_units, ClaimChunks};
use natver_core::dfa::{execute_ops, run_from, transition, DfaState, Verdict};
use natver_core::natop::NatOp;
use natver_core::proof::Signal;
use proptest::prelude::*;

fn natop() -> impl Strategy<Value = NatOp> {
    (0usize..6).prop_map(|i| NatOp::ALL[i])
}

fn ops(max: usize) -> impl Strategy<Value = Vec<NatOp>> {
    prop::collection::vec(natop(), 0..max)
}

proptest! {
    #[test]
    fn execute_is_a_left_fold(p1 in ops(12), p2 in ops(12)) {
        let mut joined = p1.clone();
        joined.extend(p2.iter().copied());
        let whole = execute_ops(joined.iter().copied());
        let head = execute_ops(p1.iter().copied());
        prop_assert_eq!(whole.final_state(), run_from(head.final_state(), p2.iter().copied()));
        prop_assert_eq!(whole.states.len(), joined.len() + 1);
        prop_assert_eq!(whole.states[0], DfaState::Supported);
        for (i, op) in joined.iter().enumerate() {
            prop_assert_eq!(whole.states[i + 1], transition(whole.states[i], *op));
        }
        prop_assert_eq!(whole.verdict, whole.final_state().verdict());
    }

    #[test]
    fn nee_is_sticky(prefix in ops(8), suffix in ops(20)) {
        let mut p = prefix;
        p.push(NatOp::Independence);
        p.extend(suffix);
        prop_assert_eq!(execute_ops(p).verdict, Verdict::NotEnoughInfo);
    }
}

// Reference merger for degenerate segment lists: blank segments are glued
// onto the next non-blank one (or the previous one at the end), and chunk
// text is the trimmed glued segment.
fn reference_merge(segs: &[&str]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut carry = String::new();
    for s in segs {
        carry.push_str(s);
        if !s.trim().is_empty() {
            out.push(std::mem::take(&mut carry));
        }
    }
    if let Some(last) = out.last_mut() {
        last.push_str(&carry);
    }
    out.into_iter().map(|s| s.trim().to_string()).collect()
}

#[test]
fn normalize_matches_reference_merger_on_small_lists() {
    let alphabet = ["", " ", "a", "a b", "  c"];
    let mut checked = 0;
    for len in 1..=4usize {
        let total = alphabet.len().pow(len as u32);
        for mut code in 0..total {
            let mut segs = Vec::with_capacity(len);
            for _ in 0..len {
                segs.push(alphabet[code % alphabet.len()]);
                code /= alphabet.len();
            }
            let claim: String = segs.concat();
            if claim.trim().is_empty() {
                assert!(normalize_chunks(&segs).is_err());
                continue;
            }
            let got = normalize_chunks(&segs).unwrap();
            let got_texts: Vec<String> = got.texts().map(str::to_string).collect();
            assert_eq!(got_texts, reference_merge(&segs), "segments {segs:?}");
            assert!(got.check_invariants());
            assert_eq!(got.reconstruct(), claim);
            checked += 1;
        }
    }
    assert!(checked > 500);
}

fn claim_text() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop_oneof![
            "[A-Za-z]{1,8}",
            "[0-9]{1,4}",
            Just(",".to_string()),
            Just(".".to_string()),
            Just("é".to_string()),
        ],
        1..12,
    )
    .prop_flat_map(|words| {
        let n = words.len();
        (
            Just(words),
            prop::collection::vec(prop_oneof![Just(" "), Just("  "), Just("\t"), Just("")], n + 1),
        )
    })
    .prop_map(|(words, gaps)| {
        let mut s = String::from(gaps[0]);
        for (w, g) in words.iter().zip(&gaps[1..]) {
            s.push_str(w);
            s.push_str(g);
        }
        s
    })
}

proptest! {
    #[test]
    fn chunks_reconstruct_claim(claim in claim_text(), breaks in prop::collection::vec(0usize..16, 0..10)) {
        let units = whitespace_units(&claim);
        let lens: Vec<usize> = units.iter().map(|u| u.len()).collect();
        let chunks = ClaimChunks::from_units(&claim, &lens, &breaks).unwrap();
        prop_assert_eq!(chunks.reconstruct(), claim.clone());
        prop_assert!(chunks.check_invariants());
        prop_assert!(!chunks.is_empty() && chunks.len() <= units.len());
    }
}

// Oracle: a raw word is kept when some contiguous run of raw words that
// contains it also occurs contiguously in the evidence.
fn brute_force_kept(raw: &[&str], evidence: &[&str]) -> Vec<String> {
    let mut kept = vec![false; raw.len()];
    for i in 0..raw.len() {
        for j in i + 1..=raw.len() {
            let run = &raw[i..j];
            let occurs = evidence.windows(run.len()).any(|w| w == run);
            if occurs {
                for k in kept.iter_mut().take(j).skip(i) {
                    *k = true;
                }
            }
        }
    }
    raw.iter()
        .zip(kept)
        .filter(|(_, k)| *k)
        .map(|(w, _)| w.to_string())
        .collect()
}

#[test]
fn post_process_worked_example_against_oracle() {
    let e = "published in 1994 and published in 1999";
    let raw = "published before 1999";
    let ev: Vec<&str> = e.split(' ').collect();
    let rw: Vec<&str> = raw.split(' ').collect();
    assert_eq!(brute_force_kept(&rw, &ev).join(" "), "published 1999");
    assert_eq!(post_process_alignment(raw, e), "published 1999");
}

proptest! {
    #[test]
    fn post_process_matches_contiguous_run_oracle(
        raw in prop::collection::vec("[a-e]", 0..8),
        evidence in prop::collection::vec("[a-c]", 1..8),
    ) {
        let raw_refs: Vec<&str> = raw.iter().map(String::as_str).collect();
        let ev_refs: Vec<&str> = evidence.iter().map(String::as_str).collect();
        let expected = brute_force_kept(&raw_refs, &ev_refs);
        let got = post_process_alignment(&raw.join(" "), &evidence.join(" "));
        let got_words: Vec<String> = got.split_whitespace().map(str::to_string).collect();
        prop_assert_eq!(got_words, expected);
    }

    #[test]
    fn post_process_idempotent_and_faithful(raw in "[a-zA-Z ,.!]{0,40}", evidence in "[a-zA-Z ,.]{1,40}") {
        let once = post_process_alignment(&raw, &evidence);
        prop_assert_eq!(post_process_alignment(&once, &evidence), once.clone());
        prop_assert!(unfaithful_words(&once, &evidence).is_empty());
    }

    #[test]
    fn eq1_matches_dot_product(pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..=1.0), 1..12)) {
        let raw: Vec<f64> = pairs.iter().map(|p| p.0 + 1e-3).collect();
        let w = weights_from_confidences(&raw).unwrap();
        let p: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let mut oracle = 0.0;
        for i in 0..w.len() {
            oracle += w[i] * p[i];
        }
        prop_assert!((ensemble_score(&w, &p) - oracle).abs() < 1e-9);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn calibration_is_scale_invariant(c in prop::collection::vec(0.01f64..1.0, 1..12), k in 0.01f64..100.0) {
        let scaled: Vec<f64> = c.iter().map(|x| x * k).collect();
        let a = weights_from_confidences(&c).unwrap();
        let b = weights_from_confidences(&scaled).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn raising_alpha_never_grows_passed(
        s in prop::collection::vec(0.0f64..=1.0, 5),
        a1 in 0.01f64..0.99,
        a2 in 0.01f64..0.99,
    ) {
        let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
        let scores: BTreeMap<NatOp, f64> = NatOp::ASSIGNABLE.into_iter().zip(s).collect();
        let full = CandidateList::full();
        let p_lo = select_natop(&scores, &full, lo).passed;
        let p_hi = select_natop(&scores, &full, hi).passed;
        prop_assert!(p_hi.is_subset(&p_lo));
    }

    #[test]
    fn bm25_term_monotone_in_tf(tf in 0u32..20, df in 1usize..10, extra in 0usize..10, dl in 1u32..50, avgdl in 1.0f64..50.0) {
        let n = df + extra;
        let i = idf(n, df);
        let p = Bm25Params::default();
        let a = term_score(tf as f64, i, (dl + tf) as f64, avgdl, p);
        let b = term_score((tf + 1) as f64, i, (dl + tf + 1) as f64, avgdl, p);
        prop_assert!(b >= a);
    }
}

#[test]
fn bm25_toy_corpus_matches_hand_computation() {
    let idx = Bm25Index::build(
        [
            ("d1", "the cat sat on the mat"),
            ("d2", "the dog chased the cat"),
            ("d3", "a bird sang"),
        ],
        Bm25Params { k1: 1.2, b: 0.75 },
    );
    // Hand computation: N = 3, avgdl = 14/3.
    let avgdl = 14.0 / 3.0;
    let idf_cat = ((3.0 - 2.0 + 0.5) / (2.0 + 0.5) + 1.0f64).ln();
    let idf_mat = ((3.0 - 1.0 + 0.5) / (1.0 + 0.5) + 1.0f64).ln();
    let tf_part = |tf: f64, dl: f64| tf * 2.2 / (tf + 1.2 * (0.25 + 0.75 * dl / avgdl));
    let d1 = idf_cat * tf_part(1.0, 6.0) + idf_mat * tf_part(1.0, 6.0);
    let d2 = idf_cat * tf_part(1.0, 5.0);
    let hits = idx.search("cat mat cat", 3);
    assert_eq!(hits[0].0, "d1");
    assert!((hits[0].1 - d1).abs() < 1e-9);
    assert_eq!(hits[1].0, "d2");
    assert!((hits[1].1 - d2).abs() < 1e-9);
    assert_eq!(hits[2], ("d3".to_string(), 0.0));
}

// Exhaustive gating/priority check against an independent selector.
#[test]
fn gating_and_priority_over_all_subsets() {
    let priority = [
        NatOp::Equivalence,
        NatOp::Negation,
        NatOp::ForwardEntailment,
        NatOp::ReverseEntailment,
        NatOp::Alternation,
    ];
    for signal in [None, Some(Signal::Support), Some(Signal::Refute)] {
        let cands = CandidateList::for_signal(signal);
        for mask in 0u32..32 {
            let passing: BTreeSet<NatOp> = (0..5)
                .filter(|b| mask & (1 << b) != 0)
                .map(|b| NatOp::ASSIGNABLE[b])
                .collect();
            let scores: BTreeMap<NatOp, f64> = NatOp::ASSIGNABLE
                .into_iter()
                .map(|op| (op, if passing.contains(&op) { 0.9 } else { 0.1 }))
                .collect();
            let got = select_natop(&scores, &cands, 0.5).chosen;
            let expected = priority
                .iter()
                .copied()
                .find(|op| passing.contains(op) && cands.ops.contains(op))
                .unwrap_or(NatOp::Independence);
            assert_eq!(got, expected, "signal {signal:?} mask {mask:05b}");
            assert!(got == NatOp::Independence || cands.ops.contains(&got));
        }
    }
}
