//! Operator assignment: candidate gating, weighted ensemble scores and
//! threshold/priority selection.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;

use crate::natop::NatOp;
use crate::proof::Signal;

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_ENSEMBLE_SIZE: usize = 10;

/// Operators tested for one alignment pair, in the order they are listed.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct CandidateList {
    pub ops: Vec<NatOp>,
}

impl CandidateList {
    pub fn for_signal(signal: Option<Signal>) -> Self {
        let ops = match signal {
            Some(Signal::Support) => [NatOp::Equivalence, NatOp::ForwardEntailment].to_vec(),
            Some(Signal::Refute) => [NatOp::Negation, NatOp::ReverseEntailment, NatOp::Alternation].to_vec(),
            None => CandidateList::full().ops,
        };
        CandidateList { ops }
    }

    pub fn full() -> Self {
        CandidateList {
            ops: [
                NatOp::Equivalence,
                NatOp::Negation,
                NatOp::ForwardEntailment,
                NatOp::ReverseEntailment,
                NatOp::Alternation,
            ]
            .to_vec(),
        }
    }

    pub fn contains(&self, op: NatOp) -> bool {
        self.ops.contains(&op)
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }
}

/// Weighted average of per-template Yes probabilities.
///
/// `weights` and `p_yes` must have equal length. The result is clamped to
/// `[0, 1]` to absorb rounding when the weights sum to one.
pub fn ensemble_score(weights: &[f64], p_yes: &[f64]) -> f64 {
    debug_assert_eq!(weights.len(), p_yes.len());
    let s: f64 = weights.iter().zip(p_yes).map(|(w, p)| w * p).sum();
    s.clamp(0.0, 1.0)
}

/// Ensemble score when some templates failed to produce a probability.
/// Surviving weights are renormalized; `None` when nothing survived or the
/// surviving weights sum to zero.
pub fn ensemble_score_partial(weights: &[f64], p_yes: &[Option<f64>]) -> Option<f64> {
    debug_assert_eq!(weights.len(), p_yes.len());
    let total: f64 = weights
        .iter()
        .zip(p_yes)
        .filter(|(_, p)| p.is_some())
        .map(|(w, _)| w)
        .sum();
    if total <= 0.0 {
        return None;
    }
    let s: f64 = weights.iter().zip(p_yes).filter_map(|(w, p)| p.map(|p| w * p)).sum();
    Some((s / total).clamp(0.0, 1.0))
}

/// Linear normalization of template confidences into weights. `None` when
/// the confidences are empty, negative, non-finite or sum to zero.
pub fn weights_from_confidences(confidences: &[f64]) -> Option<Vec<f64>> {
    if confidences.is_empty() || confidences.iter().any(|c| !c.is_finite() || *c < 0.0) {
        return None;
    }
    let total: f64 = confidences.iter().sum();
    if total <= 0.0 {
        return None;
    }
    Some(confidences.iter().map(|c| c / total).collect())
}

pub fn uniform_weights(n: usize) -> Vec<f64> {
    (0..n).map(|_| 1.0 / n as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightsError {
    MissingOp(NatOp),
    Empty(NatOp),
    Negative(NatOp),
    NotNormalized(NatOp, f64),
    LengthMismatch { op: NatOp, expected: usize, found: usize },
}

impl fmt::Display for WeightsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightsError::MissingOp(op) => write!(f, "no weights for {op}"),
            WeightsError::Empty(op) => write!(f, "empty weight list for {op}"),
            WeightsError::Negative(op) => write!(f, "negative weight for {op}"),
            WeightsError::NotNormalized(op, s) => write!(f, "weights for {op} sum to {s}, not 1"),
            WeightsError::LengthMismatch { op, expected, found } => {
                write!(f, "{op} has {found} weights but {expected} templates")
            }
        }
    }
}

/// Per-operator template weights, aligned with the template bank order.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct TemplateWeights {
    pub weights: BTreeMap<NatOp, Vec<f64>>,
}

impl TemplateWeights {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn uniform(sizes: &BTreeMap<NatOp, usize>) -> Self {
        TemplateWeights {
            weights: sizes.iter().map(|(op, n)| (*op, uniform_weights(*n))).collect(),
        }
    }

    pub fn get(&self, op: NatOp) -> Option<&[f64]> {
        self.weights.get(&op).map(Vec::as_slice)
    }

    /// Checks normalization and, when `sizes` is given, alignment with a bank.
    pub fn validate(&self, sizes: Option<&BTreeMap<NatOp, usize>>) -> Result<(), WeightsError> {
        for op in NatOp::ASSIGNABLE {
            let w = self.weights.get(&op).ok_or(WeightsError::MissingOp(op))?;
            if w.is_empty() {
                return Err(WeightsError::Empty(op));
            }
            if w.iter().any(|x| x.is_nan() || *x < 0.0) {
                return Err(WeightsError::Negative(op));
            }
            let s: f64 = w.iter().sum();
            if (s - 1.0).abs() > Self::SUM_TOLERANCE {
                return Err(WeightsError::NotNormalized(op, s));
            }
            if let Some(n) = sizes.and_then(|m| m.get(&op)) {
                if *n != w.len() {
                    return Err(WeightsError::LengthMismatch {
                        op,
                        expected: *n,
                        found: w.len(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Weights restricted to a subset of template indices and renormalized.
    /// Falls back to uniform over the subset if the kept weights sum to zero.
    pub fn restricted(&self, op: NatOp, indices: &[usize]) -> Vec<f64> {
        let Some(all) = self.weights.get(&op) else {
            return uniform_weights(indices.len());
        };
        let kept: Vec<f64> = indices.iter().map(|&i| all.get(i).copied().unwrap_or(0.0)).collect();
        weights_from_confidences(&kept).unwrap_or_else(|| uniform_weights(indices.len()))
    }
}

/// Scores, passing set and choice for one alignment pair.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NatOpScores {
    pub scores: BTreeMap<NatOp, f64>,
    pub passed: BTreeSet<NatOp>,
    pub chosen: NatOp,
}

/// Applies the strict `s > alpha` threshold and the fixed priority order.
/// Scores for operators outside `candidates` are ignored.
pub fn select_natop(scores: &BTreeMap<NatOp, f64>, candidates: &CandidateList, alpha: f64) -> NatOpScores {
    let passed: BTreeSet<NatOp> = scores
        .iter()
        .filter(|(op, s)| candidates.contains(**op) && **s > alpha)
        .map(|(op, _)| *op)
        .collect();
    let chosen = NatOp::PRIORITY
        .into_iter()
        .find(|op| passed.contains(op))
        .unwrap_or(NatOp::Independence);
    NatOpScores {
        scores: scores.clone(),
        passed,
        chosen,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn candidate_lists() {
        use NatOp::*;
        assert_eq!(
            CandidateList::for_signal(Some(Signal::Support)).ops,
            vec![Equivalence, ForwardEntailment]
        );
        assert_eq!(
            CandidateList::for_signal(Some(Signal::Refute)).ops,
            vec![Negation, ReverseEntailment, Alternation]
        );
        assert_eq!(
            CandidateList::for_signal(None).ops,
            vec![Equivalence, Negation, ForwardEntailment, ReverseEntailment, Alternation]
        );
    }

    #[test]
    fn eq1_arithmetic() {
        assert_eq!(ensemble_score(&[0.5, 0.5], &[1.0, 0.0]), 0.5);
        assert_eq!(ensemble_score(&[0.2, 0.3, 0.5], &[1.0, 1.0, 1.0]), 1.0);
        assert!((ensemble_score(&[0.7, 0.3], &[0.6, 0.2]) - 0.48).abs() < 1e-12);
    }

    #[test]
    fn partial_scores_renormalize() {
        let s = ensemble_score_partial(&[0.5, 0.25, 0.25], &[Some(1.0), None, Some(0.0)]).unwrap();
        assert!((s - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(ensemble_score_partial(&[1.0], &[None]), None);
    }

    #[test]
    fn confidence_normalization() {
        let w = weights_from_confidences(&[0.9, 0.6]).unwrap();
        assert!((w[0] - 0.6).abs() < 1e-12 && (w[1] - 0.4).abs() < 1e-12);
        assert_eq!(weights_from_confidences(&[0.7, 0.7, 0.7, 0.7]).unwrap(), vec![0.25; 4]);
        assert_eq!(weights_from_confidences(&[]), None);
        assert_eq!(weights_from_confidences(&[0.0, 0.0]), None);
    }

    #[test]
    fn selection_examples() {
        use NatOp::*;
        let full = CandidateList::full();
        let scores: BTreeMap<_, _> = [(Equivalence, 0.9), (Alternation, 0.8), (Negation, 0.1)].into();
        assert_eq!(select_natop(&scores, &full, 0.5).chosen, Equivalence);

        let low: BTreeMap<_, _> = NatOp::ASSIGNABLE.into_iter().map(|o| (o, 0.2)).collect();
        let r = select_natop(&low, &full, 0.5);
        assert!(r.passed.is_empty());
        assert_eq!(r.chosen, Independence);

        let sup = CandidateList::for_signal(Some(Signal::Support));
        let scores: BTreeMap<_, _> = [(Equivalence, 0.4), (ForwardEntailment, 0.8)].into();
        assert_eq!(select_natop(&scores, &sup, 0.5).chosen, ForwardEntailment);

        // Exactly alpha does not pass.
        let scores: BTreeMap<_, _> = [(Equivalence, 0.5)].into();
        assert_eq!(select_natop(&scores, &full, 0.5).chosen, Independence);

        // Gated-out operators are never chosen even when scored.
        let scores: BTreeMap<_, _> = [(Negation, 0.99)].into();
        assert_eq!(select_natop(&scores, &sup, 0.5).chosen, Independence);
    }

    #[test]
    fn weights_validation() {
        let sizes: BTreeMap<_, _> = NatOp::ASSIGNABLE.into_iter().map(|o| (o, 3)).collect();
        let w = TemplateWeights::uniform(&sizes);
        assert!(w.validate(Some(&sizes)).is_ok());
        let mut bad = w.clone();
        bad.weights.insert(NatOp::Negation, vec![0.5, 0.2, 0.2]);
        assert!(matches!(
            bad.validate(None),
            Err(WeightsError::NotNormalized(NatOp::Negation, _))
        ));
        let r = w.restricted(NatOp::Negation, &[0, 2]);
        assert_eq!(r, vec![0.5, 0.5]);
    }
}
