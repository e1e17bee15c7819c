//! Operator assignment by question-answering ensembles.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use natver_core::assign::{ensemble_score_partial, select_natop, uniform_weights, weights_from_confidences};
use natver_core::{CandidateList, NatOp, NatOpScores, ProofTriple, TemplateWeights};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aligner::AlignmentPair;
use crate::backend::{Backend, BackendError, GenerationParams};
use crate::error::{Error, Result};
use crate::templates::{instantiate, TemplateBank};

/// Templates in use per operator, with their (renormalized) weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub indices: BTreeMap<NatOp, Vec<usize>>,
    pub weights: BTreeMap<NatOp, Vec<f64>>,
}

impl Ensemble {
    /// `size` keeps a seeded uniform sample of that many templates per
    /// operator; `None` keeps the whole bank. `weights` of `None` means
    /// uniform weights.
    pub fn build(
        bank: &TemplateBank,
        weights: Option<&TemplateWeights>,
        size: Option<usize>,
        seed: u64,
    ) -> Result<Self> {
        if let Some(w) = weights {
            w.validate(Some(&bank.sizes()))
                .map_err(|e| Error::input(format!("weights: {e}")))?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut indices = BTreeMap::new();
        let mut ws = BTreeMap::new();
        for op in NatOp::ASSIGNABLE {
            let n = bank.templates(op).len();
            let chosen: Vec<usize> = match size {
                None => (0..n).collect(),
                Some(0) => return Err(Error::input("ensemble size must be at least 1")),
                Some(k) if k > n => {
                    return Err(Error::input(format!(
                        "ensemble size {k} exceeds the {n} templates for {op}"
                    )))
                }
                Some(k) if k == n => (0..n).collect(),
                Some(k) => {
                    let mut v = rand::seq::index::sample(&mut rng, n, k).into_vec();
                    v.sort_unstable();
                    v
                }
            };
            let w = match weights {
                Some(w) => w.restricted(op, &chosen),
                None => uniform_weights(chosen.len()),
            };
            indices.insert(op, chosen);
            ws.insert(op, w);
        }
        Ok(Ensemble { indices, weights: ws })
    }

    pub fn templates(&self, op: NatOp) -> &[usize] {
        self.indices.get(&op).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateScore {
    pub template: usize,
    /// `None` when the backend call failed.
    pub p_yes: Option<f64>,
    #[serde(default)]
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpScore {
    pub score: f64,
    pub templates: Vec<TemplateScore>,
    /// Some templates failed and the rest were renormalized.
    #[serde(default)]
    pub partial: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub candidates: CandidateList,
    pub selection: NatOpScores,
    pub details: BTreeMap<NatOp, OpScore>,
    /// Empty alignment: nothing was scored.
    #[serde(default)]
    pub skipped: bool,
}

fn ask(
    backend: &dyn Backend,
    bank: &TemplateBank,
    op: NatOp,
    template: usize,
    chunk: &str,
    alignment: &str,
    params: &GenerationParams,
) -> std::result::Result<(f64, bool, f64), BackendError> {
    let q = instantiate(&bank.templates(op)[template], chunk, alignment);
    let a = backend.score_yes_no(&q, params)?;
    Ok((a.score.p_yes, a.degraded, a.score.confidence()))
}

/// Scores every candidate operator for one chunk/alignment pair. Template
/// calls fan out in parallel.
pub fn score_ops(
    chunk: &str,
    alignment: &str,
    ops: &[NatOp],
    bank: &TemplateBank,
    ensemble: &Ensemble,
    backend: &dyn Backend,
    params: &GenerationParams,
) -> Result<BTreeMap<NatOp, OpScore>> {
    let jobs: Vec<(NatOp, usize)> = ops
        .iter()
        .flat_map(|&op| ensemble.templates(op).iter().map(move |&i| (op, i)))
        .collect();
    let answers: Vec<_> = jobs
        .par_iter()
        .map(|&(op, i)| ask(backend, bank, op, i, chunk, alignment, params))
        .collect();

    let mut out = BTreeMap::new();
    let mut it = jobs.iter().zip(answers);
    for &op in ops {
        let mut templates = Vec::new();
        let mut first_err = None;
        for _ in ensemble.templates(op) {
            let (&(_, i), res) = it.next().expect("one answer per job");
            let (p_yes, degraded) = match res {
                Ok((p, d, _)) => (Some(p), d),
                Err(e) => {
                    warn!("template {i} for {op} failed: {e}");
                    first_err.get_or_insert(e);
                    (None, false)
                }
            };
            templates.push(TemplateScore {
                template: i,
                p_yes,
                degraded,
            });
        }
        let p: Vec<Option<f64>> = templates.iter().map(|t| t.p_yes).collect();
        let weights = &ensemble.weights[&op];
        let score = match ensemble_score_partial(weights, &p) {
            Some(s) => s,
            None => {
                return Err(first_err
                    .map(Error::from)
                    .unwrap_or_else(|| Error::input(format!("no templates for {op}"))))
            }
        };
        out.insert(
            op,
            OpScore {
                score,
                partial: first_err.is_some(),
                templates,
            },
        );
    }
    Ok(out)
}

pub fn assign_natop(
    pair: &AlignmentPair,
    bank: &TemplateBank,
    ensemble: &Ensemble,
    backend: &dyn Backend,
    params: &GenerationParams,
    alpha: f64,
    use_signals: bool,
) -> Result<Assignment> {
    let candidates = if use_signals {
        CandidateList::for_signal(pair.signal)
    } else {
        CandidateList::full()
    };
    if pair.alignment.trim().is_empty() {
        return Ok(Assignment {
            selection: select_natop(&BTreeMap::new(), &candidates, alpha),
            candidates,
            details: BTreeMap::new(),
            skipped: true,
        });
    }
    let details = score_ops(
        &pair.chunk.text,
        &pair.alignment,
        &candidates.ops,
        bank,
        ensemble,
        backend,
        params,
    )?;
    let scores: BTreeMap<NatOp, f64> = details.iter().map(|(op, s)| (*op, s.score)).collect();
    Ok(Assignment {
        selection: select_natop(&scores, &candidates, alpha),
        candidates,
        details,
        skipped: false,
    })
}

pub fn triple(pair: &AlignmentPair, a: &Assignment) -> ProofTriple {
    ProofTriple {
        claim_span: pair.chunk.clone(),
        evidence_text: pair.alignment.clone(),
        natop: a.selection.chosen,
        scores: a.selection.scores.clone(),
        signal: pair.signal,
    }
}

pub fn assign_all(
    pairs: &[AlignmentPair],
    bank: &TemplateBank,
    ensemble: &Ensemble,
    backend: &dyn Backend,
    params: &GenerationParams,
    alpha: f64,
    use_signals: bool,
) -> Result<Vec<Assignment>> {
    pairs
        .iter()
        .map(|p| assign_natop(p, bank, ensemble, backend, params, alpha, use_signals))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub weights: TemplateWeights,
    /// Mean favoured-option probability per template, `None` if never scored.
    pub confidences: BTreeMap<NatOp, Vec<Option<f64>>>,
    /// Pairs each operator was scored on.
    pub pairs: BTreeMap<NatOp, usize>,
    /// Operators that fell back to uniform weights.
    pub uniform_fallback: Vec<NatOp>,
}

/// One pass over aligned pairs: every template of an operator is asked on
/// each pair whose candidate list contains that operator. Pairs with empty
/// alignments are skipped.
pub fn calibrate_weights(
    pairs: &[AlignmentPair],
    bank: &TemplateBank,
    backend: &dyn Backend,
    params: &GenerationParams,
    use_signals: bool,
) -> Result<Calibration> {
    let mut jobs = Vec::new();
    for (k, pair) in pairs.iter().enumerate().filter(|(_, p)| !p.alignment.trim().is_empty()) {
        let cands = if use_signals {
            CandidateList::for_signal(pair.signal)
        } else {
            CandidateList::full()
        };
        for op in cands.ops {
            for i in 0..bank.templates(op).len() {
                jobs.push((k, op, i));
            }
        }
    }
    let answers: Vec<_> = jobs
        .par_iter()
        .map(|&(k, op, i)| ask(backend, bank, op, i, &pairs[k].chunk.text, &pairs[k].alignment, params))
        .collect();

    let mut sums: BTreeMap<NatOp, Vec<(f64, usize)>> = NatOp::ASSIGNABLE
        .iter()
        .map(|op| (*op, vec![(0.0, 0); bank.templates(*op).len()]))
        .collect();
    let mut counted: BTreeMap<NatOp, BTreeSet<usize>> = BTreeMap::new();
    let mut failures = 0usize;
    for (&(k, op, i), res) in jobs.iter().zip(answers) {
        counted.entry(op).or_default().insert(k);
        match res {
            Ok((_, _, c)) => {
                let slot = &mut sums.get_mut(&op).expect("assignable")[i];
                slot.0 += c;
                slot.1 += 1;
            }
            Err(e) => {
                failures += 1;
                warn!("calibration call failed for {op} template {i}: {e}");
            }
        }
    }
    if failures > 0 && failures == jobs.len() {
        return Err(Error::input("every calibration call failed"));
    }

    let mut weights = BTreeMap::new();
    let mut confidences = BTreeMap::new();
    let mut uniform_fallback = Vec::new();
    for (op, s) in sums {
        let conf: Vec<Option<f64>> = s.iter().map(|(sum, n)| (*n > 0).then(|| sum / *n as f64)).collect();
        let w = conf
            .iter()
            .copied()
            .collect::<Option<Vec<f64>>>()
            .and_then(|c| weights_from_confidences(&c));
        let w = w.unwrap_or_else(|| {
            warn!("no usable calibration data for {op}; using uniform weights");
            uniform_fallback.push(op);
            uniform_weights(conf.len())
        });
        weights.insert(op, w);
        confidences.insert(op, conf);
    }
    Ok(Calibration {
        weights: TemplateWeights { weights },
        confidences,
        pairs: NatOp::ASSIGNABLE
            .iter()
            .map(|op| (*op, counted.get(op).map_or(0, |s| s.len())))
            .collect(),
        uniform_fallback,
    })
}
