//! Chunk, align, assign, execute.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use log::warn;
use natver_core::direct::parse_direct_answer;
use natver_core::proof::execute;
use natver_core::{NatOp, ProofTriple, SignalLexicon, TemplateWeights, Verdict, VerdictTrace};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aligner::{align, AlignOutcome, AlignmentPair};
use crate::assigner::{assign_natop, calibrate_weights, triple, Assignment, Calibration, Ensemble};
use crate::backend::{Backend, CallCounts, Checked, GenerationParams};
use crate::chunker::{chunk, ChunkOutcome};
use crate::data::Instance;
use crate::error::{Error, Result, Stage};
use crate::templates::{PromptTemplates, TemplateBank};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    NoWeightedTemplates,
    NoQaEnsembles,
    NoConstrainedDecoding,
    NoAlignmentSignals,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::NoWeightedTemplates,
        Ablation::NoQaEnsembles,
        Ablation::NoConstrainedDecoding,
        Ablation::NoAlignmentSignals,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::NoWeightedTemplates => "no-weighted-templates",
            Ablation::NoQaEnsembles => "no-qa-ensembles",
            Ablation::NoConstrainedDecoding => "no-constrained-decoding",
            Ablation::NoAlignmentSignals => "no-alignment-signals",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::input(format!("unknown ablation {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablations {
    pub no_weighted_templates: bool,
    pub no_qa_ensembles: bool,
    pub no_constrained_decoding: bool,
    pub no_alignment_signals: bool,
}

impl Ablations {
    pub fn with(mut self, a: Ablation) -> Self {
        match a {
            Ablation::NoWeightedTemplates => self.no_weighted_templates = true,
            Ablation::NoQaEnsembles => self.no_qa_ensembles = true,
            Ablation::NoConstrainedDecoding => self.no_constrained_decoding = true,
            Ablation::NoAlignmentSignals => self.no_alignment_signals = true,
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub alpha: f64,
    pub ablations: Ablations,
    /// Templates sampled per operator; `None` uses the whole bank.
    pub ensemble_size: Option<usize>,
    pub seed: u64,
    /// Claims verified concurrently in a batch.
    pub jobs: usize,
    /// Record wall-clock stage timings (makes output non-deterministic).
    pub timings: bool,
    pub qa_params: GenerationParams,
    pub task_params: GenerationParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            alpha: natver_core::assign::DEFAULT_ALPHA,
            ablations: Ablations::default(),
            ensemble_size: None,
            seed: 0,
            jobs: 1,
            timings: false,
            qa_params: GenerationParams::qa(),
            task_params: GenerationParams::task(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::input(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.jobs == 0 {
            return Err(Error::input("jobs must be at least 1"));
        }
        if self.ensemble_size == Some(0) {
            return Err(Error::input("ensemble size must be at least 1"));
        }
        Ok(())
    }
}

/// Templates, weights and lexicon a pipeline runs with.
#[derive(Debug, Clone)]
pub struct Resources {
    pub prompts: PromptTemplates,
    pub bank: TemplateBank,
    /// `None` means uniform weights.
    pub weights: Option<TemplateWeights>,
    pub lexicon: SignalLexicon,
}

impl Resources {
    pub fn builtin() -> Self {
        Resources {
            prompts: PromptTemplates::builtin(),
            bank: TemplateBank::builtin(),
            weights: None,
            lexicon: SignalLexicon::default(),
        }
    }

    pub fn with_templates(mut self, dir: &Path) -> Result<Self> {
        self.prompts = PromptTemplates::load(dir)?;
        self.bank = TemplateBank::load(dir)?;
        Ok(self)
    }

    pub fn with_weights(mut self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let w: TemplateWeights =
            serde_json::from_str(&text).map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
        w.validate(Some(&self.bank.sizes()))
            .map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
        self.weights = Some(w);
        Ok(self)
    }

    pub fn with_lexicon(mut self, path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Lists {
            support: Vec<String>,
            refute: Vec<String>,
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let l: Lists = serde_json::from_str(&text).map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
        self.lexicon = SignalLexicon::new(&l.support, &l.refute)
            .map_err(|e| Error::input(format!("{}: {e:?}", path.display())))?;
        Ok(self)
    }
}

/// What each stage produced, kept for inspection and for diffing runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageLog {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chunking: Option<ChunkOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alignment: Option<AlignOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assignment: Option<AssignmentLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentLog {
    pub ensemble: Ensemble,
    pub alpha: f64,
    pub pairs: Vec<Assignment>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub chunk_ms: f64,
    pub align_ms: f64,
    pub assign_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub id: String,
    pub claim: String,
    pub verdict: Verdict,
    pub proof: Vec<ProofTriple>,
    pub trace: VerdictTrace,
    pub log: StageLog,
    pub calls: CallCounts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

/// A failed verification with whatever the earlier stages produced.
#[derive(Debug, thiserror::Error)]
#[error("{id}: {error}")]
pub struct VerifyFailure {
    pub id: String,
    pub error: Error,
    pub log: Box<StageLog>,
    pub calls: CallCounts,
}

impl VerifyFailure {
    pub fn stage(&self) -> Option<Stage> {
        self.error.stage()
    }
}

/// One line of a batch result stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BatchRecord {
    Ok(Box<VerificationResult>),
    Failed {
        id: String,
        stage: Option<Stage>,
        error: String,
        log: Box<StageLog>,
    },
}

impl BatchRecord {
    pub fn from_result(r: &std::result::Result<VerificationResult, VerifyFailure>) -> Self {
        match r {
            Ok(v) => BatchRecord::Ok(Box::new(v.clone())),
            Err(f) => BatchRecord::Failed {
                id: f.id.clone(),
                stage: f.stage(),
                error: f.error.to_string(),
                log: f.log.clone(),
            },
        }
    }

    pub fn id(&self) -> &str {
        match self {
            BatchRecord::Ok(v) => &v.id,
            BatchRecord::Failed { id, .. } => id,
        }
    }

    /// Failures count as NotEnoughInfo.
    pub fn verdict(&self) -> Verdict {
        match self {
            BatchRecord::Ok(v) => v.verdict,
            BatchRecord::Failed { .. } => Verdict::NotEnoughInfo,
        }
    }
}

pub struct Pipeline {
    pub config: PipelineConfig,
    pub resources: Resources,
    ensemble: Ensemble,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

impl Pipeline {
    pub fn new(config: PipelineConfig, resources: Resources) -> Result<Self> {
        config.validate()?;
        let weights = if config.ablations.no_weighted_templates {
            None
        } else {
            resources.weights.as_ref()
        };
        let size = if config.ablations.no_qa_ensembles {
            Some(1)
        } else {
            config.ensemble_size
        };
        let ensemble = Ensemble::build(&resources.bank, weights, size, config.seed)?;
        Ok(Pipeline {
            config,
            resources,
            ensemble,
        })
    }

    pub fn ensemble(&self) -> &Ensemble {
        &self.ensemble
    }

    pub fn verify(
        &self,
        backend: &dyn Backend,
        id: &str,
        claim: &str,
        evidence: &str,
    ) -> std::result::Result<VerificationResult, VerifyFailure> {
        let checked = Checked::new(backend);
        let mut log = StageLog::default();
        match self.run(&checked, claim, evidence, &mut log) {
            Ok((proof, timings)) => {
                let trace = execute(&proof);
                Ok(VerificationResult {
                    id: id.to_string(),
                    claim: claim.to_string(),
                    verdict: trace.verdict,
                    proof,
                    trace,
                    log,
                    calls: checked.counts(),
                    timings: self.config.timings.then_some(timings),
                })
            }
            Err(error) => Err(VerifyFailure {
                id: id.to_string(),
                error,
                log: Box::new(log),
                calls: checked.counts(),
            }),
        }
    }

    fn run(
        &self,
        backend: &dyn Backend,
        claim: &str,
        evidence: &str,
        log: &mut StageLog,
    ) -> Result<(Vec<ProofTriple>, Timings)> {
        let cfg = &self.config;
        let res = &self.resources;
        let constrained = !cfg.ablations.no_constrained_decoding;
        if claim.trim().is_empty() {
            return Err(Error::input("claim is empty").at(Stage::Chunk));
        }
        if evidence.trim().is_empty() {
            return Err(Error::input("evidence is empty").at(Stage::Align));
        }
        let mut timings = Timings::default();

        let t = Instant::now();
        let chunks =
            chunk(claim, backend, &res.prompts, &cfg.task_params, constrained).map_err(|e| e.at(Stage::Chunk))?;
        timings.chunk_ms = ms(t);
        let chunks = log.chunking.insert(chunks);

        let t = Instant::now();
        let aligned = align(
            claim,
            evidence,
            &chunks.chunks,
            backend,
            &res.prompts,
            &res.lexicon,
            &cfg.task_params,
            constrained,
        )
        .map_err(|e| e.at(Stage::Align))?;
        timings.align_ms = ms(t);
        let aligned = log.alignment.insert(aligned);

        let t = Instant::now();
        let assign_log = log.assignment.insert(AssignmentLog {
            ensemble: self.ensemble.clone(),
            alpha: cfg.alpha,
            pairs: Vec::new(),
        });
        let mut proof = Vec::with_capacity(aligned.pairs.len());
        for pair in &aligned.pairs {
            let a = assign_natop(
                pair,
                &res.bank,
                &self.ensemble,
                backend,
                &cfg.qa_params,
                cfg.alpha,
                !cfg.ablations.no_alignment_signals,
            )
            .map_err(|e| e.at(Stage::Assign))?;
            proof.push(triple(pair, &a));
            assign_log.pairs.push(a);
        }
        timings.assign_ms = ms(t);
        if proof.iter().all(|t| t.natop == NatOp::Independence) {
            warn!("every chunk was assigned independence");
        }
        Ok((proof, timings))
    }

    /// Chunking and alignment only, as used by calibration.
    pub fn aligned_pairs(&self, backend: &dyn Backend, claim: &str, evidence: &str) -> Result<Vec<AlignmentPair>> {
        let cfg = &self.config;
        let res = &self.resources;
        let constrained = !cfg.ablations.no_constrained_decoding;
        let chunks =
            chunk(claim, backend, &res.prompts, &cfg.task_params, constrained).map_err(|e| e.at(Stage::Chunk))?;
        let aligned = align(
            claim,
            evidence,
            &chunks.chunks,
            backend,
            &res.prompts,
            &res.lexicon,
            &cfg.task_params,
            constrained,
        )
        .map_err(|e| e.at(Stage::Align))?;
        Ok(aligned.pairs)
    }

    /// Weights from one pass over `instances`. Instances whose chunking or
    /// alignment fails are skipped.
    pub fn calibrate(&self, backend: &dyn Backend, instances: &[Instance]) -> Result<Calibration> {
        let pool = self.pool()?;
        let pairs: Vec<AlignmentPair> = pool.install(|| {
            instances
                .par_iter()
                .map(
                    |inst| match self.aligned_pairs(backend, &inst.claim, &inst.evidence_text()) {
                        Ok(p) => p,
                        Err(e) => {
                            warn!("{}: skipped in calibration: {e}", inst.id);
                            Vec::new()
                        }
                    },
                )
                .collect::<Vec<_>>()
                .into_iter()
                .flatten()
                .collect()
        });
        pool.install(|| {
            calibrate_weights(
                &pairs,
                &self.resources.bank,
                backend,
                &self.config.qa_params,
                !self.config.ablations.no_alignment_signals,
            )
        })
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.jobs)
            .build()
            .map_err(|e| Error::input(format!("thread pool: {e}")))
    }

    /// Verifies instances on `config.jobs` threads; results keep input order.
    pub fn verify_batch(
        &self,
        backend: &dyn Backend,
        instances: &[Instance],
    ) -> Result<Vec<std::result::Result<VerificationResult, VerifyFailure>>> {
        let pool = self.pool()?;
        Ok(pool.install(|| {
            instances
                .par_iter()
                .map(|inst| {
                    let r = self.verify(backend, &inst.id, &inst.claim, &inst.evidence_text());
                    if let Err(f) = &r {
                        warn!("{f}");
                    }
                    r
                })
                .collect()
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectAnswer {
    pub verdict: Verdict,
    pub completion: String,
    /// The completion named no verdict; NotEnoughInfo was used.
    pub unparsed: bool,
}

/// One multiple-choice prompt, no proof.
pub fn direct_qa(
    backend: &dyn Backend,
    prompts: &PromptTemplates,
    claim: &str,
    evidence: &str,
    params: &GenerationParams,
) -> Result<DirectAnswer> {
    let g = backend.generate_free(&prompts.direct_prompt(evidence, claim), params)?;
    let parsed = parse_direct_answer(&g.text);
    if parsed.is_none() {
        warn!("could not read a verdict from {:?}", g.text);
    }
    Ok(DirectAnswer {
        verdict: parsed.unwrap_or(Verdict::NotEnoughInfo),
        unparsed: parsed.is_none(),
        completion: g.text,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{Scenario, ScriptedBackend};

    fn direct(text: &str) -> DirectAnswer {
        let b = ScriptedBackend::new(Scenario::default().rule(&["C)"], Some(text), None));
        direct_qa(&b, &PromptTemplates::builtin(), "c", "e", &GenerationParams::task()).unwrap()
    }

    #[test]
    fn direct_answers() {
        assert_eq!(direct("Supported").verdict, Verdict::Supported);
        let d = direct("C) Not Enough Information");
        assert_eq!(d.verdict, Verdict::NotEnoughInfo);
        assert!(!d.unparsed);
        let d = direct("the moon is cheese");
        assert_eq!(d.verdict, Verdict::NotEnoughInfo);
        assert!(d.unparsed);
    }

    #[test]
    fn ablation_names_round_trip() {
        for a in Ablation::ALL {
            assert_eq!(a.name().parse::<Ablation>().unwrap(), a);
            assert_eq!(serde_json::to_value(a).unwrap(), a.name());
        }
        assert!("no-such".parse::<Ablation>().is_err());
    }

    #[test]
    fn empty_batch() {
        let p = Pipeline::new(PipelineConfig::default(), Resources::builtin()).unwrap();
        let b = ScriptedBackend::new(Scenario::default());
        assert!(p.verify_batch(&b, &[]).unwrap().is_empty());
    }

    #[test]
    fn failures_carry_stage() {
        let p = Pipeline::new(PipelineConfig::default(), Resources::builtin()).unwrap();
        let b = ScriptedBackend::new(Scenario::default());
        let f = p.verify(&b, "x", "a claim", "").unwrap_err();
        assert_eq!(f.stage(), Some(Stage::Align));
        assert!(f.log.chunking.is_none());
    }
}
