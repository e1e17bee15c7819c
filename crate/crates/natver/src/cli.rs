//! Command-line interface.
//!
//! Exit codes: 0 success, 2 bad input (including usage errors), 3 backend
//! failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use natver_core::Verdict;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, HttpBackend, HttpConfig, ScriptedBackend};
use crate::data::{load_dataset, write_jsonl, Corpus, Instance, LabelMap};
use crate::document::ProofDocument;
use crate::error::{Error, Result};
use crate::eval::{ensemble_study, evaluate, evaluate_records, render_report};
use crate::pipeline::{direct_qa, Ablation, Ablations, BatchRecord, Pipeline, PipelineConfig, Resources};

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "natver", version, about = "Zero-shot natural-logic fact verification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Verify one claim against evidence and print its proof.
    Verify(VerifyArgs),
    /// Verify a dataset and score the verdicts.
    Evaluate(EvaluateArgs),
    /// Compute template weights from one pass over a dataset.
    Calibrate(CalibrateArgs),
    /// Macro-F1 mean and spread over random template subsets.
    EnsembleStudy(StudyArgs),
}

fn parse_ablation(s: &str) -> std::result::Result<Ablation, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// `scripted:PATH` (scenario file) or an `http(s)://` server root.
    #[arg(long)]
    pub backend: Option<String>,
    /// Model name sent to an HTTP backend.
    #[arg(long)]
    pub model: Option<String>,
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Score threshold an operator must exceed.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Switch off a component: no-weighted-templates, no-qa-ensembles,
    /// no-constrained-decoding, no-alignment-signals. Repeatable.
    #[arg(long, value_parser = parse_ablation)]
    pub ablate: Vec<Ablation>,
    /// Templates sampled per operator.
    #[arg(long)]
    pub ensemble_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Claims verified in parallel.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Template directory (chunking.txt, alignment.txt, direct_qa.txt, natops/).
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Weights file written by `calibrate`.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Signal keyword file `{"support": [...], "refute": [...]}`.
    #[arg(long)]
    pub signals: Option<PathBuf>,
    /// Record per-stage wall-clock timings.
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub claim: String,
    #[arg(long, required_unless_present = "evidence_file", conflicts_with = "evidence_file")]
    pub evidence: Option<String>,
    #[arg(long)]
    pub evidence_file: Option<PathBuf>,
    /// Ask for the verdict directly instead of building a proof.
    #[arg(long)]
    pub direct: bool,
    /// Emit the full result with stage logs instead of the proof document.
    #[arg(long)]
    pub full: bool,
    /// Output file; stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// JSONL dataset.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Label map, e.g. config/labelmaps/scifact.json.
    #[arg(long)]
    pub labelmap: Option<PathBuf>,
    /// JSONL corpus `{"id", "text"}` for instances without evidence.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Documents retrieved per claim from the corpus.
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Use the direct-answer baseline.
    #[arg(long)]
    pub direct: bool,
    /// Per-instance results (JSONL).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Weights file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Comma-separated ensemble sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub repeats: usize,
    /// Study rows as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Values a config file may set.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub backend: Option<String>,
    pub model: Option<String>,
    pub alpha: Option<f64>,
    pub ablate: Option<Vec<Ablation>>,
    pub ensemble_size: Option<usize>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub templates: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub signals: Option<PathBuf>,
    pub timings: Option<bool>,
}

/// Everything a run depends on, echoed to stderr.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub command: &'static str,
    pub backend: String,
    pub model: Option<String>,
    pub templates: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub signals: Option<PathBuf>,
    pub pipeline: PipelineConfig,
}

fn read_config(path: &Path) -> Result<FileConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::input(format!("{}: {e}", path.display())))
}

pub fn resolve(command: &'static str, c: &Common) -> Result<Resolved> {
    let file = match &c.config {
        Some(p) => read_config(p)?,
        None => FileConfig::default(),
    };
    let defaults = PipelineConfig::default();
    let ablate: Vec<Ablation> = if c.ablate.is_empty() {
        file.ablate.unwrap_or_default()
    } else {
        c.ablate.clone()
    };
    let pipeline = PipelineConfig {
        alpha: c.alpha.or(file.alpha).unwrap_or(defaults.alpha),
        ablations: ablate.into_iter().fold(Ablations::default(), Ablations::with),
        ensemble_size: c.ensemble_size.or(file.ensemble_size),
        seed: c.seed.or(file.seed).unwrap_or(defaults.seed),
        jobs: c.jobs.or(file.jobs).unwrap_or(defaults.jobs),
        timings: c.timings || file.timings.unwrap_or(false),
        ..defaults
    };
    pipeline.validate()?;
    let backend = c
        .backend
        .clone()
        .or(file.backend)
        .ok_or_else(|| Error::input("no backend given (--backend scripted:PATH or http://HOST:PORT)"))?;
    Ok(Resolved {
        command,
        backend,
        model: c.model.clone().or(file.model),
        templates: c.templates.clone().or(file.templates),
        weights: c.weights.clone().or(file.weights),
        signals: c.signals.clone().or(file.signals),
        pipeline,
    })
}

pub fn open_backend(spec: &str, model: Option<&str>) -> Result<Box<dyn Backend>> {
    if let Some(path) = spec.strip_prefix("scripted:") {
        return Ok(Box::new(ScriptedBackend::from_file(Path::new(path))?));
    }
    if spec.starts_with("http://") || spec.starts_with("https://") {
        let mut cfg = HttpConfig::new(spec);
        cfg.model = model.map(str::to_string);
        return Ok(Box::new(HttpBackend::connect(cfg)?));
    }
    Err(Error::input(format!("unrecognised backend {spec:?}")))
}

impl Resolved {
    pub fn resources(&self) -> Result<Resources> {
        let mut r = Resources::builtin();
        if let Some(d) = &self.templates {
            r = r.with_templates(d)?;
        }
        if let Some(p) = &self.weights {
            r = r.with_weights(p)?;
        }
        if let Some(p) = &self.signals {
            r = r.with_lexicon(p)?;
        }
        Ok(r)
    }

    fn echo(&self) {
        eprintln!("{}", serde_json::to_string(self).expect("config serializes"));
    }
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Error::io(Path::new("<stdout>"), e))
        }
    }
}

fn load_instances(d: &DatasetArgs) -> Result<(Vec<Instance>, Option<LabelMap>)> {
    let map = d.labelmap.as_deref().map(LabelMap::load).transpose()?;
    let data = load_dataset(&d.dataset, map.as_ref())?;
    let mut instances = data.instances;
    if let Some(c) = &d.corpus {
        Corpus::load(c)?.attach_evidence(&mut instances, d.top_k.max(1));
    }
    Ok((instances, map))
}

fn cmd_verify(a: &VerifyArgs) -> Result<()> {
    let r = resolve("verify", &a.common)?;
    r.echo();
    let evidence = match (&a.evidence, &a.evidence_file) {
        (Some(e), _) => e.clone(),
        (None, Some(p)) => fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
        (None, None) => return Err(Error::input("evidence is required")),
    };
    let resources = r.resources()?;
    let backend = open_backend(&r.backend, r.model.as_deref())?;
    let text = if a.direct {
        let d = direct_qa(
            backend.as_ref(),
            &resources.prompts,
            &a.claim,
            &evidence,
            &r.pipeline.task_params,
        )?;
        serde_json::to_string_pretty(&d).expect("serializes")
    } else {
        let p = Pipeline::new(r.pipeline.clone(), resources)?;
        let result = p
            .verify(backend.as_ref(), "claim", &a.claim, &evidence)
            .map_err(|f| f.error)?;
        if a.full {
            serde_json::to_string_pretty(&result).expect("serializes")
        } else {
            ProofDocument::from_result(&result).to_json()
        }
    };
    write_out(a.out.as_deref(), &(text + "\n"))
}

#[derive(Debug, Serialize)]
struct DirectRecord {
    id: String,
    verdict: Verdict,
    completion: String,
    unparsed: bool,
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let r = resolve("evaluate", &a.common)?;
    r.echo();
    let (instances, map) = load_instances(&a.data)?;
    let map = map.ok_or_else(|| Error::input("evaluate needs --labelmap"))?;
    let resources = r.resources()?;
    let backend = open_backend(&r.backend, r.model.as_deref())?;
    let backend = backend.as_ref();

    let (report, failures) = if a.direct {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(r.pipeline.jobs)
            .build()
            .map_err(|e| Error::input(e.to_string()))?;
        let answers: Vec<Result<DirectRecord>> = pool.install(|| {
            instances
                .par_iter()
                .map(|i| {
                    direct_qa(
                        backend,
                        &resources.prompts,
                        &i.claim,
                        &i.evidence_text(),
                        &r.pipeline.task_params,
                    )
                    .map(|d| DirectRecord {
                        id: i.id.clone(),
                        verdict: d.verdict,
                        completion: d.completion,
                        unparsed: d.unparsed,
                    })
                })
                .collect()
        });
        let records = answers.into_iter().collect::<Result<Vec<_>>>()?;
        if let Some(out) = &a.out {
            write_jsonl(out, &records)?;
        }
        let unparsed = records.iter().filter(|d| d.unparsed).count();
        let preds: Vec<(String, Verdict)> = records.into_iter().map(|d| (d.id, d.verdict)).collect();
        (evaluate(&preds, &instances, &map)?, unparsed)
    } else {
        let pipeline = Pipeline::new(r.pipeline.clone(), resources)?;
        let results = pipeline.verify_batch(backend, &instances)?;
        let failed: Vec<&crate::pipeline::VerifyFailure> = results.iter().filter_map(|r| r.as_ref().err()).collect();
        if !instances.is_empty() && failed.len() == instances.len() && failed.iter().all(|f| f.error.is_backend()) {
            let first = results.into_iter().find_map(|r| r.err()).expect("at least one failure");
            return Err(first.error);
        }
        let failures = failed.len();
        let records: Vec<BatchRecord> = results.iter().map(BatchRecord::from_result).collect();
        if let Some(out) = &a.out {
            write_jsonl(out, &records)?;
        }
        (evaluate_records(&records, &instances, &map)?, failures)
    };
    if let Some(p) = &a.report {
        let json = serde_json::to_string_pretty(&report).expect("serializes") + "\n";
        fs::write(p, json).map_err(|e| Error::io(p, e))?;
    }
    let label = if a.direct { "unparsed" } else { "failures" };
    write_out(None, &format!("{}{label} = {failures}\n", render_report(&report)))
}

fn cmd_calibrate(a: &CalibrateArgs) -> Result<()> {
    let r = resolve("calibrate", &a.common)?;
    r.echo();
    let (instances, _) = load_instances(&a.data)?;
    if instances.is_empty() {
        warn!("dataset is empty; writing uniform weights");
    }
    let resources = r.resources()?;
    let backend = open_backend(&r.backend, r.model.as_deref())?;
    let pipeline = Pipeline::new(r.pipeline.clone(), resources)?;
    let cal = pipeline.calibrate(backend.as_ref(), &instances)?;
    for op in &cal.uniform_fallback {
        eprintln!("{op}: no calibration data, uniform weights");
    }
    info!("calibrated on {:?} pairs per operator", cal.pairs);
    let json = serde_json::to_string_pretty(&cal.weights).expect("serializes") + "\n";
    fs::write(&a.out, json).map_err(|e| Error::io(&a.out, e))
}

fn cmd_study(a: &StudyArgs) -> Result<()> {
    let r = resolve("ensemble-study", &a.common)?;
    r.echo();
    let (instances, map) = load_instances(&a.data)?;
    let map = map.ok_or_else(|| Error::input("ensemble-study needs --labelmap"))?;
    let resources = r.resources()?;
    let backend = open_backend(&r.backend, r.model.as_deref())?;
    let rows = ensemble_study(
        backend.as_ref(),
        &r.pipeline,
        &resources,
        &instances,
        &map,
        &a.sizes,
        a.repeats,
        r.pipeline.seed,
    )?;
    if let Some(p) = &a.out {
        let json = serde_json::to_string_pretty(&rows).expect("serializes") + "\n";
        fs::write(p, json).map_err(|e| Error::io(p, e))?;
    }
    let mut table = format!("{:>5} {:>10} {:>10}\n", "size", "mean F1", "std F1");
    for row in &rows {
        table += &format!(
            "{:>5} {:>10.4} {:>10.4}\n",
            row.size, row.mean_macro_f1, row.std_macro_f1
        );
    }
    write_out(None, &table)
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Verify(a) => cmd_verify(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::EnsembleStudy(a) => cmd_study(a),
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_backend() {
        EXIT_BACKEND
    } else {
        EXIT_INPUT
    }
}

pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
