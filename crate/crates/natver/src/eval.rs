//! Scoring predictions and the ensemble-size study.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use natver_core::metrics::{mean_std, report, EvalReport};
use natver_core::{NatOp, Verdict};
use serde::{Deserialize, Serialize};

use crate::backend::Backend;
use crate::data::{Instance, LabelMap};
use crate::error::{Error, Result};
use crate::pipeline::{BatchRecord, Pipeline, PipelineConfig, Resources};

/// Scores `(id, predicted verdict)` pairs against gold labels. Predictions
/// are folded into the map's label space first.
pub fn evaluate(predictions: &[(String, Verdict)], instances: &[Instance], map: &LabelMap) -> Result<EvalReport> {
    let mut pred: BTreeMap<&str, Verdict> = BTreeMap::new();
    let mut dup = BTreeSet::new();
    for (id, v) in predictions {
        if pred.insert(id.as_str(), *v).is_some() {
            dup.insert(id.as_str());
        }
    }
    let gold_ids: BTreeSet<&str> = instances.iter().map(|i| i.id.as_str()).collect();
    let missing: Vec<&str> = gold_ids.iter().filter(|id| !pred.contains_key(*id)).copied().collect();
    let extra: Vec<&str> = pred.keys().filter(|id| !gold_ids.contains(*id)).copied().collect();
    if !(missing.is_empty() && extra.is_empty() && dup.is_empty()) {
        return Err(Error::input(format!(
            "predictions and instances disagree: missing {missing:?}, unexpected {extra:?}, duplicated {:?}",
            dup
        )));
    }

    let classes = map.classes();
    let labels: Vec<String> = classes.iter().map(|v| v.name().to_string()).collect();
    let index = |v: Verdict| classes.iter().position(|c| *c == v);
    let mut pairs = Vec::with_capacity(instances.len());
    for inst in instances {
        let g = map
            .gold(&inst.label)
            .and_then(index)
            .ok_or_else(|| Error::input(format!("{}: label {:?} not in label map", inst.id, inst.label)))?;
        let p = index(map.fold(pred[inst.id.as_str()])).expect("fold stays in the label space");
        pairs.push((g, p));
    }
    Ok(report(&labels, pairs))
}

pub fn evaluate_records(records: &[BatchRecord], instances: &[Instance], map: &LabelMap) -> Result<EvalReport> {
    let preds: Vec<(String, Verdict)> = records.iter().map(|r| (r.id().to_string(), r.verdict())).collect();
    evaluate(&preds, instances, map)
}

/// Plain-text rendering: headline numbers, per-class table, confusion matrix.
pub fn render_report(r: &EvalReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "n = {}", r.n);
    let _ = writeln!(s, "accuracy = {:.4}", r.accuracy);
    let _ = writeln!(s, "macro-F1 = {:.4}", r.macro_f1);
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:<14} {:>9} {:>9} {:>9} {:>8}",
        "class", "precision", "recall", "f1", "support"
    );
    for c in &r.per_class {
        let _ = writeln!(
            s,
            "{:<14} {:>9.4} {:>9.4} {:>9.4} {:>8}",
            c.label, c.precision, c.recall, c.f1, c.support
        );
    }
    let _ = writeln!(s);
    let _ = write!(s, "{:<14}", "gold \\ pred");
    for l in &r.labels {
        let _ = write!(s, " {l:>14}");
    }
    let _ = writeln!(s);
    for (l, row) in r.labels.iter().zip(&r.confusion) {
        let _ = write!(s, "{l:<14}");
        for n in row {
            let _ = write!(s, " {n:>14}");
        }
        let _ = writeln!(s);
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRun {
    pub seed: u64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub failures: usize,
    pub selection: BTreeMap<NatOp, Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub size: usize,
    pub mean_macro_f1: f64,
    pub std_macro_f1: f64,
    pub runs: Vec<StudyRun>,
}

/// For every size, `repeats` evaluations with seeds `seed, seed + 1, ...`,
/// each sampling `size` templates per operator.
#[allow(clippy::too_many_arguments)]
pub fn ensemble_study(
    backend: &dyn Backend,
    config: &PipelineConfig,
    resources: &Resources,
    instances: &[Instance],
    map: &LabelMap,
    sizes: &[usize],
    repeats: usize,
    seed: u64,
) -> Result<Vec<StudyRow>> {
    if repeats < 2 {
        return Err(Error::input("the study needs at least 2 repeats"));
    }
    let bank_size = resources.bank.min_size();
    if let Some(bad) = sizes.iter().find(|&&s| s == 0 || s > bank_size) {
        return Err(Error::input(format!("size {bad} is outside [1, {bank_size}]")));
    }
    let mut rows = Vec::new();
    for &size in sizes {
        let mut runs = Vec::with_capacity(repeats);
        for r in 0..repeats {
            let run_seed = seed.wrapping_add(r as u64);
            let mut cfg = config.clone();
            cfg.ensemble_size = Some(size);
            cfg.seed = run_seed;
            let pipeline = Pipeline::new(cfg, resources.clone())?;
            let records: Vec<BatchRecord> = pipeline
                .verify_batch(backend, instances)?
                .iter()
                .map(BatchRecord::from_result)
                .collect();
            let failures = records
                .iter()
                .filter(|r| matches!(r, BatchRecord::Failed { .. }))
                .count();
            let rep = evaluate_records(&records, instances, map)?;
            runs.push(StudyRun {
                seed: run_seed,
                macro_f1: rep.macro_f1,
                accuracy: rep.accuracy,
                failures,
                selection: pipeline.ensemble().indices.clone(),
            });
        }
        let f1s: Vec<f64> = runs.iter().map(|r| r.macro_f1).collect();
        let (mean, std) = mean_std(&f1s).expect("repeats >= 2");
        rows.push(StudyRow {
            size,
            mean_macro_f1: mean,
            std_macro_f1: std,
            runs,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LabelSpace;

    fn three_way() -> LabelMap {
        LabelMap {
            name: "t".into(),
            label_space: LabelSpace::ThreeWay,
            labels: BTreeMap::from([
                ("S".into(), Verdict::Supported),
                ("R".into(), Verdict::Refuted),
                ("N".into(), Verdict::NotEnoughInfo),
            ]),
            fold_not_enough_info: None,
            excluded: vec![],
        }
    }

    fn inst(id: &str, label: &str) -> Instance {
        Instance {
            id: id.into(),
            claim: "c".into(),
            evidence: vec![],
            label: label.into(),
        }
    }

    #[test]
    fn all_correct_balanced() {
        let insts = [inst("1", "S"), inst("2", "R"), inst("3", "N")];
        let preds = vec![
            ("3".to_string(), Verdict::NotEnoughInfo),
            ("1".to_string(), Verdict::Supported),
            ("2".to_string(), Verdict::Refuted),
        ];
        let r = evaluate(&preds, &insts, &three_way()).unwrap();
        assert_eq!((r.accuracy, r.macro_f1), (1.0, 1.0));
        assert!(render_report(&r).contains("macro-F1 = 1.0000"));
    }

    #[test]
    fn id_mismatch_lists_offenders() {
        let insts = [inst("1", "S"), inst("2", "R")];
        let preds = vec![
            ("1".to_string(), Verdict::Supported),
            ("9".to_string(), Verdict::Refuted),
        ];
        let e = evaluate(&preds, &insts, &three_way()).unwrap_err().to_string();
        assert!(e.contains("\"2\"") && e.contains("\"9\""), "{e}");
    }

    #[test]
    fn two_way_folds_nei_to_negative() {
        let map = LabelMap {
            name: "h".into(),
            label_space: LabelSpace::TwoWay,
            labels: BTreeMap::from([("SUP".into(), Verdict::Supported), ("NOT".into(), Verdict::Refuted)]),
            fold_not_enough_info: Some("NOT".into()),
            excluded: vec![],
        };
        let insts = [inst("1", "NOT"), inst("2", "SUP")];
        let preds = vec![
            ("1".to_string(), Verdict::NotEnoughInfo),
            ("2".to_string(), Verdict::NotEnoughInfo),
        ];
        let r = evaluate(&preds, &insts, &map).unwrap();
        assert_eq!(r.labels, ["Supported", "Refuted"]);
        assert_eq!(r.confusion, vec![vec![0, 1], vec![0, 1]]);
    }
}
