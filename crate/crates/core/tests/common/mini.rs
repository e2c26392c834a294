//! Expected results for the `mini` fixture, computed from the raw files
//! with the reference functions in `oracles`.

use std::path::{Path, PathBuf};

use patchcheck_core::eval::{ConfusionMatrix, Manifest, MetricsReport, PatchRecord};
use patchcheck_core::invariant::{parse_invariant_file, InvariantCorpus, Partition, PointMap, Variant};
use patchcheck_core::pipeline::{BatchReport, Embedder, PatchRow, PipelineConfig, Stage};
use patchcheck_core::Correctness;
use serde_json::Value;

use super::fixture_dir;
use super::oracles;

pub fn dir() -> PathBuf {
    fixture_dir("mini")
}

pub fn manifest() -> Manifest {
    Manifest::load(&dir().join("manifest.json")).unwrap()
}

pub fn model_path() -> PathBuf {
    dir().join("model.json")
}

pub fn golden_path() -> PathBuf {
    dir().join("golden_report.json")
}

pub fn config() -> PipelineConfig {
    PipelineConfig {
        embedder: Embedder::ExternalFile(dir().join("embeddings.jsonl")),
        ..PipelineConfig::default()
    }
}

struct RawModel {
    weights: Vec<f64>,
    bias: f64,
    mean: Vec<f64>,
    std: Vec<f64>,
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn raw_model() -> RawModel {
    let v: Value = serde_json::from_str(&std::fs::read_to_string(model_path()).unwrap()).unwrap();
    RawModel {
        weights: floats(&v["weights"]),
        bias: v["bias"].as_f64().unwrap(),
        mean: floats(&v["standardization"]["mean"]),
        std: floats(&v["standardization"]["std"]),
    }
}

fn embedding(id: &str) -> Vec<f64> {
    let text = std::fs::read_to_string(dir().join("embeddings.jsonl")).unwrap();
    for line in text.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        if v["id"] == id {
            return floats(&v["vector"]);
        }
    }
    panic!("no embedding `{id}`");
}

fn corpus(record: &PatchRecord) -> Option<InvariantCorpus> {
    let paths = record.invariant_paths.as_ref()?;
    let mut c = InvariantCorpus::new();
    for v in Variant::ALL {
        for p in Partition::ALL {
            let text = std::fs::read_to_string(dir().join(paths.get(v, p)?)).ok()?;
            let map = if text.trim().is_empty() {
                PointMap::new()
            } else {
                parse_invariant_file(&text).unwrap()
            };
            c.set_slot(v, p, map);
        }
    }
    Some(c)
}

fn score(record: &PatchRecord, model: &RawModel) -> f64 {
    let e = |role: &str| embedding(&format!("{}:{role}", record.id));
    let (b, p, g) = (e("buggy"), e("patched"), e("groundtruth"));
    let mut x = oracles::distance_pair(&p, &b);
    x.extend(oracles::distance_pair(&p, &g));
    let mut z = model.bias;
    for (i, xi) in x.iter().enumerate() {
        z += model.weights[i] * (xi - model.mean[i]) / model.std[i];
    }
    oracles::sigmoid(z)
}

/// Per-record outcome; `verdict` is `None` for records that cannot be
/// assessed.
pub fn expected_rows(semantic: bool, syntactic: bool, threshold: f64) -> Vec<PatchRow> {
    let model = raw_model();
    let mut rows: Vec<PatchRow> = manifest()
        .records
        .iter()
        .map(|r| {
            let mut row = PatchRow {
                id: r.id.clone(),
                stage: None,
                score: None,
                verdict: None,
                label: r.label,
                error: None,
            };
            let mut stage = Stage::Syntactic;
            if semantic {
                match corpus(r) {
                    Some(c) => {
                        let o = oracles::nested_loop_verdict(
                            c.slot(Variant::Buggy, Partition::PassingTraces),
                            c.slot(Variant::GroundTruth, Partition::PassingTraces),
                            c.slot(Variant::Buggy, Partition::FailingTraces),
                            c.slot(Variant::GroundTruth, Partition::FailingTraces),
                            c.slot(Variant::Patched, Partition::PassingTraces),
                            c.slot(Variant::Patched, Partition::FailingTraces),
                        );
                        if o.overfitting || !syntactic {
                            row.stage = Some(Stage::Semantic);
                            row.verdict = Some(if o.overfitting {
                                Correctness::Overfitting
                            } else {
                                Correctness::Correct
                            });
                            return row;
                        }
                    }
                    None if syntactic => stage = Stage::Fallback,
                    None => return row,
                }
            }
            let s = score(r, &model);
            row.stage = Some(stage);
            row.score = Some(s);
            row.verdict = Some(if s <= threshold {
                Correctness::Correct
            } else {
                Correctness::Overfitting
            });
            row
        })
        .collect();
    rows.sort_by(|a, b| a.id.cmp(&b.id));
    rows
}

/// The full report for the default configuration at `threshold`.
pub fn expected_report(threshold: f64) -> BatchReport {
    let per_patch = expected_rows(true, true, threshold);
    let (mut tp, mut fn_, mut fp, mut tn) = (0, 0, 0, 0);
    let mut scored = Vec::new();
    for r in &per_patch {
        let (Some(v), Some(l)) = (r.verdict, r.label) else {
            continue;
        };
        match (v, l) {
            (Correctness::Overfitting, Correctness::Overfitting) => tp += 1,
            (Correctness::Correct, Correctness::Overfitting) => fn_ += 1,
            (Correctness::Overfitting, Correctness::Correct) => fp += 1,
            (Correctness::Correct, Correctness::Correct) => tn += 1,
        }
        if let Some(s) = r.score {
            scored.push((s, l));
        }
    }
    let confusion = ConfusionMatrix { tp, fn_, fp, tn };
    let m = oracles::metrics(tp, fn_, fp, tn);
    let metrics = MetricsReport {
        confusion,
        recall: m.recall,
        precision: m.precision,
        accuracy: m.accuracy,
        f1: m.f1,
        auc: Some(oracles::auc_pairwise(&scored)),
    };
    let r = |v: Option<f64>| v.map(oracles::round_half_up_2);
    let rounded = MetricsReport {
        confusion,
        recall: r(metrics.recall),
        precision: r(metrics.precision),
        accuracy: r(metrics.accuracy),
        f1: r(metrics.f1),
        auc: r(metrics.auc),
    };
    BatchReport {
        confusion: Some(confusion),
        metrics: Some(metrics),
        metrics_rounded: Some(rounded),
        threshold,
        errors: per_patch.iter().filter(|r| r.verdict.is_none()).count(),
        per_patch,
        warnings: Vec::new(),
    }
}

/// Writes the golden file from the oracle when `PATCHCHECK_BLESS` is set.
pub fn golden_text() -> String {
    let path: &Path = &golden_path();
    if std::env::var_os("PATCHCHECK_BLESS").is_some() {
        std::fs::write(path, expected_report(0.975).to_json()).unwrap();
    }
    std::fs::read_to_string(path).unwrap()
}
