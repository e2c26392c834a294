//! Two-stage assessment: invariants first, embedding classifier second.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equivalence::{Equivalence, SolverHook};
use crate::error::{Error, Result};
use crate::eval::{
    compute_auc, compute_metrics, round2, split_train_valid, sweep_thresholds, tune_threshold,
    ConfusionMatrix, Manifest, MetricsReport, PatchRecord, SweepRow,
};
use crate::invariant::{
    parse_invariant_file, Granularity, InvariantCorpus, Partition, PointMap, Variant,
};
use crate::label::Correctness;
use crate::semantic::{Rule, SemanticClassifier};
use crate::syntactic::{
    classify_threshold, feature_vector, hashing_embed, lr_predict, lr_train, DistanceFeatures,
    EmbeddingStore, EmbeddingVector, PredictorModel, Role, TrainingConfig, DEFAULT_DIM,
    DEFAULT_THRESHOLD,
};

/// Where fragment embeddings come from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Embedder {
    /// A JSON Lines exchange file.
    ExternalFile(PathBuf),
    /// Token hashing over the code files named in the manifest.
    #[default]
    HashingFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub granularity: Granularity,
    pub threshold: f64,
    pub semantic_enabled: bool,
    pub syntactic_enabled: bool,
    pub embedder: Embedder,
    pub solver_hook: Option<SolverHook>,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            granularity: Granularity::Executed,
            threshold: DEFAULT_THRESHOLD,
            semantic_enabled: true,
            syntactic_enabled: true,
            embedder: Embedder::HashingFallback,
            solver_hook: None,
            seed: 42,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.semantic_enabled && !self.syntactic_enabled {
            return Err(Error::InvalidConfig("both stages are disabled".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidConfig(format!(
                "threshold must be in [0, 1], got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Semantic,
    Syntactic,
    /// Syntactic scoring because the invariants were unavailable.
    Fallback,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Semantic => "semantic",
            Stage::Syntactic => "syntactic",
            Stage::Fallback => "fallback",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assessment {
    pub verdict: Correctness,
    pub stage: Stage,
    pub score: Option<f64>,
    pub fired_rules: Vec<Rule>,
    pub warnings: Vec<String>,
}

/// Turns manifest records into distance features.
#[derive(Debug, Clone)]
pub enum FeatureSource {
    Hashing { k: usize },
    Store { path: PathBuf, store: EmbeddingStore },
}

impl FeatureSource {
    /// Loads the embedding file for [`Embedder::ExternalFile`]. `k` is the
    /// hashing width otherwise.
    pub fn open(embedder: &Embedder, k: usize) -> Result<(Self, Vec<String>)> {
        match embedder {
            Embedder::HashingFallback => Ok((FeatureSource::Hashing { k }, Vec::new())),
            Embedder::ExternalFile(path) => {
                let (store, warnings) = EmbeddingStore::load(path)?;
                Ok((
                    FeatureSource::Store {
                        path: path.clone(),
                        store,
                    },
                    warnings,
                ))
            }
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            FeatureSource::Hashing { k } => Some(*k),
            FeatureSource::Store { store, .. } => store.dim(),
        }
    }

    fn embedding(&self, manifest: &Manifest, record: &PatchRecord, role: Role) -> Result<EmbeddingVector> {
        match self {
            FeatureSource::Hashing { k } => {
                let path = manifest.resolve(record.code_paths.get(role));
                let text = std::fs::read_to_string(&path).map_err(|_| Error::MissingCodeFile {
                    id: record.id.clone(),
                    path,
                })?;
                Ok(hashing_embed(record.embedding_id(role), &text, *k))
            }
            FeatureSource::Store { path, store } => {
                let id = record.embedding_id(role);
                store.get(&id).cloned().ok_or_else(|| Error::InvalidEmbedding {
                    reason: format!("not found in {}", path.display()),
                    id,
                })
            }
        }
    }

    pub fn features(&self, manifest: &Manifest, record: &PatchRecord) -> Result<DistanceFeatures> {
        let b = self.embedding(manifest, record, Role::Buggy)?;
        let p = self.embedding(manifest, record, Role::Patched)?;
        let g = self.embedding(manifest, record, Role::GroundTruth)?;
        feature_vector(&b, &p, &g)
    }
}

/// Reads the six invariant dumps of a record. `Ok(None)` when any of them
/// is not listed or cannot be read; malformed dumps are errors. A dump
/// without records is an empty slot.
pub fn load_corpus(manifest: &Manifest, record: &PatchRecord) -> Result<Option<InvariantCorpus>> {
    let Some(paths) = &record.invariant_paths else {
        return Ok(None);
    };
    let mut corpus = InvariantCorpus::new();
    for v in Variant::ALL {
        for p in Partition::ALL {
            let Some(rel) = paths.get(v, p) else {
                return Ok(None);
            };
            let Ok(text) = std::fs::read_to_string(manifest.resolve(rel)) else {
                return Ok(None);
            };
            let map = match parse_invariant_file(&text) {
                Ok(map) => map,
                Err(Error::EmptyInput) => PointMap::new(),
                Err(e) => return Err(e),
            };
            corpus.set_slot(v, p, map);
        }
    }
    Ok(Some(corpus))
}

fn invariant_path_list(manifest: &Manifest, record: &PatchRecord) -> Vec<PathBuf> {
    let Some(paths) = &record.invariant_paths else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for v in Variant::ALL {
        for p in Partition::ALL {
            if let Some(rel) = paths.get(v, p) {
                out.push(manifest.resolve(rel));
            }
        }
    }
    out
}

/// Runs the enabled stages on manifest records.
#[derive(Debug, Clone)]
pub struct Assessor {
    config: PipelineConfig,
    model: Option<PredictorModel>,
    source: Option<FeatureSource>,
    classifier: SemanticClassifier,
    warnings: Vec<String>,
}

impl Assessor {
    pub fn new(config: PipelineConfig, model: Option<PredictorModel>) -> Result<Self> {
        config.validate()?;
        let mut warnings = Vec::new();
        let source = match (&model, config.syntactic_enabled) {
            (None, true) => return Err(Error::ModelRequired),
            (Some(m), true) => {
                let (source, w) = FeatureSource::open(&config.embedder, m.k)?;
                if let Some(d) = source.dim() {
                    if d != m.k {
                        return Err(Error::DimensionMismatch {
                            expected: m.k,
                            found: d,
                        });
                    }
                }
                warnings.extend(w);
                Some(source)
            }
            (_, false) => None,
        };
        let classifier =
            SemanticClassifier::new(Equivalence::with_solver(config.solver_hook.clone()));
        Ok(Assessor {
            config,
            model,
            source,
            classifier,
            warnings,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    /// Warnings raised while loading shared inputs.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn assess_patch(&self, manifest: &Manifest, record: &PatchRecord) -> Result<Assessment> {
        let mut stage = Stage::Syntactic;
        let mut fired_rules = Vec::new();
        if self.config.semantic_enabled {
            match load_corpus(manifest, record)? {
                Some(corpus) => {
                    let corpus = match self.config.granularity {
                        Granularity::Executed => corpus,
                        Granularity::Buggy => {
                            let methods = record.modified_method_set()?;
                            if methods.is_empty() {
                                return Err(Error::EmptyModifiedSet);
                            }
                            corpus.restrict(Granularity::Buggy, &methods)
                        }
                    };
                    let verdict = self.classifier.assess_corpus(&corpus);
                    if verdict.is_overfitting() || !self.config.syntactic_enabled {
                        let result = if verdict.is_overfitting() {
                            Correctness::Overfitting
                        } else {
                            Correctness::Correct
                        };
                        return Ok(Assessment {
                            verdict: result,
                            stage: Stage::Semantic,
                            score: None,
                            fired_rules: verdict.fired_rules,
                            warnings: Vec::new(),
                        });
                    }
                    fired_rules = verdict.fired_rules;
                }
                None if self.config.syntactic_enabled => stage = Stage::Fallback,
                None => {
                    return Err(Error::MissingInputs {
                        stage: "semantic".into(),
                        paths: invariant_path_list(manifest, record),
                    })
                }
            }
        }
        let (Some(model), Some(source)) = (&self.model, &self.source) else {
            return Err(Error::ModelRequired);
        };
        let features = source.features(manifest, record)?;
        let score = lr_predict(model, &features.combined)?;
        Ok(Assessment {
            verdict: classify_threshold(score, self.config.threshold),
            stage,
            score: Some(score),
            fired_rules,
            warnings: features.warnings,
        })
    }
}

/// One row of the per-patch report. Error rows carry `error` and no verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchRow {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Correctness>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Correctness>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confusion: Option<ConfusionMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics_rounded: Option<MetricsReport>,
    pub threshold: f64,
    pub per_patch: Vec<PatchRow>,
    pub errors: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Assesses every record (in parallel), sorted by id. Per-record failures
/// become error rows. Metrics cover labeled rows with a verdict and are
/// omitted when there are none; AUC uses the rows that have a score.
pub fn run_batch(manifest: &Manifest, model: Option<&PredictorModel>, config: &PipelineConfig) -> Result<BatchReport> {
    if manifest.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let assessor = Assessor::new(config.clone(), model.cloned())?;
    let results: Vec<(&PatchRecord, Result<Assessment>)> = manifest
        .records
        .par_iter()
        .map(|r| (r, assessor.assess_patch(manifest, r)))
        .collect();

    let mut warnings: Vec<String> = assessor.warnings().to_vec();
    let mut rows: Vec<PatchRow> = Vec::with_capacity(results.len());
    for (record, result) in results {
        let row = match result {
            Ok(a) => {
                warnings.extend(a.warnings.iter().map(|w| format!("{}: {w}", record.id)));
                PatchRow {
                    id: record.id.clone(),
                    stage: Some(a.stage),
                    score: a.score,
                    verdict: Some(a.verdict),
                    label: record.label,
                    error: None,
                }
            }
            Err(e) => PatchRow {
                id: record.id.clone(),
                stage: None,
                score: None,
                verdict: None,
                label: record.label,
                error: Some(e.to_string()),
            },
        };
        rows.push(row);
    }
    rows.sort_by(|a, b| a.id.cmp(&b.id));
    warnings.sort();

    let (confusion, metrics) = summarize(&rows);
    Ok(BatchReport {
        confusion,
        metrics_rounded: metrics.map(|m| m.rounded()),
        metrics,
        threshold: config.threshold,
        errors: rows.iter().filter(|r| r.error.is_some()).count(),
        per_patch: rows,
        warnings,
    })
}

fn summarize(rows: &[PatchRow]) -> (Option<ConfusionMatrix>, Option<MetricsReport>) {
    let judged: Vec<(Correctness, Correctness)> = rows
        .iter()
        .filter_map(|r| Some((r.verdict?, r.label?)))
        .collect();
    if judged.is_empty() {
        return (None, None);
    }
    let confusion = ConfusionMatrix::from_pairs(judged);
    let mut metrics = compute_metrics(confusion);
    let scored: Vec<(f64, Correctness)> = rows
        .iter()
        .filter(|r| r.verdict.is_some())
        .filter_map(|r| Some((r.score?, r.label?)))
        .collect();
    metrics.auc = compute_auc(&scored).ok();
    (Some(confusion), Some(metrics))
}

impl BatchReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization is infallible");
        s.push('\n');
        s
    }

    /// Re-thresholds the scored rows; semantic verdicts stay fixed.
    pub fn sweep(&self, steps: usize) -> Vec<SweepRow> {
        sweep_thresholds(steps, |t| {
            ConfusionMatrix::from_pairs(self.per_patch.iter().filter_map(|r| {
                let label = r.label?;
                let verdict = match r.score {
                    Some(s) => classify_threshold(s, t),
                    None => r.verdict?,
                };
                Some((verdict, label))
            }))
        })
    }

    /// Aligned plain-text table followed by a metric summary.
    pub fn to_table(&self) -> String {
        let cells: Vec<[String; 5]> = self
            .per_patch
            .iter()
            .map(|r| {
                [
                    r.id.clone(),
                    r.stage.map_or("error", Stage::name).to_string(),
                    r.score.map(|s| format!("{s:.4}")).unwrap_or_else(|| "-".into()),
                    r.verdict.map_or_else(|| "-".into(), |v| v.to_string()),
                    r.label.map_or_else(|| "-".into(), |v| v.to_string()),
                ]
            })
            .collect();
        let header = ["id", "stage", "score", "verdict", "label"];
        let mut widths = header.map(str::len);
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, row: [&str; 5]| {
            let text = row
                .iter()
                .zip(widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ");
            let _ = writeln!(out, "{}", text.trim_end());
        };
        line(&mut out, header);
        for row in &cells {
            line(&mut out, row.each_ref().map(String::as_str));
        }
        for r in self.per_patch.iter().filter(|r| r.error.is_some()) {
            let _ = writeln!(out, "error {}: {}", r.id, r.error.as_deref().unwrap_or_default());
        }
        let _ = writeln!(out, "threshold {}", self.threshold);
        if let Some(m) = &self.metrics {
            let c = m.confusion;
            let _ = writeln!(out, "TP {}  FN {}  FP {}  TN {}", c.tp, c.fn_, c.fp, c.tn);
            let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".into(), |x| format!("{:.2}", round2(x)));
            let _ = writeln!(
                out,
                "recall {}  precision {}  accuracy {}  f1 {}  auc {}",
                fmt(m.recall),
                fmt(m.precision),
                fmt(m.accuracy),
                fmt(m.f1),
                fmt(m.auc)
            );
        }
        if self.errors > 0 {
            let _ = writeln!(out, "{} record(s) failed", self.errors);
        }
        out
    }

    /// Rows by stage, for summaries.
    pub fn stage_counts(&self) -> BTreeMap<&'static str, usize> {
        let mut out = BTreeMap::new();
        for r in &self.per_patch {
            *out.entry(r.stage.map_or("error", Stage::name)).or_insert(0) += 1;
        }
        out
    }
}

/// Result of training on a labeled manifest.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: PredictorModel,
    pub train_ids: Vec<String>,
    pub validation: Vec<PatchRecord>,
}

/// Splits the labeled records, fits the model on the training part and
/// returns the held-out records. Unlabeled records are ignored.
pub fn train_from_manifest(
    manifest: &Manifest,
    source: &FeatureSource,
    config: &TrainingConfig,
    train_fraction: Option<f64>,
) -> Result<TrainOutcome> {
    let labeled: Vec<&PatchRecord> = manifest.records.iter().filter(|r| r.label.is_some()).collect();
    let (train, validation) = match train_fraction {
        Some(f) => split_train_valid(&labeled, f, config.seed)?,
        None => (labeled, Vec::new()),
    };
    let mut train = train;
    train.sort_by(|a, b| a.id.cmp(&b.id));
    let rows: Vec<Vec<f64>> = train
        .par_iter()
        .map(|r| source.features(manifest, r).map(|f| f.combined))
        .collect::<Result<_>>()?;
    let labels: Vec<Correctness> = train.iter().filter_map(|r| r.label).collect();
    let k = source.dim().unwrap_or(DEFAULT_DIM);
    let model = lr_train(&rows, &labels, k, config)?;
    let mut validation: Vec<PatchRecord> = validation.into_iter().cloned().collect();
    validation.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(TrainOutcome {
        model,
        train_ids: train.iter().map(|r| r.id.clone()).collect(),
        validation,
    })
}

/// Scores every labeled record with the model and returns the tuned
/// threshold with the (score, label) pairs it was derived from.
pub fn tune_on_manifest(
    manifest: &Manifest,
    source: &FeatureSource,
    model: &PredictorModel,
) -> Result<(f64, Vec<(f64, Correctness)>)> {
    let scores: Vec<(f64, Correctness)> = manifest
        .records
        .par_iter()
        .filter_map(|r| r.label.map(|l| (r, l)))
        .map(|(r, l)| {
            let f = source.features(manifest, r)?;
            Ok((lr_predict(model, &f.combined)?, l))
        })
        .collect::<Result<_>>()?;
    Ok((tune_threshold(&scores)?, scores))
}

/// Rewrites relative paths in `records` against `base` so they resolve
/// from anywhere.
pub fn absolutize(records: &mut [PatchRecord], base: &Path) {
    let fix = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    };
    for r in records {
        fix(&mut r.code_paths.buggy);
        fix(&mut r.code_paths.patched);
        fix(&mut r.code_paths.groundtruth);
        if let Some(c) = r.coverage_path.as_mut() {
            fix(c);
        }
        if let Some(inv) = r.invariant_paths.as_mut() {
            for files in [&mut inv.buggy, &mut inv.groundtruth, &mut inv.patched] {
                files.passing.as_mut().map(fix);
                files.failing.as_mut().map(fix);
            }
        }
    }
}
