//! Patch manifests, dataset handling and the metric suite.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::invariant::{MethodId, Partition, Variant};
use crate::label::Correctness;
use crate::syntactic::Role;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodePaths {
    pub buggy: PathBuf,
    pub patched: PathBuf,
    pub groundtruth: PathBuf,
}

impl CodePaths {
    pub fn get(&self, role: Role) -> &Path {
        match role {
            Role::Buggy => &self.buggy,
            Role::Patched => &self.patched,
            Role::GroundTruth => &self.groundtruth,
        }
    }
}

/// Invariant dumps for one program variant.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantFiles {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passing: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failing: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantPaths {
    #[serde(default)]
    pub buggy: VariantFiles,
    #[serde(default)]
    pub groundtruth: VariantFiles,
    #[serde(default)]
    pub patched: VariantFiles,
}

impl InvariantPaths {
    pub fn get(&self, variant: Variant, partition: Partition) -> Option<&Path> {
        let files = match variant {
            Variant::Buggy => &self.buggy,
            Variant::GroundTruth => &self.groundtruth,
            Variant::Patched => &self.patched,
        };
        match partition {
            Partition::PassingTraces => files.passing.as_deref(),
            Partition::FailingTraces => files.failing.as_deref(),
        }
    }
}

/// Fragment ids in the embedding file; default `<id>:<role>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingIds {
    pub buggy: String,
    pub patched: String,
    pub groundtruth: String,
}

impl EmbeddingIds {
    pub fn get(&self, role: Role) -> &str {
        match role {
            Role::Buggy => &self.buggy,
            Role::Patched => &self.patched,
            Role::GroundTruth => &self.groundtruth,
        }
    }
}

/// One assessment unit. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchRecord {
    pub id: String,
    pub project: String,
    pub bug_id: String,
    pub tool: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Correctness>,
    pub code_paths: CodePaths,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invariant_paths: Option<InvariantPaths>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_ids: Option<EmbeddingIds>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage_path: Option<PathBuf>,
    /// Methods changed by the developer fix, as `Class.method(params)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modified_methods: Option<Vec<String>>,
}

impl PatchRecord {
    pub fn embedding_id(&self, role: Role) -> String {
        match &self.embedding_ids {
            Some(ids) => ids.get(role).to_string(),
            None => crate::syntactic::fragment_id(&self.id, role),
        }
    }

    pub fn modified_method_set(&self) -> Result<BTreeSet<MethodId>> {
        let mut out = BTreeSet::new();
        for m in self.modified_methods.iter().flatten() {
            let id = MethodId::parse(m).ok_or_else(|| {
                Error::InvalidConfig(format!("record `{}`: bad method name `{m}`", self.id))
            })?;
            out.insert(id);
        }
        Ok(out)
    }
}

/// A JSON array of [`PatchRecord`]s plus the directory paths resolve against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub base_dir: PathBuf,
    pub records: Vec<PatchRecord>,
}

impl Manifest {
    /// Rejects duplicate ids.
    pub fn new(base_dir: impl Into<PathBuf>, records: Vec<PatchRecord>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for r in &records {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::DuplicateId(r.id.clone()));
            }
        }
        Ok(Manifest {
            base_dir: base_dir.into(),
            records,
        })
    }

    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let records: Vec<PatchRecord> =
            serde_json::from_str(text).map_err(|e| Error::json("manifest", e))?;
        Self::new(base_dir, records)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, base)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.records).expect("manifest serialization is infallible")
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Overfitting is the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fn_: u64, fp: u64, tn: u64) -> Self {
        ConfusionMatrix { tp, fn_, fp, tn }
    }

    pub fn record(&mut self, predicted: Correctness, actual: Correctness) {
        use Correctness::*;
        match (predicted, actual) {
            (Overfitting, Overfitting) => self.tp += 1,
            (Correct, Overfitting) => self.fn_ += 1,
            (Overfitting, Correct) => self.fp += 1,
            (Correct, Correct) => self.tn += 1,
        }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Correctness, Correctness)>) -> Self {
        let mut m = ConfusionMatrix::default();
        for (p, a) in pairs {
            m.record(p, a);
        }
        m
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.fp + self.tn
    }
}

/// Metrics with undefined values (zero denominators) left absent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub confusion: ConfusionMatrix,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
}

impl MetricsReport {
    /// Looks a metric up by name; absent values are `UndefinedMetric`.
    pub fn metric(&self, name: &'static str) -> Result<f64> {
        let v = match name {
            "recall" => self.recall,
            "precision" => self.precision,
            "accuracy" => self.accuracy,
            "f1" => self.f1,
            "auc" => self.auc,
            _ => return Err(Error::InvalidConfig(format!("unknown metric `{name}`"))),
        };
        v.ok_or(Error::UndefinedMetric(name))
    }

    /// All values rounded half-up to 2 decimals.
    pub fn rounded(&self) -> MetricsReport {
        let r = |v: Option<f64>| v.map(round2);
        MetricsReport {
            confusion: self.confusion,
            recall: r(self.recall),
            precision: r(self.precision),
            accuracy: r(self.accuracy),
            f1: r(self.f1),
            auc: r(self.auc),
        }
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn compute_metrics(confusion: ConfusionMatrix) -> MetricsReport {
    let ConfusionMatrix { tp, fn_, fp, tn } = confusion;
    let recall = ratio(tp, tp + fn_);
    let precision = ratio(tp, tp + fp);
    let accuracy = ratio(tp + tn, confusion.total());
    let f1 = match (recall, precision) {
        (Some(r), Some(p)) if r + p > 0.0 => Some(2.0 * r * p / (r + p)),
        _ => None,
    };
    MetricsReport {
        confusion,
        recall,
        precision,
        accuracy,
        f1,
        auc: None,
    }
}

/// Half-up rounding to 2 decimals. Values within 1e-9 of a half are
/// treated as the half, absorbing binary representation error.
pub fn round2(x: f64) -> f64 {
    ((x * 100.0) + 0.5 + 1e-9).floor() / 100.0
}

/// Mann–Whitney AUC with overfitting as the positive class: the fraction
/// of (overfitting, correct) pairs where the overfitting patch scores
/// higher, ties counting one half.
pub fn compute_auc(scores: &[(f64, Correctness)]) -> Result<f64> {
    let n_pos = scores.iter().filter(|(_, l)| l.is_overfitting()).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClassData);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].0.total_cmp(&scores[b].0));

    // ascending ranks from 1, ties share their average rank
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]].0 == scores[order[i]].0 {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        let pos_in_group = order[i..=j]
            .iter()
            .filter(|&&k| scores[k].1.is_overfitting())
            .count();
        rank_sum_pos += avg * pos_in_group as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// Code tokens with comments and whitespace removed. String and character
/// literals stay single tokens.
pub fn normalized_tokens(code: &str) -> Vec<String> {
    let chars: Vec<char> = code.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let next = chars.get(i + 1).copied();
        if c.is_whitespace() {
            i += 1;
        } else if c == '/' && next == Some('/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
        } else if c == '/' && next == Some('*') {
            i += 2;
            while i < chars.len() && !(chars[i] == '*' && chars.get(i + 1) == Some(&'/')) {
                i += 1;
            }
            i = (i + 2).min(chars.len());
        } else if c == '"' || c == '\'' {
            let start = i;
            i += 1;
            while i < chars.len() && chars[i] != c {
                if chars[i] == '\\' {
                    i += 1;
                }
                i += 1;
            }
            i = (i + 1).min(chars.len());
            out.push(chars[start..i].iter().collect());
        } else if c.is_alphanumeric() || c == '_' || c == '$' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '$') {
                i += 1;
            }
            out.push(chars[start..i].iter().collect());
        } else {
            out.push(c.to_string());
            i += 1;
        }
    }
    out
}

fn patched_tokens(manifest: &Manifest, record: &PatchRecord) -> Result<Vec<String>> {
    let path = manifest.resolve(&record.code_paths.patched);
    let text = std::fs::read_to_string(&path).map_err(|_| Error::MissingCodeFile {
        id: record.id.clone(),
        path,
    })?;
    Ok(normalized_tokens(&text))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DedupOutcome {
    pub kept: Vec<PatchRecord>,
    pub removed: Vec<String>,
}

/// Drops training records whose patched code matches an evaluation
/// record's after comment and whitespace normalization.
pub fn dedup_against_eval(train: &Manifest, eval: &Manifest) -> Result<DedupOutcome> {
    let mut eval_tokens = BTreeSet::new();
    for r in &eval.records {
        eval_tokens.insert(patched_tokens(eval, r)?);
    }
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for r in &train.records {
        if eval_tokens.contains(&patched_tokens(train, r)?) {
            removed.push(r.id.clone());
        } else {
            kept.push(r.clone());
        }
    }
    Ok(DedupOutcome { kept, removed })
}

/// Seeded shuffle, then the first `floor(n * fraction)` items train.
/// Both halves are kept non-empty.
pub fn split_train_valid<T: Clone>(records: &[T], fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "split fraction must be in (0, 1), got {fraction}"
        )));
    }
    let n = records.len();
    if n < 2 {
        return Err(Error::TooFewRecords(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((n as f64 * fraction + 1e-9).floor() as usize).clamp(1, n - 1);
    let pick = |idx: &[usize]| idx.iter().map(|&i| records[i].clone()).collect::<Vec<_>>();
    Ok((pick(&order[..n_train]), pick(&order[n_train..])))
}

/// The highest score among correct validation patches: the tightest
/// threshold that misclassifies none of them.
pub fn tune_threshold(validation_scores: &[(f64, Correctness)]) -> Result<f64> {
    validation_scores
        .iter()
        .filter(|(_, l)| *l == Correctness::Correct)
        .map(|(s, _)| *s)
        .max_by(f64::total_cmp)
        .ok_or(Error::NoCorrectPatches)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub metrics: MetricsReport,
}

/// Evaluates `confusion_at` on thresholds `0, 1/steps, ..., 1`.
pub fn sweep_thresholds(steps: usize, confusion_at: impl Fn(f64) -> ConfusionMatrix) -> Vec<SweepRow> {
    let steps = steps.max(1);
    (0..=steps)
        .map(|i| {
            let threshold = i as f64 / steps as f64;
            SweepRow {
                threshold,
                metrics: compute_metrics(confusion_at(threshold)),
            }
        })
        .collect()
}

/// `threshold,recall,precision,accuracy,f1`; undefined metrics are empty.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    let mut out = String::from("threshold,recall,precision,accuracy,f1\n");
    for r in rows {
        let m = &r.metrics;
        let _ = writeln!(
            out,
            "{:.3},{},{},{},{}",
            r.threshold,
            cell(m.recall),
            cell(m.precision),
            cell(m.accuracy),
            cell(m.f1)
        );
    }
    out
}

/// Counts records per label, for summaries.
pub fn label_counts(records: &[PatchRecord]) -> BTreeMap<&'static str, usize> {
    let mut out = BTreeMap::new();
    for r in records {
        let key = match r.label {
            Some(Correctness::Correct) => "correct",
            Some(Correctness::Overfitting) => "overfitting",
            None => "unlabeled",
        };
        *out.entry(key).or_insert(0) += 1;
    }
    out
}
