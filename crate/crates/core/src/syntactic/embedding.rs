//! Code embeddings and the JSON Lines exchange format.
//!
//! One object per line: `{"id": "<patchId>:<role>", "dim": k, "vector": [...]}`
//! with role one of `buggy`, `patched`, `groundtruth`. Extra fields written
//! by producers (e.g. a truncation flag) are accepted and ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Embedding width of the pretrained code encoder.
pub const DEFAULT_DIM: usize = 768;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub id: String,
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    /// Rejects empty vectors and non-finite entries.
    pub fn new(id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if values.is_empty() {
            return Err(Error::InvalidEmbedding {
                id,
                reason: "empty vector".into(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidEmbedding {
                id,
                reason: format!("non-finite value at index {i}"),
            });
        }
        Ok(EmbeddingVector { id, values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Fragment role within a patch triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Buggy,
    Patched,
    #[serde(rename = "groundtruth")]
    GroundTruth,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Buggy, Role::Patched, Role::GroundTruth];

    pub fn name(self) -> &'static str {
        match self {
            Role::Buggy => "buggy",
            Role::Patched => "patched",
            Role::GroundTruth => "groundtruth",
        }
    }
}

/// `<patchId>:<role>`.
pub fn fragment_id(patch_id: &str, role: Role) -> String {
    format!("{patch_id}:{}", role.name())
}

#[derive(Debug, Serialize, Deserialize)]
struct ExchangeRecord {
    id: String,
    dim: usize,
    vector: Vec<f64>,
}

/// Embeddings keyed by fragment id, all of one dimension.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingStore {
    dim: Option<usize>,
    vectors: BTreeMap<String, EmbeddingVector>,
}

impl EmbeddingStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingVector> {
        self.vectors.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &EmbeddingVector> {
        self.vectors.values()
    }

    /// Adds a vector; returns the replaced vector's id if `id` was present.
    pub fn insert(&mut self, v: EmbeddingVector) -> Result<Option<String>> {
        match self.dim {
            Some(d) if d != v.dim() => {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: v.dim(),
                })
            }
            _ => self.dim = Some(v.dim()),
        }
        let id = v.id.clone();
        Ok(self.vectors.insert(id.clone(), v).map(|_| id))
    }

    /// Parses a JSON Lines exchange file. Returns the store and any
    /// warnings (duplicate ids, zero vectors).
    pub fn from_jsonl(text: &str) -> Result<(Self, Vec<String>)> {
        let mut store = EmbeddingStore::new();
        let mut warnings = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: ExchangeRecord = serde_json::from_str(line)
                .map_err(|e| Error::json(format!("embedding line {}", i + 1), e))?;
            if rec.dim != rec.vector.len() {
                return Err(Error::InvalidEmbedding {
                    id: rec.id,
                    reason: format!("dim {} but {} values", rec.dim, rec.vector.len()),
                });
            }
            let v = EmbeddingVector::new(rec.id, rec.vector)?;
            if v.norm() == 0.0 {
                warnings.push(format!("line {}: `{}` is the zero vector", i + 1, v.id));
            }
            if let Some(dup) = store.insert(v)? {
                warnings.push(format!("line {}: duplicate id `{dup}` replaces earlier entry", i + 1));
            }
        }
        Ok((store, warnings))
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<String>)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for v in self.vectors.values() {
            let rec = ExchangeRecord {
                id: v.id.clone(),
                dim: v.dim(),
                vector: v.values.clone(),
            };
            let _ = writeln!(
                out,
                "{}",
                serde_json::to_string(&rec).expect("finite floats always serialize")
            );
        }
        out
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Tokens are maximal runs of alphanumeric characters.
pub fn code_tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
}

/// Signed token-hash counts before normalization.
pub fn hashing_counts(code_text: &str, k: usize) -> Vec<f64> {
    assert!(k > 0, "embedding dimension must be positive");
    let mut counts = vec![0.0; k];
    for tok in code_tokens(code_text) {
        let h = fnv1a(tok.as_bytes());
        let bucket = (h % k as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        counts[bucket] += sign;
    }
    counts
}

/// Deterministic bag-of-tokens embedding with signed feature hashing,
/// L2-normalized. Text without tokens maps to the zero vector.
pub fn hashing_embed(id: impl Into<String>, code_text: &str, k: usize) -> EmbeddingVector {
    let mut values = hashing_counts(code_text, k);
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in &mut values {
            *v /= norm;
        }
    }
    EmbeddingVector {
        id: id.into(),
        values,
    }
}
