//! Distance features between fragment embeddings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::embedding::EmbeddingVector;

/// Width of one pairwise block for embedding dimension `k`.
pub fn pair_width(k: usize) -> usize {
    2 * k + 2
}

/// Width of the combined feature vector for embedding dimension `k`.
pub fn combined_width(k: usize) -> usize {
    2 * pair_width(k)
}

/// `[a-b (k) | a*b (k) | euclidean | cosine]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDistance {
    pub values: Vec<f64>,
    /// One side had zero norm; cosine was set to 0.
    pub zero_norm: bool,
}

pub fn distance_pair(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<PairDistance> {
    let k = a.dim();
    if b.dim() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: b.dim(),
        });
    }
    let mut values = Vec::with_capacity(pair_width(k));
    values.extend(a.values.iter().zip(&b.values).map(|(x, y)| x - y));
    values.extend(a.values.iter().zip(&b.values).map(|(x, y)| x * y));
    let euclid = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let dot: f64 = values[k..2 * k].iter().sum();
    let (na, nb) = (a.norm(), b.norm());
    let zero_norm = na == 0.0 || nb == 0.0;
    let cosine = if zero_norm { 0.0 } else { (dot / (na * nb)).clamp(-1.0, 1.0) };
    values.push(euclid);
    values.push(cosine);
    Ok(PairDistance { values, zero_norm })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceFeatures {
    /// D(patched, buggy).
    pub pair_pb: Vec<f64>,
    /// D(patched, ground truth).
    pub pair_pg: Vec<f64>,
    /// `pair_pb ++ pair_pg`.
    pub combined: Vec<f64>,
    pub warnings: Vec<String>,
}

pub fn feature_vector(
    buggy: &EmbeddingVector,
    patched: &EmbeddingVector,
    ground_truth: &EmbeddingVector,
) -> Result<DistanceFeatures> {
    let pb = distance_pair(patched, buggy)?;
    let pg = distance_pair(patched, ground_truth)?;
    let mut warnings = Vec::new();
    for (pair, d, other) in [("patched/buggy", &pb, buggy), ("patched/groundtruth", &pg, ground_truth)] {
        if d.zero_norm {
            warnings.push(format!(
                "{pair}: zero-norm embedding (`{}` or `{}`), cosine set to 0",
                patched.id, other.id
            ));
        }
    }
    let mut combined = Vec::with_capacity(pb.values.len() * 2);
    combined.extend_from_slice(&pb.values);
    combined.extend_from_slice(&pg.values);
    Ok(DistanceFeatures {
        pair_pb: pb.values,
        pair_pg: pg.values,
        combined,
        warnings,
    })
}
