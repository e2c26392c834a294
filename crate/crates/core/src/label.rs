use std::fmt;

use serde::{Deserialize, Serialize};

/// Patch correctness, used both for ground-truth labels and verdicts.
/// `Overfitting` is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Correctness {
    Correct,
    Overfitting,
}

impl Correctness {
    pub fn is_overfitting(self) -> bool {
        self == Correctness::Overfitting
    }

    /// 1.0 for overfitting, 0.0 for correct.
    pub fn target(self) -> f64 {
        match self {
            Correctness::Correct => 0.0,
            Correctness::Overfitting => 1.0,
        }
    }
}

impl fmt::Display for Correctness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Correctness::Correct => "correct",
            Correctness::Overfitting => "overfitting",
        })
    }
}
