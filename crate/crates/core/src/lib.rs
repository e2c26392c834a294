//! Patch correctness assessment.
//!
//! A semantic stage compares inferred program invariants of the buggy,
//! ground-truth and patched programs; a syntactic stage scores embedding
//! distances with a logistic model. [`pipeline`] combines the two.

pub mod equivalence;
pub mod error;
pub mod eval;
pub mod invariant;
pub mod label;
pub mod pipeline;
pub mod selection;
pub mod semantic;
pub mod syntactic;

pub use error::{Error, Result};
pub use label::Correctness;
