//! Syntactic stage: embedding distances scored by logistic regression.

pub mod embedding;
pub mod features;
pub mod logistic;

pub use embedding::{
    code_tokens, fragment_id, hashing_counts, hashing_embed, EmbeddingStore, EmbeddingVector, Role,
    DEFAULT_DIM,
};
pub use features::{combined_width, distance_pair, feature_vector, pair_width, DistanceFeatures, PairDistance};
pub use logistic::{
    classify_threshold, logistic_loss, loss_and_gradient, lr_predict, lr_train, lr_train_traced,
    sigmoid, PredictorModel, Standardization, TrainingConfig, DEFAULT_THRESHOLD,
};
