//! Speaker-verification back-ends: length normalization, LDA, two-covariance
//! PLDA (with an optional diagonal within-speaker constraint), cosine scoring,
//! detection metrics, the large-margin softmax loss family and a synthetic
//! embedding generator.

pub mod cosine;
pub mod data;
pub mod error;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod plda;
pub mod preprocess;
pub mod synth;

pub use data::{Embedding, EmbeddingArchive, ScoreSet, ScoredTrial, Trial, TrialLabel};
pub use error::{Error, ErrorClass, Result};
pub use metrics::DcfParams;
pub use plda::{EmConfig, PldaModel};
pub use preprocess::{Projection, ScatterPair};
pub use synth::SynthSpec;
