//! Subjectivity-detection toolkit.
//!
//! The numerical pipeline behind a three-branch sentence classifier:
//! contrastive pair targets over sentence embeddings, PCA reduction, an
//! elastic-net logistic regression trained with SAGA, a dual-stage few-shot
//! learner built on a linear embedding adapter, and a majority-vote ensemble
//! that also accepts predictions produced outside this crate.
//!
//! Sentence encoders live outside the crate; their output enters through the
//! SEMB1 embedding format in [`embedstore`].

pub mod corpus;
pub mod embedstore;
pub mod ensemble;
pub mod error;
pub mod fewshot;
pub mod glmnet;
pub mod io;
pub mod metrics;
pub mod pairgen;
pub mod pca;
pub mod pipeline;

#[cfg(test)]
#[path = "../tests/common/oracles.rs"]
mod test_oracles;

pub use nalgebra;

pub use corpus::{Label, LabeledDataset, Sentence, Split};
pub use embedstore::EmbeddingMatrix;
pub use error::{Error, Result};
