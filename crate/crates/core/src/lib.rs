//! Topic taxonomy discovery with box embeddings.
//!
//! Words and topics live as axis-aligned boxes in `[0, 1]^D`. A variational
//! autoencoder reconstructs bag-of-words documents from per-level topic
//! proportions, upper-level topics are mined by recursive affinity
//! propagation over topic boxes, and the resulting taxonomy is scored with
//! NPMI coherence, topic uniqueness and cross-level coherence.
//!
//! Module map:
//!
//! - [`boxalg`]: smoothed box volume, intersection, union and affinities
//! - [`diffcore`]: a small reverse-mode tape over dense matrices plus Adam
//! - [`corpus`]: tokenization, vocabulary, TF-IDF, co-occurrence, splits
//! - [`model`]: encoder, topic-word distributions, decoder, checkpoints
//! - [`cluster`]: affinity propagation and recursive upper-level mining
//! - [`train`]: losses, schedules and the epoch loop
//! - [`eval`]: intrinsic taxonomy metrics
//! - [`synth`]: planted-hierarchy corpus generator

pub mod boxalg;
pub mod cluster;
pub mod corpus;
pub mod diffcore;
pub mod error;
pub mod eval;
pub mod model;
pub mod synth;
pub mod train;

pub use boxalg::{BoxAlgebraConfig, BoxEmbed};
pub use cluster::{ClusterConfig, PreferenceMode};
pub use corpus::{Corpus, CorpusConfig, Split, Vocab};
pub use error::{Error, Result};
pub use eval::MetricReport;
pub use model::{Checkpoint, EncodeResult, ModelState, Taxonomy};
pub use train::{FitResult, TrainConfig};
