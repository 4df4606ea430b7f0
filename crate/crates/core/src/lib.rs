//! Claim-aware outcome prediction for court judgments.
//!
//! A case's facts are mapped to one of three outcomes per article: violated
//! (`POS`), claimed but not violated (`NEG`), or never claimed (`NULL`).
//! The crate covers claim extraction from raw judgments, corpus loading,
//! hashed bag-of-words encoders, four model architectures, training with
//! grid search, evaluation and significance testing, and a synthetic corpus
//! generator for controlled experiments.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is on and falls back to plain iteration otherwise.

pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod extract;
pub mod kv;
pub mod model;
pub mod par;
pub mod synth;
pub mod train;

pub use corpus::{ArticleId, ArticleIndex, ArticleSet, Case, LabelMatrix, OutcomeLabel, Split, SplitSet};
pub use error::{Error, ErrorKind, Result};
pub use model::{Architecture, Model};
