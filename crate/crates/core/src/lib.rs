//! SurvReLU: deep ReLU networks for right-censored survival analysis whose
//! activation patterns form an oblique survival tree.
//!
//! The crate is split along the pipeline:
//!
//! - [`data`]: CSV ingestion, z-scoring/one-hot preprocessing, splits and folds
//! - [`stats`]: Kaplan-Meier, log-rank, concordance indices, bootstrap intervals
//! - [`network`]: the split layers, composite head, forward/backward passes, SGD
//! - [`losses`]: Cox partial likelihood and the discrete-time likelihood/ranking loss
//! - [`tree`]: pattern matrices, tree reconstruction, log-rank pruning, export
//! - [`simulate`]: linear and Gaussian exponential-Cox benchmark generators
//! - [`baseline`]: a linear Cox model used as a sanity reference

pub mod baseline;
pub mod data;
mod error;
pub mod losses;
pub mod network;
pub mod simulate;
pub mod stats;
pub mod tree;

pub use error::{Error, Result};
