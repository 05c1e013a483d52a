//! Influence functions for linear-chain CRF sequence taggers.
//!
//! The crate is organised bottom-up:
//!
//! * [`crf`]: exact log-space inference, segment-conditional and marginal
//!   likelihoods, their gradients and Hessian-vector products.
//! * [`features`]: embedding lookup plus syntactic indicator features.
//! * [`trainer`]: composite objectives and an L-BFGS minimizer.
//! * [`influence`]: instance, segment and token influence, factored
//!   gradient caches, and segment nearest neighbours.
//! * [`oracle`]: ground-truth influence by retraining.
//! * [`noise`]: corruption injection, misannotation scorers and retrieval
//!   curves.
//! * [`corpus`], [`model_file`], [`report`]: file formats used by the CLI.

pub(crate) mod binio;
pub mod corpus;
pub mod crf;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod features;
pub mod influence;
pub mod model_file;
pub mod noise;
pub mod oracle;
pub mod report;
pub mod stats;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
