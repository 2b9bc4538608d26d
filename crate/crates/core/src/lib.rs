//! Instance selection for distantly supervised relation data.
//!
//! A selection agent walks each bag of sentences and keeps or discards every
//! instance; a bag-level softmax classifier scores the cleaned bag and that
//! score is the agent's reward. Domain rules, when an instance matches one,
//! tilt the agent's sampling toward keeping it.
//!
//! Modules, bottom up: [`rules`] (pattern matching), [`encoder`] (features and
//! agent state), [`classifier`], [`policy`], [`trainer`], [`datagen`]
//! (synthetic corpora), [`eval`] (curves, selection quality, run reports) and
//! [`cli`].

pub mod classifier;
pub mod cli;
pub mod datagen;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod policy;
pub mod rules;
pub mod trainer;

pub use error::{Error, Result};
