//! Hint-guided in-context learning for end-to-end task-oriented dialog.
//!
//! The pipeline predicts compact hints about the expected agent response
//! (entity types, dialog closure, response size), uses them to re-rank densely
//! retrieved training exemplars, renders rule-augmented prompts, queries a
//! chat-completion model and scores the generations with Entity F1, BLEU and
//! alignment statistics.
//!
//! Modules follow the pipeline order:
//!
//! - [`corpus`]: canonical dialog data, per-turn samples, entity matching.
//! - [`hints`]: gold hint derivation and hint predictors.
//! - [`retrieval`]: embeddings, exact inner-product search, hint re-ranking.
//! - [`prompt`]: knowledge-base serialization, rules and prompt rendering.
//! - [`llm`]: completion backends, response cache and output parsing.
//! - [`eval`]: metrics and reports.
//! - [`runner`]: run configuration, ablations, subsampling, end-to-end runs.
//! - [`synthetic`]: seeded toy corpora for tests and demos.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod hashing;
pub mod hints;
pub mod http;
pub mod llm;
pub mod parallel;
pub mod prompt;
pub mod retrieval;
pub mod runner;
pub mod synthetic;

pub use error::{Error, ErrorKind, Result};
