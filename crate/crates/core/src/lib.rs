//! Distant-supervision span-reasoning pre-training toolkit.
//!
//! The pipeline runs in stages: [`ingest`] a JSONL corpus, build the entity
//! [`pair_index`] and query groups, generate pre-training examples with
//! [`example_gen`], then train and evaluate the small reference encoder in
//! [`neural`] through the extractive QA harness in [`qa`].

pub mod artifact;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod example_gen;
pub mod ingest;
pub mod neural;
pub mod pair_index;
pub mod qa;
pub mod synth;

pub use error::{Error, Result};
