//! Acoustic baseline for dementia detection from spontaneous speech.
//!
//! Pipeline: loudness normalization → 1 s framing → 88 frame-level features →
//! active data representation (SOM occupancy + age + gender) → kernel naive
//! Bayes (AD/CN) or RBF ε-SVR (MMSE), with propensity-score cohort matching
//! and the evaluation metrics alongside.

// `!(x > 0.0)` is the NaN-rejecting form used throughout input validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adr;
pub mod audio;
pub mod config;
pub mod eval;
pub mod features;
pub mod manifest;
pub mod matching;
pub mod models;
pub mod persist;
pub mod pipeline;
pub mod synth;
