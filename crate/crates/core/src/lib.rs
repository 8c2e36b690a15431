//! Memorization auditing for autoregressive language models.
//!
//! The crate measures how likely a model is to reproduce a training text
//! verbatim under a given decoding scheme, turns those per-example
//! probabilities into extraction rates and document coverage, and can
//! regenerate a heavily memorized document from a short seed prompt.
//!
//! * [`corpus`]: documents and sliding-window / random example sampling
//! * [`logit`]: temperature and top-k transforms, exact suffix probability
//! * [`metric`]: (n, p) conversions and extraction-rate reports
//! * [`provider`]: tokenizer + scoring backends (reference n-gram, HTTP)
//! * [`analysis`]: memorized spans, coverage, heatmaps
//! * [`reconstruct`]: seed-prompt reconstruction with beam search
//! * [`compare`]: TF-IDF cosine and gestalt similarity
//! * [`audit`]: scoring examples and the JSONL audit record
//!
//! Batch work runs on rayon when the `parallel` feature is enabled (the
//! default) and sequentially otherwise.

pub mod analysis;
pub mod audit;
pub mod compare;
pub mod corpus;
mod error;
pub mod logit;
pub mod metric;
pub mod par;
pub mod provider;
pub mod reconstruct;

pub use error::{Error, Result};
