//! Language-model backends: tokenization plus per-position logit scoring.
//!
//! [`ReferenceProvider`] is a deterministic in-process n-gram model used as a
//! test oracle and for offline runs. [`HttpProvider`] talks to an inference
//! server over the JSON protocol in [`wire`]; [`server`] exposes any provider
//! over that same protocol.

mod beam;
#[cfg(feature = "http")]
mod http;
mod reference;
#[cfg(feature = "http")]
pub mod server;
mod tokenizer;
pub mod wire;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logit::LogitRow;
use crate::par;

pub use beam::{generate_step, BeamConfig};
#[cfg(feature = "http")]
pub use http::HttpProvider;
pub use reference::{NGramModel, ReferenceProvider, DEFAULT_ALPHA, DEFAULT_ORDER};
pub use tokenizer::{PieceTokenizer, BYTE_VOCAB};

/// Vocabulary facts a caller needs to build requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerHandle {
    pub vocab_size: usize,
    pub bos_token: Option<u32>,
    pub eos_token: Option<u32>,
}

impl TokenizerHandle {
    pub fn check_tokens(&self, tokens: &[u32]) -> Result<()> {
        match tokens.iter().find(|&&t| t as usize >= self.vocab_size) {
            Some(&token) => Err(Error::TokenOutOfRange {
                token,
                vocab_size: self.vocab_size,
            }),
            None => Ok(()),
        }
    }
}

/// Scoring request: one forward pass over `tokens`, returning a row per
/// suffix position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub tokens: Vec<u32>,
    /// 1-based index of the first suffix token (prefix length + 1).
    pub suffix_start: usize,
    pub temperature: f64,
    pub top_m: usize,
}

impl ScoreRequest {
    /// Request for a sequence whose first `prefix_len` tokens are the prompt.
    pub fn for_split(tokens: Vec<u32>, prefix_len: usize, temperature: f64, top_m: usize) -> Self {
        Self {
            tokens,
            suffix_start: prefix_len + 1,
            temperature,
            top_m,
        }
    }

    pub fn prefix_len(&self) -> usize {
        self.suffix_start - 1
    }

    pub fn suffix_len(&self) -> usize {
        self.tokens.len() + 1 - self.suffix_start
    }

    pub fn validate(&self) -> Result<()> {
        if self.suffix_start < 1 || self.suffix_start > self.tokens.len() {
            return Err(Error::invalid(format!(
                "suffix_start {} outside [1, {}]",
                self.suffix_start,
                self.tokens.len()
            )));
        }
        if self.top_m < 1 {
            return Err(Error::invalid("top_m must be >= 1"));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::invalid(format!("temperature must be positive, got {}", self.temperature)));
        }
        Ok(())
    }
}

pub trait Tokenizer: Send + Sync {
    fn handle(&self) -> TokenizerHandle;

    fn tokenize(&self, text: &str) -> Result<Vec<u32>>;

    /// Decodes to text, dropping special tokens.
    fn detokenize(&self, tokens: &[u32]) -> Result<String>;
}

pub trait Provider: Tokenizer {
    /// Longest context the backend accepts, if bounded.
    fn max_context(&self) -> Option<usize> {
        None
    }

    /// Row `i` describes the distribution after `tokens[..suffix_start - 1 + i]`
    /// (0-based slice) with target `tokens[suffix_start - 1 + i]`.
    fn score_positions(&self, req: &ScoreRequest) -> Result<Vec<LogitRow>>;

    /// Next-token rows for a batch of contexts. The target in each row is a
    /// placeholder (token 0) and only the entries and normaliser matter.
    fn next_token_rows(&self, contexts: &[Vec<u32>], temperature: f64, top_m: usize) -> Result<Vec<LogitRow>> {
        par::try_map(contexts, |ctx| {
            let mut tokens = ctx.clone();
            tokens.push(0);
            let req = ScoreRequest::for_split(tokens, ctx.len(), temperature, top_m);
            let mut rows = self.score_positions(&req)?;
            rows.pop().ok_or_else(|| Error::Protocol("empty score response".into()))
        })
    }
}

impl<P: Tokenizer + ?Sized> Tokenizer for std::sync::Arc<P> {
    fn handle(&self) -> TokenizerHandle {
        (**self).handle()
    }
    fn tokenize(&self, text: &str) -> Result<Vec<u32>> {
        (**self).tokenize(text)
    }
    fn detokenize(&self, tokens: &[u32]) -> Result<String> {
        (**self).detokenize(tokens)
    }
}

impl<P: Provider + ?Sized> Provider for std::sync::Arc<P> {
    fn max_context(&self) -> Option<usize> {
        (**self).max_context()
    }
    fn score_positions(&self, req: &ScoreRequest) -> Result<Vec<LogitRow>> {
        (**self).score_positions(req)
    }
    fn next_token_rows(&self, contexts: &[Vec<u32>], temperature: f64, top_m: usize) -> Result<Vec<LogitRow>> {
        (**self).next_token_rows(contexts, temperature, top_m)
    }
}
