//! JSON bodies of the HTTP scoring protocol.
//!
//! ```text
//! POST /v1/tokenize    {"text"}                                   -> {"tokens"}
//! POST /v1/detokenize  {"tokens"}                                 -> {"text"}
//! POST /v1/score       {"tokens","suffix_start","temperature","top_m"} -> {"rows"}
//! GET  /v1/info                                                   -> {"vocab_size","bos_token","eos_token","max_context"}
//! ```
//!
//! Failures are non-2xx responses carrying `{"error": string}`; a context
//! overflow additionally carries `"max_context"`.

use serde::{Deserialize, Serialize};

use crate::logit::LogitRow;

pub use super::ScoreRequest;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenizeRequest {
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenizeResponse {
    pub tokens: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetokenizeRequest {
    pub tokens: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetokenizeResponse {
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub rows: Vec<LogitRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InfoResponse {
    pub vocab_size: usize,
    #[serde(default)]
    pub bos_token: Option<u32>,
    #[serde(default)]
    pub eos_token: Option<u32>,
    #[serde(default)]
    pub max_context: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub error: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_context: Option<usize>,
}
