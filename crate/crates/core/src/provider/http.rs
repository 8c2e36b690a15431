use std::time::Duration;

use reqwest::blocking::{Client, Response};
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::wire::{
    DetokenizeRequest, DetokenizeResponse, ErrorResponse, InfoResponse, ScoreResponse, TokenizeRequest,
    TokenizeResponse,
};
use super::{Provider, ScoreRequest, Tokenizer, TokenizerHandle};
use crate::error::{Error, Result};
use crate::logit::LogitRow;

const EXCERPT_CHARS: usize = 200;

/// Client for an inference server speaking the JSON protocol in
/// [`wire`](super::wire). Every `score_positions` call is one round trip.
#[derive(Debug, Clone)]
pub struct HttpProvider {
    base: String,
    client: Client,
    info: InfoResponse,
}

impl HttpProvider {
    /// Connects and fetches vocabulary metadata from `GET /v1/info`.
    pub fn connect(base_url: &str) -> Result<Self> {
        let client = Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(transport)?;
        let base = base_url.trim_end_matches('/').to_string();
        let resp = client.get(format!("{base}/v1/info")).send().map_err(transport)?;
        let info: InfoResponse = decode(resp)?;
        Ok(Self { base, client, info })
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R> {
        let resp = self
            .client
            .post(format!("{}{path}", self.base))
            .json(body)
            .send()
            .map_err(transport)?;
        decode(resp)
    }
}

fn transport(e: reqwest::Error) -> Error {
    Error::Backend {
        status: e.status().map(|s| s.as_u16()),
        message: e.to_string(),
    }
}

fn decode<R: DeserializeOwned>(resp: Response) -> Result<R> {
    let status = resp.status();
    let body = resp.text().map_err(transport)?;
    if !status.is_success() {
        let parsed: Option<ErrorResponse> = serde_json::from_str(&body).ok();
        if let Some(ErrorResponse {
            max_context: Some(limit),
            ..
        }) = parsed
        {
            // the request length is filled in by the caller
            return Err(Error::ContextTooLong { len: 0, limit });
        }
        let message = match parsed {
            Some(err) => err.error,
            None => body.chars().take(EXCERPT_CHARS).collect(),
        };
        return Err(Error::Backend {
            status: Some(status.as_u16()),
            message,
        });
    }
    serde_json::from_str(&body).map_err(|e| {
        let excerpt: String = body.chars().take(EXCERPT_CHARS).collect();
        Error::Protocol(format!("{e}; body starts {excerpt:?}"))
    })
}

impl Tokenizer for HttpProvider {
    fn handle(&self) -> TokenizerHandle {
        TokenizerHandle {
            vocab_size: self.info.vocab_size,
            bos_token: self.info.bos_token,
            eos_token: self.info.eos_token,
        }
    }

    fn tokenize(&self, text: &str) -> Result<Vec<u32>> {
        let resp: TokenizeResponse = self.post("/v1/tokenize", &TokenizeRequest { text: text.into() })?;
        Ok(resp.tokens)
    }

    fn detokenize(&self, tokens: &[u32]) -> Result<String> {
        let resp: DetokenizeResponse = self.post(
            "/v1/detokenize",
            &DetokenizeRequest {
                tokens: tokens.to_vec(),
            },
        )?;
        Ok(resp.text)
    }
}

impl Provider for HttpProvider {
    fn max_context(&self) -> Option<usize> {
        self.info.max_context
    }

    fn score_positions(&self, req: &ScoreRequest) -> Result<Vec<LogitRow>> {
        req.validate()?;
        if let Some(limit) = self.info.max_context {
            if req.tokens.len() > limit {
                return Err(Error::ContextTooLong {
                    len: req.tokens.len(),
                    limit,
                });
            }
        }
        let resp: ScoreResponse = self.post("/v1/score", req).map_err(|e| match e {
            Error::ContextTooLong { limit, .. } => Error::ContextTooLong {
                len: req.tokens.len(),
                limit,
            },
            other => other,
        })?;
        if resp.rows.len() != req.suffix_len() {
            return Err(Error::Protocol(format!(
                "expected {} rows, got {}",
                req.suffix_len(),
                resp.rows.len()
            )));
        }
        for (i, row) in resp.rows.iter().enumerate() {
            row.validate()?;
            let expected = req.tokens[req.prefix_len() + i];
            if row.target != expected {
                return Err(Error::Protocol(format!(
                    "row {i} targets token {} but the request has {expected}",
                    row.target
                )));
            }
        }
        Ok(resp.rows)
    }
}
