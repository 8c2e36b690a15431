//! Scoring examples against a provider and the per-example audit record.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::analysis::ScoredExample;
use crate::corpus::Example;
use crate::error::{Error, Result};
use crate::logit::{greedy_match_score, sequence_score, DecodingConfig, SuffixScore};
use crate::par;
use crate::provider::{Provider, ScoreRequest};

pub const DEFAULT_TOP_M: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig {
    pub decoding: DecodingConfig,
    pub top_m: usize,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            decoding: DecodingConfig::default(),
            top_m: DEFAULT_TOP_M,
        }
    }
}

/// Scores under the audited decoding scheme and under greedy decoding, both
/// read off the same forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleScores {
    pub sampling: SuffixScore,
    pub greedy: SuffixScore,
}

pub fn score_example(provider: &dyn Provider, example: &Example, cfg: &ScoringConfig) -> Result<ExampleScores> {
    cfg.decoding.validate()?;
    if let Some(k) = cfg.decoding.top_k {
        if k > cfg.top_m {
            return Err(Error::InsufficientTopM { k, m: cfg.top_m });
        }
    }
    let mut tokens = Vec::with_capacity(example.tokens.len() + 1);
    let mut prefix_len = example.prefix_len;
    if cfg.decoding.prepend_bos {
        if let Some(bos) = provider.handle().bos_token {
            tokens.push(bos);
            prefix_len += 1;
        }
    }
    tokens.extend_from_slice(&example.tokens);
    let req = ScoreRequest::for_split(tokens, prefix_len, cfg.decoding.temperature, cfg.top_m);
    let rows = provider.score_positions(&req)?;
    Ok(ExampleScores {
        sampling: sequence_score(&rows, &cfg.decoding)?,
        greedy: greedy_match_score(&rows, &DecodingConfig::greedy())?,
    })
}

/// Scores a batch in parallel; results are in input order.
pub fn score_examples(provider: &dyn Provider, examples: &[Example], cfg: &ScoringConfig) -> Result<Vec<ExampleScores>> {
    par::try_map(examples, |ex| score_example(provider, ex, cfg))
}

fn ser_logprob<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

fn de_logprob<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
}

/// One line of an audit JSONL file. An impossible suffix has `"logprob": null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub doc_id: String,
    pub char_start: usize,
    pub char_end: usize,
    pub suffix_char_start: usize,
    pub prefix_len: usize,
    pub suffix_len: usize,
    #[serde(serialize_with = "ser_logprob", deserialize_with = "de_logprob")]
    pub logprob: f64,
    pub prob: f64,
    pub impossible: bool,
    pub greedy_prob: f64,
    pub config: String,
}

impl AuditRecord {
    pub fn new(example: &Example, scores: &ExampleScores, fingerprint: &str) -> Self {
        Self {
            doc_id: example.doc_id.clone(),
            char_start: example.char_start,
            char_end: example.char_end,
            suffix_char_start: example.suffix_char_start,
            prefix_len: example.prefix_len,
            suffix_len: example.suffix_len,
            logprob: scores.sampling.logprob,
            prob: scores.sampling.prob,
            impossible: scores.sampling.impossible,
            greedy_prob: scores.greedy.prob,
            config: fingerprint.to_string(),
        }
    }

    pub fn scored(&self) -> ScoredExample {
        ScoredExample {
            doc_id: self.doc_id.clone(),
            char_start: self.char_start,
            char_end: self.char_end,
            suffix_char_start: self.suffix_char_start,
            prob: self.prob,
        }
    }
}

/// Parses JSONL audit records. A trailing line without a newline is treated
/// as an interrupted write and ignored; `valid_bytes` is the length of the
/// complete prefix.
pub fn parse_audit(body: &str) -> Result<ParsedAudit> {
    let mut records = Vec::new();
    let mut valid_bytes = 0;
    for line in body.split_inclusive('\n') {
        if !line.ends_with('\n') {
            break;
        }
        let trimmed = line.trim();
        if !trimmed.is_empty() {
            records.push(serde_json::from_str(trimmed)?);
        }
        valid_bytes += line.len();
    }
    Ok(ParsedAudit { records, valid_bytes })
}

#[derive(Debug, Clone)]
pub struct ParsedAudit {
    pub records: Vec<AuditRecord>,
    pub valid_bytes: usize,
}
