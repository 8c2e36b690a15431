//! Decoding-distribution transforms and exact-suffix sequence probability.
//!
//! Everything here works in log space on sparse [`LogitRow`]s: the top-M raw
//! logits of one position plus the target token's logit, rank and the
//! full-vocabulary log-normaliser. That is enough to renormalise exactly over
//! any top-k with k <= M, and over the full vocabulary when k is unlimited.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The decoding scheme whose extraction probability is being audited.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodingConfig {
    pub temperature: f64,
    /// `None` means no truncation.
    pub top_k: Option<usize>,
    pub prepend_bos: bool,
}

impl Default for DecodingConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            top_k: Some(40),
            prepend_bos: true,
        }
    }
}

impl DecodingConfig {
    pub fn new(temperature: f64, top_k: Option<usize>) -> Result<Self> {
        let cfg = Self {
            temperature,
            top_k,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// T = k = 1.
    pub fn greedy() -> Self {
        Self {
            temperature: 1.0,
            top_k: Some(1),
            prepend_bos: true,
        }
    }

    pub fn with_bos(mut self, prepend_bos: bool) -> Self {
        self.prepend_bos = prepend_bos;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::invalid(format!(
                "temperature must be positive and finite, got {}",
                self.temperature
            )));
        }
        if self.top_k == Some(0) {
            return Err(Error::invalid("top_k must be >= 1"));
        }
        Ok(())
    }
}

/// One position's sparse view of the next-token distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitRow {
    /// Top-M `(token_id, raw_logit)` pairs, logit descending, id ascending on ties.
    pub entries: Vec<(u32, f64)>,
    pub target: u32,
    pub target_logit: f64,
    /// 1-based rank of the target among all vocabulary logits.
    pub target_rank: usize,
    /// `ln Σ exp(logit / T)` over the full vocabulary, at the request temperature.
    pub logsumexp: f64,
}

/// Orders `(token_id, logit)` pairs by logit descending, then id ascending.
pub fn rank_order(a: &(u32, f64), b: &(u32, f64)) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

impl LogitRow {
    /// Builds a row from a dense logit vector over the whole vocabulary.
    pub fn from_dense(logits: &[f64], target: u32, temperature: f64, top_m: usize) -> Result<Self> {
        let t = target as usize;
        if t >= logits.len() {
            return Err(Error::TokenOutOfRange {
                token: target,
                vocab_size: logits.len(),
            });
        }
        let target_logit = logits[t];
        let target_rank = 1 + logits
            .iter()
            .enumerate()
            .filter(|&(i, &l)| l > target_logit || (l == target_logit && i < t))
            .count();
        let mut entries: Vec<(u32, f64)> = logits
            .iter()
            .enumerate()
            .map(|(i, &l)| (i as u32, l))
            .collect();
        let m = top_m.min(entries.len());
        if m == 0 {
            entries.clear();
        } else if m < entries.len() {
            entries.select_nth_unstable_by(m - 1, rank_order);
            entries.truncate(m);
        }
        entries.sort_by(rank_order);
        Ok(Self {
            entries,
            target,
            target_logit,
            target_rank,
            logsumexp: logsumexp(logits.iter().map(|&l| l / temperature)),
        })
    }

    /// Checks ordering, width and target consistency.
    pub fn validate(&self) -> Result<()> {
        if self.target_rank == 0 {
            return Err(Error::Protocol("target_rank must be 1-based".into()));
        }
        if self
            .entries
            .windows(2)
            .any(|w| rank_order(&w[0], &w[1]) != std::cmp::Ordering::Less)
        {
            return Err(Error::Protocol("row entries are not in rank order".into()));
        }
        if self.target_rank <= self.entries.len() {
            let (id, logit) = self.entries[self.target_rank - 1];
            if id != self.target || logit != self.target_logit {
                return Err(Error::Protocol(format!(
                    "target {} at rank {} does not match entry ({id}, {logit})",
                    self.target, self.target_rank
                )));
            }
        }
        Ok(())
    }

    /// Whether the carried entries hold (numerically) all of the mass at `temperature`.
    fn entries_exhaustive(&self, temperature: f64) -> bool {
        let lse = logsumexp(self.entries.iter().map(|&(_, l)| l / temperature));
        (lse - self.logsumexp).abs() <= 1e-9 * self.logsumexp.abs().max(1.0)
    }
}

/// Numerically stable `ln Σ exp(x)`. Empty input gives negative infinity.
pub fn logsumexp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Log-probability of the row's target under `cfg`, or negative infinity when
/// top-k truncation makes it unreachable.
pub fn conditional_token_logprob(row: &LogitRow, cfg: &DecodingConfig) -> Result<f64> {
    let temp = cfg.temperature;
    let k = match cfg.top_k {
        None => return Ok(row.target_logit / temp - row.logsumexp),
        Some(k) => k,
    };
    if row.target_rank > k {
        return Ok(f64::NEG_INFINITY);
    }
    if k > row.entries.len() {
        // A vocabulary narrower than k behaves as unlimited.
        if row.entries_exhaustive(temp) {
            return Ok(row.target_logit / temp - row.logsumexp);
        }
        return Err(Error::InsufficientTopM {
            k,
            m: row.entries.len(),
        });
    }
    let kept = logsumexp(row.entries[..k].iter().map(|&(_, l)| l / temp));
    Ok(row.target_logit / temp - kept)
}

/// Probability of generating an exact suffix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuffixScore {
    pub logprob: f64,
    /// `exp(logprob)`; may underflow to zero while `logprob` stays finite.
    pub prob: f64,
    pub impossible: bool,
    pub per_token_logprobs: Vec<f64>,
}

impl SuffixScore {
    pub fn impossible(per_token_logprobs: Vec<f64>) -> Self {
        Self {
            logprob: f64::NEG_INFINITY,
            prob: 0.0,
            impossible: true,
            per_token_logprobs,
        }
    }

    pub fn from_logprob(logprob: f64, per_token_logprobs: Vec<f64>) -> Self {
        if logprob == f64::NEG_INFINITY {
            Self::impossible(per_token_logprobs)
        } else {
            Self {
                logprob,
                prob: logprob.exp(),
                impossible: false,
                per_token_logprobs,
            }
        }
    }
}

/// Sums per-token conditional log-probabilities; the first unreachable token
/// short-circuits to an impossible score.
pub fn sequence_score(rows: &[LogitRow], cfg: &DecodingConfig) -> Result<SuffixScore> {
    cfg.validate()?;
    let mut total = 0.0;
    let mut per_token = Vec::with_capacity(rows.len());
    for row in rows {
        let lp = conditional_token_logprob(row, cfg)?;
        per_token.push(lp);
        if lp == f64::NEG_INFINITY {
            return Ok(SuffixScore::impossible(per_token));
        }
        total += lp;
    }
    Ok(SuffixScore::from_logprob(total, per_token))
}

/// Greedy (T = k = 1) verbatim match: probability exactly 1 or 0.
pub fn greedy_match_score(rows: &[LogitRow], cfg: &DecodingConfig) -> Result<SuffixScore> {
    if cfg.top_k != Some(1) {
        return Err(Error::invalid("greedy_match_score requires top_k == 1"));
    }
    let mut per_token = Vec::with_capacity(rows.len());
    for row in rows {
        if row.target_rank != 1 {
            per_token.push(f64::NEG_INFINITY);
            return Ok(SuffixScore::impossible(per_token));
        }
        per_token.push(0.0);
    }
    Ok(SuffixScore::from_logprob(0.0, per_token))
}
