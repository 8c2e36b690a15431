use std::cmp::Ordering;

use super::Provider;
use crate::error::{Error, Result};
use crate::logit::DecodingConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamConfig {
    pub width: usize,
    pub new_tokens: usize,
    pub length_penalty: f64,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self {
            width: 8,
            new_tokens: 50,
            length_penalty: 1.2,
        }
    }
}

#[derive(Debug, Clone)]
struct Hypothesis {
    tokens: Vec<u32>,
    logprob: f64,
}

#[derive(Debug)]
struct Candidate {
    logprob: f64,
    token: u32,
    parent: usize,
}

fn candidate_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.logprob
        .total_cmp(&a.logprob)
        .then(a.token.cmp(&b.token))
        .then(a.parent.cmp(&b.parent))
}

/// Deterministic beam search over the provider's next-token distributions.
///
/// Keeps `width` live hypotheses ranked by cumulative log-probability; each
/// expands into its top-`width` continuations. A hypothesis that emits EOS
/// (while ranked inside the top `width` candidates) is finished. When the
/// token budget is spent the live hypotheses are finished too, and the winner
/// is the finished hypothesis with the highest `logprob / len^length_penalty`.
/// Returns only the new tokens; an EOS, if chosen, is the last of them.
///
/// Top-k truncation plays no part in beam search; `cfg.temperature` scales the
/// logits before normalisation.
pub fn generate_step(
    provider: &dyn Provider,
    context: &[u32],
    width: usize,
    new_tokens: usize,
    cfg: &DecodingConfig,
    length_penalty: f64,
) -> Result<Vec<u32>> {
    cfg.validate()?;
    if width < 1 {
        return Err(Error::invalid("beam width must be >= 1"));
    }
    if new_tokens < 1 {
        return Err(Error::invalid("new_tokens must be >= 1"));
    }
    let handle = provider.handle();
    if width > handle.vocab_size {
        return Err(Error::invalid(format!(
            "beam width {width} exceeds vocabulary size {}",
            handle.vocab_size
        )));
    }
    if !length_penalty.is_finite() {
        return Err(Error::invalid("length_penalty must be finite"));
    }
    let eos = handle.eos_token;
    let normalised = |logprob: f64, len: usize| logprob / (len as f64).powf(length_penalty);

    let mut live = vec![Hypothesis {
        tokens: Vec::new(),
        logprob: 0.0,
    }];
    // (normalised score, tokens) in the order they finished.
    let mut finished: Vec<(f64, Vec<u32>)> = Vec::new();

    for step in 0..new_tokens {
        let contexts: Vec<Vec<u32>> = live
            .iter()
            .map(|h| {
                let mut c = Vec::with_capacity(context.len() + h.tokens.len());
                c.extend_from_slice(context);
                c.extend_from_slice(&h.tokens);
                c
            })
            .collect();
        let rows = provider.next_token_rows(&contexts, cfg.temperature, width)?;
        if rows.len() != live.len() {
            return Err(Error::Protocol(format!(
                "expected {} rows, got {}",
                live.len(),
                rows.len()
            )));
        }

        let mut candidates = Vec::with_capacity(live.len() * width);
        for (parent, (hyp, row)) in live.iter().zip(&rows).enumerate() {
            for &(token, logit) in row.entries.iter().take(width) {
                candidates.push(Candidate {
                    logprob: hyp.logprob + logit / cfg.temperature - row.logsumexp,
                    token,
                    parent,
                });
            }
        }
        candidates.sort_by(candidate_order);

        let mut next = Vec::with_capacity(width);
        for (rank, cand) in candidates.iter().enumerate() {
            let extend = || {
                let mut tokens = live[cand.parent].tokens.clone();
                tokens.push(cand.token);
                tokens
            };
            if Some(cand.token) == eos {
                if rank < width {
                    finished.push((normalised(cand.logprob, step + 1), extend()));
                }
                continue;
            }
            next.push(Hypothesis {
                tokens: extend(),
                logprob: cand.logprob,
            });
            if next.len() == width {
                break;
            }
        }
        live = next;
        if live.is_empty() {
            break;
        }
    }
    for hyp in live {
        let len = hyp.tokens.len();
        finished.push((normalised(hyp.logprob, len), hyp.tokens));
    }

    let mut best: Option<&(f64, Vec<u32>)> = None;
    for f in &finished {
        if best.is_none_or(|b| f.0 > b.0) {
            best = Some(f);
        }
    }
    best.map(|(_, tokens)| tokens.clone())
        .ok_or_else(|| Error::Protocol("beam search produced no hypotheses".into()))
}
