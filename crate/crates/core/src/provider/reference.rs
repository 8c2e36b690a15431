use std::collections::HashMap;

use super::{PieceTokenizer, Provider, ScoreRequest, Tokenizer, TokenizerHandle};
use crate::error::{Error, Result};
use crate::logit::LogitRow;

pub const DEFAULT_ORDER: usize = 3;
pub const DEFAULT_ALPHA: f64 = 1e-6;

#[derive(Debug, Clone, Default)]
struct ContextRow {
    /// Weight shared by every token.
    base: f64,
    /// Additional weight per token, sorted by id.
    extra: Vec<(u32, f64)>,
    extra_total: f64,
}

/// Add-α smoothed n-gram model over token ids.
///
/// The next-token distribution depends on the last `order - 1` context tokens
/// (fewer at the start of a sequence). Contexts never seen in training are
/// uniform.
#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    vocab_size: usize,
    alpha: f64,
    table: HashMap<Vec<u32>, ContextRow>,
}

impl NGramModel {
    pub fn new(order: usize, vocab_size: usize, alpha: f64) -> Result<Self> {
        if order < 1 {
            return Err(Error::invalid("n-gram order must be >= 1"));
        }
        if vocab_size < 1 {
            return Err(Error::invalid("vocabulary must be non-empty"));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid(format!("smoothing alpha must be positive, got {alpha}")));
        }
        Ok(Self {
            order,
            vocab_size,
            alpha,
            table: HashMap::new(),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn context_count(&self) -> usize {
        self.table.len()
    }

    fn key<'a>(&self, context: &'a [u32]) -> &'a [u32] {
        &context[context.len().saturating_sub(self.order - 1)..]
    }

    /// Adds every next-token event in `sequence` to the counts.
    pub fn observe(&mut self, sequence: &[u32]) -> Result<()> {
        if let Some(&token) = sequence.iter().find(|&&t| t as usize >= self.vocab_size) {
            return Err(Error::TokenOutOfRange {
                token,
                vocab_size: self.vocab_size,
            });
        }
        for i in 0..sequence.len() {
            let key = self.key(&sequence[..i]).to_vec();
            let alpha = self.alpha;
            let row = self.table.entry(key).or_insert_with(|| ContextRow {
                base: alpha,
                ..ContextRow::default()
            });
            let target = sequence[i];
            match row.extra.binary_search_by_key(&target, |&(t, _)| t) {
                Ok(pos) => row.extra[pos].1 += 1.0,
                Err(pos) => row.extra.insert(pos, (target, 1.0)),
            }
            row.extra_total += 1.0;
        }
        Ok(())
    }

    /// Replaces the distribution after `context` with explicit positive weights.
    pub fn set_weights(&mut self, context: &[u32], weights: &[f64]) -> Result<()> {
        if context.len() > self.order - 1 {
            return Err(Error::invalid(format!(
                "context of {} tokens is longer than order - 1 = {}",
                context.len(),
                self.order - 1
            )));
        }
        if weights.len() != self.vocab_size {
            return Err(Error::invalid(format!(
                "expected {} weights, got {}",
                self.vocab_size,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::invalid("weights must be positive and finite"));
        }
        let extra: Vec<(u32, f64)> = weights.iter().enumerate().map(|(i, &w)| (i as u32, w)).collect();
        let extra_total = weights.iter().sum();
        self.table.insert(
            context.to_vec(),
            ContextRow {
                base: 0.0,
                extra,
                extra_total,
            },
        );
        Ok(())
    }

    /// Dense next-token distribution after `context`.
    pub fn next_token_probs(&self, context: &[u32]) -> Vec<f64> {
        let v = self.vocab_size;
        match self.table.get(self.key(context)) {
            None => vec![1.0 / v as f64; v],
            Some(row) => {
                let norm = row.base * v as f64 + row.extra_total;
                let mut probs = vec![row.base / norm; v];
                for &(t, w) in &row.extra {
                    probs[t as usize] = (row.base + w) / norm;
                }
                probs
            }
        }
    }

    /// Raw logits: natural log of the next-token probabilities.
    pub fn next_token_logits(&self, context: &[u32]) -> Vec<f64> {
        self.next_token_probs(context).into_iter().map(f64::ln).collect()
    }
}

/// In-process provider backed by an [`NGramModel`].
#[derive(Debug, Clone)]
pub struct ReferenceProvider {
    model: NGramModel,
    tokenizer: Option<PieceTokenizer>,
    bos: Option<u32>,
    eos: Option<u32>,
    max_context: Option<usize>,
}

impl ReferenceProvider {
    pub fn new(model: NGramModel, tokenizer: PieceTokenizer) -> Result<Self> {
        if model.vocab_size() < tokenizer.vocab_size() {
            return Err(Error::invalid(format!(
                "model vocabulary {} is smaller than tokenizer vocabulary {}",
                model.vocab_size(),
                tokenizer.vocab_size()
            )));
        }
        Ok(Self {
            model,
            tokenizer: Some(tokenizer),
            bos: Some(PieceTokenizer::BOS),
            eos: Some(PieceTokenizer::EOS),
            max_context: None,
        })
    }

    /// A provider over raw token ids; tokenize/detokenize are unavailable.
    pub fn scoring_only(model: NGramModel) -> Self {
        Self {
            model,
            tokenizer: None,
            bos: None,
            eos: None,
            max_context: None,
        }
    }

    /// Trains an order-`order` model that has seen each text once, framed by
    /// BOS/EOS as requested.
    pub fn train(tokenizer: PieceTokenizer, texts: &[&str], order: usize, alpha: f64, with_bos: bool, with_eos: bool) -> Result<Self> {
        let mut model = NGramModel::new(order, tokenizer.vocab_size(), alpha)?;
        for text in texts {
            let mut seq = Vec::new();
            if with_bos {
                seq.push(PieceTokenizer::BOS);
            }
            seq.extend(tokenizer.encode(text));
            if with_eos {
                seq.push(PieceTokenizer::EOS);
            }
            model.observe(&seq)?;
        }
        Self::new(model, tokenizer)
    }

    pub fn with_specials(mut self, bos: Option<u32>, eos: Option<u32>) -> Self {
        self.bos = bos;
        self.eos = eos;
        self
    }

    pub fn with_max_context(mut self, limit: usize) -> Self {
        self.max_context = Some(limit);
        self
    }

    pub fn model(&self) -> &NGramModel {
        &self.model
    }

    pub fn tokenizer(&self) -> Option<&PieceTokenizer> {
        self.tokenizer.as_ref()
    }

    fn require_tokenizer(&self) -> Result<&PieceTokenizer> {
        self.tokenizer
            .as_ref()
            .ok_or_else(|| Error::invalid("this reference provider has no tokenizer"))
    }
}

impl Tokenizer for ReferenceProvider {
    fn handle(&self) -> TokenizerHandle {
        TokenizerHandle {
            vocab_size: self.model.vocab_size(),
            bos_token: self.bos,
            eos_token: self.eos,
        }
    }

    fn tokenize(&self, text: &str) -> Result<Vec<u32>> {
        Ok(self.require_tokenizer()?.encode(text))
    }

    fn detokenize(&self, tokens: &[u32]) -> Result<String> {
        self.require_tokenizer()?.decode(tokens)
    }
}

impl Provider for ReferenceProvider {
    fn max_context(&self) -> Option<usize> {
        self.max_context
    }

    fn score_positions(&self, req: &ScoreRequest) -> Result<Vec<LogitRow>> {
        req.validate()?;
        self.handle().check_tokens(&req.tokens)?;
        if let Some(limit) = self.max_context {
            if req.tokens.len() > limit {
                return Err(Error::ContextTooLong {
                    len: req.tokens.len(),
                    limit,
                });
            }
        }
        (req.prefix_len()..req.tokens.len())
            .map(|i| {
                let logits = self.model.next_token_logits(&req.tokens[..i]);
                LogitRow::from_dense(&logits, req.tokens[i], req.temperature, req.top_m)
            })
            .collect()
    }
}
