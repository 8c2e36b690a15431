//! Seed-prompt reconstruction: repeatedly extend a document with windowed
//! beam search, turning end-of-sequence predictions into chapter breaks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logit::DecodingConfig;
use crate::provider::{generate_step, Provider, Tokenizer};

pub const DEFAULT_CHAPTER_WORDS: [&str; 17] = [
    "One", "Two", "Three", "Four", "Five", "Six", "Seven", "Eight", "Nine", "Ten", "Eleven", "Twelve", "Thirteen",
    "Fourteen", "Fifteen", "Sixteen", "Seventeen",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionConfig {
    pub max_context_tokens: usize,
    pub step_tokens: usize,
    pub beams: usize,
    pub length_penalty: f64,
    pub max_story_tokens: usize,
    /// Spelled-out numerals; entry `i` names chapter `i + 1`.
    pub chapter_words: Vec<String>,
    pub missed_chapter_gap: usize,
    pub decoding: DecodingConfig,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        Self {
            max_context_tokens: 3000,
            step_tokens: 50,
            beams: 8,
            length_penalty: 1.2,
            max_story_tokens: 113_000,
            chapter_words: DEFAULT_CHAPTER_WORDS.iter().map(|s| s.to_string()).collect(),
            missed_chapter_gap: 10_000,
            decoding: DecodingConfig {
                temperature: 1.0,
                top_k: None,
                prepend_bos: true,
            },
        }
    }
}

impl ReconstructionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.step_tokens < 1 || self.step_tokens >= self.max_context_tokens {
            return Err(Error::invalid(format!(
                "step_tokens ({}) must be in [1, max_context_tokens = {})",
                self.step_tokens, self.max_context_tokens
            )));
        }
        if self.beams < 1 {
            return Err(Error::invalid("beams must be >= 1"));
        }
        self.decoding.validate()
    }

    /// Prompt length once the window is full.
    pub fn window_tokens(&self) -> usize {
        self.max_context_tokens - self.step_tokens
    }

    /// Text inserted in place of an EOS that opens chapter `chapter`.
    pub fn chapter_header(&self, chapter: usize) -> String {
        match chapter.checked_sub(1).and_then(|i| self.chapter_words.get(i)) {
            Some(word) => format!("\n\nChapter {word}\n").to_uppercase(),
            None => "\n".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChapterState {
    pub chapter_count: usize,
    pub tokens_since_last_eos: usize,
}

impl Default for ChapterState {
    fn default() -> Self {
        Self {
            chapter_count: 1,
            tokens_since_last_eos: 0,
        }
    }
}

/// Replaces EOS tokens in a freshly generated chunk with a chapter header.
///
/// The chunk length is added to `tokens_since_last_eos` first; if the chunk
/// has an EOS and that count reached `missed_chapter_gap`, a chapter break is
/// assumed to have been missed and the counter advances one extra chapter.
pub fn handle_eos(
    chunk: Vec<u32>,
    state: &mut ChapterState,
    eos: Option<u32>,
    cfg: &ReconstructionConfig,
    tokenizer: &dyn Tokenizer,
) -> Result<Vec<u32>> {
    state.tokens_since_last_eos += chunk.len();
    let Some(eos) = eos.filter(|e| chunk.contains(e)) else {
        return Ok(chunk);
    };
    if state.tokens_since_last_eos >= cfg.missed_chapter_gap {
        log::warn!(
            "{} tokens since last EOS; assuming a missed chapter break",
            state.tokens_since_last_eos
        );
        state.chapter_count += 1;
    }
    let mut out: Vec<u32> = chunk.into_iter().filter(|&t| t != eos).collect();
    state.chapter_count += 1;
    out.extend(tokenizer.tokenize(&cfg.chapter_header(state.chapter_count))?);
    state.tokens_since_last_eos = 0;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub generation: usize,
    pub prompt_text: String,
    pub generated_text: String,
    pub total_generated_tokens: usize,
    /// Token offset of the prompt window inside the generated sequence.
    #[serde(skip)]
    pub prompt_start: usize,
    #[serde(skip)]
    pub prompt_len: usize,
}

/// Everything needed to continue an interrupted reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionState {
    pub seed_text: String,
    pub seed_tokens: usize,
    pub generated_ids: Vec<u32>,
    pub chapter: ChapterState,
    pub entries: Vec<LogEntry>,
}

impl ReconstructionState {
    pub fn assembled_text(&self) -> String {
        let mut text = self.seed_text.clone();
        for e in &self.entries {
            text.push_str(&e.generated_text);
        }
        text
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionLog {
    pub entries: Vec<LogEntry>,
    pub generated_ids: Vec<u32>,
    pub seed_tokens: usize,
    pub text: String,
}

/// A failed step; `state` is as of the last completed step.
#[derive(Debug)]
pub struct Interrupted {
    pub source: Error,
    pub state: ReconstructionState,
}

impl std::fmt::Display for Interrupted {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "reconstruction interrupted after {} steps: {}",
            self.state.entries.len(),
            self.source
        )
    }
}

impl std::error::Error for Interrupted {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

pub struct Reconstructor<'a> {
    provider: &'a dyn Provider,
    cfg: ReconstructionConfig,
}

impl<'a> Reconstructor<'a> {
    pub fn new(provider: &'a dyn Provider, cfg: ReconstructionConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { provider, cfg })
    }

    pub fn config(&self) -> &ReconstructionConfig {
        &self.cfg
    }

    pub fn start(&self, seed_text: &str) -> Result<ReconstructionState> {
        if seed_text.is_empty() {
            return Err(Error::EmptyInput("seed text"));
        }
        let mut ids = Vec::new();
        if self.cfg.decoding.prepend_bos {
            ids.extend(self.provider.handle().bos_token);
        }
        ids.extend(self.provider.tokenize(seed_text)?);
        Ok(ReconstructionState {
            seed_text: seed_text.to_string(),
            seed_tokens: ids.len(),
            generated_ids: ids,
            chapter: ChapterState::default(),
            entries: Vec::new(),
        })
    }

    pub fn is_done(&self, state: &ReconstructionState) -> bool {
        state.generated_ids.len() >= self.cfg.max_story_tokens
    }

    /// Generates one chunk and appends it to `state`; the state is untouched on error.
    pub fn step(&self, state: &mut ReconstructionState) -> Result<()> {
        let cfg = &self.cfg;
        let ids = &state.generated_ids;
        let prompt_start = ids.len().saturating_sub(cfg.window_tokens());
        let window = &ids[prompt_start..];

        let chunk = generate_step(
            self.provider,
            window,
            cfg.beams,
            cfg.step_tokens,
            &cfg.decoding,
            cfg.length_penalty,
        )?;
        let mut chapter = state.chapter;
        let chunk = handle_eos(chunk, &mut chapter, self.provider.handle().eos_token, cfg, self.provider)?;
        let prompt_text = self.provider.detokenize(window)?;
        let generated_text = self.provider.detokenize(&chunk)?;
        let prompt_len = window.len();

        state.generated_ids.extend_from_slice(&chunk);
        state.chapter = chapter;
        state.entries.push(LogEntry {
            generation: state.entries.len() + 1,
            prompt_text,
            generated_text,
            total_generated_tokens: state.generated_ids.len(),
            prompt_start,
            prompt_len,
        });
        Ok(())
    }

    /// Runs to completion, calling `on_step` after every chunk (for
    /// checkpointing). An `on_step` failure also interrupts the run.
    pub fn run<F>(&self, mut state: ReconstructionState, mut on_step: F) -> Result<ReconstructionLog, Box<Interrupted>>
    where
        F: FnMut(&ReconstructionState) -> Result<()>,
    {
        while !self.is_done(&state) {
            if let Err(source) = self.step(&mut state).and_then(|_| on_step(&state)) {
                return Err(Box::new(Interrupted { source, state }));
            }
        }
        Ok(ReconstructionLog {
            text: state.assembled_text(),
            entries: state.entries,
            generated_ids: state.generated_ids,
            seed_tokens: state.seed_tokens,
        })
    }
}

/// Reconstructs from `seed_text` until `max_story_tokens` tokens exist.
pub fn reconstruct(seed_text: &str, provider: &dyn Provider, cfg: ReconstructionConfig) -> Result<ReconstructionLog, Box<Interrupted>> {
    let r = Reconstructor::new(provider, cfg).map_err(|source| {
        Box::new(Interrupted {
            source,
            state: empty_state(seed_text),
        })
    })?;
    let state = r.start(seed_text).map_err(|source| {
        Box::new(Interrupted {
            source,
            state: empty_state(seed_text),
        })
    })?;
    r.run(state, |_| Ok(()))
}

fn empty_state(seed_text: &str) -> ReconstructionState {
    ReconstructionState {
        seed_text: seed_text.to_string(),
        seed_tokens: 0,
        generated_ids: Vec::new(),
        chapter: ChapterState::default(),
        entries: Vec::new(),
    }
}
