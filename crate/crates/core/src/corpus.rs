//! Documents and the fixed-length token examples drawn from them.

use std::path::Path;

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::provider::Tokenizer;

/// A document indexed by Unicode scalar values.
#[derive(Debug, Clone)]
pub struct BookDocument {
    doc_id: String,
    text: String,
    /// Byte offset of every char boundary, including the end of the text.
    boundaries: Vec<usize>,
}

impl BookDocument {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        let doc_id = doc_id.into();
        if doc_id.is_empty() {
            return Err(Error::invalid("doc_id must be non-empty"));
        }
        let text = text.into();
        let mut boundaries: Vec<usize> = text.char_indices().map(|(i, _)| i).collect();
        boundaries.push(text.len());
        Ok(Self {
            doc_id,
            text,
            boundaries,
        })
    }

    pub fn doc_id(&self) -> &str {
        &self.doc_id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn char_len(&self) -> usize {
        self.boundaries.len() - 1
    }

    /// Characters `[start, end)`, clamped to the document.
    pub fn slice_chars(&self, start: usize, end: usize) -> &str {
        let n = self.char_len();
        let (start, end) = (start.min(n), end.min(n));
        &self.text[self.boundaries[start]..self.boundaries[end.max(start)]]
    }

    pub fn char_at(&self, pos: usize) -> Option<char> {
        self.slice_chars(pos, pos + 1).chars().next()
    }
}

/// One scoring unit: `tokens[..prefix_len]` is the prompt, the rest the
/// target suffix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub doc_id: String,
    pub char_start: usize,
    /// One past the last character covered by the example's tokens.
    pub char_end: usize,
    /// First character covered by the suffix tokens.
    pub suffix_char_start: usize,
    pub tokens: Vec<u32>,
    pub prefix_len: usize,
    pub suffix_len: usize,
}

impl Example {
    pub fn prefix(&self) -> &[u32] {
        &self.tokens[..self.prefix_len]
    }

    pub fn suffix(&self) -> &[u32] {
        &self.tokens[self.prefix_len..]
    }
}

/// Example geometry shared by both sampling strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleShape {
    /// Characters tokenized per candidate; only the first `example_tokens` tokens are kept.
    pub chunk_chars: usize,
    pub example_tokens: usize,
    pub prefix_tokens: usize,
}

impl Default for ExampleShape {
    fn default() -> Self {
        Self {
            chunk_chars: 800,
            example_tokens: 100,
            prefix_tokens: 50,
        }
    }
}

impl ExampleShape {
    pub fn validate(&self) -> Result<()> {
        if self.chunk_chars < 1 {
            return Err(Error::invalid("chunk_chars must be >= 1"));
        }
        if self.prefix_tokens < 1 {
            return Err(Error::invalid("prefix_tokens must be >= 1"));
        }
        if self.prefix_tokens >= self.example_tokens {
            return Err(Error::invalid(format!(
                "prefix_tokens ({}) must be smaller than example_tokens ({})",
                self.prefix_tokens, self.example_tokens
            )));
        }
        Ok(())
    }
}

/// Tokenizes the chunk starting at `start`; `None` when it is too short.
pub fn example_at(doc: &BookDocument, tokenizer: &dyn Tokenizer, start: usize, shape: &ExampleShape) -> Result<Option<Example>> {
    let at = |e: Error| Error::AtOffset {
        doc_id: doc.doc_id().to_string(),
        offset: start,
        source: Box::new(e),
    };
    let chunk_end = (start + shape.chunk_chars).min(doc.char_len());
    if start >= chunk_end {
        return Ok(None);
    }
    let chunk = doc.slice_chars(start, chunk_end);
    let mut tokens = tokenizer.tokenize(chunk).map_err(at)?;
    if tokens.len() < shape.example_tokens {
        return Ok(None);
    }
    tokens.truncate(shape.example_tokens);
    let chunk_chars = chunk_end - start;
    let all_chars = tokenizer.detokenize(&tokens).map_err(at)?.chars().count().clamp(1, chunk_chars);
    let prefix_chars = tokenizer
        .detokenize(&tokens[..shape.prefix_tokens])
        .map_err(at)?
        .chars()
        .count()
        .min(all_chars);
    Ok(Some(Example {
        doc_id: doc.doc_id().to_string(),
        char_start: start,
        char_end: start + all_chars,
        suffix_char_start: start + prefix_chars,
        tokens,
        prefix_len: shape.prefix_tokens,
        suffix_len: shape.example_tokens - shape.prefix_tokens,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub stride_chars: usize,
    pub shape: ExampleShape,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            stride_chars: 10,
            shape: ExampleShape::default(),
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stride_chars < 1 {
            return Err(Error::invalid("stride_chars must be >= 1"));
        }
        self.shape.validate()
    }

    /// Candidate start offsets `0, stride, 2*stride, ...` below `char_len`.
    pub fn offsets(&self, char_len: usize) -> impl Iterator<Item = usize> {
        (0..char_len).step_by(self.stride_chars.max(1))
    }
}

/// Lazily slides a window over a document, one example per stride.
pub struct SlidingWindows<'a> {
    doc: &'a BookDocument,
    tokenizer: &'a dyn Tokenizer,
    cfg: WindowConfig,
    next: usize,
    attempted: usize,
    skipped: usize,
}

impl SlidingWindows<'_> {
    pub fn attempted(&self) -> usize {
        self.attempted
    }

    /// Offsets whose chunk tokenized to fewer than `example_tokens` tokens.
    pub fn skipped(&self) -> usize {
        self.skipped
    }
}

impl Iterator for SlidingWindows<'_> {
    type Item = Result<Example>;

    fn next(&mut self) -> Option<Self::Item> {
        while self.next < self.doc.char_len() {
            let start = self.next;
            self.next += self.cfg.stride_chars;
            self.attempted += 1;
            match example_at(self.doc, self.tokenizer, start, &self.cfg.shape) {
                Ok(Some(ex)) => return Some(Ok(ex)),
                Ok(None) => self.skipped += 1,
                Err(e) => {
                    self.next = self.doc.char_len();
                    return Some(Err(e));
                }
            }
        }
        None
    }
}

pub fn slide_windows<'a>(doc: &'a BookDocument, tokenizer: &'a dyn Tokenizer, cfg: WindowConfig) -> Result<SlidingWindows<'a>> {
    cfg.validate()?;
    Ok(SlidingWindows {
        doc,
        tokenizer,
        cfg,
        next: 0,
        attempted: 0,
        skipped: 0,
    })
}

#[derive(Debug, Clone, Default)]
pub struct WindowBatch {
    pub examples: Vec<Example>,
    pub attempted: usize,
    pub skipped: usize,
}

/// Builds the examples for the given window offsets in parallel, in offset order.
pub fn windows_at(doc: &BookDocument, tokenizer: &dyn Tokenizer, offsets: &[usize], shape: &ExampleShape) -> Result<WindowBatch> {
    shape.validate()?;
    let results = par::try_map(offsets, |&s| example_at(doc, tokenizer, s, shape))?;
    let attempted = results.len();
    let examples: Vec<Example> = results.into_iter().flatten().collect();
    Ok(WindowBatch {
        skipped: attempted - examples.len(),
        attempted,
        examples,
    })
}

/// All sliding-window examples of a document, tokenized in parallel.
pub fn slide_windows_par(doc: &BookDocument, tokenizer: &dyn Tokenizer, cfg: WindowConfig) -> Result<WindowBatch> {
    cfg.validate()?;
    let offsets: Vec<usize> = cfg.offsets(doc.char_len()).collect();
    windows_at(doc, tokenizer, &offsets, &cfg.shape)
}

#[derive(Debug, Clone, Default)]
pub struct RandomSample {
    pub examples: Vec<Example>,
    /// Documents that could not host `per_doc` examples, with the count drawn.
    pub shortfalls: Vec<(String, usize)>,
}

/// Draws `n_docs` documents without replacement and, from each, up to
/// `per_doc` non-overlapping examples whose first character is a space.
pub fn sample_random_examples(
    corpus: &[BookDocument],
    tokenizer: &dyn Tokenizer,
    n_docs: usize,
    per_doc: usize,
    shape: &ExampleShape,
    rng_seed: u64,
) -> Result<RandomSample> {
    shape.validate()?;
    if n_docs > corpus.len() {
        return Err(Error::CorpusTooSmall {
            requested: n_docs,
            available: corpus.len(),
        });
    }
    if per_doc == 0 || n_docs == 0 {
        return Ok(RandomSample::default());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let picks: Vec<(usize, u64)> = index::sample(&mut rng, corpus.len(), n_docs)
        .into_iter()
        .map(|i| (i, rng.next_u64()))
        .collect();

    let per_doc_results = par::try_map(&picks, |&(i, seed)| {
        sample_within(&corpus[i], tokenizer, per_doc, shape, seed)
    })?;

    let mut out = RandomSample::default();
    for ((i, _), examples) in picks.iter().zip(per_doc_results) {
        if examples.len() < per_doc {
            out.shortfalls.push((corpus[*i].doc_id().to_string(), examples.len()));
        }
        out.examples.extend(examples);
    }
    Ok(out)
}

fn sample_within(doc: &BookDocument, tokenizer: &dyn Tokenizer, per_doc: usize, shape: &ExampleShape, seed: u64) -> Result<Vec<Example>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut candidates: Vec<usize> = doc
        .text()
        .chars()
        .enumerate()
        .filter(|&(_, c)| c == ' ')
        .map(|(i, _)| i)
        .collect();
    candidates.shuffle(&mut rng);

    let mut taken: Vec<Example> = Vec::with_capacity(per_doc);
    let overlaps = |s: usize, e: usize, taken: &[Example]| taken.iter().any(|t| s < t.char_end && t.char_start < e);
    for start in candidates {
        if taken.len() == per_doc {
            break;
        }
        if overlaps(start, start + 1, &taken) {
            continue;
        }
        if let Some(ex) = example_at(doc, tokenizer, start, shape)? {
            if !overlaps(ex.char_start, ex.char_end, &taken) {
                taken.push(ex);
            }
        }
    }
    taken.sort_by_key(|e| e.char_start);
    Ok(taken)
}

/// Reads a manifest of `path<TAB>doc_id` lines (the id defaults to the file
/// stem). Relative paths resolve against the manifest's directory; blank lines
/// and `#` comments are skipped.
pub fn load_manifest(path: &Path) -> Result<Vec<BookDocument>> {
    let body = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut docs = Vec::new();
    for (lineno, line) in body.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (file, id) = match line.split_once('\t') {
            Some((f, id)) => (f.trim(), Some(id.trim())),
            None => match line.rsplit_once(char::is_whitespace) {
                Some((f, id)) => (f.trim(), Some(id.trim())),
                None => (line, None),
            },
        };
        let file_path = base.join(file);
        let doc_id = match id.filter(|s| !s.is_empty()) {
            Some(id) => id.to_string(),
            None => file_path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .ok_or_else(|| Error::invalid(format!("manifest line {}: no doc id", lineno + 1)))?,
        };
        let text = std::fs::read_to_string(&file_path).map_err(|e| {
            std::io::Error::new(e.kind(), format!("{}: {e}", file_path.display()))
        })?;
        docs.push(BookDocument::new(doc_id, text)?);
    }
    Ok(docs)
}
