//! Similarity between a reconstruction and its ground truth.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizationRules {
    pub strip_underscores: bool,
    pub unify_ellipses: bool,
}

impl Default for NormalizationRules {
    fn default() -> Self {
        Self {
            strip_underscores: true,
            unify_ellipses: true,
        }
    }
}

/// Removes `_` and rewrites spaced ellipses `. . .` to `...`, to a fixpoint.
pub fn normalize(text: &str, rules: &NormalizationRules) -> String {
    let mut out = if rules.strip_underscores {
        text.replace('_', "")
    } else {
        text.to_string()
    };
    if rules.unify_ellipses {
        while out.contains(". . .") {
            out = out.replace(". . .", "...");
        }
    }
    out
}

pub fn words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Splits after `.`, `!` or `?` when followed by whitespace; sentences are trimmed.
pub fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((_, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            if let Some(&(j, next)) = chars.peek() {
                if next.is_whitespace() {
                    let s = text[start..j].trim();
                    if !s.is_empty() {
                        out.push(s);
                    }
                    start = j;
                }
            }
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

fn term_counts<'a>(words: &[&'a str]) -> HashMap<&'a str, f64> {
    let mut m = HashMap::new();
    for w in words {
        *m.entry(*w).or_insert(0.0) += 1.0;
    }
    m
}

/// Cosine similarity of TF-IDF vectors over the two-document corpus.
///
/// Term frequency is the raw count; IDF is `ln(2 / df)`, plus one when
/// `smooth_idf` is set (otherwise terms shared by both documents get zero
/// weight and near-identical texts collapse to zero vectors).
pub fn tfidf_cosine(a: &str, b: &str, smooth_idf: bool) -> Result<f64> {
    let (wa, wb) = (words(a), words(b));
    if wa.is_empty() || wb.is_empty() {
        return Err(Error::EmptyInput("tfidf_cosine needs words in both texts"));
    }
    let (ta, tb) = (term_counts(&wa), term_counts(&wb));
    let idf = |term: &str| {
        let df = ta.contains_key(term) as u8 + tb.contains_key(term) as u8;
        let base = (2.0 / df as f64).ln();
        if smooth_idf { base + 1.0 } else { base }
    };
    let mut dot = 0.0;
    let mut na = 0.0;
    for (term, &tf) in &ta {
        let w = tf * idf(term);
        na += w * w;
        if let Some(&tfb) = tb.get(term) {
            dot += w * tfb * idf(term);
        }
    }
    let nb: f64 = tb.iter().map(|(term, &tf)| (tf * idf(term)).powi(2)).sum();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(0.0, 1.0))
}

/// A maximal matching block `a[a_start..a_start+len] == b[b_start..b_start+len]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchBlock {
    pub a_start: usize,
    pub b_start: usize,
    pub len: usize,
}

/// Longest common contiguous block of `a[alo..ahi]` and `b[blo..bhi]`;
/// ties go to the earliest start in `a`, then the earliest in `b`.
fn longest_match<T: Eq + Hash>(
    a: &[T],
    b2j: &HashMap<&T, Vec<usize>>,
    (alo, ahi): (usize, usize),
    (blo, bhi): (usize, usize),
) -> MatchBlock {
    let mut best = MatchBlock {
        a_start: alo,
        b_start: blo,
        len: 0,
    };
    // lengths of matches ending at (i - 1, j) for the previous row
    let mut prev: HashMap<usize, usize> = HashMap::new();
    for (i, item) in a.iter().enumerate().take(ahi).skip(alo) {
        let mut cur: HashMap<usize, usize> = HashMap::new();
        if let Some(js) = b2j.get(item) {
            let from = js.partition_point(|&j| j < blo);
            for &j in js[from..].iter().take_while(|&&j| j < bhi) {
                let k = if j > 0 { prev.get(&(j - 1)).copied().unwrap_or(0) } else { 0 } + 1;
                cur.insert(j, k);
                if k > best.len {
                    best = MatchBlock {
                        a_start: i + 1 - k,
                        b_start: j + 1 - k,
                        len: k,
                    };
                }
            }
        }
        prev = cur;
    }
    best
}

/// Ratcliff/Obershelp decomposition: the longest matching block, then
/// recursively the regions to its left and right. Blocks are returned in
/// order of position.
pub fn matching_blocks<T: Eq + Hash>(a: &[T], b: &[T]) -> Vec<MatchBlock> {
    let mut b2j: HashMap<&T, Vec<usize>> = HashMap::new();
    for (j, item) in b.iter().enumerate() {
        b2j.entry(item).or_default().push(j);
    }
    let mut blocks = Vec::new();
    let mut stack = vec![((0, a.len()), (0, b.len()))];
    while let Some(((alo, ahi), (blo, bhi))) = stack.pop() {
        if alo >= ahi || blo >= bhi {
            continue;
        }
        let m = longest_match(a, &b2j, (alo, ahi), (blo, bhi));
        if m.len == 0 {
            continue;
        }
        blocks.push(m);
        stack.push(((alo, m.a_start), (blo, m.b_start)));
        stack.push(((m.a_start + m.len, ahi), (m.b_start + m.len, bhi)));
    }
    blocks.sort_by_key(|m| (m.a_start, m.b_start));
    blocks
}

/// `2 * matched / (len(a) + len(b))`; two empty sequences score 1.
pub fn gestalt_ratio<T: Eq + Hash>(a: &[T], b: &[T]) -> f64 {
    let total = a.len() + b.len();
    if total == 0 {
        return 1.0;
    }
    let matched: usize = matching_blocks(a, b).iter().map(|m| m.len).sum();
    2.0 * matched as f64 / total as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub tfidf_cosine: f64,
    pub word_ratio: f64,
    pub sentence_ratio: f64,
}

/// Normalises both texts, then computes all three similarity scores.
pub fn compare_texts(a: &str, b: &str, rules: &NormalizationRules, smooth_idf: bool) -> Result<Similarity> {
    let (a, b) = (normalize(a, rules), normalize(b, rules));
    Ok(Similarity {
        tfidf_cosine: tfidf_cosine(&a, &b, smooth_idf)?,
        word_ratio: gestalt_ratio(&words(&a), &words(&b)),
        sentence_ratio: gestalt_ratio(&sentences(&a), &sentences(&b)),
    })
}
