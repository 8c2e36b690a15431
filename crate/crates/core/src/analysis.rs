//! Memorized-span merging, whole-document coverage and per-character heatmaps.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::{BookDocument, Example};
use crate::error::{Error, Result};
use crate::logit::SuffixScore;
use crate::metric::ThresholdMap;
use crate::par;

/// Location of an example in its document together with its extraction probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredExample {
    pub doc_id: String,
    pub char_start: usize,
    pub char_end: usize,
    pub suffix_char_start: usize,
    pub prob: f64,
}

impl ScoredExample {
    pub fn new(example: &Example, score: &SuffixScore) -> Self {
        Self {
            doc_id: example.doc_id.clone(),
            char_start: example.char_start,
            char_end: example.char_end,
            suffix_char_start: example.suffix_char_start,
            prob: score.prob,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemorizedSpan {
    pub doc_id: String,
    pub char_start: usize,
    pub char_end: usize,
    pub max_prob: f64,
    pub example_count: usize,
}

impl MemorizedSpan {
    pub fn len(&self) -> usize {
        self.char_end - self.char_start
    }

    pub fn is_empty(&self) -> bool {
        self.char_end == self.char_start
    }
}

/// Unions the character intervals of examples with `prob >= threshold`.
/// Overlapping and touching intervals merge. Output is sorted by document and
/// start, pairwise disjoint, and independent of input order.
pub fn merge_spans(scores: &[ScoredExample], threshold: f64) -> Vec<MemorizedSpan> {
    let mut kept: Vec<&ScoredExample> = scores
        .iter()
        .filter(|s| s.prob >= threshold && s.char_start < s.char_end)
        .collect();
    kept.sort_by(|a, b| {
        (a.doc_id.as_str(), a.char_start, a.char_end).cmp(&(b.doc_id.as_str(), b.char_start, b.char_end))
    });

    let mut spans: Vec<MemorizedSpan> = Vec::new();
    for s in kept {
        match spans.last_mut() {
            Some(cur) if cur.doc_id == s.doc_id && s.char_start <= cur.char_end => {
                cur.char_end = cur.char_end.max(s.char_end);
                cur.max_prob = cur.max_prob.max(s.prob);
                cur.example_count += 1;
            }
            _ => spans.push(MemorizedSpan {
                doc_id: s.doc_id.clone(),
                char_start: s.char_start,
                char_end: s.char_end,
                max_prob: s.prob,
                example_count: 1,
            }),
        }
    }
    spans
}

/// Fraction of `doc`'s characters inside `spans` (which must belong to `doc`).
pub fn coverage(spans: &[MemorizedSpan], doc: &BookDocument) -> Result<f64> {
    let n = doc.char_len();
    let mut sorted: Vec<&MemorizedSpan> = spans.iter().collect();
    sorted.sort_by_key(|s| s.char_start);
    let mut covered = 0usize;
    let mut prev_end = 0usize;
    for s in sorted {
        if s.doc_id != doc.doc_id() {
            return Err(Error::invalid(format!(
                "span belongs to {:?}, not {:?}",
                s.doc_id,
                doc.doc_id()
            )));
        }
        if s.char_start > s.char_end || s.char_end > n {
            return Err(Error::SpanOutOfBounds {
                start: s.char_start,
                end: s.char_end,
                char_len: n,
            });
        }
        if s.char_start < prev_end {
            return Err(Error::OverlappingSpans { at: s.char_start });
        }
        covered += s.len();
        prev_end = s.char_end;
    }
    if n == 0 {
        return Ok(0.0);
    }
    Ok(covered as f64 / n as f64)
}

/// Coverage at each threshold; nonincreasing in the threshold.
pub fn coverage_report(scores: &[ScoredExample], doc: &BookDocument, thresholds: &[f64]) -> Result<ThresholdMap> {
    let own: Vec<ScoredExample> = scores
        .iter()
        .filter(|s| s.doc_id == doc.doc_id())
        .map(|s| ScoredExample {
            char_end: s.char_end.min(doc.char_len()),
            ..s.clone()
        })
        .collect();
    let values = par::try_map(thresholds, |&t| coverage(&merge_spans(&own, t), doc))?;
    Ok(ThresholdMap(thresholds.iter().copied().zip(values).collect()))
}

/// Constant-valued run `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatRun {
    pub start: usize,
    pub end: usize,
    pub value: f64,
}

/// Per-character maximum suffix extraction probability, run-length encoded.
/// Runs tile `[0, char_len)` and adjacent runs have different values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapSeries {
    pub doc_id: String,
    pub char_len: usize,
    pub runs: Vec<HeatRun>,
}

impl HeatmapSeries {
    pub fn value_at(&self, pos: usize) -> f64 {
        let i = self.runs.partition_point(|r| r.end <= pos);
        self.runs.get(i).map_or(0.0, |r| r.value)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.char_len);
        for r in &self.runs {
            out.extend(std::iter::repeat_n(r.value, r.end - r.start));
        }
        out
    }

    /// CSV with header `char_pos,max_prob`, one row per run start, and a final
    /// `char_len,0` row marking the end of the document.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "char_pos,max_prob")?;
        for r in &self.runs {
            writeln!(w, "{},{}", r.start, r.value)?;
        }
        writeln!(w, "{},0", self.char_len)
    }

    pub fn read_csv(doc_id: &str, body: &str) -> Result<Self> {
        let mut lines = body.lines();
        if lines.next().map(str::trim) != Some("char_pos,max_prob") {
            return Err(Error::invalid("heatmap CSV must start with char_pos,max_prob"));
        }
        let mut points = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let (pos, val) = line
                .split_once(',')
                .ok_or_else(|| Error::invalid(format!("bad heatmap row {line:?}")))?;
            let pos: usize = pos.trim().parse().map_err(|_| Error::invalid(format!("bad position {pos:?}")))?;
            let val: f64 = val.trim().parse().map_err(|_| Error::invalid(format!("bad value {val:?}")))?;
            points.push((pos, val));
        }
        let (char_len, _) = *points.last().ok_or_else(|| Error::invalid("empty heatmap"))?;
        let runs = points
            .windows(2)
            .map(|w| HeatRun {
                start: w[0].0,
                end: w[1].0,
                value: w[0].1,
            })
            .collect();
        Ok(Self {
            doc_id: doc_id.to_string(),
            char_len,
            runs,
        })
    }
}

/// For every character, the highest `prob` among examples whose suffix
/// covers it (zero where none does).
pub fn heatmap(scores: &[ScoredExample], doc: &BookDocument) -> HeatmapSeries {
    let n = doc.char_len();
    // (position, is_start, prob); ends sort before starts at the same position.
    let mut events: Vec<(usize, bool, f64)> = Vec::new();
    for s in scores.iter().filter(|s| s.doc_id == doc.doc_id()) {
        let (a, b) = (s.suffix_char_start.min(n), s.char_end.min(n));
        if a < b {
            events.push((a, true, s.prob));
            events.push((b, false, s.prob));
        }
    }
    events.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.cmp(&y.1)));

    // Multiset of active probabilities keyed by bit pattern (order-preserving for p >= 0).
    let mut active: BTreeMap<u64, usize> = BTreeMap::new();
    let mut runs: Vec<HeatRun> = Vec::new();
    let mut push = |start: usize, end: usize, value: f64| {
        if start >= end {
            return;
        }
        match runs.last_mut() {
            Some(last) if last.value == value && last.end == start => last.end = end,
            _ => runs.push(HeatRun { start, end, value }),
        }
    };
    let mut cursor = 0usize;
    for (pos, is_start, p) in events {
        let current = active.keys().next_back().map_or(0.0, |&b| f64::from_bits(b));
        push(cursor, pos, current);
        cursor = pos;
        let key = p.max(0.0).to_bits();
        if is_start {
            *active.entry(key).or_insert(0) += 1;
        } else if let Some(c) = active.get_mut(&key) {
            *c -= 1;
            if *c == 0 {
                active.remove(&key);
            }
        }
    }
    push(cursor, n, 0.0);
    HeatmapSeries {
        doc_id: doc.doc_id().to_string(),
        char_len: n,
        runs,
    }
}

/// Raw `(char_start, prob)` points for location plots, in start order.
pub fn location_series(scores: &[ScoredExample], doc_id: &str) -> Vec<(usize, f64)> {
    let mut pts: Vec<(usize, f64)> = scores
        .iter()
        .filter(|s| s.doc_id == doc_id)
        .map(|s| (s.char_start, s.prob))
        .collect();
    pts.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts
}
