use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::Args;
use memext::analysis::{coverage_report, heatmap as heat, location_series, merge_spans, ScoredExample};
use memext::audit::{parse_audit, AuditRecord};
use memext::compare::{compare_texts, matching_blocks, normalize, words, MatchBlock, NormalizationRules};
use memext::corpus::{load_manifest, BookDocument};
use memext::metric::{aggregate_probs, ThresholdMap};
use serde::Serialize;

fn read_records(path: &Path) -> Result<Vec<AuditRecord>> {
    let body = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let parsed = parse_audit(&body).with_context(|| format!("parsing {}", path.display()))?;
    if parsed.valid_bytes < body.len() {
        log::warn!("{}: ignoring a partial trailing record", path.display());
    }
    Ok(parsed.records)
}

fn read_scores(path: &Path) -> Result<Vec<ScoredExample>> {
    Ok(read_records(path)?.iter().map(AuditRecord::scored).collect())
}

fn find_doc(manifest: &Path, doc_id: &str) -> Result<BookDocument> {
    load_manifest(manifest)
        .with_context(|| format!("loading {}", manifest.display()))?
        .into_iter()
        .find(|d| d.doc_id() == doc_id)
        .ok_or_else(|| anyhow!(memext::Error::InvalidArgument(format!("no document {doc_id:?} in manifest"))))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

pub fn rates(paths: &[PathBuf], thresholds: &[f64]) -> Result<()> {
    let mut pairs = Vec::new();
    for p in paths {
        pairs.extend(read_records(p)?.iter().map(|r| (r.prob, r.greedy_prob)));
    }
    print_json(&aggregate_probs(&pairs, thresholds)?)
}

pub fn heatmap(audit: &Path, manifest: &Path, doc_id: &str, points: bool, out: Option<&Path>) -> Result<()> {
    let scores = read_scores(audit)?;
    let mut sink: Box<dyn Write> = match out {
        Some(p) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    };
    if points {
        writeln!(sink, "char_start,prob")?;
        for (pos, p) in location_series(&scores, doc_id) {
            writeln!(sink, "{pos},{p}")?;
        }
    } else {
        let doc = find_doc(manifest, doc_id)?;
        heat(&scores, &doc).write_csv(&mut sink)?;
    }
    sink.flush()?;
    Ok(())
}

pub fn spans(audit: &Path, threshold: f64, doc: Option<&str>) -> Result<()> {
    let scores: Vec<ScoredExample> = read_scores(audit)?
        .into_iter()
        .filter(|s| doc.is_none_or(|d| s.doc_id == d))
        .collect();
    print_json(&merge_spans(&scores, threshold))
}

pub fn coverage(audit: &Path, manifest: &Path, thresholds: &[f64], doc: Option<&str>) -> Result<()> {
    let scores = read_scores(audit)?;
    let docs = load_manifest(manifest).with_context(|| format!("loading {}", manifest.display()))?;
    let mut report: BTreeMap<String, ThresholdMap> = BTreeMap::new();
    for d in docs.iter().filter(|d| doc.is_none_or(|id| d.doc_id() == id)) {
        report.insert(d.doc_id().to_string(), coverage_report(&scores, d, thresholds)?);
    }
    if let Some(id) = doc {
        if report.is_empty() {
            return Err(memext::Error::InvalidArgument(format!("no document {id:?} in manifest")).into());
        }
    }
    print_json(&report)
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    #[arg(long)]
    pub keep_underscores: bool,
    #[arg(long)]
    pub keep_ellipses: bool,
    /// Plain ln(2/df) weights, without the +1.
    #[arg(long)]
    pub no_smooth_idf: bool,
    /// Also list word-level matching blocks.
    #[arg(long)]
    pub blocks: bool,
}

#[derive(Serialize)]
struct CompareOutput {
    tfidf_cosine: f64,
    word_ratio: f64,
    sentence_ratio: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    word_blocks: Option<Vec<MatchBlock>>,
}

pub fn compare(args: &CompareArgs) -> Result<()> {
    let read = |p: &Path| std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()));
    let (a, b) = (read(&args.a)?, read(&args.b)?);
    let rules = NormalizationRules {
        strip_underscores: !args.keep_underscores,
        unify_ellipses: !args.keep_ellipses,
    };
    let sim = compare_texts(&a, &b, &rules, !args.no_smooth_idf)?;
    let word_blocks = args.blocks.then(|| {
        let (na, nb) = (normalize(&a, &rules), normalize(&b, &rules));
        matching_blocks(&words(&na), &words(&nb))
    });
    print_json(&CompareOutput {
        tfidf_cosine: sim.tfidf_cosine,
        word_ratio: sim.word_ratio,
        sentence_ratio: sim.sentence_ratio,
        word_blocks,
    })
}
