use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use memext::audit::{parse_audit, score_examples, AuditRecord, ScoringConfig, DEFAULT_TOP_M};
use memext::corpus::{load_manifest, sample_random_examples, slide_windows_par, Example, ExampleShape, WindowConfig};
use memext::provider::Provider;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::backend::{self, usage, BackendArgs, DecodingArgs};

#[derive(Args, Debug, Clone, Serialize)]
pub struct AuditArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub decoding: DecodingArgs,
    /// Ranked logits the backend returns per position; must be >= top-k.
    #[arg(long, default_value_t = DEFAULT_TOP_M)]
    pub top_m: usize,
    #[arg(long, default_value_t = 50)]
    pub prefix_tokens: usize,
    #[arg(long, default_value_t = 50)]
    pub suffix_tokens: usize,
    #[arg(long, default_value_t = 10)]
    pub stride_chars: usize,
    #[arg(long, default_value_t = 800)]
    pub chunk_chars: usize,
    /// Draw random examples from this many documents instead of sliding a window.
    #[arg(long)]
    pub sample_docs: Option<usize>,
    #[arg(long, default_value_t = 1, requires = "sample_docs")]
    pub per_doc: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Continue an interrupted run, keeping the records already written.
    #[arg(long)]
    #[serde(skip)]
    pub resume: bool,
    /// Scoring threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    #[serde(skip)]
    pub jobs: usize,
    /// Records written per flush.
    #[arg(long, default_value_t = 256)]
    #[serde(skip)]
    pub batch_size: usize,
}

impl AuditArgs {
    fn shape(&self) -> ExampleShape {
        ExampleShape {
            chunk_chars: self.chunk_chars,
            example_tokens: self.prefix_tokens + self.suffix_tokens,
            prefix_tokens: self.prefix_tokens,
        }
    }

    /// Short hash of every flag that affects record contents.
    fn fingerprint(&self) -> String {
        let mut fields = serde_json::to_value(self).expect("args serialize");
        if let Some(obj) = fields.as_object_mut() {
            obj.remove("out");
        }
        let digest = Sha256::digest(fields.to_string().as_bytes());
        hex::encode(&digest[..8])
    }
}

struct Selection {
    examples: Vec<Example>,
    summary: String,
}

fn select(args: &AuditArgs, docs: &[memext::corpus::BookDocument], provider: &dyn Provider) -> Result<Selection> {
    let shape = args.shape();
    if let Some(n_docs) = args.sample_docs {
        let s = sample_random_examples(docs, provider, n_docs, args.per_doc, &shape, args.seed)?;
        for (doc, got) in &s.shortfalls {
            log::warn!("{doc}: only {got} of {} examples fit", args.per_doc);
        }
        let summary = format!(
            "{} examples from {n_docs} sampled documents ({} short)",
            s.examples.len(),
            s.shortfalls.len()
        );
        return Ok(Selection {
            examples: s.examples,
            summary,
        });
    }
    let cfg = WindowConfig {
        stride_chars: args.stride_chars,
        shape,
    };
    let (mut examples, mut attempted, mut skipped) = (Vec::new(), 0, 0);
    for doc in docs {
        let batch = slide_windows_par(doc, provider, cfg)?;
        attempted += batch.attempted;
        skipped += batch.skipped;
        examples.extend(batch.examples);
    }
    let summary = format!(
        "{} examples from {} documents ({attempted} windows, {skipped} too short)",
        examples.len(),
        docs.len()
    );
    Ok(Selection { examples, summary })
}

/// Records already on disk for a resumed run; truncates a torn final line.
fn resume_point(path: &PathBuf, fingerprint: &str, total: usize) -> Result<usize> {
    let body = match std::fs::read_to_string(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(0),
        Err(e) => return Err(e).with_context(|| format!("reading {}", path.display())),
    };
    let parsed = parse_audit(&body).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(r) = parsed.records.iter().find(|r| r.config != fingerprint) {
        bail!(
            "{} was written with config {}, this run is {fingerprint}",
            path.display(),
            r.config
        );
    }
    if parsed.records.len() > total {
        bail!("{} has more records than this run produces", path.display());
    }
    if parsed.valid_bytes < body.len() {
        log::warn!("dropping a partial trailing record");
        OpenOptions::new().write(true).open(path)?.set_len(parsed.valid_bytes as u64)?;
    }
    Ok(parsed.records.len())
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
        Ok(pool.install(f))
    }
    #[cfg(not(feature = "parallel"))]
    {
        if jobs > 1 {
            log::warn!("built without parallel support; --jobs ignored");
        }
        Ok(f())
    }
}

pub fn run(args: AuditArgs) -> Result<()> {
    let scoring = ScoringConfig {
        decoding: args.decoding.config()?,
        top_m: args.top_m,
    };
    if let Some(k) = scoring.decoding.top_k {
        if k > scoring.top_m {
            return Err(usage(format!("--top-k {k} exceeds --top-m {}", scoring.top_m)));
        }
    }
    if args.batch_size == 0 {
        return Err(usage("--batch-size must be positive"));
    }
    args.shape().validate()?;

    let docs = load_manifest(&args.manifest).with_context(|| format!("loading {}", args.manifest.display()))?;
    let provider = backend::connect(&args.backend, Some(&docs))?;
    let fingerprint = args.fingerprint();
    let selection = with_pool(args.jobs, || select(&args, &docs, provider.as_ref()))??;
    let total = selection.examples.len();

    let done = if args.resume {
        resume_point(&args.out, &fingerprint, total)?
    } else {
        0
    };
    if done > 0 {
        log::info!("resuming after {done} records");
    }

    // created on the first flush, so a run that fails early leaves no file
    let mut out: Option<File> = None;
    let mut written = done;
    for batch in selection.examples[done..].chunks(args.batch_size) {
        let scores = with_pool(args.jobs, || score_examples(provider.as_ref(), batch, &scoring))??;
        let mut buf = Vec::new();
        for (ex, s) in batch.iter().zip(&scores) {
            serde_json::to_writer(&mut buf, &AuditRecord::new(ex, s, &fingerprint))?;
            buf.push(b'\n');
        }
        let file = match out.as_mut() {
            Some(f) => f,
            None => out.insert(
                OpenOptions::new()
                    .create(true)
                    .write(true)
                    .append(args.resume)
                    .truncate(!args.resume)
                    .open(&args.out)
                    .with_context(|| format!("opening {}", args.out.display()))?,
            ),
        };
        file.write_all(&buf)?;
        file.sync_data()?;
        written += batch.len();
        log::debug!("{written}/{total} records");
    }
    if out.is_none() && !args.resume {
        File::create(&args.out)?;
    }
    eprintln!(
        "audited {}; {written} records in {} (config {fingerprint})",
        selection.summary,
        args.out.display()
    );
    Ok(())
}
