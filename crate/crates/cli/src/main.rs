//! `memext` command-line driver.

mod audit;
mod backend;
mod rebuild;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "memext", version, about = "Measure and locate verbatim memorization in language models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Score corpus examples and write one JSON record per example.
    Audit(audit::AuditArgs),
    /// Aggregate extraction rates from audit files.
    Rates {
        #[arg(required = true)]
        audit: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', default_values_t = memext::metric::DEFAULT_THRESHOLDS)]
        thresholds: Vec<f64>,
    },
    /// Per-character maximum extraction probability for one document, as CSV.
    Heatmap {
        audit: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        doc: String,
        /// Emit raw `char_start,prob` points instead of the heatmap.
        #[arg(long)]
        points: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Merged memorized spans at a threshold, as JSON.
    Spans {
        audit: PathBuf,
        #[arg(long)]
        threshold: f64,
        #[arg(long)]
        doc: Option<String>,
    },
    /// Fraction of each document covered by memorized spans.
    Coverage {
        audit: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = memext::metric::DEFAULT_THRESHOLDS)]
        thresholds: Vec<f64>,
        #[arg(long)]
        doc: Option<String>,
    },
    /// Regenerate a document from a seed prompt with windowed beam search.
    Reconstruct(rebuild::ReconstructArgs),
    /// Similarity between two text files.
    Compare(report::CompareArgs),
    /// Serve the reference model over HTTP.
    Serve {
        #[command(flatten)]
        reference: backend::ReferenceArgs,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long)]
        max_context: Option<usize>,
    },
}

/// Exit statuses: 1 usage, 2 backend, 3 data.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<memext::Error>() {
            return if e.is_backend() {
                2
            } else if matches!(
                e,
                memext::Error::InvalidArgument(_) | memext::Error::InsufficientTopM { .. }
            ) {
                1
            } else {
                3
            };
        }
        if cause.downcast_ref::<backend::UsageError>().is_some() {
            return 1;
        }
    }
    3
}

fn is_broken_pipe(err: &anyhow::Error) -> bool {
    use std::io::ErrorKind::BrokenPipe;
    err.chain().any(|c| {
        c.downcast_ref::<std::io::Error>().is_some_and(|e| e.kind() == BrokenPipe)
            || c.downcast_ref::<serde_json::Error>().is_some_and(|e| e.io_error_kind() == Some(BrokenPipe))
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Audit(args) => audit::run(args),
        Command::Rates { audit, thresholds } => report::rates(&audit, &thresholds),
        Command::Heatmap {
            audit,
            manifest,
            doc,
            points,
            out,
        } => report::heatmap(&audit, &manifest, &doc, points, out.as_deref()),
        Command::Spans { audit, threshold, doc } => report::spans(&audit, threshold, doc.as_deref()),
        Command::Coverage {
            audit,
            manifest,
            thresholds,
            doc,
        } => report::coverage(&audit, &manifest, &thresholds, doc.as_deref()),
        Command::Reconstruct(args) => rebuild::run(args),
        Command::Compare(args) => report::compare(&args),
        Command::Serve {
            reference,
            addr,
            max_context,
        } => backend::serve(&reference, &addr, max_context),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
