use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::Args;
use memext::corpus::{load_manifest, BookDocument};
use memext::logit::DecodingConfig;
use memext::provider::{PieceTokenizer, Provider, ReferenceProvider, DEFAULT_ALPHA, DEFAULT_ORDER};
use serde::Serialize;

/// Bad flag combination not caught by the argument parser.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ReferenceArgs {
    /// Manifest the reference model is trained on.
    #[arg(long)]
    pub reference_corpus: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    pub ngram_order: usize,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct BackendArgs {
    /// `reference` for the built-in n-gram model, or a server base URL.
    #[arg(long, env = "MEMEXT_BACKEND_URL", default_value = "reference")]
    pub backend: String,
    #[command(flatten)]
    pub reference: ReferenceArgs,
}

/// Top-k setting; `none` disables truncation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TopK(pub Option<usize>);

impl std::str::FromStr for TopK {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("none") {
            return Ok(TopK(None));
        }
        match s.parse::<usize>() {
            Ok(0) | Err(_) => Err(format!("expected a positive integer or `none`, got {s:?}")),
            Ok(k) => Ok(TopK(Some(k))),
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct DecodingArgs {
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    /// Top-k truncation; `none` disables it.
    #[arg(long, default_value = "40")]
    pub top_k: TopK,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub prepend_bos: bool,
}

impl DecodingArgs {
    pub fn config(&self) -> Result<DecodingConfig> {
        let cfg = DecodingConfig {
            temperature: self.temperature,
            top_k: self.top_k.0,
            prepend_bos: self.prepend_bos,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Trains the reference model on `docs` (or on `--reference-corpus` when given).
pub fn reference(args: &ReferenceArgs, docs: Option<&[BookDocument]>) -> Result<ReferenceProvider> {
    let owned;
    let docs = match (&args.reference_corpus, docs) {
        (Some(path), _) => {
            owned = load_manifest(path).with_context(|| format!("loading {}", path.display()))?;
            &owned[..]
        }
        (None, Some(d)) => d,
        (None, None) => return Err(usage("the reference backend needs --reference-corpus")),
    };
    let texts: Vec<&str> = docs.iter().map(BookDocument::text).collect();
    log::info!("training order-{} reference model on {} documents", args.ngram_order, texts.len());
    Ok(ReferenceProvider::train(
        PieceTokenizer::bytes(),
        &texts,
        args.ngram_order,
        args.alpha,
        true,
        true,
    )?)
}

pub fn connect(args: &BackendArgs, docs: Option<&[BookDocument]>) -> Result<Arc<dyn Provider>> {
    if args.backend == "reference" {
        return Ok(Arc::new(reference(&args.reference, docs)?));
    }
    #[cfg(feature = "http")]
    {
        let p = memext::provider::HttpProvider::connect(&args.backend)
            .with_context(|| format!("connecting to {}", args.backend))?;
        Ok(Arc::new(p))
    }
    #[cfg(not(feature = "http"))]
    Err(usage("built without HTTP support; only `--backend reference` is available"))
}

pub fn serve(args: &ReferenceArgs, addr: &str, max_context: Option<usize>) -> Result<()> {
    let mut provider = reference(args, None)?;
    if let Some(limit) = max_context {
        provider = provider.with_max_context(limit);
    }
    #[cfg(feature = "http")]
    {
        log::info!("listening on {addr}");
        memext::provider::server::run(Arc::new(provider), addr)?;
        Ok(())
    }
    #[cfg(not(feature = "http"))]
    {
        let _ = (provider, addr);
        Err(usage("built without HTTP support"))
    }
}
