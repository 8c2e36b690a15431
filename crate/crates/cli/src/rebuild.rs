use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use memext::logit::DecodingConfig;
use memext::reconstruct::{ReconstructionConfig, ReconstructionState, Reconstructor};
use serde::{Deserialize, Serialize};

use crate::backend::{self, BackendArgs};

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub seed_file: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(long, default_value_t = 8)]
    pub beams: usize,
    #[arg(long, default_value_t = 1.2)]
    pub length_penalty: f64,
    #[arg(long, default_value_t = 3000)]
    pub max_context_tokens: usize,
    #[arg(long, default_value_t = 50)]
    pub step_tokens: usize,
    #[arg(long, default_value_t = 113_000)]
    pub max_story_tokens: usize,
    #[arg(long, default_value_t = 10_000)]
    pub missed_chapter_gap: usize,
    /// Recorded for reference; beam search is deterministic and ignores it.
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub prepend_bos: bool,
    /// Continue from the checkpoint in the output directory (also extends a
    /// finished run when --max-story-tokens is raised).
    #[arg(long)]
    pub resume: bool,
}

const CHECKPOINT: &str = "state.json";

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    config: ReconstructionConfig,
    state: ReconstructionState,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

fn save(dir: &Path, config: &ReconstructionConfig, state: &ReconstructionState) -> memext::Result<()> {
    let bytes = serde_json::to_vec(&Checkpoint {
        config: config.clone(),
        state: state.clone(),
    })?;
    write_atomic(&dir.join(CHECKPOINT), &bytes).map_err(|e| std::io::Error::other(format!("{e:#}")))?;
    Ok(())
}

pub fn run(args: ReconstructArgs) -> Result<()> {
    let config = ReconstructionConfig {
        max_context_tokens: args.max_context_tokens,
        step_tokens: args.step_tokens,
        beams: args.beams,
        length_penalty: args.length_penalty,
        max_story_tokens: args.max_story_tokens,
        missed_chapter_gap: args.missed_chapter_gap,
        decoding: DecodingConfig {
            temperature: args.temperature,
            top_k: None,
            prepend_bos: args.prepend_bos,
        },
        ..ReconstructionConfig::default()
    };
    config.validate()?;
    let seed = std::fs::read_to_string(&args.seed_file)
        .with_context(|| format!("reading {}", args.seed_file.display()))?;
    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;

    let provider = backend::connect(&args.backend, None)?;
    let r = Reconstructor::new(provider.as_ref(), config.clone())?;
    let checkpoint = args.out_dir.join(CHECKPOINT);
    let state = if args.resume && checkpoint.exists() {
        let body = std::fs::read(&checkpoint)?;
        let saved: Checkpoint = serde_json::from_slice(&body).with_context(|| format!("parsing {}", checkpoint.display()))?;
        // the story budget may grow between runs; everything else must match
        let same = ReconstructionConfig {
            max_story_tokens: config.max_story_tokens,
            ..saved.config.clone()
        } == config;
        if !same || saved.state.seed_text != seed {
            bail!("{} was written with a different seed or configuration", checkpoint.display());
        }
        log::info!("resuming after {} steps", saved.state.entries.len());
        saved.state
    } else {
        r.start(&seed)?
    };

    let dir = args.out_dir.clone();
    let log = r
        .run(state, |s| {
            log::info!("step {}: {} tokens", s.entries.len(), s.generated_ids.len());
            save(&dir, &config, s)
        })
        .map_err(|interrupted| {
            let _ = save(&dir, &config, &interrupted.state);
            anyhow::Error::new(interrupted.source).context("reconstruction interrupted; rerun with --resume")
        })?;

    write_atomic(&dir.join("generation_log.json"), &serde_json::to_vec_pretty(&log.entries)?)?;
    write_atomic(&dir.join("generated_ids.json"), &serde_json::to_vec(&log.generated_ids)?)?;
    write_atomic(&dir.join("generated_story.txt"), log.text.as_bytes())?;
    eprintln!(
        "reconstructed {} tokens in {} steps into {}",
        log.generated_ids.len(),
        log.entries.len(),
        dir.display()
    );
    Ok(())
}
