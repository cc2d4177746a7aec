//! The `dscope` pipeline: stage runners, resumable stage markers and worker control.

pub mod args;
pub mod layout;
mod stages;

use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use dscope_core::experiment::ExperimentConfig;

pub use args::{Cli, Command, Stage};
pub use layout::{Layout, Method};
pub use stages::plot_embedding_file;

/// Name of the environment variable capping worker threads; `0` runs jobs serially.
pub const THREADS_ENV: &str = "DSCOPE_THREADS";

/// Worker count: `None` lets rayon pick, `Some(0)` means serial.
pub fn threads_from_env() -> Result<Option<usize>> {
    match env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .with_context(|| format!("{THREADS_ENV}={v:?} is not a thread count")),
        Err(env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Maps `f` over `items`, in parallel unless `threads` is `Some(0)`. Results keep item order.
pub fn par_map<T, R, F>(threads: Option<usize>, items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    match threads {
        Some(0) => items.iter().map(f).collect(),
        n => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.unwrap_or(0))
                .build()?;
            pool.install(|| items.par_iter().map(f).collect())
        }
    }
}

/// Resolved config, output layout and worker count for one invocation.
pub struct Context {
    pub config: ExperimentConfig,
    pub layout: Layout,
    pub threads: Option<usize>,
}

impl Context {
    pub fn new(mut config: ExperimentConfig, seed: Option<u64>, out: Option<PathBuf>, threads: Option<usize>) -> Result<Self> {
        if let Some(seed) = seed {
            config.seeds = vec![seed];
        }
        if let Some(out) = out {
            config.output_dir = out;
        }
        config.validate()?;
        let layout = Layout::new(config.output_dir.clone());
        Ok(Self { config, layout, threads })
    }

    pub fn load(path: &Path, seed: Option<u64>, out: Option<PathBuf>, threads: Option<usize>) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("missing artifact {}", path.display()))?;
        let config: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        Self::new(config, seed, out, threads)
    }

    /// Hash of everything a stage's outputs depend on: the config (minus the output
    /// directory) and the markers of the stages it reads from.
    pub fn stage_hash(&self, stage: Stage) -> Result<String> {
        let mut config = self.config.clone();
        config.output_dir = PathBuf::new();
        let mut h = Sha256::new();
        h.update(b"dscope-stage\0");
        h.update(stage.name().as_bytes());
        h.update(b"\0");
        h.update(serde_json::to_vec(&config)?);
        for &up in stage.upstream() {
            let marker = self.layout.marker(up);
            let prior = fs::read_to_string(&marker)
                .with_context(|| format!("missing artifact {} (run `dscope {up}` first)", marker.display()))?;
            h.update(b"\0");
            h.update(prior.trim().as_bytes());
        }
        Ok(hex::encode(h.finalize()))
    }

    pub fn is_current(&self, stage: Stage) -> Result<bool> {
        let hash = self.stage_hash(stage)?;
        Ok(fs::read_to_string(self.layout.marker(stage)).is_ok_and(|m| m.trim() == hash))
    }

    /// Runs `stage` unless its marker matches the current inputs. Returns the files written.
    pub fn run_stage(&self, stage: Stage) -> Result<Vec<PathBuf>> {
        let hash = self.stage_hash(stage)?;
        let marker = self.layout.marker(stage);
        if fs::read_to_string(&marker).is_ok_and(|m| m.trim() == hash) {
            eprintln!("{stage}: up to date");
            return Ok(Vec::new());
        }
        let mut written = match stage {
            Stage::Synth => stages::synth(self)?,
            Stage::Train => stages::train(self)?,
            Stage::Embed => stages::embed(self)?,
            Stage::Metrics => stages::metrics(self)?,
            Stage::Plot => stages::plot(self)?,
        };
        dscope_core::write_atomic(&marker, format!("{hash}\n").as_bytes())?;
        written.push(marker);
        Ok(written)
    }

    /// Every stage up to and including `last`.
    pub fn run_pipeline(&self, last: Stage) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        for stage in Stage::ALL.into_iter().filter(|&s| s <= last) {
            written.extend(self.run_stage(stage)?);
        }
        Ok(written)
    }
}

/// Executes a parsed command line, echoing every written path to stdout.
pub fn run(cli: Cli) -> Result<()> {
    let threads = threads_from_env()?;
    if cli.stage.is_some() && !matches!(cli.command, Command::Pipeline) {
        bail!("--stage only applies to `dscope pipeline`");
    }
    if let Command::Plot { input: Some(input), title } = &cli.command {
        let out = cli
            .out
            .clone()
            .or_else(|| input.parent().map(Path::to_path_buf))
            .unwrap_or_default();
        let path = plot_embedding_file(input, &out, title.as_deref())?;
        println!("{}", path.display());
        return Ok(());
    }
    let Some(config) = &cli.config else {
        bail!("--config is required");
    };
    let ctx = Context::load(config, cli.seed, cli.out.clone(), threads)?;
    let written = match cli.command {
        Command::Synth => ctx.run_stage(Stage::Synth)?,
        Command::Train => ctx.run_stage(Stage::Train)?,
        Command::Embed => ctx.run_stage(Stage::Embed)?,
        Command::Metrics => ctx.run_stage(Stage::Metrics)?,
        Command::Plot { .. } => ctx.run_stage(Stage::Plot)?,
        Command::Pipeline => ctx.run_pipeline(cli.stage.unwrap_or(Stage::Plot))?,
    };
    for path in written {
        println!("{}", path.display());
    }
    Ok(())
}
