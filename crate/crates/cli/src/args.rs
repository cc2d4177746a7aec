use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "dscope", version, about = "Distillation study pipeline: data, training, embeddings, metrics, figures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Experiment config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// With `pipeline`: stop after this stage.
    #[arg(long, global = true)]
    pub stage: Option<Stage>,

    /// Run a single seed instead of the config's seed list.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the cluster benchmark and the noise-lift data.
    Synth,
    /// Train the teacher and every undistilled and distilled student.
    Train,
    /// Extract tap activations and embed them in 2D.
    Embed,
    /// Score every run and write the combined report.
    Metrics,
    /// Render SVG figures, or a single scatter plot of an embedding CSV.
    Plot {
        /// `x,y,label` CSV to plot on its own; needs no config.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        title: Option<String>,
    },
    /// Run every stage in order, skipping stages that are up to date.
    Pipeline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, ValueEnum)]
pub enum Stage {
    Synth,
    Train,
    Embed,
    Metrics,
    Plot,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Synth, Stage::Train, Stage::Embed, Stage::Metrics, Stage::Plot];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Train => "train",
            Stage::Embed => "embed",
            Stage::Metrics => "metrics",
            Stage::Plot => "plot",
        }
    }

    /// Stages whose outputs this stage reads.
    pub fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Synth => &[],
            Stage::Train => &[Stage::Synth],
            Stage::Embed => &[Stage::Train],
            Stage::Metrics => &[Stage::Embed],
            Stage::Plot => &[Stage::Embed],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
