//! Where every artifact lives under the output directory.

use std::path::{Path, PathBuf};

use dscope_core::experiment::StudentJob;
use dscope_core::TapPoint;

use crate::args::Stage;

#[derive(Clone, Debug)]
pub struct Layout {
    root: PathBuf,
}

/// Embedding method of a stored 2D map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Triplet,
    Tsne,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Triplet => "triplet",
            Method::Tsne => "tsne",
        }
    }
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn marker(&self, stage: Stage) -> PathBuf {
        self.root.join(format!("{stage}.done"))
    }

    pub fn train_csv(&self) -> PathBuf {
        self.root.join("data/train.csv")
    }

    pub fn test_csv(&self) -> PathBuf {
        self.root.join("data/test.csv")
    }

    pub fn embed_csv(&self) -> PathBuf {
        self.root.join("data/embed.csv")
    }

    /// Lifted 15-D noise points with their quadrant as label.
    pub fn noise_csv(&self) -> PathBuf {
        self.root.join("data/noise.csv")
    }

    /// The 2D base points of the noise data, as an embedding CSV.
    pub fn noise_base_csv(&self) -> PathBuf {
        self.root.join("data/noise_base.csv")
    }

    pub fn teacher_model(&self) -> PathBuf {
        self.root.join("models/teacher.dscm")
    }

    pub fn teacher_report(&self) -> PathBuf {
        self.root.join("reports/teacher.json")
    }

    pub fn student_model(&self, job: StudentJob) -> PathBuf {
        self.root.join(format!("models/{}.dscm", job.stem()))
    }

    pub fn student_report(&self, job: StudentJob) -> PathBuf {
        self.root.join(format!("reports/{}.json", job.stem()))
    }

    pub fn activations(&self, job: StudentJob, tap: TapPoint) -> PathBuf {
        self.root.join(format!("activations/{}_{tap}.dact", job.stem()))
    }

    pub fn embedding(&self, method: Method, job: StudentJob, tap: TapPoint) -> PathBuf {
        self.root.join(format!("embeddings/{}/{}_{tap}.csv", method.name(), job.stem()))
    }

    /// Converged loss and settings of a triplet embedding.
    pub fn embedding_summary(&self, job: StudentJob, tap: TapPoint) -> PathBuf {
        self.root.join(format!("embeddings/triplet/{}_{tap}.json", job.stem()))
    }

    pub fn noise_embedding(&self, method: Method) -> PathBuf {
        self.root.join(format!("embeddings/noise/{}.csv", method.name()))
    }

    pub fn noise_comparison(&self) -> PathBuf {
        self.root.join("embeddings/noise/comparison.json")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("metrics/report.json")
    }

    pub fn figure(&self, name: &str) -> PathBuf {
        self.root.join(format!("figures/{name}.svg"))
    }
}
