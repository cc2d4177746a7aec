//! The cluster benchmark end to end: data, one teacher, undistilled and distilled students
//! per label budget and seed, 2D embeddings of every tap and the metrics computed on them,
//! plus the noise-lift comparison of the triplet embedder against t-SNE.
//!
//! Every function here is pure given its inputs; the CLI persists the intermediate results.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::distill::{
    distill_student, DatasetFile, extract_activations, train_teacher, train_undistilled, Condition, DistillConfig,
    SplitDataset, TrainReport,
};
use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;
use crate::metrics::{
    class_area_ratios, neighborhood_preservation, one_nn_accuracy, superclass_correlation, AreaParams,
    MetricsReport,
};
use crate::nn::{MlpModel, SgdConfig, TapPoint};
use crate::rng::derive_seed;
use crate::synth::{gen_noise_dataset, ClusterModel, ClusterSpec, NoiseLiftDataset};
use crate::triplet::{fit, EmbeddingResult, TripletConfig};
use crate::tsne::{fit_tsne, TsneConfig, TsneResult};

const TRAIN_STREAM: u64 = 0xd1;
const TEST_STREAM: u64 = 0xd2;
const EMBED_STREAM: u64 = 0xd3;
const SPLIT_STREAM: u64 = 0x5b;
const STUDENT_STREAM: u64 = 0x57;
const EMBEDDER_STREAM: u64 = 0xe3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub cluster: ClusterSpec,
    /// Training pool per class; the full label budget is `classes * train_per_class`.
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Held-out samples per class whose activations are embedded and scored.
    pub embed_per_class: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            cluster: ClusterSpec::default(),
            train_per_class: 500,
            test_per_class: 100,
            embed_per_class: 30,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TeacherConfig {
    pub hidden: Vec<usize>,
    pub sgd: SgdConfig,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256; 4],
            sgd: SgdConfig {
                epochs: 10,
                decay_every: 4,
                ..SgdConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    pub area: AreaParams,
    /// Neighborhood size for preservation scores.
    pub preservation_k: usize,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            area: AreaParams::default(),
            preservation_k: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub n: usize,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { n: 1000, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    /// Total labeled samples per student run, balanced across classes.
    pub budgets: Vec<usize>,
    pub seeds: Vec<u64>,
    pub teacher: TeacherConfig,
    pub student_hidden: Vec<usize>,
    /// Distilled students follow this schedule; undistilled students get the same SGD
    /// settings for `cycles * labeled_epochs` epochs.
    pub distill: DistillConfig,
    pub triplet: TripletConfig,
    /// Applied to the taps of the first seed only (exact t-SNE is quadratic).
    pub tsne: TsneConfig,
    pub metrics: MetricConfig,
    pub noise: NoiseConfig,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            budgets: vec![40, 100, 500, 5000],
            seeds: (0..5).collect(),
            teacher: TeacherConfig::default(),
            student_hidden: vec![32; 4],
            distill: DistillConfig::default(),
            triplet: TripletConfig::default(),
            tsne: TsneConfig::default(),
            metrics: MetricConfig::default(),
            noise: NoiseConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let classes = self.dataset.cluster.classes;
        if self.seeds.is_empty() {
            return Err(invalid("at least one seed is required"));
        }
        if self.budgets.is_empty() {
            return Err(invalid("at least one budget is required"));
        }
        let pool = classes * self.dataset.train_per_class;
        for &b in &self.budgets {
            if b == 0 || b % classes != 0 {
                return Err(invalid(format!("budget {b} is not a positive multiple of {classes} classes")));
            }
            if b > pool {
                return Err(invalid(format!("budget {b} exceeds the training pool of {pool}")));
            }
        }
        if self.dataset.test_per_class == 0 || self.dataset.embed_per_class < 2 {
            return Err(invalid("need test samples and at least two embedded samples per class"));
        }
        if self.student_hidden.len() < TapPoint::ALL.len() - 1 {
            return Err(invalid("students need four hidden blocks for taps A-E"));
        }
        self.distill.validate()?;
        self.teacher.sgd.validate()?;
        self.triplet.validate()
    }

    /// SGD schedule of the undistilled baseline for `seed`.
    pub fn undistilled_sgd(&self, seed: u64) -> SgdConfig {
        SgdConfig {
            epochs: self.distill.cycles * self.distill.labeled_epochs,
            seed,
            ..self.distill.sgd.clone()
        }
    }

    pub fn tsne_seed(&self) -> u64 {
        self.seeds[0]
    }
}

/// Training pool, test set and the held-out embedding subset, all from one cluster model.
#[derive(Clone, Debug, PartialEq)]
pub struct Benchmark {
    pub train: Matrix,
    pub train_labels: Vec<usize>,
    pub test: Matrix,
    pub test_labels: Vec<usize>,
    pub embed: Matrix,
    pub embed_labels: Vec<usize>,
    /// `superclass_map[class]` = superclass id.
    pub superclass_map: Vec<usize>,
}

impl Benchmark {
    pub fn generate(config: &DatasetConfig) -> Result<Self> {
        let model = ClusterModel::generate(&config.cluster)?;
        let seed = config.cluster.seed;
        let (train, train_labels) = model.sample(config.train_per_class, derive_seed(seed, &[TRAIN_STREAM]));
        let (test, test_labels) = model.sample(config.test_per_class, derive_seed(seed, &[TEST_STREAM]));
        let (embed, embed_labels) = model.sample(config.embed_per_class, derive_seed(seed, &[EMBED_STREAM]));
        Ok(Self {
            train,
            train_labels,
            test,
            test_labels,
            embed,
            embed_labels,
            superclass_map: model.superclass_map,
        })
    }

    pub fn classes(&self) -> usize {
        self.superclass_map.len()
    }

    pub fn dim(&self) -> usize {
        self.train.cols()
    }

    /// Train, test and embedding files, each row carrying its class and superclass.
    pub fn to_files(&self) -> [DatasetFile; 3] {
        let file = |x: &Matrix, y: &[usize]| DatasetFile {
            features: x.clone(),
            labels: y.iter().map(|&l| Some(l)).collect(),
            superclasses: Some(y.iter().map(|&l| self.superclass_map[l]).collect()),
        };
        [
            file(&self.train, &self.train_labels),
            file(&self.test, &self.test_labels),
            file(&self.embed, &self.embed_labels),
        ]
    }

    /// Inverse of [`Benchmark::to_files`]. Every row must be labeled and carry a superclass.
    pub fn from_files(train: &DatasetFile, test: &DatasetFile, embed: &DatasetFile) -> Result<Self> {
        let mut superclass_map: Vec<Option<usize>> = Vec::new();
        let mut unpack = |f: &DatasetFile, name: &str| -> Result<(Matrix, Vec<usize>)> {
            let supers = f
                .superclasses
                .as_ref()
                .ok_or_else(|| Error::Format(format!("{name} set has no superclass column")))?;
            let mut labels = Vec::with_capacity(f.labels.len());
            for (l, &s) in f.labels.iter().zip(supers) {
                let l = l.ok_or_else(|| Error::Format(format!("{name} set has unlabeled rows")))?;
                if superclass_map.len() <= l {
                    superclass_map.resize(l + 1, None);
                }
                match superclass_map[l] {
                    Some(prev) if prev != s => {
                        return Err(Error::Format(format!("class {l} maps to superclasses {prev} and {s}")))
                    }
                    _ => superclass_map[l] = Some(s),
                }
                labels.push(l);
            }
            Ok((f.features.clone(), labels))
        };
        let (train, train_labels) = unpack(train, "train")?;
        let (test, test_labels) = unpack(test, "test")?;
        let (embed, embed_labels) = unpack(embed, "embed")?;
        if test.cols() != train.cols() || embed.cols() != train.cols() {
            return Err(Error::Shape("train, test and embed sets differ in width".into()));
        }
        let superclass_map = superclass_map
            .into_iter()
            .enumerate()
            .map(|(c, s)| s.ok_or_else(|| Error::Format(format!("class {c} never appears"))))
            .collect::<Result<_>>()?;
        Ok(Self {
            train,
            train_labels,
            test,
            test_labels,
            embed,
            embed_labels,
            superclass_map,
        })
    }

    pub fn split(&self, budget: usize, seed: u64) -> Result<SplitDataset> {
        let split = SplitDataset::from_pool(
            &self.train,
            &self.train_labels,
            self.test.clone(),
            self.test_labels.clone(),
            budget,
            derive_seed(seed, &[SPLIT_STREAM, budget as u64]),
        )?;
        Ok(split.with_superclasses(self.superclass_map.clone()))
    }
}

/// The teacher sees every training label.
pub fn run_teacher(bench: &Benchmark, config: &ExperimentConfig) -> Result<(MlpModel, TrainReport)> {
    let split = bench.split(bench.train.rows(), config.teacher.sgd.seed)?;
    let mut model = MlpModel::classifier(
        bench.dim(),
        &config.teacher.hidden,
        bench.classes(),
        config.teacher.sgd.seed,
    );
    let report = train_teacher(&mut model, &split, &config.teacher.sgd)?;
    Ok((model, report))
}

/// One student run. Both conditions start from the same initial weights and labeled subset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StudentJob {
    pub budget: usize,
    pub seed: u64,
    pub condition: Condition,
}

impl StudentJob {
    /// File-name stem, e.g. `distilled_b40_s3`.
    pub fn stem(&self) -> String {
        format!("{}_b{}_s{}", self.condition.name(), self.budget, self.seed)
    }
}

/// Budget-major, then seed, then undistilled before distilled.
pub fn student_jobs(config: &ExperimentConfig) -> Vec<StudentJob> {
    let mut jobs = Vec::new();
    for &budget in &config.budgets {
        for &seed in &config.seeds {
            for condition in [Condition::Undistilled, Condition::Distilled] {
                jobs.push(StudentJob { budget, seed, condition });
            }
        }
    }
    jobs
}

pub fn run_student(
    bench: &Benchmark,
    teacher: &MlpModel,
    config: &ExperimentConfig,
    job: StudentJob,
) -> Result<(MlpModel, TrainReport)> {
    let split = bench.split(job.budget, job.seed)?;
    let init = derive_seed(job.seed, &[STUDENT_STREAM, job.budget as u64]);
    let mut model = MlpModel::classifier(bench.dim(), &config.student_hidden, bench.classes(), init);
    let report = match job.condition {
        Condition::Distilled => {
            let cfg = DistillConfig {
                sgd: SgdConfig {
                    seed: job.seed,
                    ..config.distill.sgd.clone()
                },
                ..config.distill.clone()
            };
            distill_student(&mut model, teacher, &split, &cfg)?
        }
        Condition::Undistilled => train_undistilled(&mut model, &split, &config.undistilled_sgd(job.seed))?,
        Condition::Teacher => return Err(invalid("teacher runs go through run_teacher")),
    };
    Ok((model, report))
}

/// Embedder settings for one tap of one student. Both conditions share the seed so their
/// embeddings differ only through the activations.
pub fn triplet_config_for(config: &ExperimentConfig, job: StudentJob, tap: TapPoint) -> TripletConfig {
    TripletConfig {
        seed: derive_seed(config.triplet.seed, &[EMBEDDER_STREAM, job.budget as u64, job.seed, tap.index() as u64]),
        ..config.triplet.clone()
    }
}

pub fn tsne_config_for(config: &ExperimentConfig, job: StudentJob, tap: TapPoint) -> TsneConfig {
    TsneConfig {
        seed: derive_seed(config.tsne.seed, &[EMBEDDER_STREAM, job.budget as u64, job.seed, tap.index() as u64]),
        ..config.tsne.clone()
    }
}

/// Activations of the embedding subset at every tap.
pub fn tap_activations(model: &MlpModel, bench: &Benchmark) -> Result<Vec<(TapPoint, Matrix)>> {
    TapPoint::ALL
        .iter()
        .map(|&tap| Ok((tap, extract_activations(model, &bench.embed, tap)?)))
        .collect()
}

/// 2D embeddings of every tap.
pub fn embed_taps(
    model: &MlpModel,
    bench: &Benchmark,
    config: &ExperimentConfig,
    job: StudentJob,
) -> Result<Vec<(TapPoint, EmbeddingResult)>> {
    tap_activations(model, bench)?
        .into_iter()
        .map(|(tap, acts)| Ok((tap, fit(&acts, &triplet_config_for(config, job, tap))?)))
        .collect()
}

/// What the metrics stage needs from one tap's embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct TapEmbedding {
    pub tap: TapPoint,
    pub activations: Matrix,
    pub coords: Matrix,
    pub converged_loss: f64,
}

/// Accuracy and superclass correlation on the test set, area ratios, convergence losses
/// and mean neighborhood preservation over the tap embeddings.
pub fn student_metrics(
    model: &MlpModel,
    report: &TrainReport,
    bench: &Benchmark,
    embeddings: &[TapEmbedding],
    params: &MetricConfig,
) -> Result<MetricsReport> {
    let mut out = MetricsReport {
        accuracy: report.test_accuracy,
        warnings: report.warnings.clone(),
        ..MetricsReport::default()
    };
    let votes = model.predict(&bench.test)?;
    let corr = superclass_correlation(&votes, &bench.superclass_map)?;
    for (s, r2) in &corr.per_superclass {
        out.correlations.insert(s.to_string(), *r2);
    }
    for (a, b) in &corr.skipped_pairs {
        out.warnings.push(format!("correlation pair ({a}, {b}) skipped: zero variance"));
    }
    let mut preservation = Vec::with_capacity(embeddings.len());
    for e in embeddings {
        let tap = e.tap.to_string();
        let ratios = class_area_ratios(&e.coords, &bench.embed_labels, params.area)?;
        out.area_ratios.insert(
            tap.clone(),
            ratios.into_iter().map(|(c, r)| (c.to_string(), r)).collect(),
        );
        out.convergence_losses.insert(tap, e.converged_loss);
        preservation.push(neighborhood_preservation(&e.activations, &e.coords, params.preservation_k)?);
    }
    if !preservation.is_empty() {
        out.preservation = Some(preservation.iter().sum::<f64>() / preservation.len() as f64);
    }
    Ok(out)
}

/// Mean intra-superclass r² of `model`'s votes on the test set.
pub fn model_correlation(model: &MlpModel, bench: &Benchmark) -> Result<Option<f64>> {
    Ok(superclass_correlation(&model.predict(&bench.test)?, &bench.superclass_map)?.mean())
}

/// Scores of one embedding of the noise-lift data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureScores {
    /// Neighborhood preservation against the 15-D lifted points.
    pub preservation: f64,
    pub quadrant_one_nn: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseComparison {
    pub n: usize,
    pub seed: u64,
    pub k: usize,
    pub triplet: StructureScores,
    pub tsne: StructureScores,
}

/// Coordinates of both embedders on the noise-lift data.
pub struct NoiseRun {
    pub triplet: EmbeddingResult,
    pub tsne: TsneResult,
    pub comparison: NoiseComparison,
}

pub fn noise_data(config: &ExperimentConfig) -> Result<NoiseLiftDataset> {
    gen_noise_dataset(config.noise.n, config.noise.seed)
}

pub fn run_noise(data: &NoiseLiftDataset, config: &ExperimentConfig) -> Result<NoiseRun> {
    let seed = config.noise.seed;
    let k = config.metrics.preservation_k;
    let triplet = fit(
        &data.lifted,
        &TripletConfig {
            seed: derive_seed(config.triplet.seed, &[EMBEDDER_STREAM, seed]),
            ..config.triplet.clone()
        },
    )?;
    let tsne = fit_tsne(
        &data.lifted,
        &TsneConfig {
            seed: derive_seed(config.tsne.seed, &[EMBEDDER_STREAM, seed]),
            ..config.tsne.clone()
        },
    )?;
    let score = |coords: &Matrix| -> Result<StructureScores> {
        Ok(StructureScores {
            preservation: neighborhood_preservation(&data.lifted, coords, k)?,
            quadrant_one_nn: one_nn_accuracy(coords, &data.quadrants)?,
        })
    };
    let comparison = NoiseComparison {
        n: data.lifted.rows(),
        seed,
        k,
        triplet: score(&triplet.coords)?,
        tsne: score(&tsne.coords)?,
    };
    Ok(NoiseRun {
        triplet,
        tsne,
        comparison,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub condition: Condition,
    pub budget: usize,
    pub seed: u64,
    pub metrics: MetricsReport,
}

/// Everything the metrics stage reports, in job order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub teacher_accuracy: f64,
    /// Mean intra-superclass r² of the teacher's test votes.
    pub teacher_correlation: Option<f64>,
    pub runs: Vec<RunRecord>,
    pub noise: Option<NoiseComparison>,
}

impl ExperimentReport {
    pub fn find(&self, condition: Condition, budget: usize, seed: u64) -> Option<&MetricsReport> {
        self.runs
            .iter()
            .find(|r| r.condition == condition && r.budget == budget && r.seed == seed)
            .map(|r| &r.metrics)
    }

    /// `(undistilled, distilled)` metric pairs of one budget, keyed by seed.
    pub fn paired(&self, budget: usize) -> BTreeMap<u64, (&MetricsReport, &MetricsReport)> {
        let mut out = BTreeMap::new();
        for r in self.runs.iter().filter(|r| r.budget == budget && r.condition == Condition::Undistilled) {
            if let Some(d) = self.find(Condition::Distilled, budget, r.seed) {
                out.insert(r.seed, (&r.metrics, d));
            }
        }
        out
    }
}
