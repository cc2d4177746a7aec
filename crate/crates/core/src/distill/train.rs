use serde::{Deserialize, Serialize};

use super::split::SplitDataset;
use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;
use crate::metrics::accuracy;
use crate::nn::{cross_entropy_batch, distillation_batch, train_step, MlpModel, SgdConfig, TapPoint};
use crate::rng::{derive_seed, rng_from_seed};
use rand::seq::SliceRandom;

const LABELED_STREAM: u64 = 1;
const DISTILL_STREAM: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Teacher,
    Undistilled,
    Distilled,
}

impl Condition {
    pub fn name(self) -> &'static str {
        match self {
            Condition::Teacher => "teacher",
            Condition::Undistilled => "undistilled",
            Condition::Distilled => "distilled",
        }
    }
}

/// Cyclical schedule: each cycle runs `labeled_epochs` of cross-entropy on the labeled
/// split, then `distill_epochs` of the KL term on the unlabeled pool. The learning rate
/// follows `sgd` indexed by cycle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillConfig {
    pub temperature: f64,
    pub labeled_epochs: usize,
    pub distill_epochs: usize,
    pub cycles: usize,
    pub scale_t2: bool,
    pub sgd: SgdConfig,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            temperature: 4.0,
            labeled_epochs: 1,
            distill_epochs: 1,
            cycles: 150,
            scale_t2: false,
            sgd: SgdConfig::default(),
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(invalid("temperature must be positive"));
        }
        self.sgd.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub condition: Condition,
    pub seed: u64,
    pub labeled: usize,
    pub unlabeled: usize,
    /// Mean cross-entropy of every labeled epoch, in order.
    pub epoch_losses: Vec<f64>,
    /// Mean distillation loss of every distillation epoch, in order.
    pub distill_losses: Vec<f64>,
    /// Learning rate used by each labeled epoch.
    pub lr_trace: Vec<f64>,
    pub test_accuracy: f64,
    pub temperature: Option<f64>,
    pub sgd: SgdConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

enum Target<'a> {
    Labels(&'a [usize]),
    Soft { teacher: &'a Matrix, t: f64, scale_t2: bool },
}

/// One shuffled pass over `x`; returns the mean batch loss.
fn run_epoch(
    model: &mut MlpModel,
    x: &Matrix,
    target: &Target<'_>,
    lr: f64,
    batch_size: usize,
    shuffle_seed: u64,
) -> Result<f64> {
    let mut order: Vec<usize> = (0..x.rows()).collect();
    order.shuffle(&mut rng_from_seed(shuffle_seed));
    let mut total = 0.0;
    let mut batches = 0usize;
    for chunk in order.chunks(batch_size) {
        let batch = x.select_rows(chunk);
        let loss = match target {
            Target::Labels(labels) => {
                let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
                train_step(model, &batch, lr, |out| cross_entropy_batch(out, &y))?
            }
            Target::Soft { teacher, t, scale_t2 } => {
                let q = teacher.select_rows(chunk);
                train_step(model, &batch, lr, |out| distillation_batch(out, &q, *t, *scale_t2))?
            }
        };
        total += loss;
        batches += 1;
    }
    Ok(if batches == 0 { 0.0 } else { total / batches as f64 })
}

fn check_input(model: &MlpModel, x: &Matrix) -> Result<()> {
    if model.input_dim() != x.cols() {
        return Err(Error::LayerDimension {
            layer: 0,
            expected: model.input_dim(),
            got: x.cols(),
        });
    }
    Ok(())
}

/// Cross-entropy training on `(x, labels)` for `sgd.epochs` epochs. Returns per-epoch
/// mean losses and learning rates.
pub fn train_supervised(
    model: &mut MlpModel,
    x: &Matrix,
    labels: &[usize],
    sgd: &SgdConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    sgd.validate()?;
    check_input(model, x)?;
    if x.rows() == 0 {
        return Err(Error::Empty("labeled set"));
    }
    if x.rows() != labels.len() {
        return Err(Error::Shape("labeled rows and labels differ".into()));
    }
    let mut losses = Vec::with_capacity(sgd.epochs);
    let mut lrs = Vec::with_capacity(sgd.epochs);
    for epoch in 0..sgd.epochs {
        let lr = sgd.lr_at(epoch);
        let seed = derive_seed(sgd.seed, &[LABELED_STREAM, epoch as u64]);
        losses.push(run_epoch(model, x, &Target::Labels(labels), lr, sgd.batch_size, seed)?);
        lrs.push(lr);
    }
    Ok((losses, lrs))
}

fn supervised_report(
    model: &mut MlpModel,
    split: &SplitDataset,
    sgd: &SgdConfig,
    condition: Condition,
) -> Result<TrainReport> {
    let (epoch_losses, lr_trace) = train_supervised(model, &split.labeled, &split.labeled_labels, sgd)?;
    Ok(TrainReport {
        condition,
        seed: sgd.seed,
        labeled: split.labeled.rows(),
        unlabeled: split.unlabeled.rows(),
        epoch_losses,
        distill_losses: Vec::new(),
        lr_trace,
        test_accuracy: test_accuracy(model, split)?,
        temperature: None,
        sgd: sgd.clone(),
        warnings: Vec::new(),
    })
}

/// Baseline student: cross-entropy on the labeled split only.
pub fn train_undistilled(model: &mut MlpModel, split: &SplitDataset, sgd: &SgdConfig) -> Result<TrainReport> {
    supervised_report(model, split, sgd, Condition::Undistilled)
}

/// Same as [`train_undistilled`] but reported as the teacher.
pub fn train_teacher(model: &mut MlpModel, split: &SplitDataset, sgd: &SgdConfig) -> Result<TrainReport> {
    supervised_report(model, split, sgd, Condition::Teacher)
}

/// Cyclical distillation. The teacher is only read; its softened outputs on the unlabeled
/// pool are computed once since frozen weights make every cycle's recomputation identical.
pub fn distill_student(
    student: &mut MlpModel,
    teacher: &MlpModel,
    split: &SplitDataset,
    config: &DistillConfig,
) -> Result<TrainReport> {
    config.validate()?;
    check_input(student, &split.labeled)?;
    if teacher.input_dim() != student.input_dim() {
        return Err(Error::Shape(format!(
            "teacher input {} vs student input {}",
            teacher.input_dim(),
            student.input_dim()
        )));
    }
    if teacher.output_dim() != student.output_dim() {
        return Err(Error::Shape(format!(
            "teacher outputs {} classes, student {}",
            teacher.output_dim(),
            student.output_dim()
        )));
    }
    let sgd = &config.sgd;
    if split.unlabeled.rows() == 0 {
        let supervised = SgdConfig {
            epochs: config.cycles * config.labeled_epochs,
            ..sgd.clone()
        };
        let mut report = supervised_report(student, split, &supervised, Condition::Distilled)?;
        report.temperature = Some(config.temperature);
        report
            .warnings
            .push("unlabeled pool is empty; trained without distillation".into());
        return Ok(report);
    }
    if config.labeled_epochs > 0 && split.labeled.rows() == 0 {
        return Err(Error::Empty("labeled set"));
    }
    let teacher_logits = teacher.predict(&split.unlabeled)?;
    let soft = Target::Soft {
        teacher: &teacher_logits,
        t: config.temperature,
        scale_t2: config.scale_t2,
    };
    let labels = Target::Labels(&split.labeled_labels);
    let mut epoch_losses = Vec::new();
    let mut distill_losses = Vec::new();
    let mut lr_trace = Vec::new();
    for cycle in 0..config.cycles {
        let lr = sgd.lr_at(cycle);
        for e in 0..config.labeled_epochs {
            let seed = derive_seed(sgd.seed, &[LABELED_STREAM, cycle as u64, e as u64]);
            epoch_losses.push(run_epoch(student, &split.labeled, &labels, lr, sgd.batch_size, seed)?);
            lr_trace.push(lr);
        }
        for e in 0..config.distill_epochs {
            let seed = derive_seed(sgd.seed, &[DISTILL_STREAM, cycle as u64, e as u64]);
            distill_losses.push(run_epoch(student, &split.unlabeled, &soft, lr, sgd.batch_size, seed)?);
        }
    }
    Ok(TrainReport {
        condition: Condition::Distilled,
        seed: sgd.seed,
        labeled: split.labeled.rows(),
        unlabeled: split.unlabeled.rows(),
        epoch_losses,
        distill_losses,
        lr_trace,
        test_accuracy: test_accuracy(student, split)?,
        temperature: Some(config.temperature),
        sgd: sgd.clone(),
        warnings: Vec::new(),
    })
}

fn test_accuracy(model: &MlpModel, split: &SplitDataset) -> Result<f64> {
    if split.test.rows() == 0 {
        return Ok(0.0);
    }
    accuracy(&model.predict(&split.test)?, &split.test_labels)
}

/// Output of the layer behind `tap` for every row of `features`.
pub fn extract_activations(model: &MlpModel, features: &Matrix, tap: TapPoint) -> Result<Matrix> {
    let layer = model.tap_layer(tap)?;
    let pass = model.forward(features)?;
    Ok(pass.layer_output(layer).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{ClusterModel, ClusterSpec};

    fn two_blobs(per_class: usize, seed: u64) -> (Matrix, Vec<usize>) {
        let spec = ClusterSpec { classes: 2, dim: 4, within_sigma: 0.3, seed: 42, ..ClusterSpec::default() };
        ClusterModel::generate(&spec).unwrap().sample(per_class, seed)
    }

    fn blob_split(seed: u64) -> SplitDataset {
        let (x, y) = two_blobs(60, seed);
        let (tx, ty) = two_blobs(50, seed + 100);
        SplitDataset::from_pool(&x, &y, tx, ty, 100, seed).unwrap()
    }

    #[test]
    fn separable_classes_are_learned() {
        let split = blob_split(1);
        let mut model = MlpModel::classifier(4, &[16, 16], 2, 5);
        let sgd = SgdConfig { epochs: 100, batch_size: 16, ..SgdConfig::default() };
        let report = train_undistilled(&mut model, &split, &sgd).unwrap();
        assert!(report.test_accuracy >= 0.95, "{}", report.test_accuracy);
        assert_eq!(report.epoch_losses.len(), 100);
        assert!(report.lr_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn zero_epochs_leaves_model_untrained() {
        let split = blob_split(2);
        let mut model = MlpModel::classifier(4, &[8], 2, 3);
        let before = model.clone();
        let sgd = SgdConfig { epochs: 0, ..SgdConfig::default() };
        let report = train_undistilled(&mut model, &split, &sgd).unwrap();
        assert_eq!(model, before);
        let expected = accuracy(&before.predict(&split.test).unwrap(), &split.test_labels).unwrap();
        assert_eq!(report.test_accuracy, expected);
    }

    #[test]
    fn training_is_deterministic() {
        let split = blob_split(3);
        let sgd = SgdConfig { epochs: 5, batch_size: 8, ..SgdConfig::default() };
        let mut a = MlpModel::classifier(4, &[8, 8], 2, 1);
        let mut b = a.clone();
        train_undistilled(&mut a, &split, &sgd).unwrap();
        train_undistilled(&mut b, &split, &sgd).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_labeled_set_is_an_error() {
        let split = SplitDataset {
            labeled: Matrix::zeros(0, 4),
            labeled_labels: vec![],
            unlabeled: Matrix::zeros(3, 4),
            test: Matrix::zeros(0, 4),
            test_labels: vec![],
            classes: 2,
            superclass_map: None,
        };
        let mut model = MlpModel::classifier(4, &[8], 2, 0);
        assert!(train_undistilled(&mut model, &split, &SgdConfig::default()).is_err());
    }

    #[test]
    fn identical_teacher_gives_zero_distillation_loss() {
        let (x, y) = two_blobs(60, 4);
        let split = SplitDataset::from_pool(&x, &y, x.clone(), y.clone(), 20, 0).unwrap();
        let teacher = MlpModel::classifier(4, &[8, 8], 2, 11);
        let mut student = teacher.clone();
        let cfg = DistillConfig { labeled_epochs: 0, cycles: 3, ..DistillConfig::default() };
        let report = distill_student(&mut student, &teacher, &split, &cfg).unwrap();
        assert_eq!(report.distill_losses.len(), 3);
        assert!(report.distill_losses.iter().all(|&l| l.abs() < 1e-12));
        assert_eq!(student, teacher);
    }

    #[test]
    fn teacher_is_not_modified() {
        let split = blob_split(5);
        let mut teacher = MlpModel::classifier(4, &[16], 2, 2);
        let sgd = SgdConfig { epochs: 10, batch_size: 16, ..SgdConfig::default() };
        train_teacher(&mut teacher, &split, &sgd).unwrap();
        let frozen = teacher.clone();
        let (x, y) = two_blobs(60, 5);
        let small = SplitDataset::from_pool(&x, &y, split.test.clone(), split.test_labels.clone(), 4, 1).unwrap();
        let mut student = MlpModel::classifier(4, &[8], 2, 7);
        let cfg = DistillConfig { cycles: 4, ..DistillConfig::default() };
        let report = distill_student(&mut student, &teacher, &small, &cfg).unwrap();
        assert_eq!(teacher, frozen);
        assert!(report.distill_losses.iter().all(|&l| l >= 0.0));
        assert_eq!(report.epoch_losses.len(), 4);
    }

    #[test]
    fn empty_unlabeled_pool_falls_back_with_warning() {
        let (x, y) = two_blobs(10, 6);
        let split = SplitDataset::from_pool(&x, &y, x.clone(), y.clone(), 20, 0).unwrap();
        let teacher = MlpModel::classifier(4, &[8], 2, 1);
        let mut a = MlpModel::classifier(4, &[8], 2, 2);
        let mut b = a.clone();
        let cfg = DistillConfig { cycles: 5, ..DistillConfig::default() };
        let report = distill_student(&mut a, &teacher, &split, &cfg).unwrap();
        assert_eq!(report.warnings.len(), 1);
        assert!(report.distill_losses.is_empty());
        let sgd = SgdConfig { epochs: 5, ..cfg.sgd.clone() };
        train_undistilled(&mut b, &split, &sgd).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn activations_match_forward() {
        let model = MlpModel::classifier(4, &[6, 5, 4, 3], 7, 0);
        let x = Matrix::from_rows(&[[0.1, 0.2, 0.3, 0.4], [0.1, 0.2, 0.3, 0.4], [1.0, -1.0, 0.0, 2.0]]).unwrap();
        let pass = model.forward(&x).unwrap();
        let a = extract_activations(&model, &x, TapPoint::A).unwrap();
        assert_eq!(&a, pass.layer_output(0));
        assert_eq!(a.row(0), a.row(1));
        let e = extract_activations(&model, &x, TapPoint::E).unwrap();
        assert_eq!(e.cols(), 7);
        let shallow = MlpModel::classifier(4, &[6], 7, 0);
        assert!(extract_activations(&shallow, &x, TapPoint::C).is_err());
    }
}
