//! Parametric 2D embedding with a Siamese encoder trained on hinge triplet loss.
//!
//! Each epoch draws one triplet per anchor: the positive uniformly from the anchor's
//! approximate k nearest neighbours, the negative uniformly from everything else. All three
//! legs of a batch are stacked into one matrix and pushed through the single encoder, so
//! one backward pass accumulates the three chain-rule paths into the shared weights.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::ann::{AnnForest, AnnParams};
use crate::error::{invalid, Error, Result};
use crate::matrix::{squared_distance, Matrix};
use crate::nn::{Adam, MlpModel, Momentum};
use crate::rng::{derive_seed, rng_from_seed, Rng};

pub const EMBED_DIM: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TripletConfig {
    pub k_neighbors: usize,
    pub margin: f64,
    /// Hidden tanh widths; the output layer is linear with two units.
    pub hidden: Vec<usize>,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub lr: f64,
    /// Heavy-ball coefficient; only used by [`Optimizer::Momentum`].
    pub momentum: f64,
    pub patience: usize,
    pub min_delta: f64,
    pub seed: u64,
    pub ann: AnnParams,
}

impl Default for TripletConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 10,
            margin: 1.0,
            hidden: vec![128, 128],
            max_epochs: 100,
            batch_size: 128,
            optimizer: Optimizer::Adam,
            lr: 0.001,
            momentum: 0.9,
            patience: 10,
            min_delta: 1e-4,
            seed: 0,
            ann: AnnParams::default(),
        }
    }
}

impl TripletConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(invalid("margin must be positive"));
        }
        if self.k_neighbors == 0 {
            return Err(invalid("k_neighbors must be at least 1"));
        }
        if self.batch_size == 0 || self.patience == 0 {
            return Err(invalid("batch_size and patience must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid("lr must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Momentum,
    Adam,
}

enum OptimizerState {
    Momentum(Momentum),
    Adam(Adam),
}

impl OptimizerState {
    fn step(&mut self, model: &mut MlpModel, grads: &crate::nn::Gradients, lr: f64) -> Result<()> {
        match self {
            OptimizerState::Momentum(m) => m.step(model, grads, lr),
            OptimizerState::Adam(a) => a.step(model, grads, lr),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

/// The k retrieved neighbours of every point, excluding the point itself.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborTable {
    neighbors: Vec<Vec<usize>>,
}

impl NeighborTable {
    pub fn from_forest(forest: &AnnForest<'_>, k: usize) -> Result<Self> {
        let n = forest.points().rows();
        if n < k + 2 {
            return Err(invalid(format!("{n} points cannot supply k = {k} neighbours plus a negative")));
        }
        let neighbors = (0..n)
            .map(|i| Ok(forest.knn(i, k)?.into_iter().map(|nb| nb.index).collect()))
            .collect::<Result<_>>()?;
        Ok(Self { neighbors })
    }

    pub fn from_lists(neighbors: Vec<Vec<usize>>) -> Result<Self> {
        let n = neighbors.len();
        for (i, list) in neighbors.iter().enumerate() {
            if list.is_empty() || list.len() + 2 > n || list.iter().any(|&j| j == i || j >= n) {
                return Err(invalid(format!("invalid neighbour list for point {i}")));
            }
        }
        Ok(Self { neighbors })
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }
}

/// Positive uniform from the anchor's neighbour list, negative uniform from the rest.
pub fn sample_triplet(table: &NeighborTable, anchor: usize, rng: &mut Rng) -> Result<Triplet> {
    let n = table.len();
    if anchor >= n {
        return Err(invalid(format!("anchor {anchor} out of range")));
    }
    let near = table.neighbors(anchor);
    let positive = near[rng.random_range(0..near.len())];
    let negative = loop {
        let c = rng.random_range(0..n);
        if c != anchor && !near.contains(&c) {
            break c;
        }
    };
    Ok(Triplet {
        anchor,
        positive,
        negative,
    })
}

/// `max(0, |a - p|² - |a - n|² + margin)`.
pub fn triplet_loss(a: &[f64], p: &[f64], n: &[f64], margin: f64) -> f64 {
    (squared_distance(a, p) - squared_distance(a, n) + margin).max(0.0)
}

/// Mean hinge loss over a stacked batch `[anchors; positives; negatives]` (3B rows) and its
/// gradient w.r.t. every stacked row.
pub fn triplet_batch_loss(stacked: &Matrix, margin: f64) -> Result<(f64, Matrix)> {
    if stacked.rows() % 3 != 0 || stacked.rows() == 0 {
        return Err(Error::Shape(format!("{} rows is not three equal legs", stacked.rows())));
    }
    let b = stacked.rows() / 3;
    let mut grad = Matrix::zeros(stacked.rows(), stacked.cols());
    let mut total = 0.0;
    for i in 0..b {
        let (a, p, n) = (stacked.row(i), stacked.row(b + i), stacked.row(2 * b + i));
        let l = triplet_loss(a, p, n, margin);
        total += l;
        if l > 0.0 {
            let s = 2.0 / b as f64;
            for c in 0..stacked.cols() {
                let (ac, pc, nc) = (a[c], p[c], n[c]);
                grad[(i, c)] = s * (nc - pc);
                grad[(b + i, c)] = s * (pc - ac);
                grad[(2 * b + i, c)] = s * (ac - nc);
            }
        }
    }
    Ok((total / b as f64, grad))
}

/// Centers by the column means and divides by one global standard deviation, which keeps
/// the input geometry up to scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: f64,
}

impl Standardizer {
    pub fn fit(points: &Matrix) -> Self {
        let mean = points.column_means();
        let count = (points.rows() * points.cols()).max(1) as f64;
        let var: f64 = points
            .iter_rows()
            .map(|r| r.iter().zip(&mean).map(|(x, m)| (x - m) * (x - m)).sum::<f64>())
            .sum::<f64>()
            / count;
        let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        Self { mean, scale }
    }

    pub fn apply(&self, points: &Matrix) -> Result<Matrix> {
        if points.cols() != self.mean.len() {
            return Err(Error::Shape(format!(
                "expected {} columns, got {}",
                self.mean.len(),
                points.cols()
            )));
        }
        let mut out = points.clone();
        for r in 0..out.rows() {
            for (x, m) in out.row_mut(r).iter_mut().zip(&self.mean) {
                *x = (*x - m) / self.scale;
            }
        }
        Ok(out)
    }
}

/// Trained encoder together with the input standardization it was fitted on.
#[derive(Clone, Debug, PartialEq)]
pub struct TripletEncoder {
    pub model: MlpModel,
    pub standardizer: Standardizer,
}

impl TripletEncoder {
    pub fn transform(&self, points: &Matrix) -> Result<Matrix> {
        self.model.predict(&self.standardizer.apply(points)?)
    }
}

/// Maps new points through a fitted encoder.
pub fn transform(encoder: &TripletEncoder, points: &Matrix) -> Result<Matrix> {
    encoder.transform(points)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingResult {
    pub coords: Matrix,
    pub encoder: TripletEncoder,
    /// Mean epoch loss over the final `patience` epochs (fewer if the run was shorter).
    pub converged_loss: f64,
    pub loss_trace: Vec<f64>,
    pub epochs_ran: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSummary {
    pub converged_loss: f64,
    pub epochs_ran: usize,
    pub config: TripletConfig,
    pub seed: u64,
}

impl EmbeddingResult {
    pub fn summary(&self, config: &TripletConfig) -> EmbeddingSummary {
        EmbeddingSummary {
            converged_loss: self.converged_loss,
            epochs_ran: self.epochs_ran,
            config: config.clone(),
            seed: config.seed,
        }
    }
}

/// Trains a fresh encoder on `points` and embeds them.
pub fn fit(points: &Matrix, config: &TripletConfig) -> Result<EmbeddingResult> {
    config.validate()?;
    let n = points.rows();
    if n < config.k_neighbors + 2 {
        return Err(invalid(format!(
            "{n} points is fewer than k_neighbors + 2 = {}",
            config.k_neighbors + 2
        )));
    }
    if !points.is_finite() {
        return Err(Error::NonFinite("embedding input".into()));
    }
    let standardizer = Standardizer::fit(points);
    let x = standardizer.apply(points)?;
    let ann = AnnParams {
        seed: derive_seed(config.seed, &[0xa1]),
        ..config.ann.clone()
    };
    let forest = AnnForest::build(&x, ann)?;
    let table = NeighborTable::from_forest(&forest, config.k_neighbors)?;
    let mut model = MlpModel::encoder(x.cols(), &config.hidden, EMBED_DIM, derive_seed(config.seed, &[0xe1]));
    let mut optimizer = match config.optimizer {
        Optimizer::Momentum => OptimizerState::Momentum(Momentum::new(&model, config.momentum)?),
        Optimizer::Adam => OptimizerState::Adam(Adam::new(&model)),
    };

    let mut loss_trace = Vec::new();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for epoch in 0..config.max_epochs {
        let mut rng = rng_from_seed(derive_seed(config.seed, &[0x7e, epoch as u64]));
        let mut anchors: Vec<usize> = (0..n).collect();
        anchors.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in anchors.chunks(config.batch_size) {
            let mut rows = Vec::with_capacity(3 * chunk.len());
            let triplets = chunk
                .iter()
                .map(|&a| sample_triplet(&table, a, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            rows.extend(triplets.iter().map(|t| t.anchor));
            rows.extend(triplets.iter().map(|t| t.positive));
            rows.extend(triplets.iter().map(|t| t.negative));
            let batch = x.select_rows(&rows);
            let pass = model.forward(&batch)?;
            let (loss, grad) = triplet_batch_loss(pass.logits(), config.margin)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "triplet loss at epoch {epoch} (batch of {})",
                    chunk.len()
                )));
            }
            let grads = model.backward(&batch, &pass, &grad)?;
            optimizer.step(&mut model, &grads, config.lr)?;
            total += loss * chunk.len() as f64;
        }
        let epoch_loss = total / n as f64;
        loss_trace.push(epoch_loss);
        if epoch_loss < best - config.min_delta {
            best = epoch_loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    let tail = &loss_trace[loss_trace.len().saturating_sub(config.patience)..];
    let converged_loss = if tail.is_empty() {
        0.0
    } else {
        tail.iter().sum::<f64>() / tail.len() as f64
    };
    let encoder = TripletEncoder { model, standardizer };
    let coords = encoder.transform(points)?;
    if !coords.is_finite() {
        return Err(Error::NonFinite("embedding coordinates".into()));
    }
    Ok(EmbeddingResult {
        coords,
        encoder,
        converged_loss,
        epochs_ran: loss_trace.len(),
        loss_trace,
    })
}

/// `x,y,label` rows with a header.
pub fn embedding_to_csv(coords: &Matrix, labels: &[usize]) -> Result<Vec<u8>> {
    if coords.cols() != EMBED_DIM || coords.rows() != labels.len() {
        return Err(Error::Shape("coordinates must be N x 2 with N labels".into()));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x", "y", "label"])?;
    for (row, label) in coords.iter_rows().zip(labels) {
        w.write_record([row[0].to_string(), row[1].to_string(), label.to_string()])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn parse_embedding_csv(r: impl std::io::Read) -> Result<(Matrix, Vec<usize>)> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 3 {
            return Err(Error::Format("expected x,y,label".into()));
        }
        let bad = || Error::Format(format!("bad embedding row {:?}", rec));
        values.push(rec[0].parse::<f64>().map_err(|_| bad())?);
        values.push(rec[1].parse::<f64>().map_err(|_| bad())?);
        labels.push(rec[2].parse::<usize>().map_err(|_| bad())?);
    }
    Ok((Matrix::from_vec(labels.len(), EMBED_DIM, values)?, labels))
}
