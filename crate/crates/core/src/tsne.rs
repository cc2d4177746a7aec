//! Exact t-SNE: per-point bandwidths calibrated to a perplexity, symmetrized joint
//! affinities, Student-t output kernel and gradient descent with momentum, gains and early
//! exaggeration.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matrix::{squared_distance, Matrix};
use crate::rng::{derive_seed, rng_from_seed};

const ENTROPY_TOLERANCE: f64 = 1e-5;
/// Bisection stops once the entropy is this close; leaves headroom below the tolerance.
const ENTROPY_STOP: f64 = 1e-7;
const MAX_BISECTIONS: usize = 50;
const MAX_BRACKET_STEPS: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            seed: 0,
        }
    }
}

/// Entropy (nats) and normalized conditional distribution of one row at bandwidth `sigma`.
/// `sq` holds the squared distances to the other points.
fn row_distribution(sq: &[f64], sigma: f64) -> (f64, Vec<f64>) {
    let min = sq.iter().copied().fold(f64::INFINITY, f64::min);
    let beta = 1.0 / (2.0 * sigma * sigma);
    let mut p: Vec<f64> = sq.iter().map(|&d| (-(d - min) * beta).exp()).collect();
    let z: f64 = p.iter().sum();
    let mut weighted = 0.0;
    for (pi, &d) in p.iter_mut().zip(sq) {
        *pi /= z;
        weighted += *pi * (d - min) * beta;
    }
    (z.ln() + weighted, p)
}

fn off_diagonal_squares(distances: &Matrix, i: usize) -> Vec<f64> {
    distances
        .row(i)
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, d)| d * d)
        .collect()
}

/// Per-row Gaussian bandwidths whose conditional distributions have entropy `ln(perplexity)`.
///
/// The search runs on `ln(sigma)` with a bracket seeded from the row's own distance range,
/// so scaling every distance by `s` scales every sigma by `s`.
pub fn calibrate_sigmas(distances: &Matrix, perplexity: f64) -> Result<Vec<f64>> {
    let n = distances.rows();
    if distances.cols() != n {
        return Err(Error::Shape("distance matrix must be square".into()));
    }
    if n < 2 {
        return Err(invalid("at least two points are required"));
    }
    if !(perplexity > 1.0 && perplexity <= (n - 1) as f64) {
        return Err(invalid(format!(
            "perplexity {perplexity} must lie in (1, {}]",
            n - 1
        )));
    }
    let target = perplexity.ln();
    (0..n)
        .map(|i| {
            let sq = off_diagonal_squares(distances, i);
            calibrate_row(&sq, target).ok_or(Error::Calibration {
                row: i,
                entropy: row_distribution(&sq, 1.0).0,
                target,
            })
            .and_then(|(sigma, h)| {
                if (h - target).abs() > ENTROPY_TOLERANCE {
                    Err(Error::Calibration { row: i, entropy: h, target })
                } else {
                    Ok(sigma)
                }
            })
        })
        .collect()
}

/// Returns `(sigma, entropy)` or `None` when no bracket can be found.
fn calibrate_row(sq: &[f64], target: f64) -> Option<(f64, f64)> {
    let mut sorted: Vec<f64> = sq.iter().copied().filter(|&d| d > 0.0).collect();
    if sorted.is_empty() {
        // all neighbours coincide: every sigma gives the uniform distribution
        let (h, _) = row_distribution(sq, 1.0);
        return Some((1.0, h));
    }
    sorted.sort_by(f64::total_cmp);
    let entropy = |log_sigma: f64| row_distribution(sq, log_sigma.exp()).0;
    let mut lo = 0.5 * sorted[0].ln();
    let mut hi = 0.5 * sorted[sorted.len() - 1].ln();
    let step = std::f64::consts::LN_2;
    let mut steps = 0;
    let mut h_lo = entropy(lo);
    while h_lo > target {
        lo -= step;
        h_lo = entropy(lo);
        steps += 1;
        if steps > MAX_BRACKET_STEPS {
            return None;
        }
    }
    let mut h_hi = entropy(hi);
    while h_hi < target {
        hi += step;
        h_hi = entropy(hi);
        steps += 1;
        if steps > MAX_BRACKET_STEPS {
            return None;
        }
    }
    if (h_lo - target).abs() < ENTROPY_STOP {
        return Some((lo.exp(), h_lo));
    }
    if (h_hi - target).abs() < ENTROPY_STOP {
        return Some((hi.exp(), h_hi));
    }
    let mut best = (hi, h_hi);
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let h = entropy(mid);
        if (h - target).abs() < (best.1 - target).abs() {
            best = (mid, h);
        }
        if (h - target).abs() < ENTROPY_STOP {
            break;
        }
        if h > target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some((best.0.exp(), best.1))
}

/// Euclidean distance matrix.
pub fn pairwise_distances(points: &Matrix) -> Matrix {
    let n = points.rows();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = squared_distance(points.row(i), points.row(j)).sqrt();
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// `p_ij = (p_{j|i} + p_{i|j}) / 2N` with calibrated conditionals; zero diagonal.
pub fn joint_probabilities(points: &Matrix, perplexity: f64) -> Result<Matrix> {
    let n = points.rows();
    let distances = pairwise_distances(points);
    let sigmas = calibrate_sigmas(&distances, perplexity)?;
    let mut cond = Matrix::zeros(n, n);
    for i in 0..n {
        let sq = off_diagonal_squares(&distances, i);
        let (_, p) = row_distribution(&sq, sigmas[i]);
        let mut k = 0;
        for j in 0..n {
            if j != i {
                cond[(i, j)] = p[k];
                k += 1;
            }
        }
    }
    let mut joint = Matrix::zeros(n, n);
    let denom = 2.0 * n as f64;
    for i in 0..n {
        for j in 0..n {
            joint[(i, j)] = (cond[(i, j)] + cond[(j, i)]) / denom;
        }
    }
    Ok(joint)
}

/// Affinities folded onto the upper triangle: `s_ij = p_ij + p_ji` for `i < j`.
struct PackedAffinities {
    n: usize,
    sums: Vec<f64>,
    /// `sum_{i != j} p_ij ln p_ij`
    neg_entropy: f64,
}

impl PackedAffinities {
    fn new(p: &Matrix) -> Self {
        let n = p.rows();
        let pd = p.data();
        let mut sums = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                sums.push(pd[i * n + j] + pd[j * n + i]);
            }
        }
        let neg_entropy = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| pd[i * n + j]))
            .filter(|&v| v > 0.0)
            .map(|v| v * v.ln())
            .sum();
        Self { n, sums, neg_entropy }
    }

    /// Gradient of `KL(scale * P || Q)` and, if asked, `KL(P || Q)` itself.
    fn step(&self, scale: f64, y: &Matrix, want_kl: bool) -> (Option<f64>, Matrix) {
        let (n, d) = (self.n, y.cols());
        let yd = y.data();
        let mut w = Vec::with_capacity(self.sums.len());
        let mut z = 0.0;
        for i in 0..n {
            let yi = &yd[i * d..(i + 1) * d];
            for j in (i + 1)..n {
                let v = 1.0 / (1.0 + squared_distance(yi, &yd[j * d..(j + 1) * d]));
                w.push(v);
                z += 2.0 * v;
            }
        }
        let mut grad = vec![0.0; n * d];
        let mut cross = 0.0;
        let mut k = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                let (wij, sij) = (w[k], self.sums[k]);
                k += 1;
                if want_kl && sij > 0.0 {
                    cross += sij * wij.ln();
                }
                // 2 (p_ij + p_ji - q_ij - q_ji) w_ij, exact for any P summing to one
                let coef = 2.0 * (scale * sij - 2.0 * wij / z) * wij;
                for c in 0..d {
                    let diff = coef * (yd[i * d + c] - yd[j * d + c]);
                    grad[i * d + c] += diff;
                    grad[j * d + c] -= diff;
                }
            }
        }
        let total: f64 = self.sums.iter().sum();
        // sum p ln q = sum s_ij (ln w_ij - ln z)
        let kl = want_kl.then(|| self.neg_entropy - (cross - total * z.ln()));
        (kl, Matrix::from_vec(n, d, grad).expect("n x d gradient"))
    }
}

/// `KL(P || Q)` for the Student-t affinities of `y`, and its gradient
/// `4 sum_j (p_ij - q_ij)(y_i - y_j) / (1 + |y_i - y_j|²)` (for symmetric `P`).
pub fn kl_and_gradient(p: &Matrix, y: &Matrix) -> Result<(f64, Matrix)> {
    let n = y.rows();
    if p.shape() != (n, n) {
        return Err(Error::Shape(format!("P is {:?} for {n} points", p.shape())));
    }
    let (kl, grad) = PackedAffinities::new(p).step(1.0, y, true);
    Ok((kl.expect("requested"), grad))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TsneResult {
    pub coords: Matrix,
    /// `(iteration, KL(P || Q))` at the start of every 10th iteration and of each of the
    /// final 100.
    pub kl_trace: Vec<(usize, f64)>,
}

pub fn fit_tsne(points: &Matrix, config: &TsneConfig) -> Result<TsneResult> {
    let n = points.rows();
    if n < 4 {
        return Err(invalid(format!("t-SNE needs at least 4 points, got {n}")));
    }
    if !points.is_finite() {
        return Err(Error::NonFinite("t-SNE input".into()));
    }
    if !(config.learning_rate > 0.0) {
        return Err(invalid("learning_rate must be positive"));
    }
    if !(config.exaggeration >= 1.0) {
        return Err(invalid("exaggeration must be at least 1"));
    }
    let packed = PackedAffinities::new(&joint_probabilities(points, config.perplexity)?);

    let mut rng = rng_from_seed(derive_seed(config.seed, &[0x75]));
    let normal = Normal::new(0.0, 1e-2).expect("valid normal");
    let mut y = Matrix::zeros(n, 2);
    y.data_mut().iter_mut().for_each(|v| *v = normal.sample(&mut rng));
    let mut update = Matrix::zeros(n, 2);
    let mut gains = Matrix::from_vec(n, 2, vec![1.0; 2 * n])?;
    let mut kl_trace = Vec::new();

    for it in 0..config.iterations {
        let scale = if it < config.exaggeration_iters { config.exaggeration } else { 1.0 };
        let want_kl = it % 10 == 0 || it + 100 >= config.iterations;
        let (kl, grad) = packed.step(scale, &y, want_kl);
        if let Some(kl) = kl {
            kl_trace.push((it, kl));
        }
        let momentum = if it < config.momentum_switch {
            config.initial_momentum
        } else {
            config.final_momentum
        };
        for k in 0..2 * n {
            let g = grad.data()[k];
            let u = update.data()[k];
            let gain = &mut gains.data_mut()[k];
            *gain = if (g > 0.0) != (u > 0.0) { *gain + 0.2 } else { *gain * 0.8 };
            *gain = gain.max(0.01);
            let step = momentum * u - config.learning_rate * *gain * g;
            update.data_mut()[k] = step;
            y.data_mut()[k] += step;
        }
        let means = y.column_means();
        for r in 0..n {
            y[(r, 0)] -= means[0];
            y[(r, 1)] -= means[1];
        }
        if !y.is_finite() {
            return Err(Error::NonFinite(format!("t-SNE coordinates at iteration {it}")));
        }
    }
    Ok(TsneResult { coords: y, kl_trace })
}
