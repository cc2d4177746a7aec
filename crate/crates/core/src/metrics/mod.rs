//! Accuracy, superclass vote correlation, 2D KDE class areas and neighborhood preservation.

mod correlation;
mod kde;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use correlation::{pearson, superclass_correlation, SuperclassCorrelation};
pub use kde::{
    class_area_ratio, class_area_ratios, kde2d, kde2d_on, scott_bandwidth, AreaParams, Bandwidth,
    DensityGrid, Extent, MIN_RESOLUTION, PADDING_BANDWIDTHS,
};

use crate::ann::brute_knn_all;
use crate::error::{invalid, Error, Result};
use crate::matrix::{squared_distance, Matrix};

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    if logits.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} rows for {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Ok(0.0);
    }
    let hits = logits
        .iter_rows()
        .zip(labels)
        .filter(|(row, &l)| argmax(row) == l)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Mean over points of the overlap between their exact k-NN sets in `original` and in
/// `embedded`, divided by `k`.
pub fn neighborhood_preservation(original: &Matrix, embedded: &Matrix, k: usize) -> Result<f64> {
    if original.rows() != embedded.rows() {
        return Err(Error::Shape(format!(
            "{} original rows vs {} embedded rows",
            original.rows(),
            embedded.rows()
        )));
    }
    let n = original.rows();
    if k == 0 || k >= n {
        return Err(invalid(format!("k must lie in 1..{n}, got {k}")));
    }
    let a = brute_knn_all(original, k)?;
    let b = brute_knn_all(embedded, k)?;
    let mut total = 0usize;
    for (na, nb) in a.iter().zip(&b) {
        total += na.iter().filter(|i| nb.contains(i)).count();
    }
    Ok(total as f64 / (n * k) as f64)
}

/// 1-NN classification accuracy of each point against all others (leave-one-out).
pub fn one_nn_accuracy(points: &Matrix, labels: &[usize]) -> Result<f64> {
    if points.rows() != labels.len() {
        return Err(Error::Shape("points and labels differ in length".into()));
    }
    if points.rows() < 2 {
        return Err(invalid("1-NN accuracy needs at least two points"));
    }
    let nn = brute_knn_all(points, 1)?;
    let hits = nn
        .iter()
        .enumerate()
        .filter(|(i, v)| labels[v[0]] == labels[*i])
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Mean silhouette coefficient with Euclidean distances. Points in singleton clusters
/// score 0.
pub fn silhouette_score(points: &Matrix, labels: &[usize]) -> Result<f64> {
    let n = points.rows();
    if n != labels.len() {
        return Err(Error::Shape("points and labels differ in length".into()));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; classes];
    labels.iter().for_each(|&l| sizes[l] += 1);
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(invalid("silhouette needs at least two clusters"));
    }
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = vec![0.0; classes];
        for j in 0..n {
            if j != i {
                sums[labels[j]] += squared_distance(points.row(i), points.row(j)).sqrt();
            }
        }
        let own = labels[i];
        if sizes[own] < 2 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..classes)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

/// Per-run diagnostics. Maps are keyed by tap letter or numeric id so the JSON is ordered.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub correlations: BTreeMap<String, f64>,
    pub area_ratios: BTreeMap<String, BTreeMap<String, f64>>,
    pub convergence_losses: BTreeMap<String, f64>,
    pub preservation: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl MetricsReport {
    pub fn mean_correlation(&self) -> Option<f64> {
        mean(self.correlations.values().copied())
    }

    pub fn mean_area_ratio(&self, tap: &str) -> Option<f64> {
        self.area_ratios.get(tap).and_then(|m| mean(m.values().copied()))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::seq::SliceRandom;
    use rand::Rng as _;

    fn uniform(n: usize, seed: u64) -> Matrix {
        let mut rng = rng_from_seed(seed);
        let rows: Vec<[f64; 2]> = (0..n)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn accuracy_cases() {
        let logits = Matrix::from_rows(&[
            [2.0, 1.0, 0.0],
            [0.0, 3.0, 1.0],
            [1.0, 1.0, 0.0],
            [0.0, 0.0, 5.0],
        ])
        .unwrap();
        assert_eq!(accuracy(&logits, &[0, 1, 0, 2]).unwrap(), 1.0);
        assert_eq!(accuracy(&logits, &[1, 0, 2, 0]).unwrap(), 0.0);
        // row 2 is a tie resolved to class 0
        assert_eq!(accuracy(&logits, &[0, 1, 1, 2]).unwrap(), 0.75);
        assert!(accuracy(&logits, &[0]).is_err());
    }

    #[test]
    fn preservation_identity_and_rotation() {
        let pts = uniform(200, 1);
        assert_eq!(neighborhood_preservation(&pts, &pts, 10).unwrap(), 1.0);
        let (s, c) = 0.7f64.sin_cos();
        let mut rot = pts.clone();
        for r in 0..pts.rows() {
            let (x, y) = (pts[(r, 0)], pts[(r, 1)]);
            rot[(r, 0)] = c * x - s * y + 3.0;
            rot[(r, 1)] = s * x + c * y - 1.0;
        }
        assert_eq!(neighborhood_preservation(&pts, &rot, 10).unwrap(), 1.0);
        assert!(neighborhood_preservation(&pts, &pts, 200).is_err());
    }

    #[test]
    fn preservation_of_permuted_coords_is_chance() {
        let n = 1000;
        let k = 10;
        let pts = uniform(n, 2);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng_from_seed(3));
        let shuffled = pts.select_rows(&order);
        let v = neighborhood_preservation(&pts, &shuffled, k).unwrap();
        let chance = k as f64 / (n - 1) as f64;
        assert!((v - chance).abs() < 0.01, "{v} vs {chance}");
    }

    #[test]
    fn one_nn_on_separated_groups() {
        let pts = Matrix::from_rows(&[[0.0, 0.0], [0.1, 0.0], [5.0, 5.0], [5.1, 5.0]]).unwrap();
        assert_eq!(one_nn_accuracy(&pts, &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(one_nn_accuracy(&pts, &[0, 1, 0, 1]).unwrap(), 0.0);
    }

    #[test]
    fn silhouette_of_tight_far_clusters_is_near_one() {
        let pts = Matrix::from_rows(&[[0.0, 0.0], [0.0, 0.1], [10.0, 0.0], [10.0, 0.1]]).unwrap();
        let s = silhouette_score(&pts, &[0, 0, 1, 1]).unwrap();
        assert!(s > 0.98);
        // a = 0.1, b = mean(10, sqrt(100.01)); hand value for the first point
        let b = (10.0 + 100.01f64.sqrt()) / 2.0;
        let expected = (b - 0.1) / b;
        assert!((s - expected).abs() < 1e-12);
        assert!(silhouette_score(&pts, &[0, 0, 0, 0]).is_err());
    }

    #[test]
    fn report_roundtrip() {
        let mut r = MetricsReport {
            accuracy: 0.5,
            ..Default::default()
        };
        r.correlations.insert("0".into(), 0.25);
        r.correlations.insert("1".into(), 0.75);
        r.area_ratios
            .entry("E".into())
            .or_default()
            .insert("3".into(), 0.1);
        let json = serde_json::to_string(&r).unwrap();
        let back: MetricsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        assert_eq!(r.mean_correlation(), Some(0.5));
        assert_eq!(r.mean_area_ratio("E"), Some(0.1));
        assert_eq!(r.mean_area_ratio("A"), None);
    }
}
