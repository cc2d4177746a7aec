use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;

/// Mean squared Pearson correlation between vote columns of classes sharing a superclass.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SuperclassCorrelation {
    /// superclass id -> mean r² over its valid class pairs
    pub per_superclass: BTreeMap<usize, f64>,
    /// Class pairs skipped because one of the columns has zero variance.
    pub skipped_pairs: Vec<(usize, usize)>,
}

impl SuperclassCorrelation {
    /// Mean of the per-superclass values, `None` when every pair was skipped.
    pub fn mean(&self) -> Option<f64> {
        (!self.per_superclass.is_empty()).then(|| {
            self.per_superclass.values().sum::<f64>() / self.per_superclass.len() as f64
        })
    }
}

/// Pearson correlation, `None` if either input has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// `votes` is samples x classes (raw logits); `superclass_map[class]` gives the superclass.
pub fn superclass_correlation(votes: &Matrix, superclass_map: &[usize]) -> Result<SuperclassCorrelation> {
    if votes.cols() != superclass_map.len() {
        return Err(Error::Shape(format!(
            "{} vote columns but {} classes in the superclass map",
            votes.cols(),
            superclass_map.len()
        )));
    }
    if votes.rows() < 2 {
        return Err(invalid("correlation needs at least two samples"));
    }
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (class, &s) in superclass_map.iter().enumerate() {
        members.entry(s).or_default().push(class);
    }
    if let Some((s, m)) = members.iter().find(|(_, m)| m.len() < 2) {
        return Err(invalid(format!(
            "superclass {s} has {} label(s); at least 2 are needed",
            m.len()
        )));
    }
    let columns: Vec<Vec<f64>> = (0..votes.cols()).map(|j| votes.column(j)).collect();
    let mut report = SuperclassCorrelation::default();
    for (s, classes) in members {
        let mut sum = 0.0;
        let mut count = 0;
        for (x, &i) in classes.iter().enumerate() {
            for &j in &classes[x + 1..] {
                match pearson(&columns[i], &columns[j]) {
                    Some(r) => {
                        sum += r * r;
                        count += 1;
                    }
                    None => report.skipped_pairs.push((i, j)),
                }
            }
        }
        if count > 0 {
            report.per_superclass.insert(s, sum / count as f64);
        }
    }
    Ok(report)
}
