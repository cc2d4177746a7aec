use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matrix::Matrix;
use crate::rng::rng_from_seed;

/// Row indices of a balanced labeled subset and the unlabeled remainder, both ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalancedSubset {
    pub labeled: Vec<usize>,
    pub unlabeled: Vec<usize>,
}

/// Number of classes implied by `labels` (max label + 1). Every class in between must occur.
pub fn class_count(labels: &[usize]) -> Result<usize> {
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    if classes == 0 {
        return Err(Error::Empty("labels"));
    }
    let mut seen = vec![false; classes];
    labels.iter().for_each(|&l| seen[l] = true);
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(invalid(format!("class {missing} has no samples")));
    }
    Ok(classes)
}

/// Draws `budget / classes` rows of every class without replacement.
pub fn balanced_subset(labels: &[usize], budget: usize, seed: u64) -> Result<BalancedSubset> {
    let classes = class_count(labels)?;
    if budget % classes != 0 {
        return Err(invalid(format!(
            "budget {budget} is not divisible by {classes} classes"
        )));
    }
    let per_class = budget / classes;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = rng_from_seed(seed);
    let mut take = vec![false; labels.len()];
    for (c, rows) in by_class.iter_mut().enumerate() {
        if rows.len() < per_class {
            return Err(invalid(format!(
                "class {c} has {} samples, {per_class} requested",
                rows.len()
            )));
        }
        rows.shuffle(&mut rng);
        rows[..per_class].iter().for_each(|&i| take[i] = true);
    }
    let (labeled, unlabeled): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| take[i]);
    Ok(BalancedSubset { labeled, unlabeled })
}

/// Labeled, unlabeled and test partitions for one label budget.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitDataset {
    pub labeled: Matrix,
    pub labeled_labels: Vec<usize>,
    pub unlabeled: Matrix,
    pub test: Matrix,
    pub test_labels: Vec<usize>,
    pub classes: usize,
    pub superclass_map: Option<Vec<usize>>,
}

impl SplitDataset {
    /// Splits a training pool by [`balanced_subset`]; the test set is passed through.
    pub fn from_pool(
        features: &Matrix,
        labels: &[usize],
        test: Matrix,
        test_labels: Vec<usize>,
        budget: usize,
        seed: u64,
    ) -> Result<Self> {
        if features.rows() != labels.len() || test.rows() != test_labels.len() {
            return Err(Error::Shape("feature rows and labels differ".into()));
        }
        if test.cols() != features.cols() {
            return Err(Error::Shape(format!(
                "training features have {} columns, test features {}",
                features.cols(),
                test.cols()
            )));
        }
        let subset = balanced_subset(labels, budget, seed)?;
        Ok(Self {
            labeled: features.select_rows(&subset.labeled),
            labeled_labels: subset.labeled.iter().map(|&i| labels[i]).collect(),
            unlabeled: features.select_rows(&subset.unlabeled),
            test,
            test_labels,
            classes: class_count(labels)?,
            superclass_map: None,
        })
    }

    pub fn with_superclasses(mut self, map: Vec<usize>) -> Self {
        self.superclass_map = Some(map);
        self
    }

    pub fn input_dim(&self) -> usize {
        self.labeled.cols()
    }
}
