//! Synthetic benchmarks: 2D uniform noise lifted to 15 dimensions, and isotropic Gaussian
//! class clusters with a geometric superclass grouping.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::matrix::{squared_distance, Matrix};
use crate::rng::{derive_seed, rng_from_seed, Rng};

pub const LIFT_DIM: usize = 15;

/// Fixed 2D -> 15D feature map:
/// `[x, y, x+y, x-y, x², y², sin(x+y), eˣ, x³, y³, x·y, cos(x-y), eʸ, sin x, cos y]`.
pub fn lift_15d(x: f64, y: f64) -> [f64; LIFT_DIM] {
    [
        x,
        y,
        x + y,
        x - y,
        x * x,
        y * y,
        (x + y).sin(),
        x.exp(),
        x * x * x,
        y * y * y,
        x * y,
        (x - y).cos(),
        y.exp(),
        x.sin(),
        y.cos(),
    ]
}

/// Quadrant of a 2D point: 0 = (+,+), 1 = (-,+), 2 = (-,-), 3 = (+,-); zero counts as positive.
pub fn quadrant(x: f64, y: f64) -> usize {
    match (x >= 0.0, y >= 0.0) {
        (true, true) => 0,
        (false, true) => 1,
        (false, false) => 2,
        (true, false) => 3,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseLiftDataset {
    /// `n x 2`, uniform in `[-1, 1]²`.
    pub base: Matrix,
    /// `n x 15`, row `i` is `lift_15d(base[i])`.
    pub lifted: Matrix,
    pub quadrants: Vec<usize>,
}

pub fn gen_noise_dataset(n: usize, seed: u64) -> Result<NoiseLiftDataset> {
    if n < 100 {
        return Err(invalid(format!("noise dataset needs at least 100 points, got {n}")));
    }
    let mut rng = rng_from_seed(derive_seed(seed, &[0x4e01]));
    let mut base = Matrix::zeros(n, 2);
    let mut lifted = Matrix::zeros(n, LIFT_DIM);
    let mut quadrants = Vec::with_capacity(n);
    for i in 0..n {
        let x = rng.random_range(-1.0..=1.0);
        let y = rng.random_range(-1.0..=1.0);
        base.row_mut(i).copy_from_slice(&[x, y]);
        lifted.row_mut(i).copy_from_slice(&lift_15d(x, y));
        quadrants.push(quadrant(x, y));
    }
    Ok(NoiseLiftDataset {
        base,
        lifted,
        quadrants,
    })
}

/// Parameters of the Gaussian-cluster benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub classes: usize,
    pub dim: usize,
    pub within_sigma: f64,
    /// Radius of the sphere the class centers lie on.
    pub radius: f64,
    /// How far class directions scatter around their superclass anchor; smaller values
    /// make siblings closer.
    pub superclass_spread: f64,
    pub seed: u64,
}

/// Classes per superclass.
pub const SUPERCLASS_SIZE: usize = 5;

impl Default for ClusterSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            dim: 32,
            within_sigma: DEFAULT_WITHIN_SIGMA,
            radius: 3.0,
            superclass_spread: 1.0,
            seed: 2024,
        }
    }
}

/// Gives a nearest-center (Bayes) accuracy of about 0.9 for the default spec.
pub const DEFAULT_WITHIN_SIGMA: f64 = 0.75;

/// Class centers plus the superclass grouping they induce.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub centers: Matrix,
    pub within_sigma: f64,
    /// `superclass_map[class]` = superclass id.
    pub superclass_map: Vec<usize>,
}

impl ClusterModel {
    /// Draws centers on the sphere of radius `spec.radius`. Directions scatter around
    /// `ceil(classes / 5)` anchor directions; superclasses are then formed purely from
    /// center proximity.
    pub fn generate(spec: &ClusterSpec) -> Result<Self> {
        if spec.classes < 2 {
            return Err(invalid("at least two classes are required"));
        }
        if spec.dim == 0 || !(spec.within_sigma >= 0.0) {
            return Err(invalid("dim must be positive and within_sigma non-negative"));
        }
        let mut rng = rng_from_seed(derive_seed(spec.seed, &[0xc3]));
        let n_super = spec.classes.div_ceil(SUPERCLASS_SIZE);
        let anchors: Vec<Vec<f64>> = (0..n_super)
            .map(|_| unit_gaussian(spec.dim, &mut rng))
            .collect();
        let scale = spec.superclass_spread / (spec.dim as f64).sqrt();
        let mut centers = Matrix::zeros(spec.classes, spec.dim);
        for c in 0..spec.classes {
            let anchor = &anchors[c % n_super];
            let mut dir: Vec<f64> = anchor
                .iter()
                .map(|a| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    a + scale * z
                })
                .collect();
            normalize(&mut dir);
            for (dst, d) in centers.row_mut(c).iter_mut().zip(&dir) {
                *dst = spec.radius * d;
            }
        }
        let superclass_map = group_by_proximity(&centers, SUPERCLASS_SIZE);
        let model = Self {
            centers,
            within_sigma: spec.within_sigma,
            superclass_map,
        };
        if let Some((intra, inter)) = model.superclass_distances() {
            if intra >= inter {
                return Err(invalid(format!(
                    "superclass grouping failed: intra {intra:.3} >= inter {inter:.3}"
                )));
            }
        }
        Ok(model)
    }

    pub fn classes(&self) -> usize {
        self.centers.rows()
    }

    pub fn dim(&self) -> usize {
        self.centers.cols()
    }

    /// `per_class` samples of every class, class-major.
    pub fn sample(&self, per_class: usize, seed: u64) -> (Matrix, Vec<usize>) {
        let mut rng = rng_from_seed(derive_seed(seed, &[0x5a]));
        let mut features = Matrix::zeros(self.classes() * per_class, self.dim());
        let mut labels = Vec::with_capacity(self.classes() * per_class);
        let mut row = 0;
        for c in 0..self.classes() {
            for _ in 0..per_class {
                let center = self.centers.row(c);
                for (dst, mu) in features.row_mut(row).iter_mut().zip(center) {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *dst = mu + self.within_sigma * z;
                }
                labels.push(c);
                row += 1;
            }
        }
        (features, labels)
    }

    /// Nearest-center label, the Bayes rule for equal isotropic covariances and priors.
    pub fn bayes_predict(&self, x: &[f64]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for c in 0..self.classes() {
            let d = squared_distance(x, self.centers.row(c));
            if d < best.0 {
                best = (d, c);
            }
        }
        best.1
    }

    /// Mean center distance within and across superclasses, `None` with one superclass.
    pub fn superclass_distances(&self) -> Option<(f64, f64)> {
        let (mut intra, mut n_intra, mut inter, mut n_inter) = (0.0, 0usize, 0.0, 0usize);
        for i in 0..self.classes() {
            for j in i + 1..self.classes() {
                let d = squared_distance(self.centers.row(i), self.centers.row(j)).sqrt();
                if self.superclass_map[i] == self.superclass_map[j] {
                    intra += d;
                    n_intra += 1;
                } else {
                    inter += d;
                    n_inter += 1;
                }
            }
        }
        (n_intra > 0 && n_inter > 0).then(|| (intra / n_intra as f64, inter / n_inter as f64))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterDataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub superclass_map: Vec<usize>,
    pub model: ClusterModel,
}

pub fn gen_cluster_dataset(
    classes: usize,
    per_class: usize,
    dim: usize,
    within_sigma: f64,
    seed: u64,
) -> Result<ClusterDataset> {
    let spec = ClusterSpec {
        classes,
        dim,
        within_sigma,
        seed,
        ..ClusterSpec::default()
    };
    let model = ClusterModel::generate(&spec)?;
    let (features, labels) = model.sample(per_class, seed);
    Ok(ClusterDataset {
        features,
        labels,
        superclass_map: model.superclass_map.clone(),
        model,
    })
}

fn unit_gaussian(dim: usize, rng: &mut Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    normalize(&mut v);
    v
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Greedy balanced grouping: the lowest-index unassigned class seeds a group and pulls in
/// its `size - 1` nearest unassigned classes (ties by index).
fn group_by_proximity(centers: &Matrix, size: usize) -> Vec<usize> {
    let n = centers.rows();
    let mut group = vec![usize::MAX; n];
    let mut next = 0;
    for seed in 0..n {
        if group[seed] != usize::MAX {
            continue;
        }
        group[seed] = next;
        let mut others: Vec<(f64, usize)> = (0..n)
            .filter(|&j| group[j] == usize::MAX)
            .map(|j| (squared_distance(centers.row(seed), centers.row(j)), j))
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in others.iter().take(size - 1) {
            group[j] = next;
        }
        next += 1;
    }
    group
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn lift_at_origin() {
        let v = lift_15d(0.0, 0.0);
        assert_eq!(v, [0., 0., 0., 0., 0., 0., 0., 1., 0., 0., 0., 1., 1., 0., 1.]);
    }

    #[test]
    fn lift_at_unit_x() {
        let v = lift_15d(1.0, 0.0);
        let s1 = 1f64.sin();
        let c1 = 1f64.cos();
        let expected = [1., 0., 1., 1., 1., 0., s1, E, 1., 0., 0., c1, 1., s1, 1.];
        for (a, b) in v.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12, "{v:?}");
        }
    }

    #[test]
    fn noise_dataset_properties() {
        let n = 2000;
        let ds = gen_noise_dataset(n, 3).unwrap();
        assert_eq!(ds, gen_noise_dataset(n, 3).unwrap());
        assert!(ds.base.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        let mut counts = [0usize; 4];
        for (i, &q) in ds.quadrants.iter().enumerate() {
            counts[q] += 1;
            let b = ds.base.row(i);
            let l = ds.lifted.row(i);
            // components 0-1 recover the base point, quadrant survives the round trip
            assert_eq!(&l[..2], b);
            assert_eq!(quadrant(l[0], l[1]), q);
        }
        let mean = n as f64 / 4.0;
        let sd = (n as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() < 4.0 * sd, "{counts:?}");
        }
        assert!(gen_noise_dataset(99, 0).is_err());
    }

    #[test]
    fn lift_is_injective_on_samples() {
        let ds = gen_noise_dataset(500, 11).unwrap();
        for i in 0..ds.lifted.rows() {
            for j in i + 1..ds.lifted.rows() {
                if ds.base.row(i) != ds.base.row(j) {
                    assert!(squared_distance(ds.lifted.row(i), ds.lifted.row(j)) > 0.0);
                }
            }
        }
    }

    #[test]
    fn zero_sigma_samples_sit_on_centers() {
        let ds = gen_cluster_dataset(6, 5, 8, 0.0, 1).unwrap();
        for (i, &c) in ds.labels.iter().enumerate() {
            assert_eq!(ds.features.row(i), ds.model.centers.row(c));
            assert_eq!(ds.model.bayes_predict(ds.features.row(i)), c);
        }
    }

    #[test]
    fn centers_reproducible_and_on_sphere() {
        let a = ClusterModel::generate(&ClusterSpec::default()).unwrap();
        let b = ClusterModel::generate(&ClusterSpec::default()).unwrap();
        assert_eq!(a.centers.data(), b.centers.data());
        for r in a.centers.iter_rows() {
            let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 3.0).abs() < 1e-12);
        }
        let (intra, inter) = a.superclass_distances().unwrap();
        assert!(intra < inter);
        let mut sizes = [0; 2];
        a.superclass_map.iter().for_each(|&s| sizes[s] += 1);
        assert_eq!(sizes, [5, 5]);
    }

    #[test]
    fn default_bayes_accuracy_near_point_nine() {
        let model = ClusterModel::generate(&ClusterSpec::default()).unwrap();
        let (x, y) = model.sample(1000, 77);
        let correct = (0..x.rows())
            .filter(|&i| model.bayes_predict(x.row(i)) == y[i])
            .count();
        let acc = correct as f64 / x.rows() as f64;
        assert!((0.85..=0.95).contains(&acc), "bayes accuracy {acc}");
    }
}
