//! Forest recall against the brute-force oracle.

use dscope_core::ann::{brute_knn, AnnForest, AnnParams};
use dscope_core::rng::rng_from_seed;
use dscope_core::Matrix;
use rand::Rng as _;

/// Mean recall@10 over 100 queries on 2000 uniform 15-D points with an 8-tree forest.
pub fn uniform_cube_recall(seed: u64) -> f64 {
    let (n, dim, k, queries) = (2000, 15, 10, 100);
    let mut rng = rng_from_seed(seed);
    let data = (0..n * dim).map(|_| rng.random::<f64>()).collect();
    let points = Matrix::from_vec(n, dim, data).unwrap();
    let params = AnnParams {
        n_trees: 8,
        seed,
        ..AnnParams::default()
    };
    let forest = AnnForest::build(&points, params).unwrap();
    let mut hits = 0;
    for q in (0..n).step_by(n / queries) {
        let exact: Vec<usize> = brute_knn(&points, q, k).unwrap().iter().map(|nb| nb.index).collect();
        hits += forest.knn(q, k).unwrap().iter().filter(|nb| exact.contains(&nb.index)).count();
    }
    hits as f64 / (queries * k) as f64
}
