//! Annoy-style approximate nearest neighbours: a forest of random-projection trees,
//! searched best-first across all trees, with exact re-ranking of the candidates.
//!
//! Each split takes two distinct random points of the node and cuts along the hyperplane
//! through their midpoint, normal to their difference. All ties (equal distances, equal
//! queue priorities) resolve towards the lower index, so every query is fully
//! deterministic.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matrix::{dot, squared_distance, Matrix};
use crate::rng::{derive_seed, rng_from_seed, Rng};

/// Split attempts before a node falls back to a random halving.
const SPLIT_ATTEMPTS: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnParams {
    pub n_trees: usize,
    pub max_leaf: usize,
    /// Candidate budget per query is `search_factor * k * n_trees` points.
    pub search_factor: usize,
    pub seed: u64,
}

impl Default for AnnParams {
    fn default() -> Self {
        Self {
            n_trees: 8,
            max_leaf: 16,
            search_factor: 8,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Split {
        normal: Vec<f64>,
        offset: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        items: Vec<usize>,
    },
}

/// One random-projection tree; `nodes[0]` is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RpTree {
    pub nodes: Vec<Node>,
}

impl RpTree {
    fn build(points: &Matrix, max_leaf: usize, rng: &mut Rng) -> Self {
        let mut tree = RpTree { nodes: Vec::new() };
        let all: Vec<usize> = (0..points.rows()).collect();
        tree.grow(points, all, max_leaf, rng);
        tree
    }

    fn grow(&mut self, points: &Matrix, items: Vec<usize>, max_leaf: usize, rng: &mut Rng) -> usize {
        let id = self.nodes.len();
        if items.len() <= max_leaf {
            self.nodes.push(Node::Leaf { items });
            return id;
        }
        self.nodes.push(Node::Leaf { items: Vec::new() });
        let (normal, offset, left, right) = split(points, &items, rng);
        let l = self.grow(points, left, max_leaf, rng);
        let r = self.grow(points, right, max_leaf, rng);
        self.nodes[id] = Node::Split {
            normal,
            offset,
            left: l,
            right: r,
        };
        id
    }

    /// Leaf item lists in node order.
    pub fn leaves(&self) -> impl Iterator<Item = &[usize]> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { items } => Some(items.as_slice()),
            Node::Split { .. } => None,
        })
    }
}

/// Positive margin goes right.
fn split(points: &Matrix, items: &[usize], rng: &mut Rng) -> (Vec<f64>, f64, Vec<usize>, Vec<usize>) {
    for _ in 0..SPLIT_ATTEMPTS {
        let i = items[rng.random_range(0..items.len())];
        let mut j = items[rng.random_range(0..items.len() - 1)];
        if j == i {
            j = items[items.len() - 1];
        }
        let (a, b) = (points.row(i), points.row(j));
        let normal: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        let mid: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
        let offset = dot(&normal, &mid);
        let (right, left): (Vec<usize>, Vec<usize>) = items
            .iter()
            .partition(|&&p| dot(&normal, points.row(p)) - offset > 0.0);
        if !left.is_empty() && !right.is_empty() {
            return (normal, offset, left, right);
        }
    }
    // duplicates or degenerate geometry: random halving, zero normal
    let mut shuffled = items.to_vec();
    shuffled.shuffle(rng);
    let right = shuffled.split_off(shuffled.len() / 2);
    (vec![0.0; points.cols()], 0.0, shuffled, right)
}

/// Forest over a borrowed point matrix. Immutable once built.
#[derive(Clone, Debug)]
pub struct AnnForest<'a> {
    points: &'a Matrix,
    trees: Vec<RpTree>,
    params: AnnParams,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(PartialEq)]
struct QueueEntry {
    priority: f64,
    tree: usize,
    node: usize,
}

impl Eq for QueueEntry {}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then_with(|| other.tree.cmp(&self.tree))
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<'a> AnnForest<'a> {
    pub fn build(points: &'a Matrix, params: AnnParams) -> Result<Self> {
        if points.rows() < 2 {
            return Err(invalid(format!(
                "an index needs at least 2 points, got {}",
                points.rows()
            )));
        }
        if params.n_trees == 0 {
            return Err(invalid("n_trees must be at least 1"));
        }
        if params.max_leaf == 0 || params.search_factor == 0 {
            return Err(invalid("max_leaf and search_factor must be at least 1"));
        }
        let trees = (0..params.n_trees)
            .map(|t| {
                let mut rng = rng_from_seed(derive_seed(params.seed, &[t as u64]));
                RpTree::build(points, params.max_leaf, &mut rng)
            })
            .collect();
        Ok(Self {
            points,
            trees,
            params,
        })
    }

    pub fn points(&self) -> &'a Matrix {
        self.points
    }

    pub fn trees(&self) -> &[RpTree] {
        &self.trees
    }

    pub fn params(&self) -> &AnnParams {
        &self.params
    }

    /// Approximate `k` nearest neighbours of stored point `query`, excluding itself,
    /// in ascending distance.
    pub fn knn(&self, query: usize, k: usize) -> Result<Vec<Neighbor>> {
        check_query(self.points, query, k)?;
        let q = self.points.row(query);
        let budget = (self.params.search_factor * k * self.params.n_trees).max(k + 1);
        let mut seen = vec![false; self.points.rows()];
        let mut candidates = Vec::with_capacity(budget);
        let mut heap: BinaryHeap<QueueEntry> = (0..self.trees.len())
            .map(|tree| QueueEntry {
                priority: f64::INFINITY,
                tree,
                node: 0,
            })
            .collect();
        while let Some(entry) = heap.pop() {
            if candidates.len() >= budget {
                break;
            }
            match &self.trees[entry.tree].nodes[entry.node] {
                Node::Leaf { items } => {
                    for &i in items {
                        if i != query && !seen[i] {
                            seen[i] = true;
                            candidates.push(i);
                        }
                    }
                }
                Node::Split {
                    normal,
                    offset,
                    left,
                    right,
                } => {
                    let margin = dot(normal, q) - offset;
                    heap.push(QueueEntry {
                        priority: entry.priority.min(margin),
                        tree: entry.tree,
                        node: *right,
                    });
                    heap.push(QueueEntry {
                        priority: entry.priority.min(-margin),
                        tree: entry.tree,
                        node: *left,
                    });
                }
            }
        }
        Ok(rank(self.points, q, candidates.into_iter(), k))
    }

    /// Tree structure as JSON, for debugging.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.trees)?)
    }
}

fn check_query(points: &Matrix, query: usize, k: usize) -> Result<()> {
    if query >= points.rows() {
        return Err(invalid(format!("query index {query} out of range")));
    }
    if k == 0 || k >= points.rows() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must lie in 1..{}",
            points.rows()
        )));
    }
    Ok(())
}

fn rank(points: &Matrix, q: &[f64], candidates: impl Iterator<Item = usize>, k: usize) -> Vec<Neighbor> {
    let mut scored: Vec<(f64, usize)> = candidates
        .map(|i| (squared_distance(q, points.row(i)), i))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, cmp);
        scored.truncate(k);
    }
    scored.sort_by(cmp);
    scored
        .into_iter()
        .map(|(d, index)| Neighbor {
            index,
            distance: d.sqrt(),
        })
        .collect()
}

/// Exact `k` nearest neighbours of stored point `query` (itself excluded), ties by index.
pub fn brute_knn(points: &Matrix, query: usize, k: usize) -> Result<Vec<Neighbor>> {
    check_query(points, query, k)?;
    let q = points.row(query);
    Ok(rank(points, q, (0..points.rows()).filter(|&i| i != query), k))
}

/// Exact neighbour lists for every row.
pub fn brute_knn_all(points: &Matrix, k: usize) -> Result<Vec<Vec<usize>>> {
    (0..points.rows())
        .map(|i| Ok(brute_knn(points, i, k)?.into_iter().map(|n| n.index).collect()))
        .collect()
}
