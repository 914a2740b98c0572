use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::split::{node_stats, sort_rows_by_feature, sweep_feature, SplitCandidate};
use super::{Dataset, HyperParams, QrfError};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub enum Node<T> {
    Split {
        feature: u32,
        threshold: T,
        left: u32,
        right: u32,
    },
    /// `targets[start..start + len]` of the owning tree, sorted ascending.
    Leaf { start: u32, len: u32, mean: T },
}

/// A regression tree stored as a node table; node 0 is the root. Leaves
/// keep their bagged targets (with bootstrap multiplicity) in one shared array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Tree<T> {
    pub(crate) nodes: Vec<Node<T>>,
    pub(crate) targets: Vec<T>,
}

impl<T: Scalar> Tree<T> {
    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn go<T>(nodes: &[Node<T>], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + go(nodes, left as usize).max(go(nodes, right as usize))
                }
            }
        }
        go(&self.nodes, 0)
    }

    fn leaf_index(&self, x: &[T]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[feature as usize] <= threshold {
                        left as usize
                    } else {
                        right as usize
                    }
                }
                Node::Leaf { .. } => return i,
            }
        }
    }

    /// The bagged targets (sorted) and mean of the leaf containing `x`.
    pub fn leaf(&self, x: &[T]) -> (&[T], T) {
        match self.nodes[self.leaf_index(x)] {
            Node::Leaf { start, len, mean } => {
                (&self.targets[start as usize..(start + len) as usize], mean)
            }
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn predict(&self, x: &[T]) -> T {
        self.leaf(x).1
    }

    /// Every leaf's target slice, in node order.
    pub fn leaves(&self) -> impl Iterator<Item = &[T]> {
        self.nodes.iter().filter_map(|n| match *n {
            Node::Leaf { start, len, .. } => {
                Some(&self.targets[start as usize..(start + len) as usize])
            }
            Node::Split { .. } => None,
        })
    }
}

/// Fits one tree from `tree_seed`.
///
/// With `bootstrap`, `n` rows are drawn with replacement; a row drawn `k`
/// times contributes `k` copies of its target. At every node a fresh random
/// subset of `features_per_split` features is scored and the best MSE split
/// taken; both children must keep `min_leaf` distinct rows. Growth stops
/// when no legal split remains.
pub fn fit_tree<T: Scalar>(
    data: &Dataset<T>,
    params: &HyperParams,
    tree_seed: u64,
) -> Result<Tree<T>, QrfError> {
    params.validate()?;
    let n = data.n_rows();
    if n < params.min_leaf || n == 0 {
        return Err(QrfError::TooFewRows {
            rows: n,
            min_leaf: params.min_leaf,
        });
    }
    if n > u32::MAX as usize / 2 {
        return Err(QrfError::InvalidParams("too many rows".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);

    let mut weights = vec![0u32; n];
    if params.bootstrap {
        for _ in 0..n {
            weights[rng.random_range(0..n as u64) as usize] += 1;
        }
    } else {
        weights.fill(1);
    }

    let mut builder = Builder::new(data, weights, params, rng);
    builder.grow();
    Ok(builder.finish())
}

struct Builder<'a, T> {
    data: &'a Dataset<T>,
    weights: Vec<u32>,
    min_leaf: usize,
    per_split: usize,
    rng: ChaCha8Rng,
    /// Unique bagged rows in ascending index order, partitioned per node.
    by_index: Vec<u32>,
    /// Per feature: the same rows ordered by (value, index), partitioned per node.
    sorted: Vec<Vec<u32>>,
    goes_left: Vec<bool>,
    scratch: Vec<u32>,
    nodes: Vec<Node<T>>,
    targets: Vec<T>,
}

impl<'a, T: Scalar> Builder<'a, T> {
    fn new(data: &'a Dataset<T>, weights: Vec<u32>, params: &HyperParams, rng: ChaCha8Rng) -> Self {
        let by_index: Vec<u32> = (0..data.n_rows() as u32)
            .filter(|&r| weights[r as usize] > 0)
            .collect();
        let sorted = (0..data.n_features())
            .map(|f| {
                let mut rows = by_index.clone();
                sort_rows_by_feature(data.column(f), &mut rows);
                rows
            })
            .collect();
        Self {
            data,
            min_leaf: params.min_leaf,
            per_split: params.features_per_split(data.n_features()),
            rng,
            goes_left: vec![false; data.n_rows()],
            scratch: Vec::with_capacity(by_index.len()),
            by_index,
            sorted,
            weights,
            nodes: Vec::new(),
            targets: Vec::new(),
        }
    }

    fn grow(&mut self) {
        // (lo, hi, parent link); right child pushed first so the left subtree is numbered first.
        let mut stack: Vec<(usize, usize, Option<(usize, bool)>)> = vec![(0, self.by_index.len(), None)];
        while let Some((lo, hi, parent)) = stack.pop() {
            let id = self.nodes.len();
            if let Some((p, is_left)) = parent {
                if let Node::Split { left, right, .. } = &mut self.nodes[p] {
                    if is_left {
                        *left = id as u32;
                    } else {
                        *right = id as u32;
                    }
                }
            }
            match self.find_split(lo, hi) {
                Some(split) => {
                    let mid = self.partition(lo, hi, &split);
                    self.nodes.push(Node::Split {
                        feature: split.feature as u32,
                        threshold: split.threshold,
                        left: 0,
                        right: 0,
                    });
                    stack.push((mid, hi, Some((id, false))));
                    stack.push((lo, mid, Some((id, true))));
                }
                None => self.push_leaf(lo, hi),
            }
        }
    }

    fn find_split(&mut self, lo: usize, hi: usize) -> Option<SplitCandidate<T>> {
        let rows = &self.by_index[lo..hi];
        let stats = node_stats(self.data.targets(), &self.weights, rows);
        if stats.constant || rows.len() < 2 * self.min_leaf {
            return None;
        }
        let features = self.draw_features();
        let mut best = None;
        for f in features {
            sweep_feature(
                self.data,
                &self.weights,
                &self.sorted[f][lo..hi],
                f,
                &stats,
                self.min_leaf,
                &mut best,
            );
        }
        best
    }

    /// Partial Fisher-Yates draw, returned in ascending order so split ties
    /// resolve to the lowest feature index.
    fn draw_features(&mut self) -> Vec<usize> {
        let dim = self.data.n_features();
        let mut pool: Vec<usize> = (0..dim).collect();
        if self.per_split < dim {
            for i in 0..self.per_split {
                let j = self.rng.random_range(i as u64..dim as u64) as usize;
                pool.swap(i, j);
            }
            pool.truncate(self.per_split);
            pool.sort_unstable();
        }
        pool
    }

    /// Stable partition of every ordering over `[lo, hi)`; returns the boundary.
    fn partition(&mut self, lo: usize, hi: usize, split: &SplitCandidate<T>) -> usize {
        let column = self.data.column(split.feature);
        for &r in &self.by_index[lo..hi] {
            self.goes_left[r as usize] = column[r as usize] <= split.threshold;
        }
        let goes_left = &self.goes_left;
        let scratch = &mut self.scratch;
        let mut mid = lo;
        for order in std::iter::once(&mut self.by_index).chain(self.sorted.iter_mut()) {
            scratch.clear();
            let mut w = lo;
            for i in lo..hi {
                let r = order[i];
                if goes_left[r as usize] {
                    order[w] = r;
                    w += 1;
                } else {
                    scratch.push(r);
                }
            }
            order[w..hi].copy_from_slice(scratch);
            mid = w;
        }
        mid
    }

    fn push_leaf(&mut self, lo: usize, hi: usize) {
        let start = self.targets.len();
        for &r in &self.by_index[lo..hi] {
            let y = self.data.targets()[r as usize];
            for _ in 0..self.weights[r as usize] {
                self.targets.push(y);
            }
        }
        let leaf = &mut self.targets[start..];
        leaf.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let len = leaf.len();
        let sum = leaf.iter().fold(T::zero(), |acc, &v| acc + v);
        self.nodes.push(Node::Leaf {
            start: start as u32,
            len: len as u32,
            mean: sum / T::from_usize(len).unwrap(),
        });
    }

    fn finish(self) -> Tree<T> {
        Tree {
            nodes: self.nodes,
            targets: self.targets,
        }
    }
}
