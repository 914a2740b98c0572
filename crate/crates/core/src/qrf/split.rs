//! Exact MSE split search.
//!
//! For one feature the node's samples are visited in ascending feature
//! order while left-child weight and target sum accumulate. With targets
//! centred on the node mean, the SSE reduction of a split is
//! `sl^2/nl + sr^2/nr - s^2/n`, so a single pass scores every midpoint
//! threshold.

use std::cmp::Ordering;

use super::Dataset;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate<T> {
    pub feature: usize,
    /// Samples with `x[feature] <= threshold` go left.
    pub threshold: T,
    pub sse_reduction: T,
}

/// Weighted target statistics of a node, centred on its mean.
pub(crate) struct NodeStats<T> {
    pub weight: u32,
    pub mean: T,
    pub sse: T,
    pub constant: bool,
}

/// `rows` must be ordered by row index; `weights[row]` is the bootstrap multiplicity.
pub(crate) fn node_stats<T: Scalar>(targets: &[T], weights: &[u32], rows: &[u32]) -> NodeStats<T> {
    let mut weight = 0u32;
    let mut sum = T::zero();
    let first = targets[rows[0] as usize];
    let mut constant = true;
    for &r in rows {
        let w = weights[r as usize];
        let y = targets[r as usize];
        weight += w;
        sum = sum + T::from_u32(w).unwrap() * y;
        constant &= y == first;
    }
    let mean = sum / T::from_u32(weight).unwrap();
    let mut sse = T::zero();
    for &r in rows {
        let d = targets[r as usize] - mean;
        sse = sse + T::from_u32(weights[r as usize]).unwrap() * d * d;
    }
    NodeStats {
        weight,
        mean,
        sse,
        constant,
    }
}

/// Scores every legal threshold of `feature` over `sorted_rows` (ascending
/// feature value, ties by row index; each row once, weighted by its
/// multiplicity) and updates `best` when a strictly
/// larger reduction is found.
#[allow(clippy::too_many_arguments)]
pub(crate) fn sweep_feature<T: Scalar>(
    data: &Dataset<T>,
    weights: &[u32],
    sorted_rows: &[u32],
    feature: usize,
    stats: &NodeStats<T>,
    min_leaf: usize,
    best: &mut Option<SplitCandidate<T>>,
) {
    let column = data.column(feature);
    let targets = data.targets();
    let total_w = stats.weight as usize;
    let total_n = sorted_rows.len();
    if total_n < 2 * min_leaf {
        return;
    }
    let total_sum = {
        let mut s = T::zero();
        for &r in sorted_rows {
            s = s + T::from_u32(weights[r as usize]).unwrap() * (targets[r as usize] - stats.mean);
        }
        s
    };
    let parent_term = total_sum * total_sum / T::from_usize(total_w).unwrap();
    let floor = stats.sse * T::epsilon() * T::from_f64_lossy(64.0);

    let mut left_w = 0usize;
    let mut left_n = 0usize;
    let mut left_sum = T::zero();
    let mut prev = column[sorted_rows[0] as usize];
    for &r in sorted_rows {
        let x = column[r as usize];
        if x > prev && left_n >= min_leaf {
            let right_w = total_w - left_w;
            if total_n - left_n < min_leaf {
                break;
            }
            let right_sum = total_sum - left_sum;
            let gain = left_sum * left_sum / T::from_usize(left_w).unwrap()
                + right_sum * right_sum / T::from_usize(right_w).unwrap()
                - parent_term;
            if gain > floor && best.is_none_or(|b| gain > b.sse_reduction) {
                *best = Some(SplitCandidate {
                    feature,
                    threshold: midpoint(prev, x),
                    sse_reduction: gain,
                });
            }
        }
        let w = weights[r as usize];
        left_w += w as usize;
        left_n += 1;
        left_sum = left_sum + T::from_u32(w).unwrap() * (targets[r as usize] - stats.mean);
        prev = x;
    }
}

/// Midpoint of `lo < hi` that still sends `lo` left and `hi` right.
fn midpoint<T: Scalar>(lo: T, hi: T) -> T {
    let mid = lo + (hi - lo) / (T::one() + T::one());
    if mid >= hi || mid < lo {
        lo
    } else {
        mid
    }
}

pub(crate) fn sort_rows_by_feature<T: Scalar>(column: &[T], rows: &mut [u32]) {
    rows.sort_unstable_by(|&a, &b| {
        column[a as usize]
            .partial_cmp(&column[b as usize])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
}

/// Best MSE split of the bagged sample `rows` (duplicates allowed, each
/// copy weighs once in the SSE) over `candidate_features`.
///
/// Thresholds are midpoints between consecutive distinct feature values;
/// both children must hold at least `min_leaf` distinct rows. Returns `None` when
/// no legal split reduces the SSE. Ties go to the lowest feature index,
/// then the lowest threshold.
pub fn best_split<T: Scalar>(
    data: &Dataset<T>,
    rows: &[usize],
    candidate_features: &[usize],
    min_leaf: usize,
) -> Option<SplitCandidate<T>> {
    if rows.is_empty() {
        return None;
    }
    let mut weights = vec![0u32; data.n_rows()];
    for &r in rows {
        weights[r] += 1;
    }
    let unique: Vec<u32> = (0..data.n_rows() as u32)
        .filter(|&r| weights[r as usize] > 0)
        .collect();
    let stats = node_stats(data.targets(), &weights, &unique);
    if stats.constant {
        return None;
    }
    let mut features = candidate_features.to_vec();
    features.sort_unstable();
    features.dedup();

    let mut best = None;
    let mut order = unique.clone();
    for f in features {
        sort_rows_by_feature(data.column(f), &mut order);
        sweep_feature(data, &weights, &order, f, &stats, min_leaf.max(1), &mut best);
    }
    best
}
