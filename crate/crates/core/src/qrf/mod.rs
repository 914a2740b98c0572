//! Quantile regression forests.
//!
//! CART regression trees grown on bootstrap samples with an MSE split
//! criterion. Every leaf keeps the full bagged target multiset, so a
//! fitted forest yields a weighted conditional distribution for any query
//! point: each bagged observation in the leaf reached in tree `t` gets
//! weight `1 / (n_trees * |leaf_t(x)|)`. Means, quantiles and prediction
//! intervals are all read off that one distribution.

mod distribution;
mod forest;
pub(crate) mod io;
mod split;
mod tree;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::Scalar;

pub use distribution::WeightedTargetDistribution;
pub use forest::{derive_tree_seed, fit_forest, Forest, Prediction};
pub use io::FORMAT_VERSION;
pub use split::{best_split, SplitCandidate};
pub use tree::{fit_tree, Node, Tree};

#[derive(Debug, Error)]
pub enum QrfError {
    #[error("{rows} training rows is fewer than min_leaf = {min_leaf}")]
    TooFewRows { rows: usize, min_leaf: usize },
    #[error("feature vector has dimension {found}, forest expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("quantile level {0} outside [0, 1]")]
    InvalidQuantile(f64),
    #[error("coverage {0} outside (0, 1)")]
    InvalidCoverage(f64),
    #[error("invalid hyperparameters: {0}")]
    InvalidParams(String),
    #[error("unsupported model format version {found} (this build reads {supported})")]
    VersionMismatch { found: u16, supported: u16 },
    #[error("corrupt model data: {0}")]
    CorruptFile(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub n_trees: usize,
    /// Minimum number of distinct training rows in every leaf.
    pub min_leaf: usize,
    /// Fraction of features drawn as split candidates at each node.
    pub feature_fraction: f64,
    pub seed: u64,
    pub bootstrap: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            min_leaf: 10,
            feature_fraction: 0.7,
            seed: 0,
            bootstrap: true,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), QrfError> {
        if self.n_trees == 0 {
            return Err(QrfError::InvalidParams("n_trees must be at least 1".into()));
        }
        if self.min_leaf == 0 {
            return Err(QrfError::InvalidParams("min_leaf must be at least 1".into()));
        }
        if !(self.feature_fraction > 0.0 && self.feature_fraction <= 1.0) {
            return Err(QrfError::InvalidParams(format!(
                "feature_fraction {} outside (0, 1]",
                self.feature_fraction
            )));
        }
        Ok(())
    }

    /// Number of candidate features per split: `ceil(fraction * dim)`, at least 1.
    pub fn features_per_split(&self, feature_dim: usize) -> usize {
        let k = (self.feature_fraction * feature_dim as f64 - 1e-9).ceil() as usize;
        k.clamp(1, feature_dim.max(1))
    }
}

/// Column-major design matrix with one target per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    n_rows: usize,
    n_features: usize,
    columns: Vec<T>,
    targets: Vec<T>,
}

impl<T: Scalar> Dataset<T> {
    pub fn from_rows(rows: &[Vec<T>], targets: Vec<T>) -> Result<Self, QrfError> {
        let n_features = rows.first().map_or(0, Vec::len);
        if rows.len() != targets.len() {
            return Err(QrfError::DimensionMismatch {
                expected: rows.len(),
                found: targets.len(),
            });
        }
        let mut columns = vec![T::zero(); rows.len() * n_features];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_features {
                return Err(QrfError::DimensionMismatch {
                    expected: n_features,
                    found: row.len(),
                });
            }
            for (f, &v) in row.iter().enumerate() {
                columns[f * rows.len() + i] = v;
            }
        }
        Ok(Self {
            n_rows: rows.len(),
            n_features,
            columns,
            targets,
        })
    }

    /// `columns` holds `n_features` consecutive columns of `targets.len()` values.
    pub fn from_columns(n_features: usize, columns: Vec<T>, targets: Vec<T>) -> Result<Self, QrfError> {
        if columns.len() != n_features * targets.len() {
            return Err(QrfError::DimensionMismatch {
                expected: n_features * targets.len(),
                found: columns.len(),
            });
        }
        Ok(Self {
            n_rows: targets.len(),
            n_features,
            columns,
            targets,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn targets(&self) -> &[T] {
        &self.targets
    }

    pub fn column(&self, feature: usize) -> &[T] {
        &self.columns[feature * self.n_rows..(feature + 1) * self.n_rows]
    }

    #[inline]
    pub fn value(&self, row: usize, feature: usize) -> T {
        self.columns[feature * self.n_rows + row]
    }

    pub fn row(&self, row: usize) -> Vec<T> {
        (0..self.n_features).map(|f| self.value(row, f)).collect()
    }

    /// SHA-256 over the shape, the columns and the targets.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update((self.n_rows as u64).to_le_bytes());
        hasher.update((self.n_features as u64).to_le_bytes());
        let mut buf = Vec::with_capacity(self.columns.len() * T::WIDTH as usize);
        for &v in self.columns.iter().chain(self.targets.iter()) {
            v.write_le(&mut buf);
        }
        hasher.update(&buf);
        hasher.finalize().into()
    }
}
