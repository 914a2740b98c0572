use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_tree, Dataset, HyperParams, QrfError, Tree, WeightedTargetDistribution};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Forest<T> {
    pub(crate) trees: Vec<Tree<T>>,
    pub(crate) params: HyperParams,
    pub(crate) feature_dim: usize,
    pub(crate) training_fingerprint: [u8; 32],
}

/// Point forecast and central interval for one query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction<T> {
    pub mean: T,
    pub lower: T,
    pub upper: T,
    pub median: T,
}

/// Seed of tree `index`: first word of the ChaCha8 stream `index` keyed by
/// the forest seed. Independent of how trees are scheduled.
pub fn derive_tree_seed(forest_seed: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(forest_seed);
    rng.set_stream(index as u64);
    rng.next_u64()
}

/// Fits `params.n_trees` trees in parallel; the result does not depend on
/// the number of worker threads.
pub fn fit_forest<T: Scalar>(data: &Dataset<T>, params: &HyperParams) -> Result<Forest<T>, QrfError> {
    params.validate()?;
    if data.n_rows() < params.min_leaf || data.n_rows() == 0 {
        return Err(QrfError::TooFewRows {
            rows: data.n_rows(),
            min_leaf: params.min_leaf,
        });
    }
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|i| fit_tree(data, params, derive_tree_seed(params.seed, i)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Forest {
        trees,
        params: *params,
        feature_dim: data.n_features(),
        training_fingerprint: data.fingerprint(),
    })
}

impl<T: Scalar> Forest<T> {
    pub fn trees(&self) -> &[Tree<T>] {
        &self.trees
    }

    pub fn params(&self) -> &HyperParams {
        &self.params
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn training_fingerprint(&self) -> &[u8; 32] {
        &self.training_fingerprint
    }

    fn check_dim(&self, x: &[T]) -> Result<(), QrfError> {
        if x.len() != self.feature_dim {
            return Err(QrfError::DimensionMismatch {
                expected: self.feature_dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    pub fn target_distribution(&self, x: &[T]) -> Result<WeightedTargetDistribution<T>, QrfError> {
        self.check_dim(x)?;
        Ok(WeightedTargetDistribution::from_leaves(
            self.trees.iter().map(|t| t.leaf(x).0),
            self.trees.len(),
        ))
    }

    /// Conditional mean read from the weighted distribution.
    pub fn predict_mean(&self, x: &[T]) -> Result<T, QrfError> {
        Ok(self.target_distribution(x)?.mean())
    }

    pub fn predict_quantile(&self, x: &[T], q: f64) -> Result<T, QrfError> {
        self.target_distribution(x)?.quantile(q)
    }

    pub fn predict_interval(&self, x: &[T], coverage: f64) -> Result<(T, T), QrfError> {
        self.target_distribution(x)?.interval(coverage)
    }

    /// Mean, interval and median from a single distribution build.
    pub fn predict(&self, x: &[T], coverage: f64) -> Result<Prediction<T>, QrfError> {
        let dist = self.target_distribution(x)?;
        let (lower, upper) = dist.interval(coverage)?;
        Ok(Prediction {
            mean: dist.mean(),
            lower,
            upper,
            median: dist.quantile(0.5)?,
        })
    }

    /// Average of the per-tree leaf means (the classic random-forest output).
    pub fn mean_of_leaf_means(&self, x: &[T]) -> Result<T, QrfError> {
        self.check_dim(x)?;
        let sum = self.trees.iter().fold(T::zero(), |a, t| a + t.predict(x));
        Ok(sum / T::from_usize(self.trees.len()).unwrap())
    }

    /// Lossless JSON dump for debugging.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("forest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, QrfError> {
        let forest: Self =
            serde_json::from_str(text).map_err(|e| QrfError::CorruptFile(e.to_string()))?;
        forest.validate_structure()?;
        Ok(forest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_data(seed: u64, n: usize, dim: usize) -> Dataset<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let y = rows
            .iter()
            .map(|r| r[0] * 2.0 + r[1 % dim].sin() + rng.random_range(-0.5..0.5))
            .collect();
        Dataset::from_rows(&rows, y).unwrap()
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let d = random_data(1, 150, 4);
        let p = HyperParams { n_trees: 3, min_leaf: 5, seed: 77, ..Default::default() };
        let a = fit_forest(&d, &p).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| fit_forest(&d, &p).unwrap());
        assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn one_tree_forest_matches_the_tree() {
        let d = random_data(2, 80, 3);
        let p = HyperParams { n_trees: 1, min_leaf: 4, seed: 5, ..Default::default() };
        let forest = fit_forest(&d, &p).unwrap();
        let tree = fit_tree(&d, &p, derive_tree_seed(5, 0)).unwrap();
        for i in 0..d.n_rows() {
            let x = d.row(i);
            let got = forest.predict_mean(&x).unwrap();
            assert!((got - tree.predict(&x)).abs() <= 1e-12 * (1.0 + got.abs()));
        }
    }

    #[test]
    fn training_fit_beats_the_global_mean() {
        for seed in 0..20 {
            let d = random_data(seed, 120, 3);
            let p = HyperParams { n_trees: 5, min_leaf: 3, seed, ..Default::default() };
            let f = fit_forest(&d, &p).unwrap();
            let mean = d.targets().iter().sum::<f64>() / d.n_rows() as f64;
            let baseline: f64 = d.targets().iter().map(|y| (y - mean).powi(2)).sum();
            let sse: f64 = (0..d.n_rows())
                .map(|i| (f.predict_mean(&d.row(i)).unwrap() - d.targets()[i]).powi(2))
                .sum();
            assert!(sse <= baseline, "seed {seed}: {sse} > {baseline}");
        }
    }

    #[test]
    fn constant_target_forest() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64]).collect();
        let d = Dataset::from_rows(&rows, vec![3.5; 40]).unwrap();
        let f = fit_forest(&d, &HyperParams { n_trees: 4, min_leaf: 2, ..Default::default() }).unwrap();
        assert_eq!(f.predict_mean(&[17.0]).unwrap(), 3.5);
        assert_eq!(f.predict_interval(&[17.0], 0.95).unwrap(), (3.5, 3.5));
    }

    #[test]
    fn dimension_mismatch() {
        let d = random_data(3, 30, 3);
        let f = fit_forest(&d, &HyperParams { n_trees: 2, min_leaf: 2, ..Default::default() }).unwrap();
        assert!(matches!(f.predict_mean(&[0.0, 1.0]), Err(QrfError::DimensionMismatch { expected: 3, found: 2 })));
    }

    #[test]
    fn f32_forest_works() {
        let rows: Vec<Vec<f32>> = (0..100).map(|i| vec![i as f32 / 10.0]).collect();
        let y: Vec<f32> = (0..100).map(|i| if i < 50 { 0.0 } else { 4.0 }).collect();
        let d = Dataset::from_rows(&rows, y).unwrap();
        let f = fit_forest(&d, &HyperParams { n_trees: 10, min_leaf: 5, feature_fraction: 1.0, ..Default::default() })
            .unwrap();
        assert!(f.predict_mean(&[1.0]).unwrap() < 1.0);
        assert!(f.predict_mean(&[9.0]).unwrap() > 3.0);
        let back = Forest::<f32>::from_bytes(&f.to_bytes()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn json_export_is_lossless() {
        let d = random_data(4, 60, 2);
        let f = fit_forest(&d, &HyperParams { n_trees: 2, min_leaf: 3, ..Default::default() }).unwrap();
        assert_eq!(Forest::<f64>::from_json(&f.to_json()).unwrap(), f);
    }
}
