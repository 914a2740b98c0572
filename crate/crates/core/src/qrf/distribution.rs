use serde::Serialize;

use super::QrfError;
use crate::Scalar;

/// Discrete conditional distribution of the target: distinct values in
/// ascending order with weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct WeightedTargetDistribution<T> {
    values: Vec<T>,
    weights: Vec<T>,
}

impl<T: Scalar> WeightedTargetDistribution<T> {
    /// Pools leaves from `n_trees` trees; each value in a leaf of size `L`
    /// carries weight `1 / (n_trees * L)`.
    pub fn from_leaves<'a>(leaves: impl IntoIterator<Item = &'a [T]>, n_trees: usize) -> Self {
        let mut pairs: Vec<(T, T)> = Vec::new();
        for leaf in leaves {
            let w = T::one() / T::from_usize(n_trees * leaf.len()).unwrap();
            pairs.extend(leaf.iter().map(|&v| (v, w)));
        }
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        Self::merge_sorted(pairs)
    }

    /// Builds from arbitrary `(value, weight)` pairs; weights are used as given.
    pub fn from_pairs(mut pairs: Vec<(T, T)>) -> Self {
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        Self::merge_sorted(pairs)
    }

    fn merge_sorted(pairs: Vec<(T, T)>) -> Self {
        let mut values: Vec<T> = Vec::with_capacity(pairs.len());
        let mut weights: Vec<T> = Vec::with_capacity(pairs.len());
        for (v, w) in pairs {
            match values.last() {
                Some(&last) if last == v => {
                    let acc = weights.last_mut().unwrap();
                    *acc = *acc + w;
                }
                _ => {
                    values.push(v);
                    weights.push(w);
                }
            }
        }
        Self { values, weights }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn pairs(&self) -> impl Iterator<Item = (T, T)> + '_ {
        self.values.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn total_weight(&self) -> T {
        self.weights.iter().fold(T::zero(), |a, &w| a + w)
    }

    /// Weighted mean, accumulated as offsets from the smallest value so a
    /// degenerate distribution returns its single value exactly.
    pub fn mean(&self) -> T {
        let base = self.values[0];
        let spread = self.pairs().fold(T::zero(), |a, (v, w)| a + (v - base) * w);
        base + spread / self.total_weight()
    }

    /// `P(Y <= y)`.
    pub fn cdf(&self, y: T) -> T {
        self.pairs()
            .take_while(|&(v, _)| v <= y)
            .fold(T::zero(), |a, (_, w)| a + w)
    }

    /// `inf { y : P(Y <= y) >= q }`; `q = 0` gives the smallest value.
    pub fn quantile(&self, q: f64) -> Result<T, QrfError> {
        if !(0.0..=1.0).contains(&q) {
            return Err(QrfError::InvalidQuantile(q));
        }
        let last = *self
            .values
            .last()
            .expect("distribution of a fitted forest is never empty");
        if q == 0.0 {
            return Ok(self.values[0]);
        }
        let target = T::from_f64_lossy(q);
        let mut cum = T::zero();
        for (v, w) in self.pairs() {
            cum = cum + w;
            if cum + T::cdf_slack() >= target {
                return Ok(v);
            }
        }
        Ok(last)
    }

    /// Central interval `[Q((1-c)/2), Q(1-(1-c)/2)]`.
    pub fn interval(&self, coverage: f64) -> Result<(T, T), QrfError> {
        if !(coverage > 0.0 && coverage < 1.0) {
            return Err(QrfError::InvalidCoverage(coverage));
        }
        let tail = (1.0 - coverage) / 2.0;
        Ok((self.quantile(tail)?, self.quantile(1.0 - tail)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> WeightedTargetDistribution<f64> {
        WeightedTargetDistribution::from_leaves([&[1.0, 2.0, 2.0, 5.0][..]], 1)
    }

    #[test]
    fn single_leaf_weights() {
        let d = example();
        assert_eq!(d.pairs().collect::<Vec<_>>(), vec![(1.0, 0.25), (2.0, 0.5), (5.0, 0.25)]);
        assert_eq!(d.mean(), 2.5);
    }

    #[test]
    fn two_single_value_leaves() {
        let d = WeightedTargetDistribution::from_leaves([&[0.0][..], &[10.0][..]], 2);
        assert_eq!(d.pairs().collect::<Vec<_>>(), vec![(0.0, 0.5), (10.0, 0.5)]);
    }

    #[test]
    fn quantiles_follow_the_infimum_rule() {
        let d = example();
        assert_eq!(d.quantile(0.5).unwrap(), 2.0);
        assert_eq!(d.quantile(0.75).unwrap(), 2.0);
        assert_eq!(d.quantile(0.76).unwrap(), 5.0);
        assert_eq!(d.quantile(0.0).unwrap(), 1.0);
        assert_eq!(d.quantile(1.0).unwrap(), 5.0);
        assert!(matches!(d.quantile(1.5), Err(QrfError::InvalidQuantile(_))));
        assert!(matches!(d.quantile(-0.1), Err(QrfError::InvalidQuantile(_))));
    }

    #[test]
    fn intervals() {
        let flat = WeightedTargetDistribution::from_leaves([&[5.0, 5.0, 5.0][..]], 1);
        assert_eq!(flat.interval(0.95).unwrap(), (5.0, 5.0));

        // CDF reaches 0.25 at 0 and 0.75 at 2.
        let quarters = WeightedTargetDistribution::from_leaves([&[0.0, 1.0, 2.0, 3.0][..]], 1);
        assert_eq!(quarters.interval(0.5).unwrap(), (0.0, 2.0));

        // 95 % interval reads the 2.5 % and 97.5 % quantiles.
        let wide: Vec<f64> = (0..200).map(f64::from).collect();
        let d = WeightedTargetDistribution::from_leaves([&wide[..]], 1);
        assert_eq!(d.interval(0.95).unwrap(), (d.quantile(0.025).unwrap(), d.quantile(0.975).unwrap()));
        assert_eq!(d.interval(0.95).unwrap(), (4.0, 194.0));

        assert!(matches!(d.interval(1.0), Err(QrfError::InvalidCoverage(_))));
        assert!(matches!(d.interval(0.0), Err(QrfError::InvalidCoverage(_))));
    }

    #[test]
    fn cdf_is_cumulative() {
        let d = example();
        assert_eq!(d.cdf(0.0), 0.0);
        assert_eq!(d.cdf(2.0), 0.75);
        assert_eq!(d.cdf(9.0), 1.0);
    }
}
