use super::EvalError;
use crate::Scalar;

fn check_lengths(a: usize, b: usize) -> Result<(), EvalError> {
    if a != b {
        return Err(EvalError::LengthMismatch { left: a, right: b });
    }
    Ok(())
}

/// Mean of `f(pred, obs)` over pairs whose observation is present.
fn mean_over_present<T: Scalar>(pred: &[T], obs: &[Option<T>], f: impl Fn(T, T) -> T) -> Result<T, EvalError> {
    check_lengths(pred.len(), obs.len())?;
    let (sum, n) = pred
        .iter()
        .zip(obs)
        .filter_map(|(&p, o)| o.map(|o| f(p, o)))
        .fold((T::zero(), 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        return Err(EvalError::EmptyAfterFiltering);
    }
    Ok(sum / T::from_usize(n).unwrap())
}

/// Mean squared error; pairs with a missing observation are skipped.
pub fn mse<T: Scalar>(pred: &[T], obs: &[Option<T>]) -> Result<T, EvalError> {
    mean_over_present(pred, obs, |p, o| (p - o) * (p - o))
}

/// Mean absolute error; pairs with a missing observation are skipped.
pub fn mae<T: Scalar>(pred: &[T], obs: &[Option<T>]) -> Result<T, EvalError> {
    mean_over_present(pred, obs, |p, o| (p - o).abs())
}

/// Fraction of present observations inside their closed interval.
pub fn coverage_probability<T: Scalar>(intervals: &[(T, T)], obs: &[Option<T>]) -> Result<T, EvalError> {
    check_lengths(intervals.len(), obs.len())?;
    if let Some(i) = intervals.iter().position(|(lo, hi)| !(lo <= hi)) {
        return Err(EvalError::InvalidInterval(i));
    }
    let (hits, n) = intervals
        .iter()
        .zip(obs)
        .filter_map(|(&(lo, hi), o)| o.map(|o| lo <= o && o <= hi))
        .fold((0usize, 0usize), |(h, n), inside| (h + inside as usize, n + 1));
    if n == 0 {
        return Err(EvalError::EmptyAfterFiltering);
    }
    Ok(T::from_usize(hits).unwrap() / T::from_usize(n).unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn basic_values() {
        assert_eq!(mse(&[1.0, 2.0], &[Some(1.0), Some(4.0)]).unwrap(), 2.0);
        assert_eq!(mae(&[1.0, 2.0], &[Some(1.0), Some(4.0)]).unwrap(), 1.0);
        assert_eq!(mse(&[3.0, -1.0], &[Some(3.0), Some(-1.0)]).unwrap(), 0.0);
        assert_eq!(mae(&[3.0, -1.0], &[Some(3.0), Some(-1.0)]).unwrap(), 0.0);
        assert_eq!(mae(&[1.0, 9.0, 2.0], &[Some(2.0), None, Some(5.0)]).unwrap(), 2.0);
        assert_eq!(mse(&[1.0f32, 2.0], &[Some(1.0), Some(4.0)]).unwrap(), 2.0f32);
    }

    #[test]
    fn coverage_examples() {
        let iv = [(0.0, 2.0), (0.0, 1.0), (5.0, 6.0)];
        let cp = coverage_probability(&iv, &[Some(1.0), Some(3.0), Some(5.5)]).unwrap();
        assert_eq!(cp, 2.0 / 3.0);
        assert_eq!(coverage_probability(&[(0.0, 1.0)], &[Some(1.0)]).unwrap(), 1.0);
        assert_eq!(coverage_probability(&[(4.0, 4.0)], &[Some(4.0)]).unwrap(), 1.0);
        assert!(matches!(
            coverage_probability(&[(2.0, 1.0)], &[Some(1.5)]),
            Err(EvalError::InvalidInterval(0))
        ));
    }

    #[test]
    fn errors() {
        assert!(matches!(mse(&[1.0], &[Some(1.0), Some(2.0)]), Err(EvalError::LengthMismatch { .. })));
        assert!(matches!(mae::<f64>(&[], &[]), Err(EvalError::EmptyAfterFiltering)));
        assert!(matches!(mse(&[1.0], &[None]), Err(EvalError::EmptyAfterFiltering)));
        assert!(matches!(coverage_probability(&[(0.0, 1.0)], &[None]), Err(EvalError::EmptyAfterFiltering)));
    }

    proptest! {
        #[test]
        fn metrics_are_bounded(data in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3, 0.0f64..50.0, any::<bool>()), 1..60)) {
            let pred: Vec<f64> = data.iter().map(|d| d.0).collect();
            let obs: Vec<Option<f64>> = data.iter().map(|d| d.3.then_some(d.1)).collect();
            let iv: Vec<(f64, f64)> = data.iter().map(|d| (d.0 - d.2, d.0 + d.2)).collect();
            match (mse(&pred, &obs), mae(&pred, &obs), coverage_probability(&iv, &obs)) {
                (Ok(s), Ok(a), Ok(c)) => {
                    prop_assert!(s >= 0.0 && a >= 0.0);
                    prop_assert!((0.0..=1.0).contains(&c));
                }
                (Err(_), Err(_), Err(_)) => prop_assert!(obs.iter().all(Option::is_none)),
                _ => prop_assert!(false, "metrics disagree on emptiness"),
            }
        }
    }
}
