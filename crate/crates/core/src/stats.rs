//! Order statistics shared by the index, the concentration estimators and the
//! harness aggregates.

use std::cmp::Ordering;

fn total(a: &f64, b: &f64) -> Ordering {
    a.total_cmp(b)
}

/// Lower median: the order statistic at position `(n - 1) / 2`.
///
/// It is always an attained sample value, and at least half the sample lies on
/// each side of it. Returns `None` for an empty slice.
pub fn lower_median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    let mid = (v.len() - 1) / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, total);
    Some(*m)
}

/// Lower empirical quantile at level `q ∈ [0, 1]`: the sorted value at index
/// `⌈q·n⌉ − 1` (clamped to the sample).
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len();
    let pos = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
    Some(sorted[pos])
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    Some(values.iter().sum::<f64>() / values.len() as f64)
}

/// Unbiased (n − 1) sample variance. `None` below two samples.
pub fn unbiased_variance(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values)?;
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Some(ss / (values.len() - 1) as f64)
}

pub fn sort_floats(values: &mut [f64]) {
    values.sort_unstable_by(total);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lower_median_of_even_sample() {
        assert_eq!(lower_median(&[4.0, 1.0, 3.0, 2.0]), Some(2.0));
        assert_eq!(lower_median(&[5.0]), Some(5.0));
        assert_eq!(lower_median(&[]), None);
    }

    #[test]
    fn variance_of_known_sample() {
        // mean 2.5, squared deviations sum 5.0
        assert_eq!(unbiased_variance(&[1.0, 2.0, 3.0, 4.0]), Some(5.0 / 3.0));
        assert_eq!(unbiased_variance(&[1.0]), None);
    }

    #[test]
    fn quantile_endpoints() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&s, 0.0), Some(1.0));
        assert_eq!(quantile(&s, 0.5), Some(2.0));
        assert_eq!(quantile(&s, 1.0), Some(4.0));
    }

    proptest! {
        #[test]
        fn lower_median_splits_sample(values in prop::collection::vec(-1e6f64..1e6, 1..200)) {
            let m = lower_median(&values).unwrap();
            let below = values.iter().filter(|v| **v <= m).count();
            let above = values.iter().filter(|v| **v >= m).count();
            prop_assert!(2 * below >= values.len());
            prop_assert!(2 * above >= values.len());
            prop_assert!(values.contains(&m));
        }
    }
}
