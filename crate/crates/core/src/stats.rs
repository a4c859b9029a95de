//! Summary statistics used by the aggregation tables.

use num_traits::Float;

pub fn mean<T: Float>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let n = T::from(values.len())?;
    Some(values.iter().fold(T::zero(), |acc, &v| acc + v) / n)
}

/// Middle value; mean of the two middle values for even lengths.
pub fn median<T: Float>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("median of NaN"));
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 1 { sorted[mid] } else { (sorted[mid - 1] + sorted[mid]) / T::from(2.0)? })
}

/// Population standard deviation.
pub fn stddev<T: Float>(values: &[T]) -> Option<T> {
    let m = mean(values)?;
    let n = T::from(values.len())?;
    let var = values.iter().fold(T::zero(), |acc, &v| acc + (v - m) * (v - m)) / n;
    Some(var.sqrt())
}

pub fn median_of_counts(counts: &[usize]) -> Option<f64> {
    let as_f64: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    median(&as_f64)
}

/// Nearest-rank percentile: the value at 1-based rank `ceil(p/100 * n)`.
pub fn nearest_rank<T: Copy + Ord>(sorted: &[T], percentile: f64) -> Option<T> {
    if sorted.is_empty() || !(0.0..=100.0).contains(&percentile) {
        return None;
    }
    let n = sorted.len();
    // Integer arithmetic on hundredths avoids ceil() landing one rank high on
    // values such as 0.07 * 100.
    let hundredths = (percentile * 100.0).round() as u128;
    let rank = (hundredths * n as u128).div_ceil(10_000) as usize;
    Some(sorted[rank.clamp(1, n) - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_conventions() {
        assert_eq!(median(&[2.0, 14.0, 72.0]), Some(14.0));
        assert_eq!(median(&[14.0, 2.0]), Some(8.0));
        assert_eq!(median::<f64>(&[]), None);
        assert_eq!(median_of_counts(&[72, 2, 14]), Some(14.0));
    }

    #[test]
    fn single_value_has_zero_spread() {
        assert_eq!(median(&[0.5f64]), Some(0.5));
        assert_eq!(stddev(&[0.5f64]), Some(0.0));
        assert_eq!(mean(&[0.5f32, 1.5]), Some(1.0));
    }

    #[test]
    fn population_stddev() {
        let v = [2.0f64, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0];
        assert_eq!(stddev(&v), Some(2.0));
    }

    #[test]
    fn nearest_rank_by_direct_indexing() {
        let v: Vec<u64> = (1..=100).collect();
        for p in [25.0, 50.0, 75.0, 90.0] {
            assert_eq!(nearest_rank(&v, p), Some(p as u64));
        }
        assert_eq!(nearest_rank(&[7u64], 25.0), Some(7));
        assert_eq!(nearest_rank(&[7u64], 90.0), Some(7));
        assert_eq!(nearest_rank(&[1u64, 2, 3, 4], 0.0), Some(1));
        assert_eq!(nearest_rank(&[1u64, 2, 3, 4], 100.0), Some(4));
        assert_eq!(nearest_rank::<u64>(&[], 50.0), None);
    }
}
