//! Box-plot statistics against a second quantile formulation.

use proptest::prelude::*;

use ptxlink_core::metrics::stats::{summarize, StatsError};

/// Hyndman and Fan definition 7 written with one-based ranks.
fn q7(data: &[f64], p: f64) -> f64 {
    let mut x = data.to_vec();
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = x.len();
    if n == 1 {
        return x[0];
    }
    let rank = 1.0 + (n as f64 - 1.0) * p;
    let k = rank.floor() as usize;
    let d = rank - k as f64;
    if k >= n {
        return x[n - 1];
    }
    x[k - 1] + d * (x[k] - x[k - 1])
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

#[test]
fn known_values() {
    // Same values R's quantile() gives with its default type.
    let x: Vec<f64> = (1..=10).map(f64::from).collect();
    let s = summarize(&x).unwrap();
    assert_eq!((s.q1, s.median, s.q3), (3.25, 5.5, 7.75));
    let s = summarize(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
    assert_eq!((s.q1, s.median, s.q3, s.iqr), (2.0, 3.0, 4.0, 2.0));
    assert_eq!(s.outliers, [100.0]);
    assert_eq!((s.whisker_low, s.whisker_high), (1.0, 4.0));
    assert_eq!(summarize(&[]), Err(StatsError::EmptyInput));
    assert_eq!(summarize(&[1.0, f64::NAN]), Err(StatsError::NonFinite(1)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1_000))]

    #[test]
    fn quartiles_match_oracle(x in prop::collection::vec(-1e6f64..1e6, 1..300)) {
        let s = summarize(&x).unwrap();
        prop_assert!(close(s.q1, q7(&x, 0.25)));
        prop_assert!(close(s.median, q7(&x, 0.5)));
        prop_assert!(close(s.q3, q7(&x, 0.75)));
        prop_assert_eq!(s.n, x.len());
        prop_assert!(close(s.mean, x.iter().sum::<f64>() / x.len() as f64));

        prop_assert!(s.min <= s.q1 && s.q1 <= s.median && s.median <= s.q3 && s.q3 <= s.max);
        let (lo, hi) = (s.q1 - 1.5 * s.iqr, s.q3 + 1.5 * s.iqr);
        prop_assert!(x.contains(&s.whisker_low) && x.contains(&s.whisker_high));
        prop_assert!(lo <= s.whisker_low && s.whisker_high <= hi);
        let outside = x.iter().filter(|v| **v < lo || **v > hi).count();
        prop_assert_eq!(s.outliers.len(), outside);
    }

    #[test]
    fn invariant_under_permutation(x in prop::collection::vec(-1e3f64..1e3, 1..100), rot in 0usize..100) {
        let mut y = x.clone();
        let k = rot % y.len();
        y.rotate_left(k);
        y.reverse();
        let (a, b) = (summarize(&x).unwrap(), summarize(&y).unwrap());
        prop_assert_eq!((a.q1, a.median, a.q3, a.min, a.max), (b.q1, b.median, b.q3, b.min, b.max));
    }
}
