use serde::{Deserialize, Serialize};

/// Distance statistics in grid cells.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dist_avg: f64,
    pub dist_50: f64,
    pub dist_90: f64,
    pub n: usize,
}

/// Nearest-rank percentile: the `ceil(p * N)`-th smallest value (1-based).
///
/// `sorted` must be ascending and non-empty; `p` is in `(0, 1]`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = (p * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

impl MetricsReport {
    /// Summarizes a list of distances; an empty list gives all zeros.
    pub fn from_distances(distances: &[f64]) -> Self {
        if distances.is_empty() {
            return Self::default();
        }
        let mut d = distances.to_vec();
        d.sort_by(f64::total_cmp);
        Self {
            dist_avg: d.iter().sum::<f64>() / d.len() as f64,
            dist_50: percentile(&d, 0.5),
            dist_90: percentile(&d, 0.9),
            n: d.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn three_sample_report() {
        let r = MetricsReport::from_distances(&[2.0, 0.0, 1.0]);
        assert_eq!((r.dist_avg, r.dist_50, r.dist_90, r.n), (1.0, 1.0, 2.0, 3));
    }

    #[test]
    fn exact_predictions_score_zero() {
        let r = MetricsReport::from_distances(&[0.0; 5]);
        assert_eq!((r.dist_avg, r.dist_50, r.dist_90), (0.0, 0.0, 0.0));
    }

    #[test]
    fn nearest_rank_on_ten() {
        let d: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(percentile(&d, 0.5), 5.0);
        assert_eq!(percentile(&d, 0.9), 9.0);
        assert_eq!(percentile(&d, 0.91), 10.0);
    }

    proptest! {
        #[test]
        fn ordered_and_non_negative(d in prop::collection::vec(0.0f64..20.0, 1..200)) {
            let r = MetricsReport::from_distances(&d);
            prop_assert!(r.dist_50 <= r.dist_90);
            prop_assert!(r.dist_50 >= 0.0 && r.dist_avg >= 0.0);
        }
    }
}
