use serde::{Deserialize, Serialize};

use super::special::two_sided_tail;
use super::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub n_pairs: usize,
    pub mean_diff: f64,
    pub t_statistic: f64,
    pub degrees_of_freedom: u64,
    pub p_two_sided: f64,
}

impl TTestResult {
    pub fn significant_at(&self, alpha: f64) -> bool {
        self.p_two_sided < alpha
    }
}

// Differences whose spread is within rounding of the inputs count as constant.
const DEGENERATE_REL_SD: f64 = 1e-12;

/// Paired t-test on `treatment - baseline`, element by element.
pub fn paired_t_test(baseline: &[f64], treatment: &[f64]) -> Result<TTestResult, StatsError> {
    if baseline.len() != treatment.len() {
        return Err(StatsError::LengthMismatch {
            baseline: baseline.len(),
            treatment: treatment.len(),
        });
    }
    let n = baseline.len();
    if n < 2 {
        return Err(StatsError::TooFewPairs(n));
    }
    let diffs: Vec<f64> = treatment.iter().zip(baseline).map(|(t, b)| t - b).collect();
    let nf = n as f64;
    let mean = diffs.iter().sum::<f64>() / nf;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let sd = var.sqrt();

    let scale = baseline
        .iter()
        .chain(treatment)
        .fold(1.0f64, |m, v| m.max(v.abs()));
    if sd.is_nan() || sd <= DEGENERATE_REL_SD * scale {
        return Err(StatsError::DegenerateVariance);
    }

    let t = mean / (sd / nf.sqrt());
    let df = (n - 1) as u64;
    Ok(TTestResult {
        n_pairs: n,
        mean_diff: mean,
        t_statistic: t,
        degrees_of_freedom: df,
        p_two_sided: two_sided_tail(t.abs(), df as f64),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Two-sided p for df = 2 from the closed-form CDF ½(1 + t/√(t²+2)).
    fn p_df2(t: f64) -> f64 {
        1.0 - t.abs() / (t * t + 2.0).sqrt()
    }

    #[test]
    fn differences_one_two_three() {
        let r = paired_t_test(&[0.0, 0.0, 0.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.n_pairs, 3);
        assert_eq!(r.degrees_of_freedom, 2);
        assert!((r.mean_diff - 2.0).abs() < 1e-15);
        assert!((r.t_statistic - 12f64.sqrt()).abs() < 1e-12);
        assert!((r.t_statistic - 3.4641).abs() < 1e-4);
        assert!((r.p_two_sided - 0.0742).abs() < 1e-3);
        assert!((r.p_two_sided - p_df2(r.t_statistic)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cases() {
        let base = [3.0, 4.0, 5.5, 9.0];
        assert_eq!(
            paired_t_test(&base, &base),
            Err(StatsError::DegenerateVariance)
        );
        let shifted: Vec<f64> = base.iter().map(|b| b + 1.0).collect();
        assert_eq!(
            paired_t_test(&base, &shifted),
            Err(StatsError::DegenerateVariance)
        );
        let entropies = [3.89, 4.013, 3.7712, 4.2];
        let shifted: Vec<f64> = entropies.iter().map(|b| b + 1.0).collect();
        assert_eq!(
            paired_t_test(&entropies, &shifted),
            Err(StatsError::DegenerateVariance)
        );
    }

    #[test]
    fn argument_errors() {
        assert_eq!(
            paired_t_test(&[1.0, 2.0], &[1.0]),
            Err(StatsError::LengthMismatch {
                baseline: 2,
                treatment: 1
            })
        );
        assert_eq!(
            paired_t_test(&[1.0], &[2.0]),
            Err(StatsError::TooFewPairs(1))
        );
    }

    fn pairs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..30).prop_flat_map(|n| {
            (
                proptest::collection::vec(-50i32..50, n),
                proptest::collection::vec(-50i32..50, n),
            )
                .prop_map(|(a, b)| {
                    (
                        a.into_iter().map(f64::from).collect(),
                        b.into_iter().map(f64::from).collect(),
                    )
                })
        })
    }

    proptest! {
        #[test]
        fn translation_invariance((b, t) in pairs(), shift in -1000i32..1000) {
            let Ok(r) = paired_t_test(&b, &t) else { return Ok(()); };
            let c = f64::from(shift);
            let b2: Vec<f64> = b.iter().map(|x| x + c).collect();
            let t2: Vec<f64> = t.iter().map(|x| x + c).collect();
            let r2 = paired_t_test(&b2, &t2).unwrap();
            prop_assert_eq!(r, r2);
        }

        #[test]
        fn antisymmetry((b, t) in pairs()) {
            let Ok(r) = paired_t_test(&b, &t) else { return Ok(()); };
            let s = paired_t_test(&t, &b).unwrap();
            prop_assert_eq!(s.t_statistic, -r.t_statistic);
            prop_assert_eq!(s.p_two_sided, r.p_two_sided);
            prop_assert_eq!(r.t_statistic.signum(), r.mean_diff.signum());
            prop_assert!((0.0..=1.0).contains(&r.p_two_sided));
        }
    }
}
