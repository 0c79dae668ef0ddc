use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degenerate {
    /// Fewer than two paired observations.
    TooFewSamples,
    /// Every difference is the same, so the standard error is zero.
    ZeroVariance,
}

/// Outcome of a paired t-test. Degenerate inputs are reported, never NaN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TTest {
    Computed { t: f64, p: f64, df: usize },
    Degenerate(Degenerate),
}

impl TTest {
    pub fn t(&self) -> Option<f64> {
        match *self {
            TTest::Computed { t, .. } => Some(t),
            TTest::Degenerate(_) => None,
        }
    }

    pub fn p(&self) -> Option<f64> {
        match *self {
            TTest::Computed { p, .. } => Some(p),
            TTest::Degenerate(_) => None,
        }
    }
}

/// Paired Student t-test on `a - b` with a two-sided p-value.
///
/// # Panics
/// If the series differ in length.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> TTest {
    assert_eq!(a.len(), b.len(), "paired series must have equal length");
    let n = a.len();
    if n < 2 {
        return TTest::Degenerate(Degenerate::TooFewSamples);
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    if var <= 0.0 || d.iter().all(|&x| x == d[0]) {
        return TTest::Degenerate(Degenerate::ZeroVariance);
    }
    let df = n - 1;
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("df is positive");
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    TTest::Computed { t, p, df }
}

#[cfg(test)]
mod tests {
    use super::*;

    // scipy.stats.ttest_rel([1,2,3,4,5], [2,2,4,4,6])
    const REF_T: f64 = -2.449489742783178;
    const REF_P: f64 = 0.07048399691021993;

    #[test]
    fn matches_reference() {
        let TTest::Computed { t, p, df } = paired_t_test(&[1., 2., 3., 4., 5.], &[2., 2., 4., 4., 6.]) else {
            panic!("degenerate");
        };
        assert_eq!(df, 4);
        assert!((t - REF_T).abs() < 1e-9, "{t}");
        assert!((p - REF_P).abs() < 1e-9, "{p}");
    }

    #[test]
    fn second_reference() {
        // scipy.stats.ttest_rel([0.9,0.8,0.7,0.95], [0.85,0.82,0.6,0.9])
        let r = paired_t_test(&[0.9, 0.8, 0.7, 0.95], &[0.85, 0.82, 0.6, 0.9]);
        assert!((r.t().unwrap() - 1.8244909216786145).abs() < 1e-9);
        assert!((r.p().unwrap() - 0.16557687481120947).abs() < 1e-9);
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(
            paired_t_test(&[1., 2., 3.], &[1., 2., 3.]),
            TTest::Degenerate(Degenerate::ZeroVariance)
        );
        assert_eq!(
            paired_t_test(&[2., 3., 4., 5.], &[1., 2., 3., 4.]),
            TTest::Degenerate(Degenerate::ZeroVariance)
        );
        assert_eq!(paired_t_test(&[1.], &[2.]), TTest::Degenerate(Degenerate::TooFewSamples));
        assert_eq!(paired_t_test(&[], &[]), TTest::Degenerate(Degenerate::TooFewSamples));
    }

    proptest::proptest! {
        #[test]
        fn swapping_negates_t(pairs in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..12)) {
            let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            match (paired_t_test(&a, &b), paired_t_test(&b, &a)) {
                (TTest::Computed { t: t1, p: p1, .. }, TTest::Computed { t: t2, p: p2, .. }) => {
                    proptest::prop_assert!((t1 + t2).abs() <= 1e-9 * t1.abs().max(1.0));
                    proptest::prop_assert!((p1 - p2).abs() < 1e-12);
                    proptest::prop_assert!((0.0..=1.0).contains(&p1));
                }
                (TTest::Degenerate(x), TTest::Degenerate(y)) => proptest::prop_assert_eq!(x, y),
                other => proptest::prop_assert!(false, "{:?}", other),
            }
        }
    }
}
