//! Significance tests and accuracy aggregation.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

use crate::dataset::ClassId;
use crate::error::{Error, Result};

/// Cross-tabulation of two systems' hits and misses over the same tokens.
/// `n01` counts tokens where system A was correct and B wrong; `n10` the
/// reverse; `n00` and `n11` the agreements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ContingencyCounts {
    pub n00: u64,
    pub n01: u64,
    pub n10: u64,
    pub n11: u64,
}

impl ContingencyCounts {
    pub fn total(&self) -> u64 {
        self.n00 + self.n01 + self.n10 + self.n11
    }
}

/// Continuity-corrected McNemar test over the discordant counts.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct McNemarTest {
    pub counts: ContingencyCounts,
    pub chi2: f64,
    pub p: f64,
}

impl McNemarTest {
    /// No discordant pairs: the test is undefined and reported as a
    /// no-difference outcome instead of an error.
    pub fn degenerate(&self) -> bool {
        self.counts.n01 + self.counts.n10 == 0
    }
}

/// McNemar's chi-square test with continuity correction:
/// chi2 = (|n01 - n10| - 1)^2 / (n01 + n10), p from the chi-square
/// distribution with one degree of freedom.
pub fn mcnemar(gold: &[ClassId], preds_a: &[ClassId], preds_b: &[ClassId]) -> Result<McNemarTest> {
    if gold.len() != preds_a.len() || gold.len() != preds_b.len() {
        return Err(Error::invalid(
            "mcnemar needs equally long prediction vectors".to_string(),
        ));
    }
    if gold.is_empty() {
        return Err(Error::invalid("mcnemar needs at least one token".to_string()));
    }
    let mut counts = ContingencyCounts {
        n00: 0,
        n01: 0,
        n10: 0,
        n11: 0,
    };
    for i in 0..gold.len() {
        let a = preds_a[i] == gold[i];
        let b = preds_b[i] == gold[i];
        match (a, b) {
            (false, false) => counts.n00 += 1,
            (true, false) => counts.n01 += 1,
            (false, true) => counts.n10 += 1,
            (true, true) => counts.n11 += 1,
        }
    }
    Ok(mcnemar_from_counts(counts))
}

/// McNemar from precomputed counts.
pub fn mcnemar_from_counts(counts: ContingencyCounts) -> McNemarTest {
    let discordant = counts.n01 + counts.n10;
    if discordant == 0 {
        return McNemarTest {
            counts,
            chi2: 0.0,
            p: 1.0,
        };
    }
    let diff = counts.n01.abs_diff(counts.n10) as f64;
    let chi2 = (diff - 1.0).powi(2) / discordant as f64;
    let dist = ChiSquared::new(1.0).expect("df 1 is valid");
    let p = 1.0 - dist.cdf(chi2);
    McNemarTest { counts, chi2, p }
}

/// One-tailed paired t-test result. `t` may be infinite when the differences
/// have zero spread; `p` is the upper-tail probability under df = n - 1.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PairedTTest {
    pub t: f64,
    pub p: f64,
    pub df: usize,
}

/// One-tailed paired t-test of A against B (upper tail: is A better?).
/// Zero-variance differences produce an infinity flag with p 0 or 1, or
/// t = 0 with p = 0.5 when the differences are identically zero.
pub fn paired_t_one_tailed(acc_a: &[f64], acc_b: &[f64]) -> Result<PairedTTest> {
    if acc_a.len() != acc_b.len() {
        return Err(Error::invalid(
            "paired t-test needs equally long accuracy vectors".to_string(),
        ));
    }
    if acc_a.len() < 2 {
        return Err(Error::invalid(
            "paired t-test needs at least 2 pairs".to_string(),
        ));
    }
    let n = acc_a.len();
    let d: Vec<f64> = acc_a.iter().zip(acc_b).map(|(a, b)| a - b).collect();
    let (mean, sd) = mean_sd(&d)?;
    let df = n - 1;
    if sd == 0.0 {
        return Ok(if mean == 0.0 {
            PairedTTest {
                t: 0.0,
                p: 0.5,
                df,
            }
        } else if mean > 0.0 {
            PairedTTest {
                t: f64::INFINITY,
                p: 0.0,
                df,
            }
        } else {
            PairedTTest {
                t: f64::NEG_INFINITY,
                p: 1.0,
                df,
            }
        });
    }
    let t = mean / (sd / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("valid df");
    let p = 1.0 - dist.cdf(t);
    Ok(PairedTTest { t, p, df })
}

/// Mean and sample standard deviation (n - 1 denominator; a single value has
/// sd 0 by convention).
pub fn mean_sd(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::invalid("mean of an empty sample".to_string()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ids(xs: &[u32]) -> Vec<ClassId> {
        xs.iter().map(|&x| ClassId(x)).collect()
    }

    #[test]
    fn identical_predictions_give_chi2_zero_p_one() {
        let gold = ids(&[0, 1, 0, 1]);
        let preds = ids(&[0, 1, 1, 1]);
        let r = mcnemar(&gold, &preds, &preds).unwrap();
        assert_eq!(r.chi2, 0.0);
        assert_eq!(r.p, 1.0);
        assert!(r.degenerate());
        assert_eq!(r.counts.total(), 4);
    }

    #[test]
    fn mcnemar_ten_twenty() {
        let r = mcnemar_from_counts(ContingencyCounts {
            n00: 0,
            n01: 10,
            n10: 20,
            n11: 0,
        });
        assert_eq!(r.chi2, 2.7);
        assert!(r.p > 0.05);
    }

    #[test]
    fn mcnemar_zero_thirty() {
        let r = mcnemar_from_counts(ContingencyCounts {
            n00: 5,
            n01: 0,
            n10: 30,
            n11: 5,
        });
        assert_abs_diff_eq!(r.chi2, 841.0 / 30.0, epsilon = 1e-12);
        assert!(r.p < 0.001);
    }

    #[test]
    fn mcnemar_is_symmetric_in_the_two_systems() {
        let gold = ids(&[0, 0, 0, 0, 1, 1, 1, 1, 2, 2]);
        let a = ids(&[0, 0, 1, 1, 1, 1, 0, 0, 2, 0]);
        let b = ids(&[0, 1, 0, 1, 1, 0, 1, 0, 0, 2]);
        let ab = mcnemar(&gold, &a, &b).unwrap();
        let ba = mcnemar(&gold, &b, &a).unwrap();
        assert_eq!(ab.chi2, ba.chi2);
        assert_eq!(ab.p, ba.p);
        assert_eq!(ab.counts.n01, ba.counts.n10);
    }

    #[test]
    fn mcnemar_rejects_mismatched_lengths() {
        let gold = ids(&[0, 1]);
        assert!(mcnemar(&gold, &ids(&[0]), &ids(&[0, 1])).is_err());
        assert!(mcnemar(&[], &[], &[]).is_err());
    }

    #[test]
    fn chi_square_critical_value_is_tabulated() {
        let dist = ChiSquared::new(1.0).unwrap();
        assert_abs_diff_eq!(1.0 - dist.cdf(3.841), 0.05, epsilon = 5e-4);
    }

    #[test]
    fn student_critical_value_is_tabulated() {
        let dist = StudentsT::new(0.0, 1.0, 9.0).unwrap();
        assert_abs_diff_eq!(1.0 - dist.cdf(1.833), 0.05, epsilon = 5e-4);
    }

    #[test]
    fn equal_vectors_give_t_zero_p_half() {
        let a = [0.9, 0.8, 0.85];
        let r = paired_t_one_tailed(&a, &a).unwrap();
        assert_eq!(r.t, 0.0);
        assert_eq!(r.p, 0.5);
        assert_eq!(r.df, 2);
    }

    #[test]
    fn constant_positive_difference_flags_infinity() {
        let a = [2.0; 10];
        let b = [1.0; 10];
        let r = paired_t_one_tailed(&a, &b).unwrap();
        assert!(r.t.is_infinite() && r.t > 0.0);
        assert_eq!(r.p, 0.0);
        let rev = paired_t_one_tailed(&b, &a).unwrap();
        assert!(rev.t.is_infinite() && rev.t < 0.0);
        assert_eq!(rev.p, 1.0);
    }

    #[test]
    fn alternating_difference_example() {
        let a = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let b = [0.0; 10];
        let r = paired_t_one_tailed(&a, &b).unwrap();
        assert_abs_diff_eq!(r.t, 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.p, 0.0075, epsilon = 5e-4);
        assert_eq!(r.df, 9);
    }

    #[test]
    fn paired_t_antisymmetry() {
        let a = [0.93, 0.94, 0.92, 0.95, 0.93];
        let b = [0.91, 0.95, 0.90, 0.94, 0.92];
        let ab = paired_t_one_tailed(&a, &b).unwrap();
        let ba = paired_t_one_tailed(&b, &a).unwrap();
        assert_abs_diff_eq!(ab.t, -ba.t, epsilon = 1e-12);
    }

    #[test]
    fn mean_sd_examples() {
        assert_eq!(mean_sd(&[5.0, 5.0, 5.0]).unwrap(), (5.0, 0.0));
        let (m, s) = mean_sd(&[0.0, 10.0]).unwrap();
        assert_eq!(m, 5.0);
        assert_abs_diff_eq!(s, 7.0711, epsilon = 1e-4);
        assert_eq!(mean_sd(&[3.0]).unwrap(), (3.0, 0.0));
        assert!(mean_sd(&[]).is_err());
    }
}
