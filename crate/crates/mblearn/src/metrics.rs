//! Distance and feature-weighting functions.
//!
//! The overlap metric counts weighted feature-value mismatches; gain-ratio
//! weighting scores each feature by the entropy drop of the class
//! distribution, normalized by split info so many-valued features get no free
//! advantage. Probabilities are estimated from token frequencies.

use serde::{Deserialize, Serialize};

use crate::dataset::{Instance, InstanceBase, ValueId};
use crate::error::{Error, Result};

/// Per-feature non-negative weights for the overlap metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::invalid("weights must be finite and non-negative"));
        }
        Ok(WeightVector(w))
    }

    /// All-ones weights: the plain overlap metric.
    pub fn uniform(n: usize) -> Self {
        WeightVector(vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn scaled(&self, factor: f64) -> Self {
        WeightVector(self.0.iter().map(|w| w * factor).collect())
    }
}

impl std::ops::Index<usize> for WeightVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// 0 if the two values match, 1 otherwise. Both values must come from the
/// same feature position.
#[inline]
pub fn overlap_delta(x: ValueId, y: ValueId) -> f64 {
    if x == y {
        0.0
    } else {
        1.0
    }
}

#[inline]
pub(crate) fn weighted_distance_raw(xs: &[ValueId], ys: &[ValueId], w: &[f64]) -> f64 {
    let mut d = 0.0;
    for i in 0..xs.len() {
        if xs[i] != ys[i] {
            d += w[i];
        }
    }
    d
}

/// Weighted overlap distance between two instances of equal arity.
pub fn weighted_distance(x: &Instance, y: &Instance, w: &WeightVector) -> Result<f64> {
    if x.arity() != y.arity() || x.arity() != w.len() {
        return Err(Error::ArityMismatch {
            expected: w.len(),
            actual: if x.arity() != w.len() {
                x.arity()
            } else {
                y.arity()
            },
        });
    }
    Ok(weighted_distance_raw(&x.values, &y.values, w.as_slice()))
}

#[inline]
pub(crate) fn zhang_distance_raw(xs: &[ValueId], ys: &[ValueId]) -> f64 {
    let mismatches = xs.iter().zip(ys).filter(|(a, b)| a != b).count();
    (mismatches as f64 / xs.len() as f64).sqrt()
}

/// Mismatch distance normalized into [0, 1]: the root of the mean squared
/// per-feature delta. Deliberately unweighted.
pub fn zhang_distance(x: &Instance, y: &Instance) -> Result<f64> {
    if x.arity() != y.arity() {
        return Err(Error::ArityMismatch {
            expected: x.arity(),
            actual: y.arity(),
        });
    }
    Ok(zhang_distance_raw(&x.values, &y.values))
}

fn entropy_from_counts(counts: &[u64], total: u64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    let mut h = 0.0;
    for &c in counts {
        if c > 0 {
            let p = c as f64 / total;
            h -= p * p.log2();
        }
    }
    h
}

/// Gain-ratio weights over all features: entropy drop of the class
/// distribution given the feature, divided by split info. A constant feature
/// (split info 0) gets weight 0; tiny negative rounding residues are clamped
/// to 0. Probabilities are token-frequency weighted.
pub fn information_gain_weights(base: &InstanceBase) -> WeightVector {
    assert!(base.token_count() > 0, "gain-ratio weights need a non-empty base");
    let n_classes = base.classes().len();
    let class_counts = base.class_token_counts();
    let total = base.token_count();
    let h_class = entropy_from_counts(&class_counts, total);

    let mut weights = Vec::with_capacity(base.n_features());
    for f in 0..base.n_features() {
        let n_values = base.value_alphabets()[f].len();
        // joint token counts: value -> per-class
        let mut value_totals = vec![0u64; n_values];
        let mut joint = vec![0u64; n_values * n_classes];
        for t in base.types() {
            let v = t.instance.values[f].0 as usize;
            let c = t.instance.label.0 as usize;
            value_totals[v] += t.frequency;
            joint[v * n_classes + c] += t.frequency;
        }
        let mut cond = 0.0;
        let mut split_info = 0.0;
        for v in 0..n_values {
            if value_totals[v] == 0 {
                continue;
            }
            let pv = value_totals[v] as f64 / total as f64;
            cond += pv * entropy_from_counts(&joint[v * n_classes..(v + 1) * n_classes], value_totals[v]);
            split_info -= pv * pv.log2();
        }
        let w = if split_info > 0.0 {
            ((h_class - cond) / split_info).max(0.0)
        } else {
            0.0
        };
        weights.push(w);
    }
    WeightVector(weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{InstanceBase, LoadOptions};
    use approx::assert_abs_diff_eq;
    use std::io::Cursor;

    fn load(csv: &str) -> InstanceBase {
        InstanceBase::load(Cursor::new(csv), &LoadOptions::default()).unwrap()
    }

    fn toy4() -> InstanceBase {
        load("a,a,a,X\na,a,b,X\nb,b,a,Y\nb,b,b,Y\n")
    }

    #[test]
    fn delta_is_the_mismatch_indicator() {
        assert_eq!(overlap_delta(ValueId(0), ValueId(0)), 0.0);
        assert_eq!(overlap_delta(ValueId(0), ValueId(1)), 1.0);
    }

    #[test]
    fn toy4_i1_vs_i4_has_three_mismatches() {
        let base = toy4();
        let i1 = &base.types()[0].instance;
        let i4 = &base.types()[3].instance;
        let total: f64 = i1
            .values
            .iter()
            .zip(&i4.values)
            .map(|(a, b)| overlap_delta(*a, *b))
            .sum();
        assert_eq!(total, 3.0);
    }

    #[test]
    fn weighted_distance_examples() {
        let base = toy4();
        let w = WeightVector::new(vec![1.0, 1.0, 0.0]).unwrap();
        let i1 = &base.types()[0].instance;
        let i2 = &base.types()[1].instance;
        let i3 = &base.types()[2].instance;
        assert_eq!(weighted_distance(i1, i1, &w).unwrap(), 0.0);
        assert_eq!(weighted_distance(i1, i3, &w).unwrap(), 2.0);
        // i2 differs from i1 only on the zero-weight third feature
        assert_eq!(weighted_distance(i1, i2, &w).unwrap(), 0.0);
        assert_eq!(
            weighted_distance(i1, i2, &w).unwrap(),
            weighted_distance(i2, i1, &w).unwrap()
        );
    }

    #[test]
    fn arity_mismatch_is_an_error() {
        let a = Instance {
            values: vec![ValueId(0), ValueId(1)],
            label: crate::dataset::ClassId(0),
        };
        let b = Instance {
            values: vec![ValueId(0)],
            label: crate::dataset::ClassId(0),
        };
        assert!(weighted_distance(&a, &b, &WeightVector::uniform(2)).is_err());
        assert!(zhang_distance(&a, &b).is_err());
    }

    #[test]
    fn toy4_gain_ratio_weights() {
        let w = information_gain_weights(&toy4());
        assert_abs_diff_eq!(w[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w[2], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_feature_gets_zero_weight() {
        let base = load("a,c,X\nb,c,Y\n");
        let w = information_gain_weights(&base);
        assert_eq!(w[1], 0.0);
        assert!(w[0] > 0.99);
    }

    #[test]
    fn class_copy_feature_numerator_is_class_entropy() {
        // feature 0 mirrors the class; conditional entropy is 0 by
        // construction, so the numerator equals H(C) = 1 bit. Feature 0 takes
        // 2 values with equal mass, so split info is 1 and the ratio is 1.
        let base = load("x,q,X\nx,r,X\ny,q,Y\ny,r,Y\n");
        let w = information_gain_weights(&base);
        assert_abs_diff_eq!(w[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn weights_use_token_frequencies() {
        // the duplicated row shifts P(v) even though the type set is the same
        let once = load("a,p,X\nb,q,Y\n");
        let dup = load("a,p,X\na,p,X\na,p,X\nb,q,Y\n");
        let w_once = information_gain_weights(&once);
        let w_dup = information_gain_weights(&dup);
        assert_abs_diff_eq!(w_once[0], 1.0, epsilon = 1e-12);
        // skewed split info: -0.75 log2 0.75 - 0.25 log2 0.25
        let si = -(0.75f64 * 0.75f64.log2() + 0.25 * 0.25f64.log2());
        let h = si; // class distribution is identically skewed
        assert_abs_diff_eq!(w_dup[0], h / si, epsilon = 1e-12);
    }

    #[test]
    fn zhang_distance_examples() {
        let base = toy4();
        let i1 = &base.types()[0].instance;
        let i2 = &base.types()[1].instance;
        let i4 = &base.types()[3].instance;
        assert_eq!(zhang_distance(i1, i1).unwrap(), 0.0);
        assert_eq!(zhang_distance(i1, i4).unwrap(), 1.0);
        assert_abs_diff_eq!(
            zhang_distance(i1, i2).unwrap(),
            (1.0f64 / 3.0).sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn weight_vector_rejects_bad_entries() {
        assert!(WeightVector::new(vec![1.0, -0.1]).is_err());
        assert!(WeightVector::new(vec![f64::NAN]).is_err());
        assert!(WeightVector::new(vec![0.0, 2.5]).is_ok());
    }
}
