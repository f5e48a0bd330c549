//! Soft pseudo labels for the student and the scalar cross-entropy.

use serde::{Deserialize, Serialize};

use crate::ad::PROB_CLAMP;
use crate::data::Bag;
use crate::error::{Error, Result};

/// Ranges at or below this are treated as constant.
pub const DEGENERATE_RANGE: f64 = 1e-8;

/// Value assigned to every element of a constant input.
pub const DEGENERATE_VALUE: f64 = 0.5;

/// `(x - min) / (max - min)`; a (near-)constant input maps to 0.5.
pub fn minmax_normalize(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::InvalidInput("cannot normalize an empty list".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value in normalization input".into()));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if range <= DEGENERATE_RANGE {
        return Ok(vec![DEGENERATE_VALUE; values.len()]);
    }
    Ok(values.iter().map(|v| ((v - min) / range).clamp(0.0, 1.0)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelSource {
    NegativeBag,
    NormalizedAttention,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelSet {
    pub bag_id: u32,
    /// One label per instance the weights covered (all instances for a
    /// negative bag).
    pub labels: Vec<f64>,
    pub epoch: usize,
    pub source: LabelSource,
}

/// Student targets for one bag: zeros for a negative bag, per-bag min-max
/// normalized attention for a positive bag.
pub fn make_pseudo_labels(bag: &Bag, attention: Option<&[f64]>, epoch: usize) -> Result<PseudoLabelSet> {
    if !bag.is_positive() {
        return Ok(PseudoLabelSet {
            bag_id: bag.id,
            labels: vec![0.0; bag.len()],
            epoch,
            source: LabelSource::NegativeBag,
        });
    }
    let Some(weights) = attention else {
        return Err(Error::InvalidInput(format!(
            "positive bag {} needs attention weights for pseudo labels",
            bag.id
        )));
    };
    if weights.len() > bag.len() {
        return Err(Error::InvalidInput(format!(
            "{} attention weights for a bag of {}",
            weights.len(),
            bag.len()
        )));
    }
    Ok(PseudoLabelSet {
        bag_id: bag.id,
        labels: minmax_normalize(weights)?,
        epoch,
        source: LabelSource::NormalizedAttention,
    })
}

/// `-[t ln p + (1 - t) ln(1 - p)]` with `p` clamped to `[1e-7, 1 - 1e-7]`.
pub fn binary_cross_entropy(target: f64, prediction: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&target) {
        return Err(Error::InvalidInput(format!("target {target} outside [0, 1]")));
    }
    if prediction.is_nan() {
        return Err(Error::InvalidInput("prediction is NaN".into()));
    }
    let p = prediction.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    Ok(-(target * p.ln() + (1.0 - target) * (1.0 - p).ln()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ad::NumericArray;
    use approx::assert_abs_diff_eq;

    #[test]
    fn minmax_hand_cases() {
        let v = minmax_normalize(&[2.0, 5.0, 11.0]).unwrap();
        assert_abs_diff_eq!(v[0], 0.0);
        assert_abs_diff_eq!(v[1], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v[2], 1.0);
        assert_eq!(minmax_normalize(&[4.2; 3]).unwrap(), vec![0.5; 3]);
        assert_eq!(minmax_normalize(&[7.0]).unwrap(), vec![0.5]);
        assert!(minmax_normalize(&[1.0, f64::NAN]).is_err());
        assert!(minmax_normalize(&[]).is_err());
    }

    fn bag(labels: Vec<u8>) -> Bag {
        let n = labels.len();
        Bag::new(3, NumericArray::zeros(&[n, 1]), labels).unwrap()
    }

    #[test]
    fn negative_bag_is_all_zero() {
        let b = bag(vec![0, 0, 0]);
        let p = make_pseudo_labels(&b, Some(&[0.9, 0.05, 0.05]), 2).unwrap();
        assert_eq!(p.labels, vec![0.0; 3]);
        assert_eq!(p.source, LabelSource::NegativeBag);
        assert_eq!(make_pseudo_labels(&b, None, 2).unwrap().labels, vec![0.0; 3]);
    }

    #[test]
    fn positive_bag_normalizes_attention() {
        let b = bag(vec![0, 1, 0]);
        let p = make_pseudo_labels(&b, Some(&[0.1, 0.3, 0.6]), 0).unwrap();
        assert_abs_diff_eq!(p.labels[0], 0.0);
        assert_abs_diff_eq!(p.labels[1], 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(p.labels[2], 1.0);
        let u = make_pseudo_labels(&b, Some(&[1.0 / 3.0; 3]), 0).unwrap();
        assert_eq!(u.labels, vec![0.5; 3]);
        assert!(make_pseudo_labels(&b, None, 0).is_err());
    }

    #[test]
    fn bce_hand_cases() {
        assert!(binary_cross_entropy(1.0, 1.0 - 1e-7).unwrap() < 2e-7);
        assert_abs_diff_eq!(binary_cross_entropy(0.5, 0.5).unwrap(), std::f64::consts::LN_2, epsilon = 1e-12);
        assert_abs_diff_eq!(binary_cross_entropy(0.0, 0.5).unwrap(), std::f64::consts::LN_2, epsilon = 1e-12);
        assert!(binary_cross_entropy(1.0, 0.0).unwrap().is_finite());
        assert!(binary_cross_entropy(-0.1, 0.5).is_err());
    }
}
