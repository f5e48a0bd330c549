//! Hard positive instance mining: before the teacher sees a positive bag,
//! instances the student already scores above a threshold are removed.

use serde::{Deserialize, Serialize};

use crate::data::Bag;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HpmConfig {
    pub threshold: f64,
    pub warmup_epochs: usize,
    pub min_surviving: usize,
}

impl Default for HpmConfig {
    fn default() -> Self {
        Self {
            threshold: 0.8,
            warmup_epochs: 100,
            min_surviving: 1,
        }
    }
}

impl HpmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "HPM threshold {} not in (0, 1)",
                self.threshold
            )));
        }
        if self.min_surviving == 0 {
            return Err(Error::InvalidConfig("HPM must keep at least one instance".into()));
        }
        Ok(())
    }
}

/// Mining is gated on `epoch >= warmup_epochs` (epochs counted from 0).
pub fn hpm_active(epoch: usize, config: &HpmConfig) -> bool {
    epoch >= config.warmup_epochs
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilteredBagView {
    pub bag_id: u32,
    /// Ascending.
    pub surviving: Vec<usize>,
    /// Ascending.
    pub dropped: Vec<usize>,
}

impl FilteredBagView {
    pub fn identity(bag: &Bag) -> Self {
        Self {
            bag_id: bag.id,
            surviving: (0..bag.len()).collect(),
            dropped: Vec::new(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.dropped.is_empty()
    }
}

/// Drops instances of a positive bag whose student score exceeds the
/// threshold. If fewer than `min_surviving` would remain, the
/// lowest-scoring instances are kept instead. Negative bags pass through.
pub fn filter_bag(bag: &Bag, scores: &[f64], config: &HpmConfig) -> Result<FilteredBagView> {
    if scores.len() != bag.len() {
        return Err(Error::InvalidInput(format!(
            "{} scores for bag {} of {} instances",
            scores.len(),
            bag.id,
            bag.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::InvalidInput(format!("student score {s} outside [0, 1]")));
    }
    if !bag.is_positive() {
        return Ok(FilteredBagView::identity(bag));
    }

    let keep_count = scores.iter().filter(|&&s| s <= config.threshold).count();
    let mut keep = vec![false; bag.len()];
    if keep_count >= config.min_surviving {
        for (j, &s) in scores.iter().enumerate() {
            keep[j] = s <= config.threshold;
        }
    } else {
        let mut order: Vec<usize> = (0..bag.len()).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
        for &j in order.iter().take(config.min_surviving.min(bag.len())) {
            keep[j] = true;
        }
    }
    let (surviving, dropped): (Vec<usize>, Vec<usize>) = (0..bag.len()).partition(|&j| keep[j]);
    Ok(FilteredBagView {
        bag_id: bag.id,
        surviving,
        dropped,
    })
}
