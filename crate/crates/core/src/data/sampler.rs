use rand::Rng;

use super::bag::Bag;
use crate::error::{Error, Result};

/// One sampled instance together with what is needed to look up its
/// pseudo label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampledInstance {
    /// Position of the owning bag within the split.
    pub bag_index: usize,
    pub instance_index: usize,
    pub bag_id: u32,
    pub bag_label: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampling {
    #[default]
    WithReplacement,
    WithoutReplacement,
}

fn locate(split: &[Bag], offsets: &[usize], flat: usize) -> SampledInstance {
    // offsets[b] is the flat index of bag b's first instance.
    let bag_index = offsets.partition_point(|&o| o <= flat) - 1;
    let bag = &split[bag_index];
    SampledInstance {
        bag_index,
        instance_index: flat - offsets[bag_index],
        bag_id: bag.id,
        bag_label: bag.label,
    }
}

/// Draws `batch_size` instances uniformly from all instances of `split`.
pub fn sample_instance_batch<R: Rng + ?Sized>(
    split: &[Bag],
    batch_size: usize,
    rng: &mut R,
    mode: Sampling,
) -> Result<Vec<SampledInstance>> {
    if batch_size == 0 {
        return Err(Error::InvalidInput("batch size must be at least 1".into()));
    }
    let mut offsets = Vec::with_capacity(split.len());
    let mut total = 0usize;
    for bag in split {
        offsets.push(total);
        total += bag.len();
    }
    if total == 0 {
        return Err(Error::InvalidInput("cannot sample from an empty split".into()));
    }
    match mode {
        Sampling::WithReplacement => Ok((0..batch_size)
            .map(|_| locate(split, &offsets, rng.gen_range(0..total)))
            .collect()),
        Sampling::WithoutReplacement => {
            if batch_size > total {
                return Err(Error::InvalidInput(format!(
                    "batch of {batch_size} exceeds the {total} instances available"
                )));
            }
            Ok(rand::seq::index::sample(rng, total, batch_size)
                .into_iter()
                .map(|flat| locate(split, &offsets, flat))
                .collect())
        }
    }
}
