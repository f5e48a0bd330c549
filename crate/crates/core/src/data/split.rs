use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::bag::Bag;
use crate::error::{Error, Result};

/// Apportions `total` items over `weights` by the largest-remainder method.
/// Ties in the fractional part go to the earlier index.
pub fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if total == 0 || sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut sizes: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    // Stable sort keeps index order among equal remainders.
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
    });
    for &k in order.iter().take(total.saturating_sub(assigned)) {
        sizes[k] += 1;
    }
    sizes
}

/// Stratified, seeded split into `(train, valid, test)`.
///
/// Split sizes follow largest-remainder apportionment of `fractions`; the
/// positive bags are apportioned the same way over those sizes, so every
/// split's positive count is within one bag of its proportional share.
/// Each split is returned sorted by bag id.
pub fn split_dataset(
    bags: Vec<Bag>,
    fractions: [f64; 3],
    seed: u64,
) -> Result<(Vec<Bag>, Vec<Bag>, Vec<Bag>)> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::InvalidConfig(format!(
            "split fractions must lie in [0, 1], got {fractions:?}"
        )));
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "split fractions must sum to 1, got {sum}"
        )));
    }
    let total = bags.len();
    let sizes = largest_remainder(total, &fractions);
    for (k, name) in ["train", "valid", "test"].iter().enumerate() {
        if fractions[k] > 0.0 && sizes[k] == 0 {
            return Err(Error::InvalidConfig(format!(
                "split `{name}` (fraction {}) would receive 0 of {total} bags",
                fractions[k]
            )));
        }
    }

    let (mut pos, mut neg): (Vec<Bag>, Vec<Bag>) = bags.into_iter().partition(Bag::is_positive);
    pos.sort_by_key(|b| b.id);
    neg.sort_by_key(|b| b.id);
    let weights: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
    let pos_sizes = largest_remainder(pos.len(), &weights);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut pos = pos.into_iter();
    let mut neg = neg.into_iter();

    let mut out: Vec<Vec<Bag>> = Vec::with_capacity(3);
    for k in 0..3 {
        let n_pos = pos_sizes[k].min(sizes[k]);
        let mut split: Vec<Bag> = pos.by_ref().take(n_pos).collect();
        split.extend(neg.by_ref().take(sizes[k] - n_pos));
        split.sort_by_key(|b| b.id);
        out.push(split);
    }
    let test = out.pop().unwrap_or_default();
    let valid = out.pop().unwrap_or_default();
    let train = out.pop().unwrap_or_default();
    Ok((train, valid, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ad::NumericArray;

    fn bags(n: usize, positives: usize) -> Vec<Bag> {
        (0..n)
            .map(|i| {
                let label = u8::from(i < positives);
                Bag::new(i as u32, NumericArray::zeros(&[1, 1]), vec![label]).unwrap()
            })
            .collect()
    }

    #[test]
    fn largest_remainder_hand_cases() {
        assert_eq!(largest_remainder(10, &[0.8, 0.1, 0.1]), vec![8, 1, 1]);
        // 1/3 each of 10: remainders tie, earliest split wins.
        assert_eq!(largest_remainder(10, &[1.0, 1.0, 1.0]), vec![4, 3, 3]);
        assert_eq!(largest_remainder(350, &[200.0, 50.0, 100.0]), vec![200, 50, 100]);
    }

    #[test]
    fn degenerate_split_keeps_everything_in_train() {
        let (tr, va, te) = split_dataset(bags(9, 4), [1.0, 0.0, 0.0], 3).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (9, 0, 0));
    }

    #[test]
    fn sizes_and_disjointness() {
        let (tr, va, te) = split_dataset(bags(10, 5), [0.8, 0.1, 0.1], 1).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (8, 1, 1));
        let mut ids: Vec<u32> = tr.iter().chain(&va).chain(&te).map(|b| b.id).collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn stratification_within_one_bag() {
        let (tr, _, _) = split_dataset(bags(100, 50), [0.7, 0.15, 0.15], 9).unwrap();
        let pos = tr.iter().filter(|b| b.is_positive()).count() as f64;
        assert!((pos - 0.5 * tr.len() as f64).abs() <= 1.0);
    }

    #[test]
    fn empty_split_with_nonzero_fraction_fails() {
        assert!(split_dataset(bags(2, 1), [0.8, 0.1, 0.1], 0).is_err());
        assert!(split_dataset(bags(10, 5), [0.5, 0.2, 0.2], 0).is_err());
    }
}
