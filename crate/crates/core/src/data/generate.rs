//! Synthetic bag datasets with a controllable positive-instance ratio.
//!
//! Negative instances come from a mixture of Gaussian components whose
//! means are orthogonal to a hidden "signal" direction `u`. A positive
//! instance is drawn like a negative one and then shifted along `u`, either
//! by the full separation (easy component) or by a fraction of it (hard
//! component, close to the negatives).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::bag::Bag;
use super::split::split_dataset;
use crate::ad::NumericArray;
use crate::error::{Error, Result};

/// Number of Gaussian components in the negative mixture.
const NEGATIVE_COMPONENTS: usize = 3;

const SPLIT_SEED_SALT: u64 = 0x5eed_0000_0000_0001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenSpec {
    pub train_bags: usize,
    pub valid_bags: usize,
    pub test_bags: usize,
    pub instances_per_bag: usize,
    pub dim: usize,
    pub positive_bag_fraction: f64,
    /// Fraction of positive instances inside each positive bag.
    pub positive_ratio: f64,
    /// Distance of the easy positive component from the negatives.
    pub separation: f64,
    /// Share of positive instances drawn from the hard component.
    pub hard_fraction: f64,
    /// Offset of the hard component, as a multiple of `separation`.
    pub hard_offset: f64,
    pub seed: u64,
}

impl Default for GenSpec {
    fn default() -> Self {
        Self {
            train_bags: 200,
            valid_bags: 50,
            test_bags: 100,
            instances_per_bag: 50,
            dim: 32,
            positive_bag_fraction: 0.5,
            positive_ratio: 0.2,
            separation: 5.0,
            hard_fraction: 0.3,
            hard_offset: 0.35,
            seed: 0,
        }
    }
}

impl GenSpec {
    pub fn total_bags(&self) -> usize {
        self.train_bags + self.valid_bags + self.test_bags
    }

    /// Positive instances per positive bag, `max(1, round(ratio × n))`.
    pub fn positives_per_bag(&self) -> usize {
        ((self.positive_ratio * self.instances_per_bag as f64).round() as usize)
            .clamp(1, self.instances_per_bag)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.positive_ratio > 0.0 && self.positive_ratio <= 1.0) {
            return bad(format!("positive ratio {} not in (0, 1]", self.positive_ratio));
        }
        if !(self.positive_bag_fraction > 0.0 && self.positive_bag_fraction < 1.0) {
            return bad(format!(
                "positive-bag fraction {} not in (0, 1)",
                self.positive_bag_fraction
            ));
        }
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return bad(format!("separation {} must be positive", self.separation));
        }
        if !(0.0..=1.0).contains(&self.hard_fraction) {
            return bad(format!("hard fraction {} not in [0, 1]", self.hard_fraction));
        }
        if !(self.hard_offset > 0.0 && self.hard_offset <= 1.0) {
            return bad(format!("hard offset {} not in (0, 1]", self.hard_offset));
        }
        if self.instances_per_bag == 0 || self.dim == 0 {
            return bad("instances per bag and dimension must be positive".into());
        }
        if self.train_bags == 0 {
            return bad("at least one training bag is required".into());
        }
        let total = self.total_bags();
        let pos = (self.positive_bag_fraction * total as f64).round() as usize;
        if pos == 0 || pos == total {
            return bad(format!(
                "{total} bags at positive fraction {} leaves a class empty",
                self.positive_bag_fraction
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Valid,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Valid, SplitName::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Valid => "valid",
            SplitName::Test => "test",
        }
    }
}

impl std::str::FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "valid" => Ok(SplitName::Valid),
            "test" => Ok(SplitName::Test),
            other => Err(Error::InvalidInput(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    /// The generator settings, when the dataset is synthetic.
    pub spec: Option<GenSpec>,
    pub train: Vec<Bag>,
    pub valid: Vec<Bag>,
    pub test: Vec<Bag>,
}

impl Dataset {
    pub fn split(&self, name: SplitName) -> &[Bag] {
        match name {
            SplitName::Train => &self.train,
            SplitName::Valid => &self.valid,
            SplitName::Test => &self.test,
        }
    }

    pub fn bags(&self) -> impl Iterator<Item = &Bag> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }
}

/// A generated dataset plus any adjustments made to the request.
#[derive(Debug, Clone)]
pub struct Generated {
    pub dataset: Dataset,
    pub warnings: Vec<String>,
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Component means for the negative mixture, each orthogonal to `signal`
/// and of length `scale`. In one dimension they collapse to the origin.
fn negative_means(rng: &mut ChaCha8Rng, signal: &[f64], scale: f64) -> Vec<Vec<f64>> {
    (0..NEGATIVE_COMPONENTS)
        .map(|_| {
            let mut v = unit_vector(rng, signal.len());
            let dot: f64 = v.iter().zip(signal).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(signal).for_each(|(a, s)| *a -= dot * s);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-9 {
                vec![0.0; signal.len()]
            } else {
                v.into_iter().map(|x| x * scale / norm).collect()
            }
        })
        .collect()
}

pub fn generate_synthetic(spec: &GenSpec) -> Result<Generated> {
    spec.validate()?;
    let mut warnings = Vec::new();
    let n = spec.instances_per_bag;
    let raw = (spec.positive_ratio * n as f64).round() as usize;
    if raw == 0 {
        let msg = format!(
            "positive ratio {} × {n} instances rounds to 0; using 1 positive per positive bag",
            spec.positive_ratio
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let k_pos = spec.positives_per_bag();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let signal = unit_vector(&mut rng, spec.dim);
    let means = negative_means(&mut rng, &signal, 0.5 * spec.separation);

    let total = spec.total_bags();
    let n_pos_bags = (spec.positive_bag_fraction * total as f64).round() as usize;
    let mut labels: Vec<u8> = (0..total).map(|i| u8::from(i < n_pos_bags)).collect();
    labels.shuffle(&mut rng);

    let mut bags = Vec::with_capacity(total);
    for (id, &label) in labels.iter().enumerate() {
        let mut inst_labels = vec![0u8; n];
        if label == 1 {
            for j in rand::seq::index::sample(&mut rng, n, k_pos) {
                inst_labels[j] = 1;
            }
        }
        let mut features = Vec::with_capacity(n * spec.dim);
        for &y in &inst_labels {
            let comp = &means[rng.gen_range(0..NEGATIVE_COMPONENTS)];
            let shift = if y == 1 {
                let hard = rng.gen_bool(spec.hard_fraction);
                spec.separation * if hard { spec.hard_offset } else { 1.0 }
            } else {
                0.0
            };
            for k in 0..spec.dim {
                let noise: f64 = rng.sample(StandardNormal);
                features.push((comp[k] + shift * signal[k] + noise) as f32);
            }
        }
        let features = NumericArray::matrix(n, spec.dim, features)?;
        bags.push(Bag::new(id as u32, features, inst_labels)?);
    }

    let t = total as f64;
    let fractions = [
        spec.train_bags as f64 / t,
        spec.valid_bags as f64 / t,
        spec.test_bags as f64 / t,
    ];
    let (train, valid, test) = split_dataset(bags, fractions, spec.seed ^ SPLIT_SEED_SALT)?;
    Ok(Generated {
        dataset: Dataset {
            dim: spec.dim,
            spec: Some(spec.clone()),
            train,
            valid,
            test,
        },
        warnings,
    })
}
