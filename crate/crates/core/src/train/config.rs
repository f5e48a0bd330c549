use serde::{Deserialize, Serialize};

use crate::ad::{Precision, DEFAULT_LEARNING_RATE};
use crate::error::{Error, Result};
use crate::hpm::HpmConfig;
use crate::models::{AttentionConfig, EncoderConfig, ModelConfig};

/// Component switches of the ablation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationFlags {
    pub distillation: bool,
    pub shared_encoder: bool,
    pub hpm: bool,
}

impl AblationFlags {
    pub const NONE: Self = Self {
        distillation: false,
        shared_encoder: false,
        hpm: false,
    };
    pub const DISTILL: Self = Self {
        distillation: true,
        shared_encoder: false,
        hpm: false,
    };
    pub const DISTILL_SHARED: Self = Self {
        distillation: true,
        shared_encoder: true,
        hpm: false,
    };
    pub const FULL: Self = Self {
        distillation: true,
        shared_encoder: true,
        hpm: true,
    };

    /// Sharing and mining only make sense with a student to share with.
    pub fn validate(&self) -> Result<()> {
        if !self.distillation && (self.hpm || self.shared_encoder) {
            return Err(Error::InvalidConfig(format!(
                "hpm and shared encoder require distillation: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn label(&self) -> &'static str {
        match (self.distillation, self.shared_encoder, self.hpm) {
            (false, _, _) => "none",
            (true, false, false) => "+D",
            (true, true, false) => "+D+S",
            (true, true, true) => "+D+S+H",
            (true, false, true) => "+D+H",
        }
    }
}

impl Default for AblationFlags {
    fn default() -> Self {
        Self::FULL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    /// Teacher/student distillation, configured by [`AblationFlags`].
    #[default]
    Weno,
    /// Attention teacher alone.
    Baseline,
    /// Student trained on true instance labels, max-pooled for bags.
    Supervised,
}

impl std::str::FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weno" => Ok(TrainMode::Weno),
            "baseline" => Ok(TrainMode::Baseline),
            "supervised" => Ok(TrainMode::Supervised),
            other => Err(Error::InvalidInput(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub learning_rate: f64,
    pub epochs: usize,
    pub hpm: HpmConfig,
    pub batch_size: usize,
    /// Student mini-batches per epoch; `None` covers the training
    /// instances once on average.
    pub batches_per_epoch: Option<usize>,
    pub seed: u64,
    pub flags: AblationFlags,
    pub precision: Precision,
    /// Write a checkpoint every this many epochs, besides the final one.
    pub checkpoint_every: Option<usize>,
    pub encoder_hidden: Vec<usize>,
    pub embed_dim: usize,
    pub attention_hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Weno,
            learning_rate: DEFAULT_LEARNING_RATE,
            epochs: 200,
            hpm: HpmConfig::default(),
            batch_size: 64,
            batches_per_epoch: None,
            seed: 0,
            flags: AblationFlags::FULL,
            precision: Precision::F32,
            checkpoint_every: None,
            encoder_hidden: vec![64, 64],
            embed_dim: 64,
            attention_hidden: 32,
        }
    }
}

impl TrainConfig {
    /// Flags actually in force: baseline and supervised runs have no
    /// teacher/student coupling.
    pub fn effective_flags(&self) -> AblationFlags {
        match self.mode {
            TrainMode::Weno => self.flags,
            TrainMode::Baseline | TrainMode::Supervised => AblationFlags::NONE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.flags.validate()?;
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate {} must be finite and non-negative",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::InvalidConfig("checkpoint interval must be positive".into()));
        }
        if self.effective_flags().hpm {
            self.hpm.validate()?;
        }
        Ok(())
    }

    pub fn model_config(&self, input_dim: usize) -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig {
                input_dim,
                hidden: self.encoder_hidden.clone(),
                embed_dim: self.embed_dim,
            },
            attention: AttentionConfig {
                hidden_dim: self.attention_hidden,
            },
            // Without a student the layout is irrelevant; a single block keeps
            // the teacher reading `encoder.*`.
            shared_encoder: self.mode == TrainMode::Supervised
                || !self.effective_flags().distillation
                || self.effective_flags().shared_encoder,
        }
    }

    pub fn batches_per_epoch(&self, train_instances: usize) -> usize {
        self.batches_per_epoch
            .unwrap_or_else(|| train_instances.div_ceil(self.batch_size))
    }
}
