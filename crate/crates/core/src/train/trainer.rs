//! Alternating teacher/student optimization.
//!
//! One epoch runs, in order: a full teacher pass over the training bags
//! (one bag per SGD step, optionally mining hard positives), a refresh of
//! the student's pseudo labels from the updated teacher, a student pass of
//! random instance mini-batches, and an evaluation on the validation split.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ad::{NumericArray, ParameterStore, Precision, Scalar, Tape};
use crate::data::{sample_instance_batch, Bag, Dataset, Sampling};
use crate::error::{Error, Result};
use crate::eval::{evaluate, Branches, EvalReport};
use crate::hpm::{filter_bag, hpm_active, FilteredBagView, HpmConfig};
use crate::labels::make_pseudo_labels;
use crate::models::MilModel;

use super::checkpoint::CheckpointRecord;
use super::config::{TrainConfig, TrainMode};
use super::metrics::EpochMetrics;

/// Per-instance student targets; `None` marks an instance without a label
/// this epoch (dropped by mining).
pub type InstanceTargets = Vec<Vec<Option<f64>>>;

#[derive(Debug, Clone)]
pub struct TeacherEpoch {
    pub mean_loss: f64,
    /// One view per bag, in split order.
    pub views: Vec<FilteredBagView>,
    pub dropped_instances: usize,
    pub filtered_bags: usize,
}

fn rows_as<T: Scalar>(bag: &Bag, rows: &[usize]) -> NumericArray<T> {
    if rows.len() == bag.len() {
        bag.features.cast()
    } else {
        bag.features.select_rows(rows).cast()
    }
}

/// One pass of the teacher over `split`, one bag per SGD step, in a
/// shuffled order drawn from `rng`. When `hpm` is given, every positive bag
/// is filtered with fresh student scores before its forward pass.
pub fn teacher_epoch<T: Scalar, R: Rng + ?Sized>(
    model: &MilModel,
    store: &mut ParameterStore<T>,
    split: &[Bag],
    learning_rate: f64,
    hpm: Option<&HpmConfig>,
    rng: &mut R,
) -> Result<TeacherEpoch> {
    let mut order: Vec<usize> = (0..split.len()).collect();
    order.shuffle(rng);
    let mut views: Vec<Option<FilteredBagView>> = vec![None; split.len()];
    let mut total_loss = 0.0;
    let mut dropped_instances = 0;
    let mut filtered_bags = 0;
    store.zero_grads();

    for &b in &order {
        let bag = &split[b];
        let view = match hpm {
            Some(cfg) if bag.is_positive() => {
                let scores: Vec<f64> = model
                    .student_scores(store, &bag.features.cast::<T>())?
                    .into_iter()
                    .map(|s| s.to_f64_lossy())
                    .collect();
                filter_bag(bag, &scores, cfg)?
            }
            _ => FilteredBagView::identity(bag),
        };
        if !view.is_identity() {
            dropped_instances += view.dropped.len();
            filtered_bags += 1;
        }
        let input = rows_as::<T>(bag, &view.surviving);
        let mut tape = Tape::new();
        let loss = model.teacher_loss(&mut tape, store, &input, bag.label)?;
        total_loss += tape.value(loss).item().to_f64_lossy();
        tape.backward(loss, store)?;
        store.sgd_step(learning_rate)?;
        views[b] = Some(view);
    }

    let mean_loss = if split.is_empty() {
        0.0
    } else {
        total_loss / split.len() as f64
    };
    Ok(TeacherEpoch {
        mean_loss,
        views: views.into_iter().map(|v| v.expect("every bag visited")).collect(),
        dropped_instances,
        filtered_bags,
    })
}

/// Student targets from the current teacher: zeros for negative bags and
/// normalized attention over the surviving instances of positive bags.
pub fn refresh_pseudo_labels<T: Scalar>(
    model: &MilModel,
    store: &ParameterStore<T>,
    split: &[Bag],
    views: &[FilteredBagView],
    epoch: usize,
) -> Result<InstanceTargets> {
    split
        .iter()
        .zip(views)
        .map(|(bag, view)| {
            let mut targets = vec![None; bag.len()];
            if bag.is_positive() {
                let input = rows_as::<T>(bag, &view.surviving);
                let (attention, _) = model.teacher_outputs(store, &input)?;
                let weights: Vec<f64> = attention.iter().map(|a| a.to_f64_lossy()).collect();
                let labels = make_pseudo_labels(bag, Some(&weights), epoch)?;
                for (&j, y) in view.surviving.iter().zip(labels.labels) {
                    targets[j] = Some(y);
                }
            } else {
                let labels = make_pseudo_labels(bag, None, epoch)?;
                for (t, y) in targets.iter_mut().zip(labels.labels) {
                    *t = Some(y);
                }
            }
            Ok(targets)
        })
        .collect()
}

/// Ground-truth instance labels as targets.
pub fn true_label_targets(split: &[Bag]) -> InstanceTargets {
    split
        .iter()
        .map(|b| b.instance_labels.iter().map(|&y| Some(f64::from(y))).collect())
        .collect()
}

/// Runs `batches` student mini-batches. Instances are drawn uniformly with
/// replacement; an instance without a target is skipped and redrawn.
/// Returns the mean batch loss, or `None` when no batch ran.
#[allow(clippy::too_many_arguments)]
pub fn student_epoch<T: Scalar, R: Rng + ?Sized>(
    model: &MilModel,
    store: &mut ParameterStore<T>,
    split: &[Bag],
    targets: &InstanceTargets,
    learning_rate: f64,
    batch_size: usize,
    batches: usize,
    rng: &mut R,
) -> Result<Option<f64>> {
    if batches == 0 {
        return Ok(None);
    }
    if !targets.iter().flatten().any(Option::is_some) {
        return Err(Error::InvalidInput("no instance has a student target".into()));
    }
    let dim = split.first().map_or(0, Bag::dim);
    let mut total = 0.0;
    store.zero_grads();
    for _ in 0..batches {
        let mut features = Vec::with_capacity(batch_size * dim);
        let mut labels = Vec::with_capacity(batch_size);
        let mut pending = batch_size;
        while pending > 0 {
            for pick in sample_instance_batch(split, pending, rng, Sampling::WithReplacement)? {
                if let Some(y) = targets[pick.bag_index][pick.instance_index] {
                    let row = split[pick.bag_index].features.row(pick.instance_index);
                    features.extend(row.iter().map(|&v| T::from_f64_lossy(f64::from(v))));
                    labels.push(T::from_f64_lossy(y));
                    pending -= 1;
                }
            }
        }
        let input = NumericArray::matrix(batch_size, dim, features)?;
        let mut tape = Tape::new();
        let loss = model.student_loss(&mut tape, store, &input, labels)?;
        total += tape.value(loss).item().to_f64_lossy();
        tape.backward(loss, store)?;
        store.sgd_step(learning_rate)?;
    }
    Ok(Some(total / batches as f64))
}

/// Training state: parameters, random stream and progress.
#[derive(Debug, Clone)]
pub struct Trainer<T> {
    config: TrainConfig,
    model: MilModel,
    store: ParameterStore<T>,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(config: TrainConfig, input_dim: usize) -> Result<Self> {
        config.validate()?;
        let model = MilModel::new(config.model_config(input_dim))?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let store = model.init_params(&mut rng)?;
        Ok(Self {
            config,
            model,
            store,
            rng,
            epoch: 0,
        })
    }

    pub fn from_checkpoint(record: &CheckpointRecord) -> Result<Self> {
        record.config.validate()?;
        let model = MilModel::new(record.model.clone())?;
        let fresh: ParameterStore<T> = model.init_params(&mut ChaCha8Rng::seed_from_u64(0))?;
        for (name, p) in fresh.iter() {
            let stored = record.params.value(name)?;
            if stored.shape() != p.value.shape() {
                return Err(Error::Shape {
                    op: "checkpoint",
                    detail: format!("`{name}` is {:?}, model needs {:?}", stored.shape(), p.value.shape()),
                });
            }
        }
        if fresh.len() != record.params.len() {
            return Err(Error::InvalidInput("checkpoint has extra parameters".into()));
        }
        Ok(Self {
            config: record.config.clone(),
            model,
            store: record.params.cast(),
            rng: record.rng.restore()?,
            epoch: record.epoch,
        })
    }

    pub fn checkpoint(&self) -> CheckpointRecord {
        CheckpointRecord::new(
            self.epoch,
            self.config.clone(),
            self.model.config().clone(),
            &self.rng,
            &self.store,
        )
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn model(&self) -> &MilModel {
        &self.model
    }

    pub fn store(&self) -> &ParameterStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParameterStore<T> {
        &mut self.store
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn branches(&self) -> Branches {
        branches_for(&self.config)
    }

    pub fn evaluate(&self, split: &[Bag]) -> Result<EvalReport> {
        evaluate(&self.model, &self.store, split, self.branches())
    }

    fn check_dataset(&self, dataset: &Dataset) -> Result<()> {
        if dataset.dim != self.model.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "model input",
                expected: self.model.input_dim(),
                found: dataset.dim,
            });
        }
        if dataset.train.is_empty() {
            return Err(Error::InvalidInput("training split is empty".into()));
        }
        Ok(())
    }

    pub fn run_epoch(&mut self, dataset: &Dataset) -> Result<EpochMetrics> {
        self.check_dataset(dataset)?;
        let cfg = self.config.clone();
        let flags = cfg.effective_flags();
        let train = &dataset.train;
        let n_instances: usize = train.iter().map(Bag::len).sum();
        let batches = cfg.batches_per_epoch(n_instances);

        let (teacher_loss, student_loss, dropped) = match cfg.mode {
            TrainMode::Supervised => {
                let targets = true_label_targets(train);
                let loss = student_epoch(
                    &self.model,
                    &mut self.store,
                    train,
                    &targets,
                    cfg.learning_rate,
                    cfg.batch_size,
                    batches,
                    &mut self.rng,
                )?;
                (None, loss, 0)
            }
            TrainMode::Weno | TrainMode::Baseline => {
                let mining = (flags.hpm && hpm_active(self.epoch, &cfg.hpm)).then_some(&cfg.hpm);
                let t = teacher_epoch(
                    &self.model,
                    &mut self.store,
                    train,
                    cfg.learning_rate,
                    mining,
                    &mut self.rng,
                )?;
                let student_loss = if flags.distillation {
                    let targets = refresh_pseudo_labels(&self.model, &self.store, train, &t.views, self.epoch)?;
                    student_epoch(
                        &self.model,
                        &mut self.store,
                        train,
                        &targets,
                        cfg.learning_rate,
                        cfg.batch_size,
                        batches,
                        &mut self.rng,
                    )?
                } else {
                    None
                };
                (Some(t.mean_loss), student_loss, t.dropped_instances)
            }
        };

        let valid = if dataset.valid.is_empty() {
            EvalReport::default()
        } else {
            self.evaluate(&dataset.valid)?
        };
        let metrics = EpochMetrics {
            epoch: self.epoch,
            teacher_loss,
            student_loss,
            valid,
            hpm_dropped: dropped,
        };
        self.epoch += 1;
        Ok(metrics)
    }

    /// Trains until `self.epoch() == until`, handing a checkpoint to `sink`
    /// after every `checkpoint_every` epochs.
    pub fn run_until(
        &mut self,
        dataset: &Dataset,
        until: usize,
        sink: &mut dyn FnMut(&CheckpointRecord) -> Result<()>,
    ) -> Result<Vec<EpochMetrics>> {
        let mut out = Vec::with_capacity(until.saturating_sub(self.epoch));
        while self.epoch < until {
            let m = self.run_epoch(dataset)?;
            log::info!(
                "epoch {} teacher_loss {:?} student_loss {:?} dropped {}",
                m.epoch,
                m.teacher_loss,
                m.student_loss,
                m.hpm_dropped
            );
            out.push(m);
            if let Some(k) = self.config.checkpoint_every {
                if self.epoch % k == 0 && self.epoch < until {
                    sink(&self.checkpoint())?;
                }
            }
        }
        Ok(out)
    }
}

pub fn branches_for(config: &TrainConfig) -> Branches {
    match config.mode {
        TrainMode::Supervised => Branches {
            teacher: false,
            student: true,
        },
        TrainMode::Baseline => Branches {
            teacher: true,
            student: false,
        },
        TrainMode::Weno => Branches {
            teacher: true,
            student: config.flags.distillation,
        },
    }
}

/// Result of a complete run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: Vec<EpochMetrics>,
    pub checkpoint: CheckpointRecord,
}

fn run_typed<T: Scalar>(
    dataset: &Dataset,
    config: &TrainConfig,
    sink: &mut dyn FnMut(&CheckpointRecord) -> Result<()>,
) -> Result<RunOutput> {
    let mut trainer = Trainer::<T>::new(config.clone(), dataset.dim)?;
    trainer.check_dataset(dataset)?;
    let metrics = trainer.run_until(dataset, config.epochs, sink)?;
    Ok(RunOutput {
        metrics,
        checkpoint: trainer.checkpoint(),
    })
}

/// Trains from scratch for `config.epochs` epochs in the configured mode
/// and precision, with periodic checkpoints passed to `sink`.
pub fn run_with_checkpoints(
    dataset: &Dataset,
    config: &TrainConfig,
    sink: &mut dyn FnMut(&CheckpointRecord) -> Result<()>,
) -> Result<RunOutput> {
    match config.precision {
        Precision::F32 => run_typed::<f32>(dataset, config, sink),
        Precision::F64 => run_typed::<f64>(dataset, config, sink),
    }
}

/// Teacher/student training as configured by `config` (mode and flags).
pub fn run_weno(dataset: &Dataset, config: &TrainConfig) -> Result<RunOutput> {
    run_with_checkpoints(dataset, config, &mut |_| Ok(()))
}

/// Upper-bound reference: the student trained on true instance labels.
pub fn run_fully_supervised(dataset: &Dataset, config: &TrainConfig) -> Result<RunOutput> {
    let config = TrainConfig {
        mode: TrainMode::Supervised,
        ..config.clone()
    };
    run_weno(dataset, &config)
}

/// Evaluates a checkpoint on one split with the branches its mode trained.
pub fn evaluate_checkpoint(record: &CheckpointRecord, split: &[Bag]) -> Result<EvalReport> {
    let trainer = Trainer::<f32>::from_checkpoint(record)?;
    if let Some(bag) = split.first() {
        if bag.dim() != trainer.model.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "checkpoint input",
                expected: trainer.model.input_dim(),
                found: bag.dim(),
            });
        }
    }
    trainer.evaluate(split)
}
