//! AUC and instance/bag level evaluation of both branches.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ad::{NumericArray, ParameterStore, Scalar};
use crate::data::Bag;
use crate::error::{Error, Result};
use crate::labels::minmax_normalize;
use crate::models::MilModel;

/// Scores paired with binary ground truth.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoredSet {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::InvalidInput(format!(
                "{} scores but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        Ok(Self { scores, labels })
    }

    pub fn push(&mut self, score: f64, label: u8) {
        self.scores.push(score);
        self.labels.push(label);
    }
}

/// Area under the ROC curve as the Mann–Whitney statistic with average
/// ranks for ties, so tied positive/negative pairs count one half.
pub fn auc(set: &ScoredSet) -> Result<f64> {
    if set.scores.len() != set.labels.len() {
        return Err(Error::InvalidInput("scores and labels differ in length".into()));
    }
    if let Some(l) = set.labels.iter().find(|&&l| l > 1) {
        return Err(Error::InvalidInput(format!("label {l} is not binary")));
    }
    if set.scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("NaN score".into()));
    }
    let n_pos = set.labels.iter().filter(|&&l| l == 1).count();
    let n_neg = set.labels.len() - n_pos;
    if n_pos == 0 {
        return Err(Error::SingleClass { missing: "positive" });
    }
    if n_neg == 0 {
        return Err(Error::SingleClass { missing: "negative" });
    }

    let mut order: Vec<usize> = (0..set.scores.len()).collect();
    order.sort_by(|&a, &b| set.scores[a].total_cmp(&set.scores[b]));
    // Ranks are 1-based; a tie group spanning ranks [lo, hi] gets (lo+hi)/2.
    let mut pos_rank_sum = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && set.scores[order[j + 1]] == set.scores[order[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0;
        let pos_in_group = order[i..=j].iter().filter(|&&k| set.labels[k] == 1).count();
        pos_rank_sum += avg * pos_in_group as f64;
        i = j + 1;
    }
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// ROC curve as `(false positive rate, true positive rate)` points from
/// `(0, 0)` to `(1, 1)`, one point per distinct score, highest first.
pub fn roc_curve(set: &ScoredSet) -> Result<Vec<(f64, f64)>> {
    auc(set)?;
    let n_pos = set.labels.iter().filter(|&&l| l == 1).count() as f64;
    let n_neg = set.labels.len() as f64 - n_pos;
    let mut order: Vec<usize> = (0..set.scores.len()).collect();
    order.sort_by(|&a, &b| set.scores[b].total_cmp(&set.scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0.0, 0.0);
    for (k, &i) in order.iter().enumerate() {
        if set.labels[i] == 1 {
            tp += 1.0;
        } else {
            fp += 1.0;
        }
        let last_of_group = order.get(k + 1).map_or(true, |&j| set.scores[j] != set.scores[i]);
        if last_of_group {
            points.push((fp / n_neg, tp / n_pos));
        }
    }
    Ok(points)
}

fn to_input<T: Scalar>(bag: &Bag) -> NumericArray<T> {
    bag.features.cast()
}

/// Student bag score: the maximum instance probability.
pub fn student_bag_score<T: Scalar>(model: &MilModel, store: &ParameterStore<T>, bag: &Bag) -> Result<f64> {
    let scores = model.student_scores(store, &to_input(bag))?;
    Ok(max_score(scores.iter().map(|s| s.to_f64_lossy())))
}

fn max_score(scores: impl Iterator<Item = f64>) -> f64 {
    scores.fold(f64::NEG_INFINITY, f64::max)
}

/// Per-bag min-max normalized teacher attention over all instances.
pub fn teacher_instance_scores<T: Scalar>(
    model: &MilModel,
    store: &ParameterStore<T>,
    bag: &Bag,
) -> Result<(Vec<f64>, f64)> {
    let (attention, prob) = model.teacher_outputs(store, &to_input(bag))?;
    let weights: Vec<f64> = attention.iter().map(|a| a.to_f64_lossy()).collect();
    Ok((minmax_normalize(&weights)?, prob.to_f64_lossy()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceScorer {
    Student,
    TeacherAttention,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BagScorer {
    Teacher,
    StudentMaxPool,
}

pub fn evaluate_instance_level<T: Scalar>(
    model: &MilModel,
    store: &ParameterStore<T>,
    split: &[Bag],
    which: InstanceScorer,
) -> Result<f64> {
    let mut set = ScoredSet::default();
    for bag in split {
        let scores: Vec<f64> = match which {
            InstanceScorer::Student => model
                .student_scores(store, &to_input(bag))?
                .into_iter()
                .map(|s| s.to_f64_lossy())
                .collect(),
            InstanceScorer::TeacherAttention => teacher_instance_scores(model, store, bag)?.0,
        };
        for (s, &y) in scores.into_iter().zip(&bag.instance_labels) {
            set.push(s, y);
        }
    }
    auc(&set)
}

pub fn evaluate_bag_level<T: Scalar>(
    model: &MilModel,
    store: &ParameterStore<T>,
    split: &[Bag],
    which: BagScorer,
) -> Result<f64> {
    let mut set = ScoredSet::default();
    for bag in split {
        let score = match which {
            BagScorer::Teacher => model.teacher_outputs(store, &to_input(bag))?.1.to_f64_lossy(),
            BagScorer::StudentMaxPool => student_bag_score(model, store, bag)?,
        };
        set.push(score, bag.label);
    }
    auc(&set)
}

/// The four AUCs reported per evaluation. Branches that were not trained
/// are left empty.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub teacher_bag_auc: Option<f64>,
    pub teacher_attention_instance_auc: Option<f64>,
    pub student_instance_auc: Option<f64>,
    pub student_bag_auc: Option<f64>,
}

/// Which branches carry meaningful predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Branches {
    pub teacher: bool,
    pub student: bool,
}

/// Evaluates every requested branch in one pass over the split.
pub fn evaluate<T: Scalar>(
    model: &MilModel,
    store: &ParameterStore<T>,
    split: &[Bag],
    branches: Branches,
) -> Result<EvalReport> {
    let mut t_bag = ScoredSet::default();
    let mut t_inst = ScoredSet::default();
    let mut s_bag = ScoredSet::default();
    let mut s_inst = ScoredSet::default();
    for bag in split {
        if branches.teacher {
            let (norm, prob) = teacher_instance_scores(model, store, bag)?;
            t_bag.push(prob, bag.label);
            for (s, &y) in norm.into_iter().zip(&bag.instance_labels) {
                t_inst.push(s, y);
            }
        }
        if branches.student {
            let scores: Vec<f64> = model
                .student_scores(store, &to_input(bag))?
                .into_iter()
                .map(|s| s.to_f64_lossy())
                .collect();
            s_bag.push(max_score(scores.iter().copied()), bag.label);
            for (s, &y) in scores.into_iter().zip(&bag.instance_labels) {
                s_inst.push(s, y);
            }
        }
    }
    let opt = |on: bool, set: &ScoredSet| -> Result<Option<f64>> {
        if on {
            auc(set).map(Some)
        } else {
            Ok(None)
        }
    };
    Ok(EvalReport {
        teacher_bag_auc: opt(branches.teacher, &t_bag)?,
        teacher_attention_instance_auc: opt(branches.teacher, &t_inst)?,
        student_instance_auc: opt(branches.student, &s_inst)?,
        student_bag_auc: opt(branches.student, &s_bag)?,
    })
}

/// Writes one CSV row per instance of `bag`:
/// `instance_id,true_label,student_score,teacher_score`.
pub fn export_scores<T: Scalar>(
    model: &MilModel,
    store: &ParameterStore<T>,
    bag: &Bag,
    path: &Path,
) -> Result<()> {
    let student = model.student_scores(store, &to_input(bag))?;
    let (teacher, _) = teacher_instance_scores(model, store, bag)?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "instance_id,true_label,student_score,teacher_score")?;
    for (j, inst) in bag.instances().enumerate() {
        // f32 Display is the shortest representation that round-trips.
        writeln!(
            out,
            "{},{},{},{}",
            inst.id,
            inst.true_label,
            student[j].to_f64_lossy() as f32,
            teacher[j] as f32
        )?;
    }
    out.flush()?;
    Ok(())
}
