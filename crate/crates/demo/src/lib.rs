//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Three operations are exposed: pseudo labels and hard positive mining on
//! a hand-edited bag, ROC/AUC of arbitrary scores, and a small
//! teacher/student training session that runs epoch by epoch.

use milkd::data::{generate_synthetic, Bag, Dataset, GenSpec};
use milkd::eval::{auc, roc_curve, teacher_instance_scores, ScoredSet};
use milkd::hpm::{filter_bag, HpmConfig};
use milkd::labels::make_pseudo_labels;
use milkd::ad::NumericArray;
use milkd::train::{AblationFlags, EpochMetrics, TrainConfig, TrainMode, Trainer};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn bag_of(n: usize, positive: bool) -> milkd::Result<Bag> {
    let mut labels = vec![0u8; n];
    if positive && n > 0 {
        labels[0] = 1;
    }
    Bag::new(0, NumericArray::zeros(&[n.max(1), 1]), labels)
}

#[derive(Debug, Serialize, PartialEq)]
pub struct LabelView {
    pub pseudo_labels: Vec<f64>,
    pub surviving: Vec<usize>,
    pub dropped: Vec<usize>,
}

/// Pseudo labels from raw attention weights, and the instances mining would
/// keep given student scores.
pub fn explore_labels(
    attention: &[f64],
    student_scores: &[f64],
    positive: bool,
    threshold: f64,
) -> milkd::Result<LabelView> {
    let bag = bag_of(attention.len(), positive)?;
    let pseudo = make_pseudo_labels(&bag, positive.then_some(attention), 0)?;
    let cfg = HpmConfig {
        threshold,
        ..HpmConfig::default()
    };
    cfg.validate()?;
    let view = filter_bag(&bag, student_scores, &cfg)?;
    Ok(LabelView {
        pseudo_labels: pseudo.labels,
        surviving: view.surviving,
        dropped: view.dropped,
    })
}

#[derive(Debug, Serialize, PartialEq)]
pub struct RocView {
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

pub fn roc(scores: &[f64], labels: &[u8]) -> milkd::Result<RocView> {
    let set = ScoredSet::new(scores.to_vec(), labels.to_vec())?;
    Ok(RocView {
        points: roc_curve(&set)?,
        auc: auc(&set)?,
    })
}

#[derive(Debug, Serialize, PartialEq)]
pub struct BagView {
    pub bag_label: u8,
    pub instance_labels: Vec<u8>,
    pub teacher: Vec<f64>,
    pub student: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct ScoresView {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

/// A small dataset and a trainer advanced one epoch at a time.
pub struct DemoSession {
    data: Dataset,
    trainer: Trainer<f32>,
    history: Vec<EpochMetrics>,
}

impl DemoSession {
    pub fn new(
        positive_ratio: f64,
        separation: f64,
        seed: u64,
        flags: &str,
        learning_rate: f64,
        hpm_warmup: usize,
    ) -> milkd::Result<Self> {
        let spec = GenSpec {
            train_bags: 60,
            valid_bags: 20,
            test_bags: 30,
            instances_per_bag: 20,
            dim: 8,
            positive_ratio,
            separation,
            seed,
            ..GenSpec::default()
        };
        let data = generate_synthetic(&spec)?.dataset;
        let (mode, flags) = match flags {
            "none" => (TrainMode::Baseline, AblationFlags::NONE),
            "+D" => (TrainMode::Weno, AblationFlags::DISTILL),
            "+D+S" => (TrainMode::Weno, AblationFlags::DISTILL_SHARED),
            "+D+S+H" => (TrainMode::Weno, AblationFlags::FULL),
            "supervised" => (TrainMode::Supervised, AblationFlags::NONE),
            other => return Err(milkd::Error::InvalidConfig(format!("unknown configuration `{other}`"))),
        };
        let config = TrainConfig {
            mode,
            flags,
            seed,
            learning_rate,
            hpm: HpmConfig {
                warmup_epochs: hpm_warmup,
                ..HpmConfig::default()
            },
            encoder_hidden: vec![32],
            embed_dim: 32,
            attention_hidden: 16,
            batch_size: 32,
            ..TrainConfig::default()
        };
        let trainer = Trainer::new(config, data.dim)?;
        Ok(Self {
            data,
            trainer,
            history: Vec::new(),
        })
    }

    /// Runs `epochs` more epochs and returns their metrics.
    pub fn step(&mut self, epochs: usize) -> milkd::Result<&[EpochMetrics]> {
        let from = self.history.len();
        for _ in 0..epochs {
            let m = self.trainer.run_epoch(&self.data)?;
            self.history.push(m);
        }
        Ok(&self.history[from..])
    }

    pub fn epoch(&self) -> usize {
        self.trainer.epoch()
    }

    pub fn test_bag_count(&self) -> usize {
        self.data.test.len()
    }

    pub fn bag_view(&self, index: usize) -> milkd::Result<BagView> {
        let bag = self
            .data
            .test
            .get(index)
            .ok_or_else(|| milkd::Error::InvalidInput(format!("no test bag {index}")))?;
        let model = self.trainer.model();
        let store = self.trainer.store();
        let (teacher, _) = teacher_instance_scores(model, store, bag)?;
        let student = model
            .student_scores(store, &bag.features)?
            .into_iter()
            .map(f64::from)
            .collect();
        Ok(BagView {
            bag_label: bag.label,
            instance_labels: bag.instance_labels.clone(),
            teacher,
            student,
        })
    }

    /// Instance scores over the test split from the student or from the
    /// teacher's normalized attention.
    pub fn test_scores(&self, student: bool) -> milkd::Result<ScoresView> {
        let mut out = ScoresView {
            scores: Vec::new(),
            labels: Vec::new(),
        };
        for i in 0..self.data.test.len() {
            let v = self.bag_view(i)?;
            out.scores.extend(if student { v.student } else { v.teacher });
            out.labels.extend(v.instance_labels);
        }
        Ok(out)
    }
}

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn to_json<T: Serialize>(v: &T) -> Result<String, JsError> {
    serde_json::to_string(v).map_err(js_err)
}

/// JSON `{pseudo_labels, surviving, dropped}`.
#[wasm_bindgen(js_name = exploreLabels)]
pub fn explore_labels_js(
    attention: &[f64],
    student_scores: &[f64],
    positive: bool,
    threshold: f64,
) -> Result<String, JsError> {
    to_json(&explore_labels(attention, student_scores, positive, threshold).map_err(js_err)?)
}

/// JSON `{points: [[fpr, tpr], ...], auc}`.
#[wasm_bindgen(js_name = rocCurve)]
pub fn roc_js(scores: &[f64], labels: &[u8]) -> Result<String, JsError> {
    to_json(&roc(scores, labels).map_err(js_err)?)
}

#[wasm_bindgen]
pub struct Session(DemoSession);

#[wasm_bindgen]
impl Session {
    #[wasm_bindgen(constructor)]
    pub fn new(
        positive_ratio: f64,
        separation: f64,
        seed: u32,
        flags: &str,
        learning_rate: f64,
        hpm_warmup: u32,
    ) -> Result<Session, JsError> {
        DemoSession::new(
            positive_ratio,
            separation,
            u64::from(seed),
            flags,
            learning_rate,
            hpm_warmup as usize,
        )
        .map(Session)
        .map_err(js_err)
    }

    /// JSON array of metrics rows for the epochs just run.
    pub fn step(&mut self, epochs: u32) -> Result<String, JsError> {
        let rows = self.0.step(epochs as usize).map_err(js_err)?;
        to_json(&rows)
    }

    pub fn epoch(&self) -> u32 {
        self.0.epoch() as u32
    }

    #[wasm_bindgen(js_name = testBagCount)]
    pub fn test_bag_count(&self) -> u32 {
        self.0.test_bag_count() as u32
    }

    /// JSON `{bag_label, instance_labels, teacher, student}` for one test bag.
    #[wasm_bindgen(js_name = bagView)]
    pub fn bag_view(&self, index: u32) -> Result<String, JsError> {
        to_json(&self.0.bag_view(index as usize).map_err(js_err)?)
    }

    /// JSON `{scores, labels}` over all test instances.
    #[wasm_bindgen(js_name = testScores)]
    pub fn test_scores(&self, student: bool) -> Result<String, JsError> {
        to_json(&self.0.test_scores(student).map_err(js_err)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn explorer_matches_worked_examples() {
        let v = explore_labels(&[0.1, 0.3, 0.6], &[0.95, 0.5, 0.2], true, 0.8).unwrap();
        assert_eq!(v.surviving, vec![1, 2]);
        assert_eq!(v.dropped, vec![0]);
        for (a, b) in v.pseudo_labels.iter().zip([0.0, 0.4, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let neg = explore_labels(&[0.1, 0.3, 0.6], &[0.95, 0.5, 0.2], false, 0.8).unwrap();
        assert_eq!(neg.pseudo_labels, vec![0.0; 3]);
        assert!(neg.dropped.is_empty());
    }

    #[test]
    fn roc_view_has_auc() {
        let v = roc(&[0.9, 0.8, 0.3, 0.1], &[1, 1, 0, 0]).unwrap();
        assert_eq!(v.auc, 1.0);
        assert!(roc(&[0.2], &[1]).is_err());
    }

    #[test]
    fn session_steps_and_reports() {
        let mut s = DemoSession::new(0.2, 5.0, 1, "+D+S+H", 0.01, 2).unwrap();
        assert_eq!(s.step(3).unwrap().len(), 3);
        assert_eq!(s.epoch(), 3);
        let v = s.bag_view(0).unwrap();
        assert_eq!(v.teacher.len(), v.student.len());
        let scores = s.test_scores(true).unwrap();
        assert_eq!(scores.scores.len(), 30 * 20);
        assert!(DemoSession::new(0.2, 5.0, 1, "bogus", 0.01, 2).is_err());
        assert!(s.bag_view(999).is_err());
    }
}
