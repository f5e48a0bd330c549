//! The four-row component grid: none, +D, +D+S, +D+S+H.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::EvalReport;

use super::config::{AblationFlags, TrainConfig, TrainMode};
use super::metrics::EpochMetrics;
use super::trainer::{evaluate_checkpoint, run_weno};

pub const ABLATION_ROWS: [AblationFlags; 4] = [
    AblationFlags::NONE,
    AblationFlags::DISTILL,
    AblationFlags::DISTILL_SHARED,
    AblationFlags::FULL,
];

/// One finished run of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub metrics: Vec<EpochMetrics>,
    pub test: EvalReport,
}

impl SeedRun {
    /// The instance score reported for a row: the student when one was
    /// trained, the teacher's normalized attention otherwise.
    pub fn instance_auc(&self) -> Option<f64> {
        self.test.student_instance_auc.or(self.test.teacher_attention_instance_auc)
    }

    pub fn bag_auc(&self) -> Option<f64> {
        self.test.student_bag_auc.or(self.test.teacher_bag_auc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub flags: AblationFlags,
    pub runs: Vec<SeedRun>,
}

impl AblationRow {
    pub fn median_instance_auc(&self) -> Option<f64> {
        median(self.runs.iter().filter_map(SeedRun::instance_auc).collect())
    }

    pub fn median_bag_auc(&self) -> Option<f64> {
        median(self.runs.iter().filter_map(SeedRun::bag_auc).collect())
    }
}

/// Median; the mean of the two middle values for even counts.
pub fn median(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[m]
    } else {
        (values[m - 1] + values[m]) / 2.0
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
}

fn fmt_auc(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

impl AblationReport {
    pub fn row(&self, flags: AblationFlags) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.flags == flags)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<8} {:>7} {:>7} {:>4} {:>12} {:>8}",
            "config", "distill", "shared", "hpm", "instance_auc", "bag_auc"
        );
        let mark = |b: bool| if b { "x" } else { "" };
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<8} {:>7} {:>7} {:>4} {:>12} {:>8}",
                r.label,
                mark(r.flags.distillation),
                mark(r.flags.shared_encoder),
                mark(r.flags.hpm),
                fmt_auc(r.median_instance_auc()),
                fmt_auc(r.median_bag_auc())
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("config,distillation,shared_encoder,hpm,instance_auc,bag_auc\n");
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.label,
                r.flags.distillation,
                r.flags.shared_encoder,
                r.flags.hpm,
                cell(r.median_instance_auc()),
                cell(r.median_bag_auc())
            );
        }
        out
    }
}

fn run_one(dataset: &Dataset, base: &TrainConfig, flags: AblationFlags, seed: u64) -> Result<SeedRun> {
    let config = TrainConfig {
        mode: TrainMode::Weno,
        flags,
        seed,
        ..base.clone()
    };
    let out = run_weno(dataset, &config)?;
    let test = evaluate_checkpoint(&out.checkpoint, &dataset.test)?;
    Ok(SeedRun {
        seed,
        metrics: out.metrics,
        test,
    })
}

/// Runs every grid row for every seed and evaluates the final models on
/// the test split.
pub fn run_ablation(dataset: &Dataset, base: &TrainConfig, seeds: &[u64]) -> Result<AblationReport> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("at least one seed is required".into()));
    }
    base.validate()?;
    let jobs: Vec<(usize, u64)> = (0..ABLATION_ROWS.len())
        .flat_map(|r| seeds.iter().map(move |&s| (r, s)))
        .collect();
    let run = |&(r, s): &(usize, u64)| run_one(dataset, base, ABLATION_ROWS[r], s);

    #[cfg(feature = "parallel")]
    let results: Vec<Result<SeedRun>> = {
        use rayon::prelude::*;
        jobs.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<SeedRun>> = jobs.iter().map(run).collect();

    let mut rows: Vec<AblationRow> = ABLATION_ROWS
        .iter()
        .map(|f| AblationRow {
            label: f.label().to_string(),
            flags: *f,
            runs: Vec::with_capacity(seeds.len()),
        })
        .collect();
    for ((r, _), res) in jobs.iter().zip(results) {
        rows[*r].runs.push(res?);
    }
    Ok(AblationReport {
        seeds: seeds.to_vec(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_odd_even() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(vec![0.7]), Some(0.7));
        assert_eq!(median(vec![]), None);
    }

    #[test]
    fn row_labels() {
        let labels: Vec<_> = ABLATION_ROWS.iter().map(|f| f.label()).collect();
        assert_eq!(labels, ["none", "+D", "+D+S", "+D+S+H"]);
    }
}
