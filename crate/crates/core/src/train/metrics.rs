use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalReport;

pub const METRICS_HEADER: &str = "epoch,teacher_loss,student_loss,teacher_bag_auc,\
teacher_attention_instance_auc,student_instance_auc,student_bag_auc,hpm_dropped";

/// One row of training history. Quantities of branches that were not
/// trained are `None` and written as empty CSV cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub teacher_loss: Option<f64>,
    pub student_loss: Option<f64>,
    #[serde(flatten)]
    pub valid: EvalReport,
    pub hpm_dropped: usize,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn metrics_csv(rows: &[EpochMetrics]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.epoch,
            cell(r.teacher_loss),
            cell(r.student_loss),
            cell(r.valid.teacher_bag_auc),
            cell(r.valid.teacher_attention_instance_auc),
            cell(r.valid.student_instance_auc),
            cell(r.valid.student_bag_auc),
            r.hpm_dropped
        );
    }
    out
}

pub fn write_metrics_csv(rows: &[EpochMetrics], path: &Path) -> Result<()> {
    std::fs::write(path, metrics_csv(rows))?;
    Ok(())
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<EpochMetrics>> {
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Error::InvalidInput("metrics CSV header mismatch".into()));
    }
    let bad = |line: &str| Error::InvalidInput(format!("malformed metrics row `{line}`"));
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(bad(line));
            }
            let opt = |s: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| bad(line))
                }
            };
            Ok(EpochMetrics {
                epoch: f[0].parse().map_err(|_| bad(line))?,
                teacher_loss: opt(f[1])?,
                student_loss: opt(f[2])?,
                valid: EvalReport {
                    teacher_bag_auc: opt(f[3])?,
                    teacher_attention_instance_auc: opt(f[4])?,
                    student_instance_auc: opt(f[5])?,
                    student_bag_auc: opt(f[6])?,
                },
                hpm_dropped: f[7].parse().map_err(|_| bad(line))?,
            })
        })
        .collect()
}
