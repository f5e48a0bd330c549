//! Acceptance suite. Runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line per criterion; exits non-zero if any fails.
//!
//! cargo test --release -p milkd --test acceptance

use std::path::Path;
use std::time::{Duration, Instant};

use milkd::ad::{finite_difference_check, NumericArray, ParameterStore};
use milkd::data::{bag_label, generate_synthetic, load_dataset, save_dataset, Bag, Dataset, GenSpec};
use milkd::eval::{auc, ScoredSet};
use milkd::hpm::{filter_bag, HpmConfig};
use milkd::labels::{make_pseudo_labels, minmax_normalize};
use milkd::models::{MilModel, ModelConfig};
use milkd::train::{
    evaluate_checkpoint, median, metrics_csv, run_ablation, run_fully_supervised, run_weno, run_with_checkpoints,
    AblationFlags, AblationReport, CheckpointRecord, TrainConfig, Trainer,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
}

fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn normal_array(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> NumericArray<f64> {
    let data = (0..rows * cols)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    NumericArray::matrix(rows, cols, data).unwrap()
}

// 1 ---------------------------------------------------------------------------

fn gradient_correctness() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut config = ModelConfig::new(8, seed % 2 == 0);
        config.encoder.hidden = vec![12, 12];
        config.encoder.embed_dim = 10;
        config.attention.hidden_dim = 6;
        let model = MilModel::new(config).map_err(|e| e.to_string())?;
        let store: ParameterStore<f64> = model.init_params(&mut rng).map_err(|e| e.to_string())?;
        let n = rng.gen_range(3..16);
        let x = normal_array(&mut rng, n, 8, 1.5);
        let label = (seed % 3 != 0) as u8;
        let targets: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let teacher = finite_difference_check(|t, s| model.teacher_loss(t, s, &x, label), &store, 1e-6)
            .map_err(|e| e.to_string())?;
        let student = finite_difference_check(|t, s| model.student_loss(t, s, &x, targets.clone()), &store, 1e-6)
            .map_err(|e| e.to_string())?;
        worst = worst.max(teacher.max_relative_error).max(student.max_relative_error);
    }
    check(worst < 1e-4, || format!("max relative error {worst:.3e} ≥ 1e-4"))?;
    Ok(format!("max relative error {worst:.3e} over 10 seeds (teacher and student losses, f64)"))
}

// 2 ---------------------------------------------------------------------------

fn attention_and_normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_sum = 0.0f64;
    let mut worst_perm = 0.0f64;
    let mut model_store = None;
    for b in 0..1000 {
        if b % 100 == 0 {
            let model = MilModel::new(ModelConfig::new(32, true)).unwrap();
            let store: ParameterStore<f32> = model.init_params(&mut rng).unwrap();
            model_store = Some((model, store));
        }
        let (model, store) = model_store.as_ref().unwrap();
        let n = rng.gen_range(1..=64);
        let x: NumericArray<f32> = normal_array(&mut rng, n, 32, 2.0).cast();
        let (att, prob) = model.teacher_outputs(store, &x).map_err(|e| e.to_string())?;
        let sum: f64 = att.iter().map(|&a| f64::from(a)).sum();
        worst_sum = worst_sum.max((sum - 1.0).abs());
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let (att_p, prob_p) = model.teacher_outputs(store, &x.select_rows(&perm)).map_err(|e| e.to_string())?;
        for (k, &j) in perm.iter().enumerate() {
            worst_perm = worst_perm.max(f64::from((att_p[k] - att[j]).abs()));
        }
        worst_perm = worst_perm.max(f64::from((prob - prob_p).abs()));
    }
    check(worst_sum <= 1e-6, || format!("attention sum off by {worst_sum:.3e}"))?;
    check(worst_perm <= 1e-6, || format!("permutation mismatch {worst_perm:.3e}"))?;

    let strategy = prop::collection::vec(-1e4f64..1e4, 1..100);
    runner(1000)
        .run(&strategy, |xs| {
            let out = minmax_normalize(&xs).unwrap();
            prop_assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
            let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi - lo > 1e-8 {
                prop_assert_eq!(out[xs.iter().position(|&x| x == lo).unwrap()], 0.0);
                prop_assert_eq!(out[xs.iter().position(|&x| x == hi).unwrap()], 1.0);
            }
            let flat = minmax_normalize(&vec![xs[0]; xs.len()]).unwrap();
            prop_assert!(flat.iter().all(|&v| v == 0.5));
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!(
        "1000 bags: |Σa−1| ≤ {worst_sum:.1e}, permutation error ≤ {worst_perm:.1e}; 1000 min-max cases"
    ))
}

// 3 ---------------------------------------------------------------------------

fn label_contracts() -> Outcome {
    let mut bags = 0;
    for ratio in [0.05, 0.1, 0.2, 0.5] {
        let data = generate_synthetic(&GenSpec {
            positive_ratio: ratio,
            ..GenSpec::default()
        })
        .map_err(|e| e.to_string())?
        .dataset;
        for bag in data.bags() {
            check(bag_label(&bag.instance_labels).unwrap() == bag.label, || {
                format!("bag {} label mismatch", bag.id)
            })?;
            if bag.label == 0 {
                let att = vec![1.0 / bag.len() as f64; bag.len()];
                let set = make_pseudo_labels(bag, Some(&att), 0).map_err(|e| e.to_string())?;
                check(set.labels.iter().all(|&y| y == 0.0), || format!("bag {} pseudo label ≠ 0", bag.id))?;
            }
            bags += 1;
        }
    }
    let strategy = (prop::collection::vec(0u8..2, 1..80), any::<u64>());
    runner(10_000)
        .run(&strategy, |(labels, seed)| {
            let y = bag_label(&labels).unwrap();
            prop_assert_eq!(y, u8::from(labels.iter().any(|&l| l == 1)));
            let n = labels.len();
            let bag = Bag::new(0, NumericArray::zeros(&[n, 1]), labels).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let att: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            let set = make_pseudo_labels(&bag, Some(&att), 0).unwrap();
            if y == 0 {
                prop_assert!(set.labels.iter().all(|&v| v == 0.0));
            } else {
                prop_assert!(set.labels.iter().all(|v| (0.0..=1.0).contains(v)));
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("{bags} generated bags consistent; 10000 random label vectors"))
}

// 4 ---------------------------------------------------------------------------

fn auc_oracle() -> Outcome {
    let strategy = prop::collection::vec((0u16..20, 0u8..2), 2..300);
    let mut compared = 0usize;
    runner(500)
        .run(&strategy, |pairs| {
            let scores: Vec<f64> = pairs.iter().map(|(s, _)| f64::from(*s) * 0.05).collect();
            let labels: Vec<u8> = pairs.iter().map(|(_, l)| *l).collect();
            let pos: Vec<f64> = scores.iter().zip(&labels).filter(|(_, &l)| l == 1).map(|(s, _)| *s).collect();
            let neg: Vec<f64> = scores.iter().zip(&labels).filter(|(_, &l)| l == 0).map(|(s, _)| *s).collect();
            let fast = auc(&ScoredSet::new(scores, labels).unwrap());
            if pos.is_empty() || neg.is_empty() {
                prop_assert!(fast.is_err());
                return Ok(());
            }
            let mut wins = 0.0;
            for p in &pos {
                for q in &neg {
                    wins += if p > q { 1.0 } else if p == q { 0.5 } else { 0.0 };
                }
            }
            prop_assert_eq!(fast.unwrap(), wins / (pos.len() * neg.len()) as f64);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    compared += 500;
    Ok(format!("{compared} random score/label sets equal the pairwise oracle exactly"))
}

// 5 ---------------------------------------------------------------------------

fn hpm_contracts(ablation: &AblationReport) -> Outcome {
    let strategy = (
        prop::collection::vec(0.0f64..1.0, 1..60),
        0.01f64..0.99,
        1usize..5,
        any::<bool>(),
    );
    runner(5000)
        .run(&strategy, |(scores, threshold, min_surviving, positive)| {
            let n = scores.len();
            let mut labels = vec![0u8; n];
            if positive {
                labels[n - 1] = 1;
            }
            let bag = Bag::new(0, NumericArray::zeros(&[n, 1]), labels).unwrap();
            let cfg = HpmConfig {
                threshold,
                warmup_epochs: 0,
                min_surviving,
            };
            let view = filter_bag(&bag, &scores, &cfg).unwrap();
            prop_assert!(!view.surviving.is_empty());
            prop_assert!(view.dropped.iter().all(|&j| scores[j] > threshold));
            if !positive {
                prop_assert!(view.dropped.is_empty());
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;

    let full = ablation.row(AblationFlags::FULL).ok_or("missing full row")?;
    let warmup = HpmConfig::default().warmup_epochs;
    let mut after = 0;
    for run in &full.runs {
        for m in &run.metrics {
            if m.epoch < warmup {
                check(m.hpm_dropped == 0, || {
                    format!("seed {} dropped {} at epoch {}", run.seed, m.hpm_dropped, m.epoch)
                })?;
            } else {
                after += m.hpm_dropped;
            }
        }
    }
    Ok(format!(
        "5000 filter_bag cases; 0 drops before epoch {warmup} in {} full runs ({after} drops after)",
        full.runs.len()
    ))
}

// 6–8 -------------------------------------------------------------------------

const SEEDS: [u64; 3] = [0, 1, 2];

struct TrendRuns {
    ablation: AblationReport,
    supervised: Vec<f64>,
    elapsed: Duration,
}

fn trend_runs(data: &Dataset) -> milkd::Result<TrendRuns> {
    let start = Instant::now();
    let base = TrainConfig::default();
    let ablation = run_ablation(data, &base, &SEEDS)?;
    let mut supervised = Vec::new();
    for seed in SEEDS {
        let out = run_fully_supervised(data, &TrainConfig { seed, ..base.clone() })?;
        let test = evaluate_checkpoint(&out.checkpoint, &data.test)?;
        supervised.push(test.student_instance_auc.expect("student trained"));
    }
    Ok(TrendRuns {
        ablation,
        supervised,
        elapsed: start.elapsed(),
    })
}

fn student_aucs(report: &AblationReport, flags: AblationFlags) -> Vec<f64> {
    report
        .row(flags)
        .map(|r| r.runs.iter().filter_map(|s| s.test.student_instance_auc).collect())
        .unwrap_or_default()
}

fn baseline_attention(report: &AblationReport) -> Vec<f64> {
    report
        .row(AblationFlags::NONE)
        .map(|r| r.runs.iter().filter_map(|s| s.test.teacher_attention_instance_auc).collect())
        .unwrap_or_default()
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join("/")
}

fn trend_reproduction(runs: &TrendRuns) -> Outcome {
    let full = student_aucs(&runs.ablation, AblationFlags::FULL);
    let base = baseline_attention(&runs.ablation);
    let diffs: Vec<f64> = full.iter().zip(&base).map(|(f, b)| f - b).collect();
    let m = median(diffs.clone()).ok_or("no runs")?;
    check(m >= 0.03, || format!("median improvement {m:.4} < 0.03 (per seed {})", fmt(&diffs)))?;
    check(runs.elapsed < Duration::from_secs(15 * 60), || {
        format!("trend runs took {:.0}s", runs.elapsed.as_secs_f64())
    })?;
    Ok(format!(
        "median (student − baseline attention) = {m:+.4} [student {} vs baseline {}], {:.0}s for all grid + supervised runs",
        fmt(&full),
        fmt(&base),
        runs.elapsed.as_secs_f64()
    ))
}

fn upper_bound(runs: &TrendRuns) -> Outcome {
    let sup = median(runs.supervised.clone()).ok_or("no runs")?;
    let weno = median(student_aucs(&runs.ablation, AblationFlags::FULL)).ok_or("no runs")?;
    check(sup >= weno - 0.02, || format!("supervised {sup:.4} < student {weno:.4} − 0.02"))?;
    Ok(format!(
        "median fully supervised {sup:.4} ≥ median student {weno:.4} − 0.02 (supervised {})",
        fmt(&runs.supervised)
    ))
}

fn ablation_direction(runs: &TrendRuns) -> Outcome {
    let r = &runs.ablation;
    let base = median(baseline_attention(r)).ok_or("no runs")?;
    let d = median(student_aucs(r, AblationFlags::DISTILL)).ok_or("no runs")?;
    let ds = median(student_aucs(r, AblationFlags::DISTILL_SHARED)).ok_or("no runs")?;
    let full = median(student_aucs(r, AblationFlags::FULL)).ok_or("no runs")?;
    let chain = if full >= d && d >= base { "holds" } else { "does not hold" };
    check(full - base >= 0.02, || {
        format!("full {full:.4} − baseline {base:.4} = {:+.4} < 0.02", full - base)
    })?;
    Ok(format!(
        "none {base:.4} → +D {d:.4} → +D+S {ds:.4} → +D+S+H {full:.4}; full − none = {:+.4}; full ≥ +D ≥ none {chain} (reported)",
        full - base
    ))
}

// 9 ---------------------------------------------------------------------------

fn determinism_and_persistence(data: &Dataset, dir: &Path) -> Outcome {
    let e = |e: milkd::Error| e.to_string();
    let config = TrainConfig {
        epochs: 10,
        checkpoint_every: Some(5),
        hpm: HpmConfig {
            warmup_epochs: 4,
            threshold: 0.5,
            ..HpmConfig::default()
        },
        seed: 42,
        ..TrainConfig::default()
    };
    let mut saved = None;
    let a = run_with_checkpoints(data, &config, &mut |r| {
        let path = dir.join("mid.ckpt");
        r.save(&path)?;
        saved = Some(path);
        Ok(())
    })
    .map_err(e)?;
    let b = run_weno(data, &config).map_err(e)?;
    let csv_a = metrics_csv(&a.metrics);
    check(csv_a.as_bytes() == metrics_csv(&b.metrics).as_bytes(), || {
        "metrics CSVs differ between identical runs".into()
    })?;

    let record = CheckpointRecord::load(&saved.ok_or("no intermediate checkpoint")?).map_err(e)?;
    let mut resumed = Trainer::<f32>::from_checkpoint(&record).map_err(e)?;
    let tail = resumed.run_until(data, config.epochs, &mut |_| Ok(())).map_err(e)?;
    check(metrics_csv(&tail) == metrics_csv(&a.metrics[record.epoch..]), || {
        format!("resumed metrics differ after epoch {}", record.epoch)
    })?;
    check(resumed.checkpoint().to_bytes().map_err(e)? == a.checkpoint.to_bytes().map_err(e)?, || {
        "resumed final checkpoint differs".into()
    })?;

    let d1 = dir.join("d1");
    let d2 = dir.join("d2");
    save_dataset(data, &d1).map_err(e)?;
    let loaded = load_dataset(&d1).map_err(e)?;
    check(&loaded == data, || "dataset round-trip changed the data".into())?;
    save_dataset(&loaded, &d2).map_err(e)?;
    for f in ["manifest.json", "train.bin", "valid.bin", "test.bin"] {
        let same = std::fs::read(d1.join(f)).map_err(|x| x.to_string())? == std::fs::read(d2.join(f)).map_err(|x| x.to_string())?;
        check(same, || format!("{f} differs after re-save"))?;
    }
    Ok(format!(
        "byte-identical metrics; resume at epoch {} bitwise equal; dataset round-trip identity",
        record.epoch
    ))
}

fn main() {
    let mut failures = 0;
    let mut report = |c: Criterion, elapsed: Duration, outcome: Outcome| {
        let (status, detail) = match outcome {
            Ok(d) if elapsed <= c.budget => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; exceeded {:?} budget", c.budget)),
            Err(d) => ("FAIL", d),
        };
        if status == "FAIL" {
            failures += 1;
        }
        println!(
            "criterion {} {status} [{:.1}s] {}: {detail}",
            c.id,
            elapsed.as_secs_f64(),
            c.name
        );
    };
    let timed = |f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let o = f();
        (t.elapsed(), o)
    };
    let secs = Duration::from_secs;

    let (t, o) = timed(&gradient_correctness);
    report(Criterion { id: 1, name: "gradient correctness", budget: secs(60) }, t, o);
    let (t, o) = timed(&attention_and_normalization);
    report(Criterion { id: 2, name: "attention/normalization invariants", budget: secs(10) }, t, o);
    let (t, o) = timed(&label_contracts);
    report(Criterion { id: 3, name: "bag label and pseudo label contracts", budget: secs(10) }, t, o);
    let (t, o) = timed(&auc_oracle);
    report(Criterion { id: 4, name: "AUC oracle equivalence", budget: secs(10) }, t, o);

    let data = generate_synthetic(&GenSpec::default()).expect("default spec").dataset;
    let dir = tempfile::tempdir().expect("tempdir");
    let (t, o) = timed(&|| determinism_and_persistence(&data, dir.path()));
    report(Criterion { id: 9, name: "determinism and persistence", budget: secs(300) }, t, o);

    match trend_runs(&data) {
        Ok(runs) => {
            print!("{}", runs.ablation.to_text());
            let (t, o) = timed(&|| hpm_contracts(&runs.ablation));
            report(Criterion { id: 5, name: "HPM contracts", budget: secs(30) }, t, o);
            let budget = secs(15 * 60);
            report(Criterion { id: 6, name: "trend reproduction", budget }, runs.elapsed, trend_reproduction(&runs));
            report(Criterion { id: 7, name: "upper-bound sanity", budget }, Duration::ZERO, upper_bound(&runs));
            report(Criterion { id: 8, name: "ablation direction", budget }, Duration::ZERO, ablation_direction(&runs));
        }
        Err(err) => {
            for (id, name) in [(5, "HPM contracts"), (6, "trend reproduction"), (7, "upper-bound sanity"), (8, "ablation direction")] {
                report(Criterion { id, name, budget: secs(0) }, Duration::ZERO, Err(format!("training failed: {err}")));
            }
        }
    }

    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
