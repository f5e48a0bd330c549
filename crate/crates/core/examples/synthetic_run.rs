//! Trains the baseline teacher and the full configuration on the default
//! synthetic dataset and prints test AUCs.
//!
//! cargo run --release -p milkd --example synthetic_run -- [epochs] [seed] [separation]

use std::time::Instant;

use milkd::data::{generate_synthetic, GenSpec};
use milkd::train::{evaluate_checkpoint, run_weno, AblationFlags, TrainConfig, TrainMode};

fn main() -> milkd::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let epochs = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    let seed = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut spec = GenSpec { seed, ..GenSpec::default() };
    if let Some(s) = args.get(3).and_then(|s| s.parse().ok()) {
        spec.separation = s;
    }
    let data = generate_synthetic(&spec)?.dataset;
    for (name, mode, flags) in [
        ("baseline", TrainMode::Baseline, AblationFlags::NONE),
        ("+D", TrainMode::Weno, AblationFlags::DISTILL),
        ("+D+S", TrainMode::Weno, AblationFlags::DISTILL_SHARED),
        ("full", TrainMode::Weno, AblationFlags::FULL),
        ("supervised", TrainMode::Supervised, AblationFlags::NONE),
    ] {
        let config = TrainConfig { mode, flags, epochs, seed, ..TrainConfig::default() };
        let start = Instant::now();
        let out = run_weno(&data, &config)?;
        let test = evaluate_checkpoint(&out.checkpoint, &data.test)?;
        let last = out.metrics.last();
        println!(
            "{name:<11} {:>6.1}s test {:?} dropped {:?}",
            start.elapsed().as_secs_f64(),
            test,
            last.map(|m| m.hpm_dropped)
        );
    }
    Ok(())
}
