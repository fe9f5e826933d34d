//! Paired fine-tuning: the same baseline continued with and without the
//! principal-eigenvalue regularizer, identical noise and shuffling.

use percert::confusion::{build_smoothed_confusion_matrix, top_singular_triple};
use percert::data::generate_synthetic;
use percert::matrix::POWER_ITERATION_TOL;
use percert::train::smooth_train;
use percert::{PerTrainConfig, RngStream, SyntheticSpec, TrainMode};

fn main() -> percert::Result<()> {
    // Optional seed argument; both arms always share it, so the noise
    // and shuffling match draw for draw.
    let seed: u64 = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("seed must be an integer"))
        .unwrap_or(2);
    let spec = SyntheticSpec {
        num_classes: 4,
        sizes: vec![60, 60, 60, 15],
        dim: 2,
        radius: 2.0,
        spread: 0.85,
        overlap: 0.05,
    };
    let train = generate_synthetic(&spec, seed)?;
    let val = generate_synthetic(&spec, seed + 1)?;

    let base_cfg = PerTrainConfig {
        epochs: 15,
        batch_size: 16,
        hidden: vec![32],
        mode: TrainMode::Scratch,
        regularizer: false,
        ..PerTrainConfig::default()
    };
    let (baseline, log) = smooth_train(&train, &val, &base_cfg, seed + 2, None)?;
    let last = log.last().unwrap();
    println!("seed {seed} baseline: sigma_max {:.4}", last.sigma_max);

    for regularizer in [false, true] {
        let cfg = PerTrainConfig {
            epochs: 10,
            mode: TrainMode::Finetune,
            regularizer,
            hidden: vec![],
            ..base_cfg.clone()
        };
        let (net, log) = smooth_train(&train, &val, &cfg, seed + 3, Some(baseline.clone()))?;
        let last = log.last().unwrap();
        // Held-out smoothed confusion spectrum, same stream in both arms.
        let mut stream = RngStream::new(seed + 4, 0);
        let c = build_smoothed_confusion_matrix(&net, &val, 0.0, 0.25, 100, &mut stream)?;
        let sigma_val = top_singular_triple(&c, POWER_ITERATION_TOL).sigma_max;
        println!(
            "fine-tune (regularizer {}): val sigma_max {:.4}, val class error {:?}",
            regularizer, sigma_val, last.val_class_error
        );
    }
    Ok(())
}
