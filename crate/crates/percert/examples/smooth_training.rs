//! Train a small network from scratch under Gaussian data augmentation
//! and watch the per-epoch confusion diagnostics.

use percert::data::generate_synthetic;
use percert::train::smooth_train;
use percert::{PerTrainConfig, SyntheticSpec, TrainMode};

fn main() -> percert::Result<()> {
    let spec = SyntheticSpec {
        num_classes: 3,
        sizes: vec![40, 40, 20],
        dim: 2,
        radius: 2.0,
        spread: 0.5,
        overlap: 0.0,
    };
    let train = generate_synthetic(&spec, 1)?;
    let val = generate_synthetic(&spec, 2)?;

    let cfg = PerTrainConfig {
        epochs: 5,
        batch_size: 16,
        hidden: vec![16],
        mode: TrainMode::Scratch,
        regularizer: false,
        ..PerTrainConfig::default()
    };
    let (net, log) = smooth_train(&train, &val, &cfg, 42, None)?;

    for e in &log {
        println!(
            "epoch {}: loss {:.4}, sigma_max {:.4}, max column sum {:.4}, val class error {:?}",
            e.epoch, e.mean_loss, e.sigma_max, e.max_column_sum, e.val_class_error
        );
    }
    println!("layers: {:?}", net.layers().iter().map(|w| (w.rows(), w.cols())).collect::<Vec<_>>());
    Ok(())
}
