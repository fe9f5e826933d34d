//! On a 1-D threshold classifier the true robust distance is |x − t|,
//! so every certificate can be checked against ground truth.

use percert::smoothing::certify;
use percert::{Matrix, Network, RngStream, SmoothingConfig};

fn main() -> percert::Result<()> {
    let t = 0.25;
    let w = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, -t]])?;
    let net = Network::from_layers(vec![w], 1)?;
    let cfg = SmoothingConfig {
        sigma_v: 0.5,
        n_selection: 100,
        n_estimation: 50_000,
        alpha: 0.001,
        gamma: 0.0,
    };

    println!("x       true dist  certified  sound");
    for (i, x) in [-1.2, -0.4, 0.1, 0.3, 0.8, 2.0].into_iter().enumerate() {
        let mut stream = RngStream::new(31, i as u64);
        let outcome = certify(&net, &[x], &cfg, &mut stream)?;
        let truth = (x - t).abs();
        match outcome.prediction {
            Some(class) => {
                let correct = class == usize::from(x > t);
                println!(
                    "{x:>5.2}   {truth:.4}     {:.4}     {}",
                    outcome.radius,
                    correct && outcome.radius <= truth
                );
            }
            None => println!("{x:>5.2}   {truth:.4}     abstain    true"),
        }
    }
    Ok(())
}
