//! Certify a single input of a hand-built classifier at two noise levels.

use percert::smoothing::certify;
use percert::{Matrix, Network, RngStream, SmoothingConfig};

fn main() -> percert::Result<()> {
    // Two linear scores over a 2-D input; class 1 wins right of x₀ = 0.4.
    let w = Matrix::from_rows(&[vec![0.0, 0.0, 0.0], vec![5.0, 0.0, -2.0]])?;
    let net = Network::from_layers(vec![w], 2)?;
    let x = [0.9, -0.3];

    for sigma in [0.25, 0.75] {
        let cfg = SmoothingConfig {
            sigma_v: sigma,
            n_selection: 100,
            n_estimation: 10_000,
            alpha: 0.001,
            gamma: 0.0,
        };
        let mut stream = RngStream::new(7, 0);
        let outcome = certify(&net, &x, &cfg, &mut stream)?;
        match outcome.prediction {
            Some(class) => println!(
                "sigma {sigma}: class {class}, p_lower {:.4}, radius {:.4} ({} draws)",
                outcome.p_a_lower, outcome.radius, outcome.samples_used
            ),
            None => println!("sigma {sigma}: abstain ({} draws)", outcome.samples_used),
        }
    }
    Ok(())
}
