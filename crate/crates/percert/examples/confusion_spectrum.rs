//! Build margin and smoothed confusion matrices for a fixed net, then
//! inspect the top singular triple and the gradient coefficients G.

use percert::confusion::{
    build_margin_confusion_matrix, build_smoothed_confusion_matrix, gradient_coefficient_matrix,
    max_column_sum, mu_ratio, top_singular_triple,
};
use percert::data::generate_synthetic;
use percert::matrix::POWER_ITERATION_TOL;
use percert::{Network, RngStream, SyntheticSpec};

fn main() -> percert::Result<()> {
    let spec = SyntheticSpec {
        num_classes: 3,
        sizes: vec![50, 50, 50],
        dim: 2,
        radius: 1.5,
        spread: 0.9,
        overlap: 0.1,
    };
    let data = generate_synthetic(&spec, 21)?;
    let mut init = RngStream::new(5, 0);
    let net = Network::random(&[2, 12, 3], &mut init)?;

    let margin = build_margin_confusion_matrix(&net, &data, 0.1)?;
    println!("margin confusion (gamma 0.1):\n{}", margin.to_csv());

    let mut stream = RngStream::new(6, 0);
    let smoothed = build_smoothed_confusion_matrix(&net, &data, 0.1, 0.25, 100, &mut stream)?;
    println!("smoothed confusion (sigma 0.25, 100 draws):\n{}", smoothed.to_csv());

    let triple = top_singular_triple(&smoothed, POWER_ITERATION_TOL);
    println!("sigma_max {:.4}, max column sum {:.4}, mu {:.4}",
        triple.sigma_max,
        max_column_sum(&smoothed),
        mu_ratio(&smoothed)?,
    );
    let grads = gradient_coefficient_matrix(&triple);
    println!("G (unit rank-one, descent weights):");
    for i in 0..3 {
        let row: Vec<String> = (0..3).map(|j| format!("{:.4}", grads.g.get(i, j))).collect();
        println!("  {}", row.join("  "));
    }
    Ok(())
}
