//! Weight-norm diagnostic Φ and the worst-class generalization bound,
//! including the vacuous regime on an undersized class.

use percert::bound::{bound_diagnostics, phi_diagnostic};
use percert::data::generate_synthetic;
use percert::{Network, RngStream, SyntheticSpec};

fn main() -> percert::Result<()> {
    let spec = SyntheticSpec {
        num_classes: 3,
        sizes: vec![200, 200, 100],
        dim: 2,
        radius: 2.0,
        spread: 0.5,
        overlap: 0.0,
    };
    let data = generate_synthetic(&spec, 8)?;
    let mut init = RngStream::new(9, 0);
    let net = Network::random(&[2, 10, 3], &mut init)?;

    println!("phi at B = 1: {:.4}", phi_diagnostic(&net, 1.0));
    let diag = bound_diagnostics(&net, &data, 0.1, 0.05)?;
    println!(
        "B {:.4}, layers {}, width {}, m_min {}, d_y {}",
        diag.input_bound_b, diag.n_layers, diag.max_width_h, diag.m_min, diag.d_y
    );
    for (l, n) in diag.per_layer.iter().enumerate() {
        println!("layer {l}: spectral {:.4}, frobenius {:.4}", n.spectral, n.frobenius);
    }
    println!("phi {:.4}, bound rhs {:.4}", diag.phi, diag.bound_rhs);

    // m_min ≤ 8·d_y makes the bound vacuous and is reported as an error.
    let tiny = generate_synthetic(
        &SyntheticSpec {
            sizes: vec![200, 200, 20],
            ..spec
        },
        8,
    )?;
    match bound_diagnostics(&net, &tiny, 0.1, 0.05) {
        Err(e) => println!("undersized class: {e}"),
        Ok(_) => unreachable!("m_min = 20 with d_y = 3 cannot satisfy m_min > 8 d_y"),
    }
    Ok(())
}
