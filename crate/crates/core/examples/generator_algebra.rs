//! Stationary law, pseudo-inverse and diffusion matrix of a switching chain.

use nalgebra::DMatrix;
use switchsync::markov::series_identity_residual;
use switchsync::{build_generator, Result};

fn main() -> Result<()> {
    // rates W[(n, m)] for the jump m -> n
    let w = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.5, 2.0, 0.0, 1.0, 0.5, 3.0, 0.0]);
    let spec = build_generator(&w)?;

    println!("generator A:{:.4}", spec.generator());
    println!("stationary rho: {:.6}", spec.stationary().transpose());
    println!("exit rates: {:.4}", spec.exit_rates().transpose());
    println!("pseudo-inverse:{:.5}", spec.pseudo_inverse());
    println!("diffusion matrix:{:.5}", spec.diffusion());

    let a = spec.generator();
    let pinv = spec.pseudo_inverse();
    println!("|A A+ A - A| = {:.2e}", (a * pinv * a - a).norm());

    let f = [1.0, -0.5, 0.25];
    for order in [5, 20, 60] {
        println!(
            "series residual at order {order}: {:.3e}",
            series_identity_residual(&spec, &f, order)?
        );
    }
    Ok(())
}
