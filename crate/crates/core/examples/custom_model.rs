//! A user-defined hybrid model and the dichotomous input model.

use switchsync::dynamics::{averaged_field, simulate_pdmp};
use switchsync::models::{dichotomous_additive, FnModel, RicField};
use switchsync::phase::{averaged_cycle, lyapunov_exact, lyapunov_qss, phase_coupling};
use switchsync::{GeneratorSpec, Result};

fn main() -> Result<()> {
    let spec = GeneratorSpec::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]])?;

    // clock whose vertical input flips sign with the environment
    let kick = [0.4, -0.4];
    let model = FnModel::new(2, 2, 50.0, move |n, x: &[f64], out: &mut [f64]| {
        let r2 = x[0] * x[0] + x[1] * x[1];
        out[0] = x[0] - 2.0 * x[1] - r2 * (x[0] - x[1]);
        out[1] = x[1] + 2.0 * x[0] - r2 * (x[1] + x[0]) + kick[n];
    })
    .with_cycle_hint(vec![1.0, 0.0]);

    println!(
        "averaged field at (1, 0): {:?}",
        averaged_field(&model, &spec, &[1.0, 0.0])
    );
    let (lc, prc) = averaged_cycle(&model, &spec, 512, 1e-11)?;
    let pc = phase_coupling(&model, &spec, &lc, &prc)?;
    println!(
        "custom model: period {:.4}, exact {:+.5}, qss {:+.5}",
        lc.period,
        lyapunov_exact(&pc, &spec, 0.01),
        lyapunov_qss(&pc, &spec, 0.01)?
    );

    let built = dichotomous_additive(
        RicField::new(1.0, 2.0, 1.0),
        vec![0.4, 0.0],
        vec![-0.4, 0.0],
        &spec,
    )?;
    let (lc, prc) = averaged_cycle(&built, &spec, 512, 1e-11)?;
    let pc = phase_coupling(&built, &spec, &lc, &prc)?;
    println!(
        "dichotomous model: exact {:+.5}, qss {:+.5}",
        lyapunov_exact(&pc, &spec, 0.01),
        lyapunov_qss(&pc, &spec, 0.01)?
    );

    let traj = simulate_pdmp(&built, &spec, &[vec![1.0, 0.0]], 0, 0.01, 10.0, 1.0, 3)?;
    println!("{} switches in 10 time units", traj.events.len());
    Ok(())
}
