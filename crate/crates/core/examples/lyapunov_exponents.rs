//! Exact and diffusion-limit exponents for both clock variants.

use switchsync::models::{
    reference_chain, ric_drive_variant, ric_parameter_switching, RicDriveParams, RicSwitchParams,
};
use switchsync::phase::{averaged_cycle, lyapunov_exact, lyapunov_qss, phase_coupling};
use switchsync::Result;

fn main() -> Result<()> {
    let spec = reference_chain();

    let drive = ric_drive_variant(&RicDriveParams::reference(), &spec)?;
    let (lc, prc) = averaged_cycle(&drive, &spec, 1024, 1e-11)?;
    let pc = phase_coupling(&drive, &spec, &lc, &prc)?;
    println!("drive variant");
    for eps in [0.02, 0.01, 0.005] {
        println!(
            "  eps {eps:<6} exact {:+.6}  qss {:+.6}",
            lyapunov_exact(&pc, &spec, eps),
            lyapunov_qss(&pc, &spec, eps)?
        );
    }

    let params = RicSwitchParams {
        mu: vec![1.2, 0.8, 1.1, 0.9],
        eta: vec![2.5, 1.5, 2.2, 1.8],
        alpha: 1.0,
    };
    let switching = ric_parameter_switching(&params, &spec)?;
    let (lc, prc) = averaged_cycle(&switching, &spec, 1024, 1e-11)?;
    let pc = phase_coupling(&switching, &spec, &lc, &prc)?;
    println!(
        "parameter switching: exact {:+.3e}  qss {:+.3e}",
        lyapunov_exact(&pc, &spec, 0.01),
        lyapunov_qss(&pc, &spec, 0.01)?
    );
    Ok(())
}
