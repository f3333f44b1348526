//! Averaged limit cycle and its phase response curve.

use switchsync::models::{reference_chain, ric_drive_variant, RicDriveParams, RicField};
use switchsync::phase::averaged_cycle;
use switchsync::Result;

fn main() -> Result<()> {
    let spec = reference_chain();
    let model = ric_drive_variant(&RicDriveParams::reference(), &spec)?;
    let (lc, prc) = averaged_cycle(&model, &spec, 512, 1e-11)?;
    println!("period {:.10}, frequency {:.10}", lc.period, lc.frequency);

    let exact = RicField::new(1.0, 2.0, 1.0);
    let mut worst: f64 = 0.0;
    for (theta, r) in lc.theta_grid.iter().zip(&prc.r) {
        let e = exact.prc(*theta);
        worst = worst.max((r[0] - e[0]).abs()).max((r[1] - e[1]).abs());
    }
    println!("max PRC deviation from the closed form: {worst:.2e}");
    for k in (0..lc.num_nodes()).step_by(64) {
        println!(
            "theta {:.3}: phi = ({:+.4}, {:+.4}), R = ({:+.4}, {:+.4})",
            lc.theta_grid[k], lc.phi[k][0], lc.phi[k][1], prc.r[k][0], prc.r[k][1]
        );
    }
    Ok(())
}
