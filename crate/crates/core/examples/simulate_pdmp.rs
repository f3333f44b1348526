//! Two clocks driven by one switching environment.

use switchsync::dynamics::{simulate_pdmp, HybridModel};
use switchsync::models::{reference_chain, ric_drive_variant, RicDriveParams};
use switchsync::Result;

fn main() -> Result<()> {
    let spec = reference_chain();
    let model = ric_drive_variant(&RicDriveParams::reference(), &spec)?;
    let period = model.period_hint().unwrap_or(std::f64::consts::TAU);
    let eps = 0.01;

    let x0 = [vec![1.0, 0.0], vec![0.0, 1.0]];
    let traj = simulate_pdmp(&model, &spec, &x0, 0, eps, 5.0 * period, 0.5, 42)?;

    println!(
        "{} jumps in 5 periods (expected {:.0})",
        traj.events.len(),
        spec.expected_jumps(5.0 * period, eps)
    );
    for s in (0..traj.num_samples()).step_by(10) {
        let (a, b) = (traj.point(0, s), traj.point(1, s));
        println!(
            "t = {:6.2}  state {}  x1 = ({:+.3}, {:+.3})  x2 = ({:+.3}, {:+.3})",
            traj.sample_times[s], traj.states_at_samples[s], a[0], a[1], b[0], b[1]
        );
    }
    Ok(())
}
