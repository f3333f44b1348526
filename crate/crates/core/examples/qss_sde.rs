//! Diffusion surrogate next to the switching system it approximates.

use switchsync::dynamics::{simulate_pdmp, simulate_qss_sde};
use switchsync::models::{reference_chain, ric_drive_variant, RicDriveParams};
use switchsync::Result;

fn radius_stats(points: impl Iterator<Item = f64>) -> (f64, f64) {
    let r: Vec<f64> = points.collect();
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    let var = r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / r.len() as f64;
    (mean, var.sqrt())
}

fn main() -> Result<()> {
    let spec = reference_chain();
    let model = ric_drive_variant(&RicDriveParams::reference(), &spec)?;
    let eps = 0.01;
    let x0 = [vec![1.0, 0.0]];
    let t_final = 100.0;

    let pdmp = simulate_pdmp(&model, &spec, &x0, 0, eps, t_final, 0.1, 1)?;
    let sde = simulate_qss_sde(&model, &spec, &x0, eps, t_final, eps / 10.0, 1)?;

    let (m1, s1) = radius_stats((0..pdmp.num_samples()).map(|s| {
        let p = pdmp.point(0, s);
        p[0].hypot(p[1])
    }));
    let (m2, s2) = radius_stats((0..sde.trajectory.num_samples()).map(|s| {
        let p = sde.trajectory.point(0, s);
        p[0].hypot(p[1])
    }));
    println!("radius, switching system: mean {m1:.4}, sd {s1:.4}");
    println!("radius, diffusion limit:  mean {m2:.4}, sd {s2:.4}");
    Ok(())
}
