use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::markov::GeneratorSpec;
use crate::seeds::rng_from_seed;

use super::{check_point, check_states, HybridModel, HybridTrajectory};

/// Output and diagnostics knobs of the diffusion surrogate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SdeOptions {
    /// Sampling interval, rounded to a whole number of steps; every step if `None`.
    pub output_dt: Option<f64>,
    /// Log the Wiener increments (Λ₀ per step).
    pub record_increments: bool,
}

/// Paths of the diffusion surrogate plus the optional increment log.
#[derive(Debug, Clone, PartialEq)]
pub struct SdeTrajectory {
    pub trajectory: HybridTrajectory,
    /// Row-major `steps × Λ₀` Wiener increments shared by all oscillators.
    pub increments: Option<Vec<f64>>,
}

/// Stratonovich SDE dX = F̄ dt + √(2ε) Σ_m G_m(X) (B dW)_m, one common W for all oscillators.
#[allow(clippy::too_many_arguments)]
pub fn simulate_qss_sde<M: HybridModel + ?Sized>(
    model: &M,
    spec: &GeneratorSpec,
    x0: &[Vec<f64>],
    epsilon: f64,
    t_final: f64,
    dt: f64,
    seed: u64,
) -> Result<SdeTrajectory> {
    simulate_qss_sde_with(
        model,
        spec,
        x0,
        epsilon,
        t_final,
        dt,
        seed,
        &SdeOptions::default(),
        None,
    )
}

/// [`simulate_qss_sde`] with options and an optional stop test.
#[allow(clippy::too_many_arguments)]
pub fn simulate_qss_sde_with<M: HybridModel + ?Sized>(
    model: &M,
    spec: &GeneratorSpec,
    x0: &[Vec<f64>],
    epsilon: f64,
    t_final: f64,
    dt: f64,
    seed: u64,
    options: &SdeOptions,
    mut stop: Option<&mut dyn FnMut(&HybridTrajectory) -> bool>,
) -> Result<SdeTrajectory> {
    check_states(model, spec)?;
    if !(epsilon >= 0.0) || !(dt > 0.0) || !(t_final > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need epsilon >= 0, dt > 0, t_final > 0; got {epsilon}, {dt}, {t_final}"
        )));
    }
    if epsilon > 0.0 && dt > epsilon {
        return Err(Error::InvalidArgument(format!(
            "dt = {dt} must not exceed epsilon = {epsilon}"
        )));
    }
    let d = model.dimension();
    let m = x0.len();
    if m == 0 {
        return Err(Error::InvalidArgument("no oscillators given".into()));
    }
    for (i, x) in x0.iter().enumerate() {
        if x.len() != d {
            return Err(Error::InvalidArgument(format!(
                "initial point {i} has wrong dimension"
            )));
        }
        check_point(model, x, 0.0)
            .map_err(|e| Error::InvalidArgument(format!("initial point {i} rejected: {e}")))?;
    }

    let k = spec.num_states();
    let rho: Vec<f64> = spec.stationary().iter().copied().collect();
    let b = spec.noise_root();
    let steps = (t_final / dt - 1e-9).ceil().max(1.0) as usize;
    let h = t_final / steps as f64;
    let stride = options
        .output_dt
        .map_or(1, |o| ((o / h).round() as usize).max(1));
    let noise = (2.0 * epsilon).sqrt();

    let mut traj = HybridTrajectory::new(m, d, epsilon, seed);
    for (osc, x) in x0.iter().enumerate() {
        traj.paths[osc].extend_from_slice(x);
    }
    traj.sample_times.push(0.0);
    let mut increments = options
        .record_increments
        .then(|| Vec::with_capacity(steps * k));

    let mut rng = rng_from_seed(seed);
    let mut dw = vec![0.0; k];
    let mut xi = vec![0.0; k];
    let mut fields = vec![vec![0.0; d]; k];
    let mut drift0 = vec![0.0; d];
    let mut diff0 = vec![0.0; d];
    let mut drift1 = vec![0.0; d];
    let mut diff1 = vec![0.0; d];
    let mut pred = vec![0.0; d];
    let mut xs: Vec<Vec<f64>> = x0.to_vec();

    // drift F̄(x) and noise term Σ_m G_m(x) ξ_m
    let mut coefficients = |x: &[f64], xi: &[f64], drift: &mut [f64], diff: &mut [f64]| {
        for (n, f) in fields.iter_mut().enumerate() {
            model.field(n, x, f);
        }
        drift.fill(0.0);
        for (n, f) in fields.iter().enumerate() {
            for i in 0..d {
                drift[i] += rho[n] * f[i];
            }
        }
        diff.fill(0.0);
        for (n, f) in fields.iter().enumerate() {
            for i in 0..d {
                diff[i] += xi[n] * (f[i] - drift[i]);
            }
        }
    };

    for step in 1..=steps {
        if epsilon > 0.0 {
            let sd = h.sqrt();
            for w in dw.iter_mut() {
                *w = sd * rng.sample::<f64, _>(StandardNormal);
            }
        }
        if let Some(log) = increments.as_mut() {
            log.extend_from_slice(&dw);
        }
        for (r, x) in xi.iter_mut().enumerate() {
            *x = noise * (0..k).map(|c| b[(r, c)] * dw[c]).sum::<f64>();
        }
        let t = step as f64 * h;
        for x in xs.iter_mut() {
            coefficients(x, &xi, &mut drift0, &mut diff0);
            for i in 0..d {
                pred[i] = x[i] + drift0[i] * h + diff0[i];
            }
            coefficients(&pred, &xi, &mut drift1, &mut diff1);
            for i in 0..d {
                x[i] += 0.5 * (drift0[i] + drift1[i]) * h + 0.5 * (diff0[i] + diff1[i]);
            }
            check_point(model, x, t)?;
        }
        if step % stride == 0 || step == steps {
            traj.sample_times.push(t);
            for (osc, x) in xs.iter().enumerate() {
                traj.paths[osc].extend_from_slice(x);
            }
            if let Some(stop) = stop.as_deref_mut() {
                if stop(&traj) {
                    traj.t_end = t;
                    return Ok(SdeTrajectory {
                        trajectory: traj,
                        increments,
                    });
                }
            }
        }
    }
    traj.t_end = t_final;
    Ok(SdeTrajectory {
        trajectory: traj,
        increments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{reference_chain, ric_drive_variant, RicDriveParams};
    use std::f64::consts::TAU;

    #[test]
    fn zero_noise_stays_on_cycle() {
        let spec = reference_chain();
        let model = ric_drive_variant(&RicDriveParams::reference(), &spec).unwrap();
        let run = simulate_qss_sde(&model, &spec, &[vec![1.0, 0.0]], 0.0, TAU, 1e-3, 0).unwrap();
        let p = run.trajectory.last_point(0);
        assert!((p[0].hypot(p[1]) - 1.0).abs() < 1e-6);
        // ω = η − αμ = 1, one full turn
        assert!((p[0] - 1.0).abs() < 1e-5 && p[1].abs() < 1e-5);
    }

    #[test]
    fn common_noise_is_shared() {
        let spec = reference_chain();
        let model = ric_drive_variant(&RicDriveParams::reference(), &spec).unwrap();
        let opts = SdeOptions {
            output_dt: Some(0.1),
            record_increments: true,
        };
        let run = |x0: Vec<Vec<f64>>| {
            simulate_qss_sde_with(&model, &spec, &x0, 0.01, 2.0, 1e-3, 17, &opts, None).unwrap()
        };
        let a = run(vec![vec![1.0, 0.0]]);
        let b = run(vec![vec![0.0, 1.1]]);
        let both = run(vec![vec![1.0, 0.0], vec![0.0, 1.1]]);
        assert_eq!(a.increments, b.increments);
        assert_eq!(a.increments, both.increments);
        assert_eq!(both.trajectory.paths[0], a.trajectory.paths[0]);
        assert_eq!(both.trajectory.paths[1], b.trajectory.paths[0]);
        assert_eq!(a.trajectory.num_samples(), 21);
    }

    #[test]
    fn rejects_coarse_step() {
        let spec = reference_chain();
        let model = ric_drive_variant(&RicDriveParams::reference(), &spec).unwrap();
        let err =
            simulate_qss_sde(&model, &spec, &[vec![1.0, 0.0]], 0.01, 1.0, 0.02, 0).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }
}
