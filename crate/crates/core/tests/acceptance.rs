#![allow(clippy::needless_range_loop)]

//! End-to-end acceptance checks. Each check prints one PASS/FAIL line; the
//! process exits nonzero if any check fails.

use std::f64::consts::TAU;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use switchsync::cli::sync_experiment;
use switchsync::cycle::{
    compute_prc, find_limit_cycle_with, isochronal_phase_numeric, CycleOptions, Section,
};
use switchsync::dynamics::{
    fluctuation_field, simulate_pdmp, simulate_pdmp_with, HybridModel, SimOptions,
};
use switchsync::experiment::{EngineKind, ExperimentConfig, ModelKind};
use switchsync::markov::{sample_jump, series_identity_residual};
use switchsync::models::{
    drive_exponent_closed_form, reference_chain, ric_drive_variant, ric_parameter_switching,
    RicDriveModel, RicDriveParams, RicField, RicSwitchParams,
};
use switchsync::phase::{averaged_cycle, lyapunov_exact, lyapunov_qss, phase_coupling};
use switchsync::{build_generator, GeneratorSpec};

type Check = std::result::Result<String, String>;

fn verdict(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn drive() -> (RicDriveModel, GeneratorSpec) {
    let spec = reference_chain();
    let model = ric_drive_variant(&RicDriveParams::reference(), &spec).unwrap();
    (model, spec)
}

fn switch_params() -> RicSwitchParams {
    RicSwitchParams {
        mu: vec![1.2, 0.8, 1.1, 0.9],
        eta: vec![2.5, 1.5, 2.2, 1.8],
        alpha: 1.0,
    }
}

/// ℱ'_n(θ) of the drive variant in closed form.
fn drive_coupling_prime(v: [f64; 2], alpha: f64, theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    -(c - alpha * s) * v[0] + (-s - alpha * c) * v[1]
}

fn two_state_stationary() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let kp: f64 = rng.random_range(0.01..100.0);
        let km: f64 = rng.random_range(0.01..100.0);
        let w = nalgebra::DMatrix::from_row_slice(2, 2, &[0.0, kp, km, 0.0]);
        let spec = build_generator(&w).map_err(|e| e.to_string())?;
        worst = worst.max((spec.stationary()[0] - kp / (kp + km)).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst < 1e-12 && secs < 1.0,
        format!("max |rho0 - k+/(k+ + k-)| = {worst:.2e} over 100 chains, {secs:.3} s"),
    )
}

fn ric_cycle(field: &RicField, grid: usize) -> switchsync::cycle::LimitCycle {
    let options = CycleOptions {
        section: Some(Section {
            point: vec![field.mu.sqrt(), 0.0],
            normal: None,
        }),
        ..CycleOptions::default()
    };
    find_limit_cycle_with(field, &[field.mu.sqrt(), 0.0], grid, 1e-11, &options).unwrap()
}

fn prc_analytic() -> Check {
    let start = Instant::now();
    let field = RicField::new(1.0, 2.0, 1.0);
    let lc = ric_cycle(&field, 1024);
    let prc = compute_prc(&lc).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for (t, r) in lc.theta_grid.iter().zip(&prc.r) {
        let exact = field.prc(*t);
        worst = worst
            .max((r[0] - exact[0]).abs())
            .max((r[1] - exact[1]).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst < 1e-5 && secs < 5.0,
        format!("sup |R - R_exact| = {worst:.2e} at N = 1024, {secs:.3} s"),
    )
}

fn isochron_oracle() -> Check {
    let start = Instant::now();
    let field = RicField::new(1.0, 2.0, 1.0);
    let lc = ric_cycle(&field, 1024);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let r: f64 = rng.random_range(0.3..1.8);
        let phi: f64 = rng.random_range(0.0..TAU);
        let x = [r * phi.cos(), r * phi.sin()];
        let numeric = isochronal_phase_numeric(&lc, &field, &x, 1e-9).map_err(|e| e.to_string())?;
        let exact = field.isochron(&x);
        let d = (numeric - exact).rem_euclid(TAU);
        worst = worst.max(d.min(TAU - d));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst < 1e-4 && secs < 10.0,
        format!("max phase error {worst:.2e} over 100 points with r in [0.3, 1.8], {secs:.3} s"),
    )
}

fn exact_exponent_closed_form() -> Check {
    let (model, spec) = drive();
    let eps = 0.01;
    let (lc, prc) = averaged_cycle(&model, &spec, 1024, 1e-11).map_err(|e| e.to_string())?;
    let pc = phase_coupling(&model, &spec, &lc, &prc).map_err(|e| e.to_string())?;
    let computed = lyapunov_exact(&pc, &spec, eps);

    let nq = 1_000_000;
    let rho = spec.stationary();
    let exit = spec.exit_rates();
    let mut oracle = 0.0;
    for (n, v) in model.drive().iter().enumerate() {
        let mean_sq = (0..nq)
            .map(|j| drive_coupling_prime(*v, 1.0, TAU * j as f64 / nq as f64).powi(2))
            .sum::<f64>()
            / nq as f64;
        oracle += rho[n] / exit[n] * mean_sq;
    }
    oracle *= -eps;
    let closed = drive_exponent_closed_form(&model, &spec, eps);
    let rel_oracle = ((computed - oracle) / oracle).abs();
    let rel_closed = ((closed - oracle) / oracle).abs();
    verdict(
        rel_oracle < 1e-8 && rel_closed < 1e-8,
        format!(
            "lambda = {computed:.10e}, quadrature = {oracle:.10e} (rel {rel_oracle:.1e}), closed form rel {rel_closed:.1e}"
        ),
    )
}

fn config(model: ModelKind, engine: EngineKind) -> ExperimentConfig {
    ExperimentConfig {
        model,
        engine,
        ..ExperimentConfig::default()
    }
    .resolved()
    .unwrap()
}

fn null_case() -> Check {
    let spec = reference_chain();
    let model = ric_parameter_switching(&switch_params(), &spec).map_err(|e| e.to_string())?;
    let (lc, prc) = averaged_cycle(&model, &spec, 1024, 1e-11).map_err(|e| e.to_string())?;
    let pc = phase_coupling(&model, &spec, &lc, &prc).map_err(|e| e.to_string())?;
    let exact = lyapunov_exact(&pc, &spec, 0.01);
    let qss = lyapunov_qss(&pc, &spec, 0.01).map_err(|e| e.to_string())?;

    let (drive_model, _) = drive();
    let drive_lambda = drive_exponent_closed_form(&drive_model, &spec, 0.01);
    let (report, _, _) = sync_experiment(&config(ModelKind::RicSwitch, EngineKind::Pdmp))
        .map_err(|e| e.to_string())?;
    let empirical = report.lambda_empirical.unwrap();
    // zero up to roundoff in the numerically computed cycle and PRC
    let zero = exact.abs() < 1e-15 && qss.abs() < 1e-15;
    let small = empirical.abs() < 0.1 * drive_lambda.abs();
    verdict(
        zero && small,
        format!(
            "lambda = {exact:.1e}, lambda_QSS = {qss:.1e}; empirical = {empirical:.2e} +- {:.1e} vs 0.1|lambda_drive| = {:.2e} ({} trials)",
            report.std_error.unwrap(),
            0.1 * drive_lambda.abs(),
            report.n_trials
        ),
    )
}

fn pdmp_exponent() -> Check {
    let (report, outcome, _) = sync_experiment(&config(ModelKind::RicDrive, EngineKind::Pdmp))
        .map_err(|e| e.to_string())?;
    let emp = report.lambda_empirical.unwrap();
    let rel = (emp / report.lambda_exact - 1.0).abs();
    let closer = (emp - report.lambda_exact).abs() < (emp - report.lambda_qss).abs();
    verdict(
        rel < 0.2 && closer,
        format!(
            "empirical/eps = {:.3} +- {:.3}, lambda/eps = {:.3}, lambda_QSS/eps = {:.3}; |emp/lambda - 1| = {rel:.3}, closer to lambda: {closer}; window [{:.1}, {:.1}], {} of {} trials underflowed",
            emp / report.epsilon,
            report.std_error.unwrap() / report.epsilon,
            report.lambda_exact / report.epsilon,
            report.lambda_qss / report.epsilon,
            report.fit_window.unwrap()[0],
            report.fit_window.unwrap()[1],
            outcome.estimate.truncated_trials,
            report.n_trials
        ),
    )
}

fn jump_count_law() -> Check {
    let (model, spec) = drive();
    let period = model.period_hint().unwrap();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (i, eps) in [0.05, 0.02, 0.01].into_iter().enumerate() {
        let options = SimOptions {
            step: None,
            keep_events: false,
        };
        let traj = simulate_pdmp_with(
            &model,
            &spec,
            &[vec![1.0, 0.0]],
            0,
            eps,
            1000.0 * period,
            period,
            100 + i as u64,
            &options,
            None,
        )
        .map_err(|e| e.to_string())?;
        let measured = traj.jumps_per(period);
        let expected = spec.expected_jumps(period, eps);
        let rel = (measured / expected - 1.0).abs();
        worst = worst.max(rel);
        parts.push(format!("eps={eps}: {measured:.1} vs {expected:.1}"));
    }
    verdict(
        worst < 0.1,
        format!("{} (max rel {worst:.2e})", parts.join(", ")),
    )
}

fn series_identity() -> Check {
    let (model, spec) = drive();
    let mut worst60: f64 = 0.0;
    let mut monotone = true;
    let mut first_break = None;
    for j in 0..16 {
        let theta = TAU * j as f64 / 16.0;
        let f: Vec<f64> = model
            .drive()
            .iter()
            .map(|v| drive_coupling_prime(*v, 1.0, theta))
            .collect();
        let residuals = (10..=60)
            .map(|r| series_identity_residual(&spec, &f, r))
            .collect::<switchsync::Result<Vec<_>>>()
            .map_err(|e| e.to_string())?;
        worst60 = worst60.max(residuals[50]);
        if let Some(k) = residuals.windows(2).position(|w| w[1] >= w[0]) {
            monotone = false;
            first_break.get_or_insert((j, 10 + k + 1, residuals[k], residuals[k + 1]));
        }
    }
    let detail = match first_break {
        Some((j, r, a, b)) => format!(
            "max residual at R=60: {worst60:.2e}; not strictly decreasing (phase {j}: R={} -> {r}: {a:.3e} -> {b:.3e})",
            r - 1
        ),
        None => format!("max residual at R=60: {worst60:.2e}; strictly decreasing for all 16 phases"),
    };
    verdict(worst60 < 1e-6 && monotone, detail)
}

fn qss_exponent() -> Check {
    let (report, _, _) = sync_experiment(&config(ModelKind::RicDrive, EngineKind::Qss))
        .map_err(|e| e.to_string())?;
    let emp = report.lambda_empirical.unwrap();
    let rel = (emp / report.lambda_qss - 1.0).abs();
    verdict(
        rel < 0.25,
        format!(
            "empirical/eps = {:.3} +- {:.3}, lambda_QSS/eps = {:.3}; |emp/lambda_QSS - 1| = {rel:.3}",
            emp / report.epsilon,
            report.std_error.unwrap() / report.epsilon,
            report.lambda_qss / report.epsilon
        ),
    )
}

fn ks_exponential(samples: &mut [f64], rate: f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let cdf = 1.0 - (-rate * x).exp();
            (cdf - i as f64 / n)
                .abs()
                .max(((i + 1) as f64 / n - cdf).abs())
        })
        .fold(0.0, f64::max)
}

fn invariant_suites() -> Check {
    let (model, spec) = drive();
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(10);

    // mean-zero fluctuations
    let switching = ric_parameter_switching(&switch_params(), &spec).unwrap();
    let mut worst_mean: f64 = 0.0;
    for _ in 0..100 {
        let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        for m in [&model as &dyn HybridModel, &switching as &dyn HybridModel] {
            let g: Vec<Vec<f64>> = (0..4).map(|n| fluctuation_field(m, &spec, n, &x)).collect();
            for a in 0..2 {
                let s: f64 = (0..4).map(|n| spec.stationary()[n] * g[n][a]).sum();
                worst_mean = worst_mean.max(s.abs());
            }
        }
    }
    if worst_mean > 1e-12 {
        failures.push(format!("mean-zero fluctuations {worst_mean:.1e}"));
    }

    // Moore-Penrose axioms
    let a = spec.generator();
    let p = spec.pseudo_inverse();
    let axioms = [
        (a * p * a - a).amax(),
        (p * a * p - p).amax(),
        ((a * p).transpose() - a * p).amax(),
        ((p * a).transpose() - p * a).amax(),
    ];
    let worst_mp = axioms.iter().copied().fold(0.0, f64::max);
    if worst_mp > 1e-10 {
        failures.push(format!("Moore-Penrose axioms {worst_mp:.1e}"));
    }

    // B Bᵀ = −Ã
    let b = spec.noise_root();
    let worst_b = (b * b.transpose() + spec.diffusion()).amax();
    if worst_b > 1e-10 {
        failures.push(format!("B B^T + A~ = {worst_b:.1e}"));
    }

    // KS test of waiting times in state 0
    let eps = 0.01;
    let mut waits: Vec<f64> = (0..5000)
        .map(|_| {
            sample_jump(&spec, 0, 0.0, eps, &mut rng)
                .unwrap()
                .waiting_time
        })
        .collect();
    let ks = ks_exponential(&mut waits, spec.exit_rates()[0] / eps);
    let ks_crit = 1.63 / (5000f64).sqrt();
    if ks > ks_crit {
        failures.push(format!("KS statistic {ks:.3} > {ks_crit:.3}"));
    }

    // R·Φ' = 1
    let (lc, prc) = averaged_cycle(&model, &spec, 1024, 1e-11).unwrap();
    if prc.normalization_drift > 1e-6 {
        failures.push(format!(
            "normalization drift {:.1e}",
            prc.normalization_drift
        ));
    }

    // determinism under fixed seeds
    let run = || {
        simulate_pdmp(
            &model,
            &spec,
            &[vec![1.0, 0.0], vec![1.1, 0.0]],
            0,
            eps,
            20.0,
            0.1,
            77,
        )
        .unwrap()
    };
    let same = run() == run();
    if !same {
        failures.push("repeated seed gave different trajectories".into());
    }

    let detail = format!(
        "mean-zero {worst_mean:.1e}, MP axioms {worst_mp:.1e}, B B^T + A~ {worst_b:.1e}, KS {ks:.4} (crit {ks_crit:.4}), R.Phi' drift {:.1e}, deterministic {same}, cycle closure {:.1e}",
        prc.normalization_drift, lc.closure_error
    );
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; failed: {}", failures.join(", ")))
    }
}

fn main() {
    #[allow(clippy::type_complexity)]
    let checks: [(&str, fn() -> Check); 10] = [
        ("two-state stationary distribution", two_state_stationary),
        ("PRC matches the analytic RIC PRC", prc_analytic),
        ("numeric isochron matches log-spiral phase", isochron_oracle),
        (
            "exact exponent matches closed form",
            exact_exponent_closed_form,
        ),
        ("parameter switching gives zero exponent", null_case),
        ("PDMP pair exponent agrees with lambda", pdmp_exponent),
        ("jump-count law", jump_count_law),
        ("series identity residual", series_identity),
        ("QSS SDE exponent agrees with lambda_QSS", qss_exponent),
        ("invariant suites", invariant_suites),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS [{}] {name}: {detail} ({secs:.2} s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{}] {name}: {detail} ({secs:.2} s)", i + 1)
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        checks.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
