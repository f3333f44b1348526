use std::f64::consts::TAU;

use switchsync::dynamics::{
    averaged_field, simulate_pdmp, simulate_pdmp_with, simulate_qss_sde, AveragedField,
    HybridModel, SimOptions,
};
use switchsync::models::{
    dichotomous_additive, reference_chain, ric_drive_variant, ric_parameter_switching, FnModel,
    RicDriveParams, RicField, RicSwitchParams,
};
use switchsync::ode::integrate;
use switchsync::GeneratorSpec;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[test]
fn unswitched_ric_stays_on_unit_circle() {
    let spec = GeneratorSpec::from_rows(&[vec![0.0]]).unwrap();
    let params = RicSwitchParams {
        mu: vec![1.0],
        eta: vec![1.0],
        alpha: 0.0,
    };
    let model = ric_parameter_switching(&params, &spec).unwrap();
    let traj = simulate_pdmp(
        &model,
        &spec,
        &[vec![0.6, 0.8]],
        0,
        0.01,
        10.0 * TAU,
        0.1,
        0,
    )
    .unwrap();
    assert!(traj.events.is_empty());
    for s in 0..traj.num_samples() {
        let p = traj.point(0, s);
        assert!((p[0].hypot(p[1]) - 1.0).abs() < 1e-8);
    }
}

#[test]
fn dichotomous_jump_count_over_one_period() {
    let spec = GeneratorSpec::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    let model = dichotomous_additive(
        RicField::new(1.0, 2.0, 1.0),
        vec![0.3, 0.0],
        vec![-0.3, 0.0],
        &spec,
    )
    .unwrap();
    let eps = 0.01;
    let expected = spec.expected_jumps(TAU, eps);
    assert!((expected - TAU / eps).abs() < 1e-9);
    for seed in 0..5 {
        let traj = simulate_pdmp(&model, &spec, &[vec![1.0, 0.0]], 0, eps, TAU, 0.1, seed).unwrap();
        let rel = (traj.events.len() as f64 / expected - 1.0).abs();
        assert!(
            rel < 0.1,
            "seed {seed}: {} events vs {expected}",
            traj.events.len()
        );
    }
}

#[test]
fn event_count_law_over_many_periods() {
    let spec = reference_chain();
    let model = ric_drive_variant(&RicDriveParams::reference(), &spec).unwrap();
    let period = model.period_hint().unwrap();
    let options = SimOptions {
        step: None,
        keep_events: false,
    };
    for eps in [0.05, 0.02, 0.01] {
        let traj = simulate_pdmp_with(
            &model,
            &spec,
            &[vec![1.0, 0.0]],
            0,
            eps,
            1000.0 * period,
            period,
            11,
            &options,
            None,
        )
        .unwrap();
        let ratio = traj.jumps_per(period) / spec.expected_jumps(period, eps);
        assert!((0.9..=1.1).contains(&ratio), "eps {eps}: ratio {ratio}");
    }
}

fn mean_deviation_from_average(eps: f64) -> f64 {
    let spec = reference_chain();
    let model = ric_drive_variant(&RicDriveParams::reference(), &spec).unwrap();
    let field = AveragedField::new(&model, &spec);
    let x0 = vec![1.2, 0.0];
    let dt = 0.1;
    let t_final = TAU;
    let mut reference = vec![x0.clone()];
    let mut x = x0.clone();
    for _ in 0..(t_final / dt).round() as usize {
        integrate(&field, &mut x, dt, 1e-4);
        reference.push(x.clone());
    }
    let total: f64 = (0..100)
        .map(|seed| {
            let traj = simulate_pdmp(
                &model,
                &spec,
                std::slice::from_ref(&x0),
                0,
                eps,
                t_final,
                dt,
                seed,
            )
            .unwrap();
            (0..traj.num_samples())
                .map(|s| dist(traj.point(0, s), &reference[s]))
                .fold(0.0, f64::max)
        })
        .sum();
    total / 100.0
}

#[test]
fn paths_converge_to_averaged_flow() {
    let d1 = mean_deviation_from_average(0.04);
    let d2 = mean_deviation_from_average(0.01);
    let d3 = mean_deviation_from_average(0.0025);
    assert!(d1 > d2 && d2 > d3, "{d1} {d2} {d3}");
}

#[test]
fn halving_the_step_changes_paths_little() {
    let spec = reference_chain();
    let model = ric_drive_variant(&RicDriveParams::reference(), &spec).unwrap();
    let run = |h: f64| {
        let options = SimOptions {
            step: Some(h),
            keep_events: true,
        };
        simulate_pdmp_with(
            &model,
            &spec,
            &[vec![1.1, 0.2]],
            0,
            0.01,
            2.0 * TAU,
            0.05,
            4,
            &options,
            None,
        )
        .unwrap()
    };
    let a = run(0.0025);
    let b = run(0.00125);
    assert_eq!(a.events, b.events);
    let worst = (0..a.num_samples())
        .map(|s| dist(a.point(0, s), b.point(0, s)))
        .fold(0.0, f64::max);
    assert!(worst < 1e-8, "{worst}");
}

#[test]
fn fixed_seed_is_bit_reproducible() {
    let spec = reference_chain();
    let model = ric_drive_variant(&RicDriveParams::reference(), &spec).unwrap();
    let x0 = [vec![1.0, 0.0], vec![1.1, 0.1]];
    let a = simulate_pdmp(&model, &spec, &x0, 0, 0.02, 20.0, 0.1, 9).unwrap();
    let b = simulate_pdmp(&model, &spec, &x0, 0, 0.02, 20.0, 0.1, 9).unwrap();
    let c = simulate_pdmp(&model, &spec, &x0, 0, 0.02, 20.0, 0.1, 10).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.events, c.events);
    let q1 = simulate_qss_sde(&model, &spec, &x0, 0.02, 5.0, 0.002, 9).unwrap();
    let q2 = simulate_qss_sde(&model, &spec, &x0, 0.02, 5.0, 0.002, 9).unwrap();
    assert_eq!(q1, q2);
}

#[test]
fn zero_noise_sde_is_heun_on_averaged_field() {
    let spec = reference_chain();
    let model = ric_drive_variant(&RicDriveParams::reference(), &spec).unwrap();
    let dt = 0.01;
    let run = simulate_qss_sde(&model, &spec, &[vec![1.3, -0.2]], 0.0, 1.0, dt, 0).unwrap();
    let mut x = vec![1.3, -0.2];
    for s in 1..run.trajectory.num_samples() {
        let f0 = averaged_field(&model, &spec, &x);
        let pred: Vec<f64> = x.iter().zip(&f0).map(|(a, b)| a + dt * b).collect();
        let f1 = averaged_field(&model, &spec, &pred);
        for i in 0..2 {
            x[i] += 0.5 * dt * (f0[i] + f1[i]);
        }
        assert!(dist(&x, run.trajectory.point(0, s)) < 1e-13);
    }
}

#[test]
fn additive_noise_variance_matches_diffusion_form() {
    let spec = GeneratorSpec::from_rows(&[vec![0.0, 2.0], vec![1.0, 0.0]]).unwrap();
    let rho = spec.stationary().clone();
    // constant fields with ρ-mean c̄ = 0.5
    let c = [1.0, 0.5 - rho[0] * 0.5 / rho[1]];
    let model = FnModel::new(1, 2, 1e9, move |n, _x: &[f64], out: &mut [f64]| {
        out[0] = c[n]
    });
    let eps = 0.01;
    let t = 1.0;
    let mean = rho[0] * c[0] + rho[1] * c[1];
    let g = [c[0] - mean, c[1] - mean];
    let a = spec.diffusion();
    let q: f64 = (0..2)
        .map(|m| (0..2).map(|n| -g[m] * a[(m, n)] * g[n]).sum::<f64>())
        .sum();
    let expected = 2.0 * eps * t * q;
    let trials = 10_000;
    let samples: Vec<f64> = (0..trials)
        .map(|seed| {
            let run = simulate_qss_sde(&model, &spec, &[vec![0.0]], eps, t, 0.005, seed).unwrap();
            run.trajectory.last_point(0)[0] - mean * t
        })
        .collect();
    let m = samples.iter().sum::<f64>() / trials as f64;
    let var = samples.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (trials - 1) as f64;
    assert!((var / expected - 1.0).abs() < 0.1, "{var} vs {expected}");
}

#[test]
fn zero_drive_matches_plain_ric() {
    let spec = reference_chain();
    let params = RicDriveParams {
        v: vec![[0.0, 0.0]; 4],
        ..RicDriveParams::reference()
    };
    let model = ric_drive_variant(&params, &spec).unwrap();
    let traj = simulate_pdmp(&model, &spec, &[vec![1.4, 0.0]], 0, 0.01, 5.0, 0.5, 2).unwrap();
    let ric = RicField::new(1.0, 2.0, 1.0);
    let mut x = vec![1.4, 0.0];
    for s in 1..traj.num_samples() {
        integrate(&ric, &mut x, 0.5, 1e-4);
        assert!(dist(&x, traj.point(0, s)) < 1e-8);
    }
}
