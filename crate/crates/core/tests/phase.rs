use std::f64::consts::{PI, TAU};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use switchsync::cycle::{
    compute_prc, find_limit_cycle_with, isochronal_phase, CycleOptions, Section,
};
use switchsync::dynamics::{simulate_pdmp, AveragedField, HybridModel, SimOptions};
use switchsync::markov::ChainConfig;
use switchsync::models::{
    reference_chain, ric_drive_variant, ric_parameter_switching, RicDriveParams, RicSwitchParams,
};
use switchsync::phase::{
    averaged_cycle, averaged_cycle_with, lyapunov_exact, lyapunov_qss, phase_coupling,
    phase_coupling_with, replay_phase_pdmp, simulate_phase_pdmp, Derivative,
};
use switchsync::spectral::wrap_phase;

fn signed(a: f64) -> f64 {
    let w = wrap_phase(a);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

fn max_phase_gap(eps: f64, seed: u64) -> f64 {
    let spec = reference_chain();
    let model = ric_drive_variant(&RicDriveParams::reference(), &spec).unwrap();
    let (lc, prc) = averaged_cycle(&model, &spec, 1024, 1e-11).unwrap();
    let pc = phase_coupling(&model, &spec, &lc, &prc).unwrap();
    let field = AveragedField::new(&model, &spec);
    let t_final = 10.0 * lc.period;
    let traj = simulate_pdmp(
        &model,
        &spec,
        &[vec![1.0, 0.0]],
        0,
        eps,
        t_final,
        0.05,
        seed,
    )
    .unwrap();
    let phases = replay_phase_pdmp(
        &pc,
        &traj.events,
        &[0.0],
        0,
        eps,
        t_final,
        0.05,
        &SimOptions::default(),
    )
    .unwrap();
    (0..traj.num_samples())
        .map(|s| {
            let exact = isochronal_phase(&lc, &field, traj.point(0, s), 1e-10).unwrap();
            signed(exact - phases.point(0, s)[0]).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn phase_pdmp_tracks_exact_phase_to_order_epsilon() {
    let mean_gap = |eps: f64| (0..6).map(|s| max_phase_gap(eps, s)).sum::<f64>() / 6.0;
    let coarse = mean_gap(0.0025);
    let fine = mean_gap(0.000625);
    // drive vectors up to |v| ≈ 11 make the O(ε) constant large
    assert!(coarse < 100.0 * 0.0025, "gap {coarse} at eps = 0.0025");
    assert!(fine < 100.0 * 0.000625, "gap {fine} at eps = 0.000625");
    assert!(
        fine / 0.000625 < coarse / 0.0025,
        "gap/eps grew: {fine} vs {coarse}"
    );
}

#[test]
fn exponents_do_not_depend_on_phase_origin() {
    let spec = reference_chain();
    let model = ric_drive_variant(&RicDriveParams::reference(), &spec).unwrap();
    let (lc, prc) = averaged_cycle(&model, &spec, 1024, 1e-11).unwrap();
    let pc = phase_coupling(&model, &spec, &lc, &prc).unwrap();
    let rotated_point = vec![(1.3f64).cos(), (1.3f64).sin()];
    let options = CycleOptions {
        section: Some(Section {
            point: rotated_point.clone(),
            normal: None,
        }),
        ..CycleOptions::default()
    };
    let (lc2, prc2) =
        averaged_cycle_with(&model, &spec, &rotated_point, 1024, 1e-11, &options).unwrap();
    let pc2 = phase_coupling(&model, &spec, &lc2, &prc2).unwrap();
    assert!((lc2.phi[0][1] - 1.3f64.sin()).abs() < 1e-6);
    for eps in [0.01, 0.003] {
        let d_exact = lyapunov_exact(&pc, &spec, eps) - lyapunov_exact(&pc2, &spec, eps);
        let d_qss =
            lyapunov_qss(&pc, &spec, eps).unwrap() - lyapunov_qss(&pc2, &spec, eps).unwrap();
        assert!(
            d_exact.abs() < 1e-8 && d_qss.abs() < 1e-8,
            "{d_exact} {d_qss}"
        );
    }
}

#[test]
fn spectral_derivative_matches_fine_central_differences() {
    let spec = reference_chain();
    let model = ric_drive_variant(&RicDriveParams::reference(), &spec).unwrap();
    let (lc, prc) = averaged_cycle(&model, &spec, 4096, 1e-11).unwrap();
    let spectral = phase_coupling(&model, &spec, &lc, &prc).unwrap();
    let (lc4, prc4) = averaged_cycle(&model, &spec, 4 * 4096, 1e-11).unwrap();
    let central =
        phase_coupling_with(&model, &spec, &lc4, &prc4, Derivative::CentralDifference).unwrap();
    let mut worst: f64 = 0.0;
    for n in 0..4 {
        for k in 0..4096 {
            worst =
                worst.max((spectral.coupling_prime[n][k] - central.coupling_prime[n][4 * k]).abs());
        }
    }
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn drive_variant_pairs_synchronize() {
    let spec = reference_chain();
    let model = ric_drive_variant(&RicDriveParams::reference(), &spec).unwrap();
    let (lc, prc) = averaged_cycle(&model, &spec, 512, 1e-11).unwrap();
    let pc = phase_coupling(&model, &spec, &lc, &prc).unwrap();
    let t_final = 200.0 * lc.period;
    let mut finals: Vec<f64> = (0..9)
        .map(|seed| {
            let traj =
                simulate_phase_pdmp(&pc, &spec, &[0.0, 0.1], 0, 0.01, t_final, 1.0, seed).unwrap();
            (traj.last_point(0)[0] - traj.last_point(1)[0]).abs()
        })
        .collect();
    finals.sort_by(f64::total_cmp);
    assert!(finals[4] < 0.1, "median |dtheta(T)| = {}", finals[4]);
}

#[test]
fn parameter_switching_pairs_keep_their_difference() {
    let spec = reference_chain();
    let params = RicSwitchParams {
        mu: vec![1.2, 0.8, 1.1, 0.9],
        eta: vec![2.5, 1.5, 2.2, 1.8],
        alpha: 1.0,
    };
    let model = ric_parameter_switching(&params, &spec).unwrap();
    let (lc, prc) = averaged_cycle(&model, &spec, 512, 1e-11).unwrap();
    let pc = phase_coupling(&model, &spec, &lc, &prc).unwrap();
    let traj =
        simulate_phase_pdmp(&pc, &spec, &[0.0, 0.1], 0, 0.01, 20.0 * lc.period, 0.5, 3).unwrap();
    for s in 0..traj.num_samples() {
        let d = traj.point(0, s)[0] - traj.point(1, s)[0];
        assert!((d + 0.1).abs() < 1e-8, "{d}");
    }
}

#[test]
fn grid_refinement_changes_cycle_and_prc_little() {
    let spec = reference_chain();
    let model = ric_drive_variant(&RicDriveParams::reference(), &spec).unwrap();
    let (lc, prc) = averaged_cycle(&model, &spec, 512, 1e-11).unwrap();
    let (lc2, prc2) = averaged_cycle(&model, &spec, 1024, 1e-11).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..512 {
        for a in 0..2 {
            worst = worst
                .max((lc.phi[k][a] - lc2.phi[2 * k][a]).abs())
                .max((prc.r[k][a] - prc2.r[2 * k][a]).abs());
        }
    }
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn phase_advances_uniformly_off_cycle() {
    let spec = reference_chain();
    let model = ric_drive_variant(&RicDriveParams::reference(), &spec).unwrap();
    let (lc, _) = averaged_cycle(&model, &spec, 1024, 1e-11).unwrap();
    let field = AveragedField::new(&model, &spec);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let r: f64 = rng.random_range(0.5..1.6);
        let a: f64 = rng.random_range(0.0..TAU);
        let mut x = vec![r * a.cos(), r * a.sin()];
        let theta0 = switchsync::cycle::isochronal_phase_numeric(&lc, &field, &x, 1e-9).unwrap();
        let t = 1.7;
        switchsync::ode::integrate(&field, &mut x, t, 1e-4);
        let theta1 = switchsync::cycle::isochronal_phase_numeric(&lc, &field, &x, 1e-9).unwrap();
        assert!(signed(theta1 - theta0 - lc.frequency * t).abs() < 1e-4);
    }
}

fn random_chain(rates: &[f64], k: usize) -> ChainConfig {
    let mut w = vec![vec![0.0; k]; k];
    let mut it = rates.iter();
    for (n, row) in w.iter_mut().enumerate() {
        for (m, v) in row.iter_mut().enumerate() {
            if n != m {
                *v = *it.next().unwrap();
            }
        }
    }
    ChainConfig { w }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn exponents_nonpositive_and_linear(
        k in 2usize..5,
        rates in prop::collection::vec(0.2f64..5.0, 20),
        drive in prop::collection::vec(-3.0f64..3.0, 8),
        eps in 0.001f64..0.05,
    ) {
        let spec = random_chain(&rates, k).build().unwrap();
        let params = RicDriveParams {
            mu: 1.0,
            eta: 2.0,
            alpha: 0.5,
            v: (0..k).map(|n| [drive[2 * n], drive[2 * n + 1]]).collect(),
            shape: Default::default(),
            project: true,
        };
        let model = ric_drive_variant(&params, &spec).unwrap();
        prop_assert_eq!(model.num_states(), k);
        let (lc, prc) = averaged_cycle(&model, &spec, 256, 1e-10).unwrap();
        let pc = phase_coupling(&model, &spec, &lc, &prc).unwrap();
        let exact = lyapunov_exact(&pc, &spec, eps);
        let qss = lyapunov_qss(&pc, &spec, eps).unwrap();
        prop_assert!(exact <= 0.0 && qss <= 0.0);
        let exact2 = lyapunov_exact(&pc, &spec, 2.0 * eps);
        let qss2 = lyapunov_qss(&pc, &spec, 2.0 * eps).unwrap();
        prop_assert!((exact2 - 2.0 * exact).abs() <= 1e-14 * exact.abs().max(1e-300));
        prop_assert!((qss2 - 2.0 * qss).abs() <= 1e-14 * qss.abs().max(1e-300));
    }
}

#[test]
fn prc_of_rotated_section_is_a_shift() {
    let field = switchsync::models::RicField::new(1.0, 2.0, 1.0);
    let start = vec![0.0, 1.0];
    let options = CycleOptions {
        section: Some(Section {
            point: start.clone(),
            normal: None,
        }),
        ..CycleOptions::default()
    };
    let lc = find_limit_cycle_with(&field, &start, 256, 1e-11, &options).unwrap();
    let prc = compute_prc(&lc).unwrap();
    // θ = 0 now sits at polar angle π/2
    for (t, r) in lc.theta_grid.iter().zip(&prc.r) {
        let exact = field.prc(t + PI / 2.0);
        assert!((r[0] - exact[0]).abs() < 1e-6 && (r[1] - exact[1]).abs() < 1e-6);
    }
}
