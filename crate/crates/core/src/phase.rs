//! Phase reduction on the averaged cycle and the synchronization exponents.

use serde::{Deserialize, Serialize};

use crate::cycle::{compute_prc, find_limit_cycle_with, CycleOptions, LimitCycle, Prc, Section};
use crate::dynamics::{
    check_states, replay_pdmp, simulate_pdmp_with, AveragedField, HybridModel, HybridTrajectory,
    SimOptions,
};
use crate::error::{Error, Result};
use crate::markov::{GeneratorSpec, JumpEvent};
use crate::spectral::{
    central_difference, periodic_hermite, periodic_mean, spectral_derivative, wrap_phase,
};

/// Phase differences below this are treated as having underflowed.
pub const UNDERFLOW: f64 = 1e-14;

/// How ℱ'_n is obtained from grid samples of ℱ_n.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Derivative {
    /// FFT differentiation, for smooth models.
    #[default]
    Spectral,
    /// Second-order central differences, for non-smooth models.
    CentralDifference,
}

/// ℱ_n(θ) = R(θ)·G_n(Φ(θ)) and its θ-derivative on the cycle grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseCoupling {
    pub theta_grid: Vec<f64>,
    /// ω̄.
    pub omega: f64,
    /// `coupling[n][k]` = ℱ_n(θ_k).
    pub coupling: Vec<Vec<f64>>,
    /// `coupling_prime[n][k]` = ℱ'_n(θ_k).
    pub coupling_prime: Vec<Vec<f64>>,
}

impl PhaseCoupling {
    pub fn num_states(&self) -> usize {
        self.coupling.len()
    }

    /// ℱ_n(θ) between nodes, by periodic cubic Hermite interpolation.
    #[inline]
    pub fn eval(&self, n: usize, theta: f64) -> f64 {
        periodic_hermite(&self.coupling[n], &self.coupling_prime[n], theta)
    }
}

pub fn phase_coupling<M: HybridModel + ?Sized>(
    model: &M,
    spec: &GeneratorSpec,
    lc: &LimitCycle,
    prc: &Prc,
) -> Result<PhaseCoupling> {
    phase_coupling_with(model, spec, lc, prc, Derivative::Spectral)
}

pub fn phase_coupling_with<M: HybridModel + ?Sized>(
    model: &M,
    spec: &GeneratorSpec,
    lc: &LimitCycle,
    prc: &Prc,
    derivative: Derivative,
) -> Result<PhaseCoupling> {
    check_states(model, spec)?;
    if prc.theta_grid != lc.theta_grid || prc.r.len() != lc.num_nodes() {
        return Err(Error::GridMismatch(format!(
            "cycle has {} nodes, PRC has {}",
            lc.num_nodes(),
            prc.r.len()
        )));
    }
    if model.dimension() != lc.dimension() {
        return Err(Error::GridMismatch(format!(
            "model dimension {} differs from cycle dimension {}",
            model.dimension(),
            lc.dimension()
        )));
    }
    let k = spec.num_states();
    let d = model.dimension();
    let rho = spec.stationary();
    let mut coupling = vec![Vec::with_capacity(lc.num_nodes()); k];
    let mut fields = vec![vec![0.0; d]; k];
    let mut mean = vec![0.0; d];
    for (p, r) in lc.phi.iter().zip(&prc.r) {
        mean.fill(0.0);
        for (n, f) in fields.iter_mut().enumerate() {
            model.field(n, p, f);
            for a in 0..d {
                mean[a] += rho[n] * f[a];
            }
        }
        for (n, f) in fields.iter().enumerate() {
            coupling[n].push((0..d).map(|a| r[a] * (f[a] - mean[a])).sum());
        }
    }
    let coupling_prime = coupling
        .iter()
        .map(|c| match derivative {
            Derivative::Spectral => spectral_derivative(c),
            Derivative::CentralDifference => central_difference(c),
        })
        .collect();
    Ok(PhaseCoupling {
        theta_grid: lc.theta_grid.clone(),
        omega: lc.frequency,
        coupling,
        coupling_prime,
    })
}

/// Averaged cycle and PRC of a model, anchored so θ = 0 at the model's cycle hint.
pub fn averaged_cycle<M: HybridModel + ?Sized>(
    model: &M,
    spec: &GeneratorSpec,
    grid_size: usize,
    tol: f64,
) -> Result<(LimitCycle, Prc)> {
    let hint = model
        .cycle_hint()
        .ok_or_else(|| Error::InvalidArgument("model provides no point near its cycle".into()))?;
    let options = CycleOptions {
        section: Some(Section {
            point: hint.clone(),
            normal: None,
        }),
        ..CycleOptions::default()
    };
    averaged_cycle_with(model, spec, &hint, grid_size, tol, &options)
}

pub fn averaged_cycle_with<M: HybridModel + ?Sized>(
    model: &M,
    spec: &GeneratorSpec,
    x_guess: &[f64],
    grid_size: usize,
    tol: f64,
    options: &CycleOptions,
) -> Result<(LimitCycle, Prc)> {
    check_states(model, spec)?;
    let field = AveragedField::new(model, spec);
    let lc = find_limit_cycle_with(&field, x_guess, grid_size, tol, options)?;
    let prc = compute_prc(&lc)?;
    Ok((lc, prc))
}

/// λ_QSS = ε ⟨ℱ'ᵀ Ã ℱ'⟩_θ by the trapezoid rule.
pub fn lyapunov_qss(pc: &PhaseCoupling, spec: &GeneratorSpec, epsilon: f64) -> Result<f64> {
    let a = spec.diffusion();
    let k = pc.num_states();
    let n = pc.theta_grid.len();
    let integrand: Vec<f64> = (0..n)
        .map(|j| {
            let mut q = 0.0;
            for m in 0..k {
                for l in 0..k {
                    q += pc.coupling_prime[m][j] * a[(m, l)] * pc.coupling_prime[l][j];
                }
            }
            q
        })
        .collect();
    let value = epsilon * periodic_mean(&integrand);
    if value > 1e-12 {
        return Err(Error::QssPositive(value));
    }
    Ok(value)
}

/// λ = −ε ⟨Σ_n ρ_n ℱ'_n² / λ_n⟩_θ by the trapezoid rule.
pub fn lyapunov_exact(pc: &PhaseCoupling, spec: &GeneratorSpec, epsilon: f64) -> f64 {
    let rho = spec.stationary();
    let exit = spec.exit_rates();
    let n = pc.theta_grid.len();
    let integrand: Vec<f64> = (0..n)
        .map(|j| {
            (0..pc.num_states())
                .filter(|&s| exit[s] > 0.0)
                .map(|s| rho[s] / exit[s] * pc.coupling_prime[s][j].powi(2))
                .sum()
        })
        .collect();
    -epsilon * periodic_mean(&integrand)
}

/// The closed phase PDMP θ̇ = ω̄ + ℱ_n(θ) as a one-dimensional hybrid model.
///
/// Phases are lifted (not wrapped), so differences never jump by 2π.
pub struct PhaseModel<'a> {
    pc: &'a PhaseCoupling,
}

impl<'a> PhaseModel<'a> {
    pub fn new(pc: &'a PhaseCoupling) -> Self {
        Self { pc }
    }
}

impl HybridModel for PhaseModel<'_> {
    fn dimension(&self) -> usize {
        1
    }

    fn num_states(&self) -> usize {
        self.pc.num_states()
    }

    #[inline]
    fn field(&self, n: usize, x: &[f64], out: &mut [f64]) {
        out[0] = self.pc.omega + self.pc.eval(n, x[0]);
    }

    fn analytic_phase(&self, x: &[f64]) -> Option<f64> {
        Some(wrap_phase(x[0]))
    }

    fn domain_bound(&self) -> f64 {
        f64::INFINITY
    }

    fn period_hint(&self) -> Option<f64> {
        Some(std::f64::consts::TAU / self.pc.omega)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_phase_pdmp(
    pc: &PhaseCoupling,
    spec: &GeneratorSpec,
    theta0: &[f64],
    n0: usize,
    epsilon: f64,
    t_final: f64,
    output_dt: f64,
    seed: u64,
) -> Result<HybridTrajectory> {
    simulate_phase_pdmp_with(
        pc,
        spec,
        theta0,
        n0,
        epsilon,
        t_final,
        output_dt,
        seed,
        &SimOptions::default(),
        None,
    )
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_phase_pdmp_with(
    pc: &PhaseCoupling,
    spec: &GeneratorSpec,
    theta0: &[f64],
    n0: usize,
    epsilon: f64,
    t_final: f64,
    output_dt: f64,
    seed: u64,
    options: &SimOptions,
    stop: Option<&mut dyn FnMut(&HybridTrajectory) -> bool>,
) -> Result<HybridTrajectory> {
    let x0: Vec<Vec<f64>> = theta0.iter().map(|&t| vec![t]).collect();
    let model = PhaseModel::new(pc);
    simulate_pdmp_with(
        &model, spec, &x0, n0, epsilon, t_final, output_dt, seed, options, stop,
    )
}

/// Drives the phase PDMP with a recorded jump log.
#[allow(clippy::too_many_arguments)]
pub fn replay_phase_pdmp(
    pc: &PhaseCoupling,
    events: &[JumpEvent],
    theta0: &[f64],
    n0: usize,
    epsilon: f64,
    t_final: f64,
    output_dt: f64,
    options: &SimOptions,
) -> Result<HybridTrajectory> {
    let x0: Vec<Vec<f64>> = theta0.iter().map(|&t| vec![t]).collect();
    replay_pdmp(
        &PhaseModel::new(pc),
        events,
        &x0,
        n0,
        epsilon,
        t_final,
        output_dt,
        options,
    )
}

/// θ₁ − θ₂ as a continuous lift: ±2π is added whenever consecutive raw
/// differences jump by more than π.
pub fn unwrap_difference(theta1: &[f64], theta2: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(theta1.len());
    let mut offset = 0.0;
    let mut previous: Option<f64> = None;
    for (a, b) in theta1.iter().zip(theta2) {
        let raw = a - b;
        if let Some(p) = previous {
            let mut lifted = raw + offset;
            while lifted - p > std::f64::consts::PI {
                offset -= std::f64::consts::TAU;
                lifted -= std::f64::consts::TAU;
            }
            while lifted - p < -std::f64::consts::PI {
                offset += std::f64::consts::TAU;
                lifted += std::f64::consts::TAU;
            }
        }
        let lifted = raw + offset;
        out.push(lifted);
        previous = Some(lifted);
    }
    out
}

/// Fit window as fractions of the usable ensemble horizon.
///
/// Each trial's horizon is its run length, cut short at the first sample
/// where the phase difference underflows. The ensemble uses the shortest of
/// these, so all trials are fitted over the same times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitWindow {
    pub start: f64,
    pub end: f64,
}

impl Default for FitWindow {
    fn default() -> Self {
        Self {
            start: 0.1,
            end: 0.9,
        }
    }
}

impl FitWindow {
    fn validate(&self) -> Result<()> {
        if !(0.0 <= self.start && self.start < self.end && self.end <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "fit window fractions must satisfy 0 <= start < end <= 1, got [{}, {}]",
                self.start, self.end
            )));
        }
        Ok(())
    }
}

/// Least-squares fit of log|Δθ| against t for one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFit {
    pub slope: f64,
    pub std_error: f64,
    pub window: [f64; 2],
    pub n_points: usize,
    /// The phase difference underflowed before the run ended.
    pub truncated: bool,
}

/// Time of the first underflowed sample, capped at `t_end`, and whether it came early.
pub fn usable_horizon(times: &[f64], delta: &[f64], t_end: f64) -> (f64, bool) {
    match times.iter().zip(delta).find(|(_, d)| d.abs() < UNDERFLOW) {
        Some((t, _)) if *t < t_end => (*t, true),
        _ => (t_end, false),
    }
}

/// Slope of log|Δθ(t)| over samples with `t0 <= t <= t1`, with its regression standard error.
pub fn fit_log_difference(times: &[f64], delta: &[f64], t0: f64, t1: f64) -> Result<TrialFit> {
    if times.len() != delta.len() {
        return Err(Error::InvalidArgument(
            "times and differences differ in length".into(),
        ));
    }
    if delta.first().is_some_and(|d| *d == 0.0) {
        return Err(Error::InvalidArgument(
            "initial phase difference is zero".into(),
        ));
    }
    let points: Vec<(f64, f64)> = times
        .iter()
        .zip(delta)
        .filter(|(t, d)| **t >= t0 && **t <= t1 && d.abs() >= UNDERFLOW)
        .map(|(t, d)| (*t, d.abs().ln()))
        .collect();
    let n = points.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "fit window [{t0}, {t1}] holds only {n} usable samples"
        )));
    }
    let mt = points.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let sxx: f64 = points.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mt;
    let ssr: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let std_error = (ssr / (n - 2) as f64 / sxx).sqrt();
    Ok(TrialFit {
        slope,
        std_error,
        window: [t0, t1],
        n_points: n,
        truncated: false,
    })
}

/// Phase pair time series of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePairs {
    pub times: Vec<f64>,
    pub theta1: Vec<f64>,
    pub theta2: Vec<f64>,
    /// Length of the run (the last time may be earlier if it was stopped at underflow).
    pub t_end: f64,
}

/// Ensemble estimate of the synchronization exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub n_trials: usize,
    pub fit_window: [f64; 2],
    pub truncated_trials: usize,
    pub trials: Vec<TrialFit>,
}

/// Per-trial least-squares slopes averaged over the ensemble.
///
/// The standard error is the sample standard deviation over √n for several
/// trials, and the regression standard error for one.
pub fn empirical_lyapunov(pairs: &[PhasePairs], window: FitWindow) -> Result<EmpiricalEstimate> {
    let deltas: Vec<Vec<f64>> = pairs
        .iter()
        .map(|p| unwrap_difference(&p.theta1, &p.theta2))
        .collect();
    let series: Vec<(&[f64], &[f64], f64)> = pairs
        .iter()
        .zip(&deltas)
        .map(|(p, d)| (p.times.as_slice(), d.as_slice(), p.t_end))
        .collect();
    fit_ensemble(&series, window)
}

/// [`empirical_lyapunov`] on already unwrapped `(times, Δθ, t_end)` series.
pub fn fit_ensemble(
    series: &[(&[f64], &[f64], f64)],
    window: FitWindow,
) -> Result<EmpiricalEstimate> {
    window.validate()?;
    if series.is_empty() {
        return Err(Error::InvalidArgument("no trials to combine".into()));
    }
    let horizons: Vec<(f64, bool)> = series
        .iter()
        .map(|(t, d, end)| usable_horizon(t, d, *end))
        .collect();
    let horizon = horizons.iter().map(|h| h.0).fold(f64::INFINITY, f64::min);
    let (t0, t1) = (window.start * horizon, window.end * horizon);
    let trials = series
        .iter()
        .zip(&horizons)
        .map(|((t, d, _), h)| {
            fit_log_difference(t, d, t0, t1).map(|mut f| {
                f.truncated = h.1;
                f
            })
        })
        .collect::<Result<Vec<_>>>()?;
    combine_fits(trials)
}

pub fn combine_fits(trials: Vec<TrialFit>) -> Result<EmpiricalEstimate> {
    let n = trials.len();
    if n == 0 {
        return Err(Error::InvalidArgument("no trials to combine".into()));
    }
    let estimate = trials.iter().map(|t| t.slope).sum::<f64>() / n as f64;
    let std_error = if n > 1 {
        let var = trials
            .iter()
            .map(|t| (t.slope - estimate).powi(2))
            .sum::<f64>()
            / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        trials[0].std_error
    };
    let fit_window = [
        trials
            .iter()
            .map(|t| t.window[0])
            .fold(f64::INFINITY, f64::min),
        trials
            .iter()
            .map(|t| t.window[1])
            .fold(f64::NEG_INFINITY, f64::max),
    ];
    Ok(EmpiricalEstimate {
        estimate,
        std_error,
        n_trials: n,
        fit_window,
        truncated_trials: trials.iter().filter(|t| t.truncated).count(),
        trials,
    })
}

/// Theoretical and measured exponents of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    pub epsilon: f64,
    pub lambda_exact: f64,
    pub lambda_qss: f64,
    pub lambda_empirical: Option<f64>,
    pub std_error: Option<f64>,
    pub n_trials: usize,
    pub fit_window: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncated_trials: Option<usize>,
}

impl LyapunovReport {
    pub fn theoretical(pc: &PhaseCoupling, spec: &GeneratorSpec, epsilon: f64) -> Result<Self> {
        Ok(Self {
            epsilon,
            lambda_exact: lyapunov_exact(pc, spec, epsilon),
            lambda_qss: lyapunov_qss(pc, spec, epsilon)?,
            lambda_empirical: None,
            std_error: None,
            n_trials: 0,
            fit_window: None,
            truncated_trials: None,
        })
    }

    pub fn with_empirical(mut self, e: &EmpiricalEstimate) -> Self {
        self.lambda_empirical = Some(e.estimate);
        self.std_error = Some(e.std_error);
        self.n_trials = e.n_trials;
        self.fit_window = Some(e.fit_window);
        self.truncated_trials = Some(e.truncated_trials);
        self
    }
}
