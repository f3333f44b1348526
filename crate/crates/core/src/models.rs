//! Built-in hybrid models: radial isochron clocks with switching parameters or
//! a switching drive, the dichotomous additive model, and closure-backed
//! user models.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::dynamics::HybridModel;
use crate::error::{Error, Result};
use crate::markov::GeneratorSpec;
use crate::ode::VectorField;
use crate::spectral::wrap_phase;

/// Smallest admissible radius for models whose drive is singular at the origin.
pub const DEFAULT_MIN_RADIUS: f64 = 1e-3;

const DRIVE_BALANCE_TOL: f64 = 1e-9;

/// The 4-state switching environment of the drive example.
pub fn reference_chain() -> GeneratorSpec {
    GeneratorSpec::from_rows(&[
        vec![0.0, 2.0, 2.5, 0.1],
        vec![1.0, 0.0, 0.5, 4.0],
        vec![0.5, 0.7, 0.0, 2.0],
        vec![3.0, 0.4, 0.25, 0.0],
    ])
    .expect("built-in chain is valid")
}

/// Drive vectors paired with [`reference_chain`], before balancing.
pub fn reference_drive() -> Vec<[f64; 2]> {
    vec![[2.0, -1.0], [-4.0, -4.0], [-3.0, 2.0], [8.8, 7.2]]
}

/// Radial isochron clock
/// `ẋ = μx − ηy − r²(x − αy)`, `ẏ = μy + ηx − r²(y + αx)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RicField {
    pub mu: f64,
    pub eta: f64,
    pub alpha: f64,
}

impl RicField {
    pub fn new(mu: f64, eta: f64, alpha: f64) -> Self {
        Self { mu, eta, alpha }
    }

    /// Natural frequency ω = η − αμ.
    pub fn frequency(&self) -> f64 {
        self.eta - self.alpha * self.mu
    }

    pub fn radius(&self) -> f64 {
        self.mu.max(0.0).sqrt()
    }

    #[inline]
    fn value(&self, x: &[f64], out: &mut [f64]) {
        let (px, py) = (x[0], x[1]);
        let r2 = px * px + py * py;
        out[0] = self.mu * px - self.eta * py - r2 * (px - self.alpha * py);
        out[1] = self.mu * py + self.eta * px - r2 * (py + self.alpha * px);
    }

    #[inline]
    fn jac(&self, x: &[f64], out: &mut [f64]) {
        let (px, py, a) = (x[0], x[1], self.alpha);
        let r2 = px * px + py * py;
        let u = px - a * py;
        let w = py + a * px;
        out[0] = self.mu - r2 - 2.0 * px * u;
        out[1] = -self.eta + a * r2 - 2.0 * py * u;
        out[2] = self.eta - a * r2 - 2.0 * px * w;
        out[3] = self.mu - r2 - 2.0 * py * w;
    }

    /// Θ(x) = atan2(y, x) − (α/2) ln(r²/μ), zero at (√μ, 0).
    pub fn isochron(&self, x: &[f64]) -> f64 {
        let r2 = x[0] * x[0] + x[1] * x[1];
        wrap_phase(x[1].atan2(x[0]) - 0.5 * self.alpha * (r2 / self.mu).ln())
    }

    /// Phase response curve on the cycle.
    pub fn prc(&self, theta: f64) -> [f64; 2] {
        let (s, c) = theta.sin_cos();
        let k = 1.0 / self.mu.sqrt();
        [k * (-s - self.alpha * c), k * (c - self.alpha * s)]
    }
}

impl VectorField for RicField {
    fn dimension(&self) -> usize {
        2
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        self.value(x, out)
    }

    fn jacobian(&self, x: &[f64], out: &mut [f64]) -> bool {
        self.jac(x, out);
        true
    }

    fn analytic_phase(&self, x: &[f64]) -> Option<f64> {
        (self.mu > 0.0).then(|| self.isochron(x))
    }

    fn radius_hint(&self) -> Option<f64> {
        (self.mu > 0.0).then(|| self.mu.sqrt())
    }
}

/// Per-state amplitude and frequency, shared shear α.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RicSwitchParams {
    pub mu: Vec<f64>,
    pub eta: Vec<f64>,
    pub alpha: f64,
}

/// RIC whose (μ, η) switch with the environment.
#[derive(Debug, Clone)]
pub struct RicSwitchModel {
    states: Vec<RicField>,
    averaged: RicField,
}

impl RicSwitchModel {
    pub fn averaged(&self) -> RicField {
        self.averaged
    }

    pub fn state_field(&self, n: usize) -> RicField {
        self.states[n]
    }
}

pub fn ric_parameter_switching(
    params: &RicSwitchParams,
    spec: &GeneratorSpec,
) -> Result<RicSwitchModel> {
    let k = spec.num_states();
    if params.mu.len() != k || params.eta.len() != k {
        return Err(Error::InvalidArgument(format!(
            "mu and eta need one entry per state ({k}), got {} and {}",
            params.mu.len(),
            params.eta.len()
        )));
    }
    if params.mu.iter().chain(&params.eta).any(|v| !v.is_finite()) || !params.alpha.is_finite() {
        return Err(Error::InvalidArgument("parameters must be finite".into()));
    }
    let mu_bar = spec.weighted_mean(&params.mu);
    let eta_bar = spec.weighted_mean(&params.eta);
    if mu_bar <= 0.0 {
        return Err(Error::NoAveragedCycle(mu_bar));
    }
    Ok(RicSwitchModel {
        states: (0..k)
            .map(|n| RicField::new(params.mu[n], params.eta[n], params.alpha))
            .collect(),
        averaged: RicField::new(mu_bar, eta_bar, params.alpha),
    })
}

fn period_of(f: &RicField) -> Option<f64> {
    let w = f.frequency();
    (w != 0.0).then(|| TAU / w.abs())
}

impl HybridModel for RicSwitchModel {
    fn dimension(&self) -> usize {
        2
    }

    fn num_states(&self) -> usize {
        self.states.len()
    }

    fn field(&self, n: usize, x: &[f64], out: &mut [f64]) {
        self.states[n].value(x, out)
    }

    fn jacobian(&self, n: usize, x: &[f64], out: &mut [f64]) -> bool {
        self.states[n].jac(x, out);
        true
    }

    fn analytic_phase(&self, x: &[f64]) -> Option<f64> {
        Some(self.averaged.isochron(x))
    }

    fn domain_bound(&self) -> f64 {
        10.0 * self.averaged.radius()
    }

    fn period_hint(&self) -> Option<f64> {
        period_of(&self.averaged)
    }

    fn cycle_hint(&self) -> Option<Vec<f64>> {
        Some(vec![self.averaged.radius(), 0.0])
    }
}

/// How the switching drive enters the equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveShape {
    /// Constant push `(v¹, v²)`, matching the phase equation
    /// `θ̇ = ω − (sinθ + α cosθ) v¹ + (cosθ − α sinθ) v²`.
    #[default]
    Additive,
    /// Radially scaled push `(x/r · v¹, y/r · v²)`, singular at the origin.
    Radial,
}

/// Shared RIC parameters plus one drive vector per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RicDriveParams {
    pub mu: f64,
    pub eta: f64,
    pub alpha: f64,
    pub v: Vec<[f64; 2]>,
    #[serde(default)]
    pub shape: DriveShape,
    /// Subtract Σρ_k v_k from every v_k instead of rejecting unbalanced drives.
    #[serde(default)]
    pub project: bool,
}

impl RicDriveParams {
    /// μ = 1, η = 2, α = 1 with the reference drive, balanced against [`reference_chain`].
    pub fn reference() -> Self {
        Self {
            mu: 1.0,
            eta: 2.0,
            alpha: 1.0,
            v: reference_drive(),
            shape: DriveShape::Additive,
            project: true,
        }
    }
}

/// RIC pushed by a state-dependent drive whose stationary mean vanishes.
#[derive(Debug, Clone)]
pub struct RicDriveModel {
    base: RicField,
    v: Vec<[f64; 2]>,
    shape: DriveShape,
    min_radius: f64,
}

impl RicDriveModel {
    pub fn base(&self) -> RicField {
        self.base
    }

    /// Drive vectors actually used (after balancing, if requested).
    pub fn drive(&self) -> &[[f64; 2]] {
        &self.v
    }

    pub fn shape(&self) -> DriveShape {
        self.shape
    }

    pub fn with_min_radius(mut self, r_min: f64) -> Self {
        self.min_radius = r_min;
        self
    }
}

pub fn ric_drive_variant(params: &RicDriveParams, spec: &GeneratorSpec) -> Result<RicDriveModel> {
    let k = spec.num_states();
    if params.v.len() != k {
        return Err(Error::InvalidArgument(format!(
            "need one drive vector per state ({k}), got {}",
            params.v.len()
        )));
    }
    if !(params.mu.is_finite() && params.eta.is_finite() && params.alpha.is_finite())
        || params.v.iter().flatten().any(|c| !c.is_finite())
    {
        return Err(Error::InvalidArgument("parameters must be finite".into()));
    }
    if params.mu <= 0.0 {
        return Err(Error::NoAveragedCycle(params.mu));
    }
    let mean = [
        spec.weighted_mean(&params.v.iter().map(|v| v[0]).collect::<Vec<_>>()),
        spec.weighted_mean(&params.v.iter().map(|v| v[1]).collect::<Vec<_>>()),
    ];
    let imbalance = mean[0].hypot(mean[1]);
    let mut v = params.v.clone();
    if imbalance > DRIVE_BALANCE_TOL {
        if !params.project {
            return Err(Error::DriveNotNormalized(imbalance));
        }
        log::info!(
            "drive mean ({:e}, {:e}) subtracted from every drive vector",
            mean[0],
            mean[1]
        );
        for vk in v.iter_mut() {
            vk[0] -= mean[0];
            vk[1] -= mean[1];
        }
    }
    Ok(RicDriveModel {
        base: RicField::new(params.mu, params.eta, params.alpha),
        v,
        shape: params.shape,
        min_radius: DEFAULT_MIN_RADIUS,
    })
}

impl HybridModel for RicDriveModel {
    fn dimension(&self) -> usize {
        2
    }

    fn num_states(&self) -> usize {
        self.v.len()
    }

    #[inline]
    fn field(&self, n: usize, x: &[f64], out: &mut [f64]) {
        self.base.value(x, out);
        let v = self.v[n];
        match self.shape {
            DriveShape::Additive => {
                out[0] += v[0];
                out[1] += v[1];
            }
            DriveShape::Radial => {
                let r = x[0].hypot(x[1]);
                out[0] += x[0] / r * v[0];
                out[1] += x[1] / r * v[1];
            }
        }
    }

    fn jacobian(&self, n: usize, x: &[f64], out: &mut [f64]) -> bool {
        self.base.jac(x, out);
        if self.shape == DriveShape::Radial {
            let v = self.v[n];
            let r = x[0].hypot(x[1]);
            let r3 = r * r * r;
            out[0] += v[0] * x[1] * x[1] / r3;
            out[1] -= v[0] * x[0] * x[1] / r3;
            out[2] -= v[1] * x[0] * x[1] / r3;
            out[3] += v[1] * x[0] * x[0] / r3;
        }
        true
    }

    fn analytic_phase(&self, x: &[f64]) -> Option<f64> {
        Some(self.base.isochron(x))
    }

    fn domain_bound(&self) -> f64 {
        10.0 * self.base.radius()
    }

    fn min_radius(&self) -> Option<f64> {
        Some(self.min_radius)
    }

    fn period_hint(&self) -> Option<f64> {
        period_of(&self.base)
    }

    fn cycle_hint(&self) -> Option<Vec<f64>> {
        Some(vec![self.base.radius(), 0.0])
    }
}

/// Base system plus a two-valued additive input I(t) = I₀(1 − N) + I₁N.
#[derive(Debug, Clone)]
pub struct DichotomousModel<B> {
    base: B,
    inputs: [Vec<f64>; 2],
    balanced: bool,
    domain_bound: f64,
}

impl<B: VectorField> DichotomousModel<B> {
    pub fn base(&self) -> &B {
        &self.base
    }

    pub fn with_domain_bound(mut self, bound: f64) -> Self {
        self.domain_bound = bound;
        self
    }
}

pub fn dichotomous_additive<B: VectorField>(
    base: B,
    i0: Vec<f64>,
    i1: Vec<f64>,
    spec: &GeneratorSpec,
) -> Result<DichotomousModel<B>> {
    if spec.num_states() != 2 {
        return Err(Error::InvalidArgument(format!(
            "dichotomous input needs a two-state chain, got {} states",
            spec.num_states()
        )));
    }
    let d = base.dimension();
    if i0.len() != d || i1.len() != d {
        return Err(Error::InvalidArgument(format!(
            "inputs must have dimension {d}"
        )));
    }
    let rho = spec.stationary();
    let balanced = i0
        .iter()
        .zip(&i1)
        .all(|(a, b)| (rho[0] * a + rho[1] * b).abs() <= DRIVE_BALANCE_TOL);
    let domain_bound = base.radius_hint().map_or(1e3, |r| 10.0 * r);
    Ok(DichotomousModel {
        base,
        inputs: [i0, i1],
        balanced,
        domain_bound,
    })
}

impl<B: VectorField> HybridModel for DichotomousModel<B> {
    fn dimension(&self) -> usize {
        self.base.dimension()
    }

    fn num_states(&self) -> usize {
        2
    }

    fn field(&self, n: usize, x: &[f64], out: &mut [f64]) {
        self.base.eval(x, out);
        for (o, i) in out.iter_mut().zip(&self.inputs[n]) {
            *o += i;
        }
    }

    fn jacobian(&self, _n: usize, x: &[f64], out: &mut [f64]) -> bool {
        self.base.jacobian(x, out)
    }

    fn analytic_phase(&self, x: &[f64]) -> Option<f64> {
        if self.balanced {
            self.base.analytic_phase(x)
        } else {
            None
        }
    }

    fn domain_bound(&self) -> f64 {
        self.domain_bound
    }

    fn cycle_hint(&self) -> Option<Vec<f64>> {
        let r = self.base.radius_hint()?;
        let mut x = vec![0.0; self.base.dimension()];
        x[0] = r;
        Some(x)
    }
}

/// A hybrid model from a closure `(n, x, out)`.
pub struct FnModel<F> {
    dimension: usize,
    num_states: usize,
    domain_bound: f64,
    f: F,
    cycle_hint: Option<Vec<f64>>,
    period_hint: Option<f64>,
}

impl<F: Fn(usize, &[f64], &mut [f64]) + Sync> FnModel<F> {
    pub fn new(dimension: usize, num_states: usize, domain_bound: f64, f: F) -> Self {
        Self {
            dimension,
            num_states,
            domain_bound,
            f,
            cycle_hint: None,
            period_hint: None,
        }
    }

    pub fn with_cycle_hint(mut self, x: Vec<f64>) -> Self {
        self.cycle_hint = Some(x);
        self
    }

    pub fn with_period_hint(mut self, period: f64) -> Self {
        self.period_hint = Some(period);
        self
    }
}

impl<F: Fn(usize, &[f64], &mut [f64]) + Sync> HybridModel for FnModel<F> {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn num_states(&self) -> usize {
        self.num_states
    }

    fn field(&self, n: usize, x: &[f64], out: &mut [f64]) {
        (self.f)(n, x, out)
    }

    fn domain_bound(&self) -> f64 {
        self.domain_bound
    }

    fn period_hint(&self) -> Option<f64> {
        self.period_hint
    }

    fn cycle_hint(&self) -> Option<Vec<f64>> {
        self.cycle_hint.clone()
    }
}

/// λ for the additive drive, −ε (1+α²)/(2μ) Σ_n ρ_n/λ_n |v_n|².
pub fn drive_exponent_closed_form(
    model: &RicDriveModel,
    spec: &GeneratorSpec,
    epsilon: f64,
) -> f64 {
    let f = model.base();
    let sum: f64 = model
        .drive()
        .iter()
        .enumerate()
        .map(|(n, v)| spec.stationary()[n] / spec.exit_rates()[n] * (v[0] * v[0] + v[1] * v[1]))
        .sum();
    -epsilon * (1.0 + f.alpha * f.alpha) / (2.0 * f.mu) * sum
}

/// λ_QSS for the additive drive, ε (1+α²)/(2μ) (Q₁₁ + Q₂₂) with Q_ij = Σ Ã_mn v_m^i v_n^j.
pub fn drive_qss_closed_form(model: &RicDriveModel, spec: &GeneratorSpec, epsilon: f64) -> f64 {
    let f = model.base();
    let a = spec.diffusion();
    let v = model.drive();
    let k = v.len();
    let mut q = 0.0;
    for m in 0..k {
        for n in 0..k {
            q += a[(m, n)] * (v[m][0] * v[n][0] + v[m][1] * v[n][1]);
        }
    }
    epsilon * (1.0 + f.alpha * f.alpha) / (2.0 * f.mu) * q
}
