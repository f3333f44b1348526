//! Limit cycles of the averaged system, their phase response curves, and
//! pointwise asymptotic (isochronal) phase.

use std::f64::consts::{PI, TAU};
use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::ode::{hermite, jacobian_or_fd, Rk4, VectorField};
use crate::spectral::{theta_grid, wrap_phase};

/// Default number of phase nodes on a cycle.
pub const DEFAULT_GRID: usize = 1024;

/// Adjoint solutions are iterated until successive periods agree to this.
pub const ADJOINT_TOL: f64 = 1e-8;

const MAX_ADJOINT_PERIODS: usize = 1000;
const NORMALIZATION_DRIFT_LIMIT: f64 = 1e-4;
const MAX_STROBE_PERIODS: usize = 200;

/// Hyperplane `{x : n·(x − p) = 0}` used to detect returns.
#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub point: Vec<f64>,
    /// Defaults to F̄(point).
    pub normal: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleOptions {
    /// RK4 step for the transient and the return map.
    pub step: f64,
    /// Time integrated before the section is placed.
    pub settle_time: f64,
    /// Maximum number of section returns.
    pub max_periods: usize,
    /// Maximum integration time after settling.
    pub max_time: f64,
    /// Section through the settle point, normal to the flow, if `None`.
    pub section: Option<Section>,
    /// Relative step of finite-difference Jacobians.
    pub fd_step: f64,
}

impl Default for CycleOptions {
    fn default() -> Self {
        Self {
            step: 1e-3,
            settle_time: 50.0,
            max_periods: 500,
            max_time: 1e4,
            section: None,
            fd_step: 1e-6,
        }
    }
}

/// A periodic orbit sampled on a uniform phase grid, θ = ω̄t.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitCycle {
    pub period: f64,
    /// ω̄ = 2π/Δ̄, positive by construction.
    pub frequency: f64,
    pub theta_grid: Vec<f64>,
    /// Φ(θ_k).
    pub phi: Vec<Vec<f64>>,
    /// Φ'(θ_k) = F̄(Φ(θ_k))/ω̄.
    pub phi_prime: Vec<Vec<f64>>,
    /// Row-major Jacobian of F̄ at Φ(θ_k).
    pub jac: Vec<Vec<f64>>,
    /// Row-major Jacobian of F̄ at Φ(θ_k + π/N).
    pub jac_mid: Vec<Vec<f64>>,
    /// ‖Φ(2π) − Φ(0)‖ after integrating one full period from the anchor.
    pub closure_error: f64,
}

impl LimitCycle {
    pub fn num_nodes(&self) -> usize {
        self.theta_grid.len()
    }

    pub fn dimension(&self) -> usize {
        self.phi[0].len()
    }

    /// Φ(θ) by cubic Hermite interpolation between nodes.
    pub fn phi_at(&self, theta: f64) -> Vec<f64> {
        let n = self.num_nodes();
        let h = TAU / n as f64;
        let u = wrap_phase(theta) / h;
        let i = (u.floor() as usize).min(n - 1);
        let j = (i + 1) % n;
        let mut out = vec![0.0; self.dimension()];
        hermite(
            &self.phi[i],
            &self.phi_prime[i],
            &self.phi[j],
            &self.phi_prime[j],
            h,
            u - i as f64,
            &mut out,
        );
        out
    }

    /// Largest |ω̄ Φ'(θ_k) − F̄(Φ(θ_k))| with Φ' from spectral differentiation of Φ.
    pub fn invariance_residual<V: VectorField + ?Sized>(&self, field: &V) -> f64 {
        let d = self.dimension();
        let mut worst: f64 = 0.0;
        let mut f = vec![0.0; d];
        let derivs: Vec<Vec<f64>> = (0..d)
            .map(|a| {
                let column: Vec<f64> = self.phi.iter().map(|p| p[a]).collect();
                crate::spectral::spectral_derivative(&column)
            })
            .collect();
        for (k, p) in self.phi.iter().enumerate() {
            field.eval(p, &mut f);
            for a in 0..d {
                worst = worst.max((self.frequency * derivs[a][k] - f[a]).abs());
            }
        }
        worst
    }
}

/// Phase response curve on the cycle grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Prc {
    pub theta_grid: Vec<f64>,
    /// R(θ_k).
    pub r: Vec<Vec<f64>>,
    /// Change of R(0) over each backward period; the last is below the tolerance.
    pub period_residuals: Vec<f64>,
    /// max_k |R(θ_k)·Φ'(θ_k) − 1|.
    pub normalization_drift: f64,
}

impl Prc {
    /// Largest |ω̄ R'(θ_k) + J̄(θ_k)ᵀ R(θ_k)| with R' from spectral differentiation.
    pub fn adjoint_residual(&self, lc: &LimitCycle) -> f64 {
        let d = lc.dimension();
        let derivs: Vec<Vec<f64>> = (0..d)
            .map(|a| {
                let column: Vec<f64> = self.r.iter().map(|r| r[a]).collect();
                crate::spectral::spectral_derivative(&column)
            })
            .collect();
        let mut worst: f64 = 0.0;
        for k in 0..lc.num_nodes() {
            for a in 0..d {
                let jt_r: f64 = (0..d).map(|b| lc.jac[k][b * d + a] * self.r[k][b]).sum();
                worst = worst.max((lc.frequency * derivs[a][k] + jt_r).abs());
            }
        }
        worst
    }
}

/// Locates the attracting cycle reached from `x_guess`.
pub fn find_limit_cycle<V: VectorField + ?Sized>(
    field: &V,
    x_guess: &[f64],
    grid_size: usize,
    tol: f64,
) -> Result<LimitCycle> {
    find_limit_cycle_with(field, x_guess, grid_size, tol, &CycleOptions::default())
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Flow<'a, V: ?Sized> {
    field: &'a V,
    rk: Rk4,
    k1: Vec<f64>,
}

impl<'a, V: VectorField + ?Sized> Flow<'a, V> {
    fn new(field: &'a V) -> Self {
        let d = field.dimension();
        Self {
            field,
            rk: Rk4::new(d),
            k1: vec![0.0; d],
        }
    }

    fn step(&mut self, x: &mut [f64], h: f64) -> bool {
        self.field.eval(x, &mut self.k1);
        let field = self.field;
        self.rk
            .step_with_slope(|y, o| field.eval(y, o), x, &self.k1, h);
        x.iter().all(|v| v.is_finite())
    }

    fn advance(&mut self, x: &mut [f64], duration: f64, h: f64) -> bool {
        let n = (duration / h).ceil().max(1.0) as usize;
        let dt = duration / n as f64;
        (0..n).all(|_| self.step(x, dt))
    }
}

pub fn find_limit_cycle_with<V: VectorField + ?Sized>(
    field: &V,
    x_guess: &[f64],
    grid_size: usize,
    tol: f64,
    options: &CycleOptions,
) -> Result<LimitCycle> {
    let d = field.dimension();
    if x_guess.len() != d {
        return Err(Error::InvalidArgument(format!(
            "initial guess has dimension {}, field has {d}",
            x_guess.len()
        )));
    }
    if grid_size < 4 {
        return Err(Error::InvalidArgument(format!(
            "grid needs at least 4 nodes, got {grid_size}"
        )));
    }
    if !(tol > 0.0) || !(options.step > 0.0) {
        return Err(Error::InvalidArgument(
            "tolerance and step must be positive".into(),
        ));
    }
    let h = options.step;
    let mut flow = Flow::new(field);
    let mut x = x_guess.to_vec();
    if !flow.advance(&mut x, options.settle_time, h) {
        return Err(Error::NoCycle(
            "trajectory diverged during the transient".into(),
        ));
    }

    let mut f = vec![0.0; d];
    field.eval(&x, &mut f);
    if norm(&f) < tol {
        let mut jac = vec![0.0; d * d];
        jacobian_or_fd(field, &x, options.fd_step, &mut jac);
        let j = nalgebra::DMatrix::from_row_slice(d, d, &jac);
        let scale = j.amax().max(1e-300);
        // a singular Jacobian at the rest point means a continuum of rest points
        let min_sv = (j.transpose() * &j)
            .symmetric_eigen()
            .eigenvalues
            .min()
            .max(0.0)
            .sqrt();
        if min_sv < 1e-6 * scale {
            return Err(Error::NoCycle(format!(
                "flow stalls at {x:?} on a continuum of rest points (zero rotation frequency)"
            )));
        }
        return Err(Error::Equilibrium(x));
    }

    let (p, normal) = match &options.section {
        Some(s) => {
            if s.point.len() != d {
                return Err(Error::InvalidArgument(
                    "section point has wrong dimension".into(),
                ));
            }
            let n = match &s.normal {
                Some(n) => n.clone(),
                None => {
                    let mut n = vec![0.0; d];
                    field.eval(&s.point, &mut n);
                    n
                }
            };
            (s.point.clone(), n)
        }
        None => (x.clone(), f.clone()),
    };
    let scale = norm(&normal);
    if !(scale > 0.0) {
        return Err(Error::InvalidArgument("section normal vanishes".into()));
    }
    let normal: Vec<f64> = normal.iter().map(|v| v / scale).collect();
    let g = |y: &[f64]| -> f64 {
        normal
            .iter()
            .zip(y.iter().zip(&p))
            .map(|(n, (a, b))| n * (a - b))
            .sum()
    };

    let mut t = 0.0;
    let mut g_prev = g(&x);
    let mut x_prev = x.clone();
    let mut crossings: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut anchor = None;
    while t < options.max_time && crossings.len() < options.max_periods + 1 {
        x_prev.copy_from_slice(&x);
        if !flow.step(&mut x, h) {
            return Err(Error::NoCycle("trajectory diverged".into()));
        }
        let g_new = g(&x);
        if g_prev < 0.0 && g_new >= 0.0 {
            // bisection on the length of a single RK4 step from x_prev
            let (mut lo, mut hi) = (0.0, h);
            let mut y = x_prev.clone();
            while hi - lo > 1e-12 {
                let mid = 0.5 * (lo + hi);
                y.copy_from_slice(&x_prev);
                flow.step(&mut y, mid);
                if g(&y) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let s = 0.5 * (lo + hi);
            y.copy_from_slice(&x_prev);
            flow.step(&mut y, s);
            crossings.push((t + s, y));
            let k = crossings.len();
            if k >= 3 {
                let t0 = crossings[k - 3].0;
                let (t1, y1) = &crossings[k - 2];
                let (t2, y2) = &crossings[k - 1];
                let (d1, d2) = (t1 - t0, t2 - t1);
                let dist: f64 = y2
                    .iter()
                    .zip(y1)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if dist < tol && (d2 - d1).abs() < tol * d2 {
                    anchor = Some((d2, y2.clone()));
                    break;
                }
            }
        }
        g_prev = g_new;
        t += h;
    }
    let Some((period, y0)) = anchor else {
        let detail = if crossings.is_empty() {
            "trajectory never returned to the section".to_string()
        } else {
            format!("{} section returns without convergence", crossings.len())
        };
        return Err(Error::NoCycle(detail));
    };
    if !(period > 0.0) {
        return Err(Error::NoCycle("non-positive return time".into()));
    }

    let frequency = TAU / period;
    let n = grid_size;
    let half_steps = 2 * n;
    let dt_half = period / half_steps as f64;
    let sub = (dt_half / h).ceil().max(1.0) as usize;
    let dt = dt_half / sub as f64;
    let mut nodes = Vec::with_capacity(half_steps + 1);
    let mut y = y0.clone();
    nodes.push(y.clone());
    for _ in 0..half_steps {
        for _ in 0..sub {
            flow.step(&mut y, dt);
        }
        nodes.push(y.clone());
    }
    let closure_error = y
        .iter()
        .zip(&y0)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();

    let mut phi = Vec::with_capacity(n);
    let mut phi_prime = Vec::with_capacity(n);
    let mut jac = Vec::with_capacity(n);
    let mut jac_mid = Vec::with_capacity(n);
    for k in 0..n {
        let node = nodes[2 * k].clone();
        let mut fv = vec![0.0; d];
        field.eval(&node, &mut fv);
        phi_prime.push(fv.iter().map(|v| v / frequency).collect());
        let mut j = vec![0.0; d * d];
        jacobian_or_fd(field, &node, options.fd_step, &mut j);
        jac.push(j);
        let mut jm = vec![0.0; d * d];
        jacobian_or_fd(field, &nodes[2 * k + 1], options.fd_step, &mut jm);
        jac_mid.push(jm);
        phi.push(node);
    }

    Ok(LimitCycle {
        period,
        frequency,
        theta_grid: theta_grid(n),
        phi,
        phi_prime,
        jac,
        jac_mid,
        closure_error,
    })
}

/// Periodic solution of ω̄ R' = −J̄ᵀ R with R·Φ' = 1, by backward integration.
pub fn compute_prc(lc: &LimitCycle) -> Result<Prc> {
    let n = lc.num_nodes();
    let d = lc.dimension();
    let h = TAU / n as f64;
    let w = lc.frequency;
    if !(w > 0.0) {
        return Err(Error::NoCycle("cycle has zero frequency".into()));
    }

    // R' = −Jᵀ R / ω̄
    let rhs = |jac: &[f64], r: &[f64], out: &mut [f64]| {
        for a in 0..d {
            out[a] = -(0..d).map(|b| jac[b * d + a] * r[b]).sum::<f64>() / w;
        }
    };

    let f0 = &lc.phi_prime[0];
    let scale = dot(f0, f0);
    let mut r: Vec<f64> = f0.iter().map(|v| v / scale).collect();
    let mut samples = vec![vec![0.0; d]; n];
    let mut residuals = Vec::new();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (
        vec![0.0; d],
        vec![0.0; d],
        vec![0.0; d],
        vec![0.0; d],
        vec![0.0; d],
    );
    let mut converged = false;
    for _ in 0..MAX_ADJOINT_PERIODS {
        let start = r.clone();
        // from θ = 2π (node 0) down to θ_0 = 0 through θ_{N−1}, …, θ_1
        for k in (0..n).rev() {
            let upper = &lc.jac[(k + 1) % n];
            let mid = &lc.jac_mid[k];
            let lower = &lc.jac[k];
            rhs(upper, &r, &mut k1);
            for a in 0..d {
                tmp[a] = r[a] - 0.5 * h * k1[a];
            }
            rhs(mid, &tmp, &mut k2);
            for a in 0..d {
                tmp[a] = r[a] - 0.5 * h * k2[a];
            }
            rhs(mid, &tmp, &mut k3);
            for a in 0..d {
                tmp[a] = r[a] - h * k3[a];
            }
            rhs(lower, &tmp, &mut k4);
            for a in 0..d {
                r[a] -= h / 6.0 * (k1[a] + 2.0 * (k2[a] + k3[a]) + k4[a]);
            }
            samples[k].copy_from_slice(&r);
        }
        // the discrete monodromy multiplier is 1 − O(h⁴); rescale so R(0)·Φ'(0) = 1
        let norm = dot(&r, f0);
        for v in r.iter_mut() {
            *v /= norm;
        }
        let change = r
            .iter()
            .zip(&start)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        residuals.push(change);
        if change < ADJOINT_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::AdjointInconsistent(
            *residuals.last().unwrap_or(&f64::NAN),
        ));
    }

    let anchor = dot(&samples[0], &lc.phi_prime[0]);
    for s in samples.iter_mut() {
        for v in s.iter_mut() {
            *v /= anchor;
        }
    }
    let drift = samples
        .iter()
        .zip(&lc.phi_prime)
        .map(|(r, p)| (dot(r, p) - 1.0).abs())
        .fold(0.0, f64::max);
    if drift > NORMALIZATION_DRIFT_LIMIT {
        return Err(Error::AdjointInconsistent(drift));
    }
    Ok(Prc {
        theta_grid: lc.theta_grid.clone(),
        r: samples,
        period_residuals: residuals,
        normalization_drift: drift,
    })
}

/// Asymptotic phase of `x` on the grid's phase convention.
///
/// Uses the field's closed-form phase map when it has one, re-anchored so
/// that Θ(Φ(0)) = 0; otherwise strobes the flow (see
/// [`isochronal_phase_numeric`]).
pub fn isochronal_phase<V: VectorField + ?Sized>(
    lc: &LimitCycle,
    field: &V,
    x: &[f64],
    tol: f64,
) -> Result<f64> {
    if let (Some(theta), Some(origin), Some(next)) = (
        field.analytic_phase(x),
        field.analytic_phase(&lc.phi[0]),
        field.analytic_phase(&lc.phi[1]),
    ) {
        let orientation = if wrap_signed(next - origin) >= 0.0 {
            1.0
        } else {
            -1.0
        };
        return Ok(wrap_phase(orientation * (theta - origin)));
    }
    isochronal_phase_numeric(lc, field, x, tol)
}

fn wrap_signed(a: f64) -> f64 {
    let w = wrap_phase(a);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

/// Asymptotic phase by whole-period strobing and projection onto the cycle.
///
/// The flow map over one period fixes every isochron, so once the strobed
/// point is within `tol` of the cycle its projected phase is Θ(x). `tol`
/// must exceed the interpolation error of the grid, about (2π/N)⁴/384 ‖Φ⁗‖.
pub fn isochronal_phase_numeric<V: VectorField + ?Sized>(
    lc: &LimitCycle,
    field: &V,
    x: &[f64],
    tol: f64,
) -> Result<f64> {
    let d = lc.dimension();
    if x.len() != d {
        return Err(Error::InvalidArgument("point has wrong dimension".into()));
    }
    let mut flow = Flow::new(field);
    let mut y = x.to_vec();
    let step = (lc.period / (2 * lc.num_nodes()) as f64).min(1e-3);
    for _ in 0..=MAX_STROBE_PERIODS {
        let (theta, dist) = project(lc, field, &y);
        if dist < tol {
            return Ok(theta);
        }
        if !flow.advance(&mut y, lc.period, step) {
            break;
        }
    }
    Err(Error::PointNotInBasin(MAX_STROBE_PERIODS))
}

/// Orthogonal projection of `x` onto the interpolated cycle: (θ*, distance).
fn project<V: VectorField + ?Sized>(lc: &LimitCycle, field: &V, x: &[f64]) -> (f64, f64) {
    let dist2 = |p: &[f64]| p.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    let (k, _) =
        lc.phi
            .iter()
            .enumerate()
            .map(|(k, p)| (k, dist2(p)))
            .fold(
                (0, f64::INFINITY),
                |acc, c| if c.1 < acc.1 { c } else { acc },
            );
    let mut theta = lc.theta_grid[k];
    let mut tangent = vec![0.0; lc.dimension()];
    for _ in 0..50 {
        let p = lc.phi_at(theta);
        field.eval(&p, &mut tangent);
        for t in tangent.iter_mut() {
            *t /= lc.frequency;
        }
        let diff: Vec<f64> = p.iter().zip(x).map(|(a, b)| a - b).collect();
        let delta = -dot(&diff, &tangent) / dot(&tangent, &tangent);
        theta += delta;
        if delta.abs() < 1e-15 {
            break;
        }
    }
    let p = lc.phi_at(theta);
    (wrap_phase(theta), dist2(&p).sqrt())
}

/// CSV `theta,phi_0..,R_0..`.
pub fn write_prc_csv<W: Write>(lc: &LimitCycle, prc: &Prc, mut w: W) -> io::Result<()> {
    let d = lc.dimension();
    write!(w, "theta")?;
    for a in 0..d {
        write!(w, ",phi_{a}")?;
    }
    for a in 0..d {
        write!(w, ",R_{a}")?;
    }
    writeln!(w)?;
    for k in 0..lc.num_nodes() {
        write!(w, "{}", fmt_f64(lc.theta_grid[k]))?;
        for v in lc.phi[k].iter().chain(&prc.r[k]) {
            write!(w, ",{}", fmt_f64(*v))?;
        }
        writeln!(w)?;
    }
    Ok(())
}
