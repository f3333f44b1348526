//! Hybrid models and their trajectories: exact event-driven PDMP simulation
//! and the diffusion (QSS) surrogate.

mod pdmp;
mod sde;

use std::f64::consts::TAU;
use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::markov::{GeneratorSpec, JumpEvent};
use crate::ode::VectorField;

pub use pdmp::{replay_pdmp, simulate_pdmp, simulate_pdmp_with, SimOptions};
pub use sde::{simulate_qss_sde, simulate_qss_sde_with, SdeOptions, SdeTrajectory};

/// A family of smooth vector fields indexed by the discrete environment state.
pub trait HybridModel: Sync {
    fn dimension(&self) -> usize;

    fn num_states(&self) -> usize;

    /// F_n(x).
    fn field(&self, n: usize, x: &[f64], out: &mut [f64]);

    /// Row-major Jacobian of F_n; `false` if not available in closed form.
    fn jacobian(&self, _n: usize, _x: &[f64], _out: &mut [f64]) -> bool {
        false
    }

    /// Asymptotic phase of the averaged system, if known in closed form.
    fn analytic_phase(&self, _x: &[f64]) -> Option<f64> {
        None
    }

    /// Simulations abort once ‖x‖ exceeds this.
    fn domain_bound(&self) -> f64;

    /// Simulations abort once ‖x‖ drops below this (fields singular at the origin).
    fn min_radius(&self) -> Option<f64> {
        None
    }

    /// Rough period of the averaged cycle, used to size default steps.
    fn period_hint(&self) -> Option<f64> {
        None
    }

    /// A point in the basin of the averaged cycle.
    fn cycle_hint(&self) -> Option<Vec<f64>> {
        None
    }
}

pub(crate) fn check_states<M: HybridModel + ?Sized>(model: &M, spec: &GeneratorSpec) -> Result<()> {
    if model.num_states() != spec.num_states() {
        return Err(Error::InvalidArgument(format!(
            "model has {} discrete states, chain has {}",
            model.num_states(),
            spec.num_states()
        )));
    }
    Ok(())
}

/// F̄(x) = Σ_n ρ_n F_n(x).
pub fn averaged_field<M: HybridModel + ?Sized>(
    model: &M,
    spec: &GeneratorSpec,
    x: &[f64],
) -> Vec<f64> {
    AveragedField::new(model, spec).value(x)
}

/// G_n(x) = F_n(x) − F̄(x).
pub fn fluctuation_field<M: HybridModel + ?Sized>(
    model: &M,
    spec: &GeneratorSpec,
    n: usize,
    x: &[f64],
) -> Vec<f64> {
    let mut g = vec![0.0; model.dimension()];
    model.field(n, x, &mut g);
    let mean = averaged_field(model, spec, x);
    for (gi, mi) in g.iter_mut().zip(mean) {
        *gi -= mi;
    }
    g
}

/// The averaged field as a plain vector field.
pub struct AveragedField<'a, M: ?Sized> {
    model: &'a M,
    rho: Vec<f64>,
}

impl<'a, M: HybridModel + ?Sized> AveragedField<'a, M> {
    pub fn new(model: &'a M, spec: &GeneratorSpec) -> Self {
        Self {
            model,
            rho: spec.stationary().iter().copied().collect(),
        }
    }

    pub fn value(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.model.dimension()];
        self.eval(x, &mut out);
        out
    }

    pub fn model(&self) -> &M {
        self.model
    }
}

impl<M: HybridModel + ?Sized> VectorField for AveragedField<'_, M> {
    fn dimension(&self) -> usize {
        self.model.dimension()
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; out.len()];
        out.fill(0.0);
        for (n, &r) in self.rho.iter().enumerate() {
            self.model.field(n, x, &mut tmp);
            for (o, t) in out.iter_mut().zip(&tmp) {
                *o += r * t;
            }
        }
    }

    fn jacobian(&self, x: &[f64], out: &mut [f64]) -> bool {
        let mut tmp = vec![0.0; out.len()];
        out.fill(0.0);
        for (n, &r) in self.rho.iter().enumerate() {
            if !self.model.jacobian(n, x, &mut tmp) {
                return false;
            }
            for (o, t) in out.iter_mut().zip(&tmp) {
                *o += r * t;
            }
        }
        true
    }

    fn analytic_phase(&self, x: &[f64]) -> Option<f64> {
        self.model.analytic_phase(x)
    }
}

/// Sampled paths of M oscillators sharing one environment realization.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridTrajectory {
    /// Jump log, shared by every oscillator. Empty when events were not kept.
    pub events: Vec<JumpEvent>,
    /// Number of jumps in the run, kept even when `events` is not.
    pub n_events: usize,
    pub sample_times: Vec<f64>,
    /// Environment state on each sample; empty for the diffusion surrogate.
    pub states_at_samples: Vec<usize>,
    /// `paths[osc]` holds `sample_times.len() × dimension` coordinates.
    pub paths: Vec<Vec<f64>>,
    pub dimension: usize,
    pub epsilon: f64,
    pub seed: u64,
    /// Time actually reached (less than the requested end if stopped early).
    pub t_end: f64,
}

impl HybridTrajectory {
    pub(crate) fn new(m: usize, dimension: usize, epsilon: f64, seed: u64) -> Self {
        Self {
            events: Vec::new(),
            n_events: 0,
            sample_times: Vec::new(),
            states_at_samples: Vec::new(),
            paths: vec![Vec::new(); m],
            dimension,
            epsilon,
            seed,
            t_end: 0.0,
        }
    }

    pub fn num_oscillators(&self) -> usize {
        self.paths.len()
    }

    pub fn num_samples(&self) -> usize {
        self.sample_times.len()
    }

    /// Position of oscillator `osc` at sample `s`.
    pub fn point(&self, osc: usize, s: usize) -> &[f64] {
        let d = self.dimension;
        &self.paths[osc][s * d..(s + 1) * d]
    }

    pub fn last_point(&self, osc: usize) -> &[f64] {
        self.point(osc, self.num_samples() - 1)
    }

    /// Mean number of jumps per `period` of simulated time.
    pub fn jumps_per(&self, period: f64) -> f64 {
        self.n_events as f64 * period / self.t_end
    }

    /// CSV with header `t,n,osc,x0,...`, one row per oscillator per sample.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "t,n,osc")?;
        for i in 0..self.dimension {
            write!(w, ",x{i}")?;
        }
        writeln!(w)?;
        for (s, &t) in self.sample_times.iter().enumerate() {
            let state = self
                .states_at_samples
                .get(s)
                .map(|n| n.to_string())
                .unwrap_or_default();
            for osc in 0..self.num_oscillators() {
                write!(w, "{},{state},{osc}", fmt_f64(t))?;
                for x in self.point(osc, s) {
                    write!(w, ",{}", fmt_f64(*x))?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    /// CSV with header `t,from,to,dt`.
    pub fn write_events_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,from,to,dt")?;
        for e in &self.events {
            writeln!(
                w,
                "{},{},{},{}",
                fmt_f64(e.time),
                e.from_state,
                e.to_state,
                fmt_f64(e.waiting_time)
            )?;
        }
        Ok(())
    }
}

/// Predicted number of jumps over one period Δ̄: (Δ̄/ε) Σ ρ_n λ_n.
pub fn expected_jumps_per_period(spec: &GeneratorSpec, period: f64, epsilon: f64) -> f64 {
    spec.expected_jumps(period, epsilon)
}

pub(crate) fn default_step<M: HybridModel + ?Sized>(model: &M, epsilon: f64) -> f64 {
    let period = model.period_hint().unwrap_or(TAU);
    (epsilon / 4.0).min(period / 200.0)
}

pub(crate) fn check_point<M: HybridModel + ?Sized>(model: &M, x: &[f64], time: f64) -> Result<()> {
    let mut norm2 = 0.0;
    for v in x {
        if !v.is_finite() {
            return Err(Error::FieldBlowup { time });
        }
        norm2 += v * v;
    }
    let bound = model.domain_bound();
    if norm2 > bound * bound {
        return Err(Error::Escaped { time });
    }
    if let Some(r_min) = model.min_radius() {
        if norm2 < r_min * r_min {
            return Err(Error::OriginSingularity { time });
        }
    }
    Ok(())
}

pub(crate) fn sample_count(t_final: f64, output_dt: f64) -> usize {
    (t_final / output_dt + 1e-9).floor() as usize + 1
}
