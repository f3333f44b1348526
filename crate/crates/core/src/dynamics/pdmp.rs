use crate::error::{Error, Result};
use crate::markov::{sample_jump, GeneratorSpec, JumpEvent};
use crate::ode::{hermite, Rk4};
use crate::seeds::{rng_from_seed, SimRng};

use super::{check_point, check_states, default_step, sample_count, HybridModel, HybridTrajectory};

/// Knobs of the event-driven integrator.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    /// RK4 step between jumps; defaults to min(ε/4, Δ̄/200).
    pub step: Option<f64>,
    /// Keep the full jump log (the count is always kept).
    pub keep_events: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            step: None,
            keep_events: true,
        }
    }
}

#[allow(clippy::large_enum_variant)]
enum EventSource<'a> {
    Sample {
        spec: &'a GeneratorSpec,
        epsilon: f64,
        rng: SimRng,
    },
    Replay {
        events: &'a [JumpEvent],
        next: usize,
    },
}

impl EventSource<'_> {
    fn next(&mut self, state: usize, now: f64) -> Result<Option<JumpEvent>> {
        match self {
            EventSource::Sample { spec, epsilon, rng } => {
                Ok(sample_jump(spec, state, now, *epsilon, rng))
            }
            EventSource::Replay { events, next } => {
                let Some(e) = events.get(*next).copied() else {
                    return Ok(None);
                };
                *next += 1;
                if e.from_state != state || e.time < now {
                    return Err(Error::InvalidArgument(format!(
                        "replayed event {} (t = {}, {} -> {}) does not continue state {state} at t = {now}",
                        *next - 1,
                        e.time,
                        e.from_state,
                        e.to_state
                    )));
                }
                Ok(Some(e))
            }
        }
    }
}

/// Simulates M oscillators driven by one sampled environment path.
///
/// `seed` initializes the jump stream directly; use
/// [`crate::seeds::trial_seed`] to derive per-trial seeds.
#[allow(clippy::too_many_arguments)]
pub fn simulate_pdmp<M: HybridModel + ?Sized>(
    model: &M,
    spec: &GeneratorSpec,
    x0: &[Vec<f64>],
    n0: usize,
    epsilon: f64,
    t_final: f64,
    output_dt: f64,
    seed: u64,
) -> Result<HybridTrajectory> {
    simulate_pdmp_with(
        model,
        spec,
        x0,
        n0,
        epsilon,
        t_final,
        output_dt,
        seed,
        &SimOptions::default(),
        None,
    )
}

/// [`simulate_pdmp`] with options and an optional stop test, evaluated
/// after every batch of recorded samples.
#[allow(clippy::too_many_arguments)]
pub fn simulate_pdmp_with<M: HybridModel + ?Sized>(
    model: &M,
    spec: &GeneratorSpec,
    x0: &[Vec<f64>],
    n0: usize,
    epsilon: f64,
    t_final: f64,
    output_dt: f64,
    seed: u64,
    options: &SimOptions,
    stop: Option<&mut dyn FnMut(&HybridTrajectory) -> bool>,
) -> Result<HybridTrajectory> {
    check_states(model, spec)?;
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let source = EventSource::Sample {
        spec,
        epsilon,
        rng: rng_from_seed(seed),
    };
    run(
        model, x0, n0, epsilon, t_final, output_dt, seed, options, source, stop,
    )
}

/// Re-runs a recorded jump log on (possibly different) oscillators.
#[allow(clippy::too_many_arguments)]
pub fn replay_pdmp<M: HybridModel + ?Sized>(
    model: &M,
    events: &[JumpEvent],
    x0: &[Vec<f64>],
    n0: usize,
    epsilon: f64,
    t_final: f64,
    output_dt: f64,
    options: &SimOptions,
) -> Result<HybridTrajectory> {
    let source = EventSource::Replay { events, next: 0 };
    run(
        model, x0, n0, epsilon, t_final, output_dt, 0, options, source, None,
    )
}

#[allow(clippy::too_many_arguments)]
fn run<M: HybridModel + ?Sized>(
    model: &M,
    x0: &[Vec<f64>],
    n0: usize,
    epsilon: f64,
    t_final: f64,
    output_dt: f64,
    seed: u64,
    options: &SimOptions,
    mut source: EventSource<'_>,
    mut stop: Option<&mut dyn FnMut(&HybridTrajectory) -> bool>,
) -> Result<HybridTrajectory> {
    let d = model.dimension();
    let m = x0.len();
    if m == 0 {
        return Err(Error::InvalidArgument("no oscillators given".into()));
    }
    if n0 >= model.num_states() {
        return Err(Error::InvalidArgument(format!(
            "initial state {n0} out of range"
        )));
    }
    if !(t_final > 0.0) || !(output_dt > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "t_final and output_dt must be positive, got {t_final} and {output_dt}"
        )));
    }
    for (i, x) in x0.iter().enumerate() {
        if x.len() != d {
            return Err(Error::InvalidArgument(format!(
                "initial point {i} has dimension {}, model has {d}",
                x.len()
            )));
        }
        check_point(model, x, 0.0)
            .map_err(|e| Error::InvalidArgument(format!("initial point {i} rejected: {e}")))?;
    }
    let h = options.step.unwrap_or_else(|| default_step(model, epsilon));
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "step must be positive, got {h}"
        )));
    }

    let n_samples = sample_count(t_final, output_dt);
    let sample_at = |k: usize| k as f64 * output_dt;

    let mut traj = HybridTrajectory::new(m, d, epsilon, seed);
    traj.sample_times.reserve(n_samples);
    traj.states_at_samples.reserve(n_samples);
    for (osc, x) in x0.iter().enumerate() {
        traj.paths[osc].reserve(n_samples * d);
        traj.paths[osc].extend_from_slice(x);
    }
    traj.sample_times.push(0.0);
    traj.states_at_samples.push(n0);

    let mut xs: Vec<Vec<f64>> = x0.to_vec();
    let mut slopes = vec![vec![0.0; d]; m];
    let mut f1 = vec![0.0; d];
    let mut x_prev = vec![0.0; d];
    let mut interp = vec![0.0; d];
    let mut rk = Rk4::new(d);

    let mut next_sample = 1;
    let mut t = 0.0;
    let mut state = n0;
    let mut pending = source.next(state, t)?;

    'segments: loop {
        let seg_end = match pending {
            Some(e) if e.time < t_final => e.time,
            _ => t_final,
        };
        for (x, f0) in xs.iter().zip(slopes.iter_mut()) {
            model.field(state, x, f0);
        }
        let mut ta = t;
        while ta < seg_end {
            let mut tb = ta + h;
            if tb >= seg_end - 1e-12 * h {
                tb = seg_end;
            }
            let dt = tb - ta;
            let first = next_sample;
            let mut last = first;
            while last < n_samples && sample_at(last) <= tb {
                last += 1;
            }
            let more = tb < seg_end;
            for osc in 0..m {
                let x = &mut xs[osc];
                x_prev.copy_from_slice(x);
                rk.step_with_slope(|y, o| model.field(state, y, o), x, &slopes[osc], dt);
                check_point(model, x, tb)?;
                if last > first || more {
                    model.field(state, x, &mut f1);
                    for k in first..last {
                        let s = ((sample_at(k) - ta) / dt).clamp(0.0, 1.0);
                        hermite(&x_prev, &slopes[osc], x, &f1, dt, s, &mut interp);
                        traj.paths[osc].extend_from_slice(&interp);
                    }
                    slopes[osc].copy_from_slice(&f1);
                }
            }
            ta = tb;
            if last > first {
                for k in first..last {
                    traj.sample_times.push(sample_at(k));
                    traj.states_at_samples.push(state);
                }
                next_sample = last;
                if let Some(stop) = stop.as_deref_mut() {
                    if stop(&traj) {
                        traj.t_end = ta;
                        return Ok(traj);
                    }
                }
            }
        }
        t = seg_end;
        if t >= t_final {
            break 'segments;
        }
        let event = pending.expect("segment ended on a jump");
        state = event.to_state;
        traj.n_events += 1;
        if options.keep_events {
            traj.events.push(event);
        }
        pending = source.next(state, t)?;
    }

    // samples that round past t_final by a few ulps
    for k in next_sample..n_samples {
        traj.sample_times.push(sample_at(k));
        traj.states_at_samples.push(state);
        for osc in 0..m {
            traj.paths[osc].extend_from_slice(&xs[osc]);
        }
    }
    traj.t_end = t_final;
    Ok(traj)
}
