//! Experiment configuration and the two-oscillator synchronization ensemble.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cycle::{isochronal_phase, LimitCycle};
use crate::dynamics::{
    simulate_pdmp_with, simulate_qss_sde_with, AveragedField, HybridModel, HybridTrajectory,
    SdeOptions, SimOptions,
};
use crate::error::{Error, Result};
use crate::markov::{ChainConfig, GeneratorSpec};
use crate::models::{
    dichotomous_additive, reference_chain, reference_drive, ric_drive_variant,
    ric_parameter_switching, DichotomousModel, DriveShape, RicDriveModel, RicDriveParams, RicField,
    RicSwitchModel, RicSwitchParams,
};
use crate::phase::{
    fit_ensemble, simulate_phase_pdmp_with, EmpiricalEstimate, FitWindow, PhaseCoupling, TrialFit,
    UNDERFLOW,
};
use crate::seeds::trial_seed;

/// Built-in model families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    RicDrive,
    RicSwitch,
    Dichotomous,
}

/// A parameter given once for all states or per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Shared(f64),
    PerState(Vec<f64>),
}

impl Param {
    fn shared(&self, name: &str) -> Result<f64> {
        match self {
            Param::Shared(v) => Ok(*v),
            Param::PerState(_) => Err(Error::InvalidArgument(format!(
                "{name} must be a single number for this model"
            ))),
        }
    }

    fn per_state(&self, k: usize, name: &str) -> Result<Vec<f64>> {
        match self {
            Param::Shared(v) => Ok(vec![*v; k]),
            Param::PerState(v) if v.len() == k => Ok(v.clone()),
            Param::PerState(v) => Err(Error::InvalidArgument(format!(
                "{name} has {} entries but the chain has {k} states",
                v.len()
            ))),
        }
    }
}

/// Which dynamics drive the oscillator pairs in a synchronization run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    /// Full hybrid dynamics.
    #[default]
    Pdmp,
    /// Closed phase PDMP on the averaged cycle.
    Phase,
    /// Diffusion surrogate.
    Qss,
}

/// Everything a command needs. Unset options are filled by [`ExperimentConfig::resolved`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub mu: Option<Param>,
    pub eta: Option<Param>,
    pub alpha: Option<f64>,
    /// Drive vectors (`ric_drive`).
    pub v: Option<Vec<[f64; 2]>>,
    pub shape: Option<DriveShape>,
    pub project: Option<bool>,
    pub min_radius: Option<f64>,
    /// Inputs of the two states (`dichotomous`).
    pub i0: Option<Vec<f64>>,
    pub i1: Option<Vec<f64>>,
    pub chain: Option<ChainConfig>,

    pub epsilon: f64,
    /// Run length in averaged periods; ignored when `t_final` is set.
    pub periods: Option<f64>,
    pub t_final: Option<f64>,
    pub output_dt: f64,
    pub n_trials: usize,
    pub seed: u64,
    pub oscillators: usize,
    /// Oscillator i starts at radius r̄ + i·radius_offset and angle i·phase_offset.
    pub radius_offset: f64,
    pub phase_offset: f64,
    pub initial_state: usize,
    pub fit_window: [f64; 2],
    pub grid: usize,
    pub cycle_tol: f64,
    pub sde_dt: Option<f64>,
    pub engine: EngineKind,
    /// Keep every k-th sample in per-trial CSV output.
    pub csv_stride: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::RicDrive,
            mu: None,
            eta: None,
            alpha: None,
            v: None,
            shape: None,
            project: None,
            min_radius: None,
            i0: None,
            i1: None,
            chain: None,
            epsilon: 0.01,
            periods: None,
            t_final: None,
            output_dt: 0.05,
            n_trials: 50,
            seed: 0,
            oscillators: 2,
            radius_offset: 0.1,
            phase_offset: 0.1,
            initial_state: 0,
            fit_window: [0.1, 0.9],
            grid: crate::cycle::DEFAULT_GRID,
            cycle_tol: 1e-10,
            sde_dt: None,
            engine: EngineKind::Pdmp,
            csv_stride: 10,
        }
    }
}

impl ExperimentConfig {
    /// Parses JSON text, applying `key=value` overrides (dotted keys reach into objects).
    pub fn from_json_with_overrides(text: Option<&str>, overrides: &[String]) -> Result<Self> {
        let mut value: Value = match text {
            Some(t) => serde_json::from_str(t)
                .map_err(|e| Error::InvalidArgument(format!("config: {e}")))?,
            None => Value::Object(Default::default()),
        };
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        serde_json::from_value(value).map_err(|e| Error::InvalidArgument(format!("config: {e}")))
    }

    /// Fills every unset option with its model-specific default and validates.
    pub fn resolved(&self) -> Result<Self> {
        let mut c = self.clone();
        let defaults: (Param, Param, ChainConfig) = match c.model {
            ModelKind::RicDrive => (
                Param::Shared(1.0),
                Param::Shared(2.0),
                chain_of(&reference_chain()),
            ),
            ModelKind::RicSwitch => (
                Param::PerState(vec![1.2, 0.8, 1.1, 0.9]),
                Param::PerState(vec![2.5, 1.5, 2.2, 1.8]),
                chain_of(&reference_chain()),
            ),
            ModelKind::Dichotomous => (
                Param::Shared(1.0),
                Param::Shared(2.0),
                ChainConfig {
                    w: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
                },
            ),
        };
        c.mu.get_or_insert(defaults.0);
        c.eta.get_or_insert(defaults.1);
        c.alpha.get_or_insert(1.0);
        c.chain.get_or_insert(defaults.2);
        match c.model {
            ModelKind::RicDrive => {
                c.v.get_or_insert_with(reference_drive);
                c.shape.get_or_insert_with(DriveShape::default);
                c.project.get_or_insert(true);
                c.min_radius
                    .get_or_insert(crate::models::DEFAULT_MIN_RADIUS);
            }
            ModelKind::Dichotomous => {
                c.i0.get_or_insert_with(|| vec![0.5, 0.0]);
                c.i1.get_or_insert_with(|| vec![-0.5, 0.0]);
            }
            ModelKind::RicSwitch => {}
        }
        if c.t_final.is_none() {
            c.periods.get_or_insert(500.0);
        }
        if c.sde_dt.is_none() {
            c.sde_dt = Some(c.epsilon / 10.0);
        }
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.n_trials == 0 {
            return bad("n_trials must be at least 1".into());
        }
        if self.oscillators == 0 {
            return bad("oscillators must be at least 1".into());
        }
        if let Some(t) = self.t_final {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("t_final must be positive, got {t}"));
            }
        } else if let Some(p) = self.periods {
            if !(p > 0.0 && p.is_finite()) {
                return bad(format!("periods must be positive, got {p}"));
            }
        }
        if !(self.output_dt > 0.0 && self.output_dt.is_finite()) {
            return bad(format!(
                "output_dt must be positive, got {}",
                self.output_dt
            ));
        }
        if !(self.radius_offset.is_finite() && self.phase_offset.is_finite()) {
            return bad("initial offsets must be finite".into());
        }
        let [a, b] = self.fit_window;
        if !(0.0 <= a && a < b && b <= 1.0) {
            return bad(format!(
                "fit_window must satisfy 0 <= start < end <= 1, got [{a}, {b}]"
            ));
        }
        if self.grid < 8 {
            return bad(format!(
                "grid must have at least 8 nodes, got {}",
                self.grid
            ));
        }
        if !(self.cycle_tol > 0.0) {
            return bad("cycle_tol must be positive".into());
        }
        if self.csv_stride == 0 {
            return bad("csv_stride must be at least 1".into());
        }
        if let Some(dt) = self.sde_dt {
            if !(dt > 0.0) {
                return bad(format!("sde_dt must be positive, got {dt}"));
            }
        }
        Ok(())
    }

    /// Builds the chain and model; call on a resolved config.
    pub fn build(&self) -> Result<(BuiltModel, GeneratorSpec)> {
        let c = self.resolved()?;
        let spec = c.chain.as_ref().expect("resolved").build()?;
        let k = spec.num_states();
        let (mu, eta, alpha) = (
            c.mu.as_ref().unwrap(),
            c.eta.as_ref().unwrap(),
            c.alpha.unwrap(),
        );
        let model = match c.model {
            ModelKind::RicDrive => {
                let params = RicDriveParams {
                    mu: mu.shared("mu")?,
                    eta: eta.shared("eta")?,
                    alpha,
                    v: c.v.clone().unwrap(),
                    shape: c.shape.unwrap(),
                    project: c.project.unwrap(),
                };
                BuiltModel::RicDrive(
                    ric_drive_variant(&params, &spec)?.with_min_radius(c.min_radius.unwrap()),
                )
            }
            ModelKind::RicSwitch => {
                let params = RicSwitchParams {
                    mu: mu.per_state(k, "mu")?,
                    eta: eta.per_state(k, "eta")?,
                    alpha,
                };
                BuiltModel::RicSwitch(ric_parameter_switching(&params, &spec)?)
            }
            ModelKind::Dichotomous => {
                let base = RicField::new(mu.shared("mu")?, eta.shared("eta")?, alpha);
                if base.mu <= 0.0 {
                    return Err(Error::NoAveragedCycle(base.mu));
                }
                BuiltModel::Dichotomous(dichotomous_additive(
                    base,
                    c.i0.clone().unwrap(),
                    c.i1.clone().unwrap(),
                    &spec,
                )?)
            }
        };
        if c.initial_state >= k {
            return Err(Error::InvalidArgument(format!(
                "initial_state {} out of range for {k} states",
                c.initial_state
            )));
        }
        Ok((model, spec))
    }

    /// Initial points: radius r̄ + i·radius_offset, angle i·phase_offset around the cycle hint.
    pub fn initial_points(&self, model: &dyn HybridModel) -> Result<Vec<Vec<f64>>> {
        let hint = model.cycle_hint().ok_or_else(|| {
            Error::InvalidArgument("model provides no point near its cycle".into())
        })?;
        if hint.len() != 2 {
            return Err(Error::InvalidArgument(
                "polar initial offsets need a planar model".into(),
            ));
        }
        let r0 = hint[0].hypot(hint[1]);
        let a0 = hint[1].atan2(hint[0]);
        Ok((0..self.oscillators)
            .map(|i| {
                let r = r0 + i as f64 * self.radius_offset;
                let a = a0 + i as f64 * self.phase_offset;
                vec![r * a.cos(), r * a.sin()]
            })
            .collect())
    }

    /// Run length: `t_final`, or `periods` averaged periods.
    pub fn duration(&self, period: f64) -> f64 {
        self.t_final
            .unwrap_or_else(|| self.periods.unwrap_or(500.0) * period)
    }

    pub fn fit(&self) -> FitWindow {
        FitWindow {
            start: self.fit_window[0],
            end: self.fit_window[1],
        }
    }
}

fn chain_of(spec: &GeneratorSpec) -> ChainConfig {
    let w = spec.rates();
    ChainConfig {
        w: (0..w.nrows())
            .map(|i| (0..w.ncols()).map(|j| w[(i, j)]).collect())
            .collect(),
    }
}

/// Sets `path=value` in a JSON object; `value` is parsed as JSON, falling back to a string.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment.split_once('=').ok_or_else(|| {
        Error::InvalidArgument(format!("override `{assignment}` is not key=value"))
    })?;
    let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::InvalidArgument(format!(
            "override key `{path}` is malformed"
        )));
    }
    let mut node = root;
    for key in &keys[..keys.len() - 1] {
        let obj = node.as_object_mut().ok_or_else(|| {
            Error::InvalidArgument(format!("override `{path}` descends into a non-object"))
        })?;
        node = obj
            .entry(key.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    node.as_object_mut()
        .ok_or_else(|| {
            Error::InvalidArgument(format!("override `{path}` descends into a non-object"))
        })?
        .insert(keys[keys.len() - 1].to_string(), parsed);
    Ok(())
}

/// One of the built-in models, chosen at run time.
pub enum BuiltModel {
    RicDrive(RicDriveModel),
    RicSwitch(RicSwitchModel),
    Dichotomous(DichotomousModel<RicField>),
}

impl BuiltModel {
    fn inner(&self) -> &dyn HybridModel {
        match self {
            BuiltModel::RicDrive(m) => m,
            BuiltModel::RicSwitch(m) => m,
            BuiltModel::Dichotomous(m) => m,
        }
    }
}

impl HybridModel for BuiltModel {
    fn dimension(&self) -> usize {
        self.inner().dimension()
    }
    fn num_states(&self) -> usize {
        self.inner().num_states()
    }
    fn field(&self, n: usize, x: &[f64], out: &mut [f64]) {
        self.inner().field(n, x, out)
    }
    fn jacobian(&self, n: usize, x: &[f64], out: &mut [f64]) -> bool {
        self.inner().jacobian(n, x, out)
    }
    fn analytic_phase(&self, x: &[f64]) -> Option<f64> {
        self.inner().analytic_phase(x)
    }
    fn domain_bound(&self) -> f64 {
        self.inner().domain_bound()
    }
    fn min_radius(&self) -> Option<f64> {
        self.inner().min_radius()
    }
    fn period_hint(&self) -> Option<f64> {
        self.inner().period_hint()
    }
    fn cycle_hint(&self) -> Option<Vec<f64>> {
        self.inner().cycle_hint()
    }
}

/// Dynamics used for each oscillator pair.
#[derive(Clone, Copy)]
pub enum Engine<'a> {
    Pdmp,
    /// Closed phase PDMP; initial phases are the isochronal phases of the initial points.
    Phase(&'a PhaseCoupling),
    Qss {
        dt: f64,
    },
}

/// A two-oscillator ensemble sharing one environment per trial.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncSetup {
    pub epsilon: f64,
    pub t_final: f64,
    pub output_dt: f64,
    pub n_trials: usize,
    pub seed: u64,
    pub x0: [Vec<f64>; 2],
    pub n0: usize,
    pub fit_window: FitWindow,
    /// End a trial once |Δθ| underflows.
    pub stop_on_underflow: bool,
}

/// Unwrapped phase difference of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncTrial {
    pub index: usize,
    pub seed: u64,
    pub times: Vec<f64>,
    pub delta: Vec<f64>,
    pub n_events: usize,
    pub fit: TrialFit,
}

struct TrialRun {
    index: usize,
    seed: u64,
    times: Vec<f64>,
    delta: Vec<f64>,
    n_events: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncOutcome {
    pub trials: Vec<SyncTrial>,
    pub estimate: EmpiricalEstimate,
}

/// Lifts isochronal phases sample by sample and tracks θ₁ − θ₂.
struct PhaseTracker<'a, M: HybridModel + ?Sized> {
    lc: &'a LimitCycle,
    field: AveragedField<'a, M>,
    lifted: bool,
    seen: usize,
    delta: Vec<f64>,
    error: Option<Error>,
}

impl<'a, M: HybridModel + ?Sized> PhaseTracker<'a, M> {
    fn raw_difference(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if self.lifted {
            return Ok(a[0] - b[0]);
        }
        let ta = isochronal_phase(self.lc, &self.field, a, 1e-10)?;
        let tb = isochronal_phase(self.lc, &self.field, b, 1e-10)?;
        Ok(ta - tb)
    }

    /// Consumes new samples; `true` once the latest |Δθ| underflows or a phase fails.
    fn update(&mut self, traj: &HybridTrajectory) -> bool {
        while self.seen < traj.num_samples() {
            let s = self.seen;
            match self.raw_difference(traj.point(0, s), traj.point(1, s)) {
                Ok(raw) => {
                    let value = match self.delta.last() {
                        Some(&prev) => {
                            let k = ((prev - raw) / std::f64::consts::TAU).round();
                            raw + k * std::f64::consts::TAU
                        }
                        None => raw,
                    };
                    self.delta.push(value);
                }
                Err(e) => {
                    self.error = Some(e);
                    return true;
                }
            }
            self.seen += 1;
        }
        self.delta.last().is_some_and(|d| d.abs() < UNDERFLOW)
    }
}

/// Runs `n_trials` oscillator pairs in parallel and fits the log phase difference.
///
/// Trial `i` uses seed `trial_seed(seed, i)`, so results do not depend on
/// thread scheduling.
pub fn run_sync<M: HybridModel + ?Sized>(
    model: &M,
    spec: &GeneratorSpec,
    lc: &LimitCycle,
    setup: &SyncSetup,
    engine: Engine<'_>,
) -> Result<SyncOutcome> {
    if setup.n_trials == 0 {
        return Err(Error::InvalidArgument("n_trials must be at least 1".into()));
    }
    let runs = (0..setup.n_trials)
        .into_par_iter()
        .map(|i| run_trial(model, spec, lc, setup, engine, i))
        .collect::<Result<Vec<_>>>()?;
    let series: Vec<(&[f64], &[f64], f64)> = runs
        .iter()
        .map(|r| (r.times.as_slice(), r.delta.as_slice(), setup.t_final))
        .collect();
    let estimate = fit_ensemble(&series, setup.fit_window)?;
    let trials = runs
        .into_iter()
        .zip(&estimate.trials)
        .map(|(r, fit)| SyncTrial {
            index: r.index,
            seed: r.seed,
            times: r.times,
            delta: r.delta,
            n_events: r.n_events,
            fit: fit.clone(),
        })
        .collect();
    Ok(SyncOutcome { trials, estimate })
}

fn run_trial<M: HybridModel + ?Sized>(
    model: &M,
    spec: &GeneratorSpec,
    lc: &LimitCycle,
    setup: &SyncSetup,
    engine: Engine<'_>,
    index: usize,
) -> Result<TrialRun> {
    let seed = trial_seed(setup.seed, index as u64);
    let mut tracker = PhaseTracker {
        lc,
        field: AveragedField::new(model, spec),
        lifted: matches!(engine, Engine::Phase(_)),
        seen: 0,
        delta: Vec::new(),
        error: None,
    };
    let stop_enabled = setup.stop_on_underflow;
    let mut stop = |traj: &HybridTrajectory| tracker.update(traj) && stop_enabled;
    let options = SimOptions {
        step: None,
        keep_events: false,
    };
    let traj = match engine {
        Engine::Pdmp => simulate_pdmp_with(
            model,
            spec,
            &setup.x0,
            setup.n0,
            setup.epsilon,
            setup.t_final,
            setup.output_dt,
            seed,
            &options,
            Some(&mut stop),
        )?,
        Engine::Phase(pc) => {
            let field = AveragedField::new(model, spec);
            let theta0 = [
                isochronal_phase(lc, &field, &setup.x0[0], 1e-10)?,
                isochronal_phase(lc, &field, &setup.x0[1], 1e-10)?,
            ];
            simulate_phase_pdmp_with(
                pc,
                spec,
                &theta0,
                setup.n0,
                setup.epsilon,
                setup.t_final,
                setup.output_dt,
                seed,
                &options,
                Some(&mut stop),
            )?
        }
        Engine::Qss { dt } => {
            let opts = SdeOptions {
                output_dt: Some(setup.output_dt),
                record_increments: false,
            };
            simulate_qss_sde_with(
                model,
                spec,
                &setup.x0,
                setup.epsilon,
                setup.t_final,
                dt,
                seed,
                &opts,
                Some(&mut stop),
            )?
            .trajectory
        }
    };
    // the stop hook may not see the final batch
    tracker.update(&traj);
    if let Some(e) = tracker.error {
        return Err(e);
    }
    Ok(TrialRun {
        index,
        seed,
        n_events: traj.n_events,
        times: traj.sample_times,
        delta: tracker.delta,
    })
}
