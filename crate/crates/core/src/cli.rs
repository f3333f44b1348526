//! Command-line front end: `simulate`, `prc`, `lyapunov`, `sync` and `qss-sim`.
//!
//! Each command reads an [`ExperimentConfig`], writes CSV/JSON artifacts to
//! the output directory and maps failures to exit codes (2 for configuration
//! errors, 3 for numerical failures).

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::cycle::{write_prc_csv, LimitCycle, Prc};
use crate::dynamics::{
    expected_jumps_per_period, simulate_pdmp, simulate_qss_sde_with, HybridModel, SdeOptions,
};
use crate::error::{Error, Result};
use crate::experiment::{
    run_sync, BuiltModel, Engine, EngineKind, ExperimentConfig, SyncOutcome, SyncSetup,
};
use crate::io::{fmt_f64, to_json_exact};
use crate::markov::GeneratorSpec;
use crate::phase::{averaged_cycle, phase_coupling, LyapunovReport, TrialFit};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "switchsync",
    version,
    about = "Oscillators under a common switching environment"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON experiment configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Phase grid size (overrides the config).
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    /// Config override, dotted keys allowed (repeatable).
    #[arg(long = "set", global = true, value_name = "K=V")]
    pub set: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Simulate the hybrid system; writes trajectory.csv, events.csv, simulate.json.
    Simulate,
    /// Averaged cycle and phase response curve; writes prc.csv, cycle.json.
    Prc,
    /// Theoretical exponents; writes lyapunov.json.
    Lyapunov,
    /// Two-oscillator ensemble; writes sync.json, sync_trials.csv, sync_fits.csv.
    Sync,
    /// Diffusion surrogate; writes qss_trajectory.csv, qss.json.
    QssSim,
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn main_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_CONFIG
            }
        }
    }
}

/// Loads the config named on the command line with all overrides applied.
pub fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let text = match &cli.config {
        Some(p) => Some(
            fs::read_to_string(p)
                .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", p.display())))?,
        ),
        None => None,
    };
    let mut overrides = cli.set.clone();
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(g) = cli.grid {
        overrides.push(format!("grid={g}"));
    }
    ExperimentConfig::from_json_with_overrides(text.as_deref(), &overrides)?.resolved()
}

pub fn run(cli: &Cli) -> Result<()> {
    let config = load_config(cli)?;
    fs::create_dir_all(&cli.out)
        .map_err(|e| Error::InvalidArgument(format!("cannot create {}: {e}", cli.out.display())))?;
    match cli.command {
        Command::Simulate => cmd_simulate(&config, &cli.out),
        Command::Prc => cmd_prc(&config, &cli.out),
        Command::Lyapunov => cmd_lyapunov(&config, &cli.out),
        Command::Sync => cmd_sync(&config, &cli.out),
        Command::QssSim => cmd_qss_sim(&config, &cli.out),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| Error::InvalidArgument(format!("cannot write {}: {e}", path.display())))
}

fn io_err(e: std::io::Error) -> Error {
    Error::InvalidArgument(format!("write failed: {e}"))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let text = to_json_exact(value)
        .map_err(|e| Error::InvalidArgument(format!("serialization failed: {e}")))?;
    let mut w = create(dir, name)?;
    w.write_all(text.as_bytes()).map_err(io_err)?;
    w.write_all(b"\n").map_err(io_err)?;
    w.flush().map_err(io_err)
}

fn cycle_of(
    config: &ExperimentConfig,
    model: &BuiltModel,
    spec: &GeneratorSpec,
) -> Result<(LimitCycle, Prc)> {
    averaged_cycle(model, spec, config.grid, config.cycle_tol)
}

fn mean_period(config: &ExperimentConfig, model: &BuiltModel, spec: &GeneratorSpec) -> Result<f64> {
    match model.period_hint() {
        Some(p) => Ok(p),
        None => Ok(cycle_of(config, model, spec)?.0.period),
    }
}

#[derive(Serialize)]
struct SimulateSummary<'a> {
    t_final: f64,
    period: f64,
    n_events: usize,
    jumps_per_period: f64,
    expected_jumps_per_period: f64,
    num_samples: usize,
    config: &'a ExperimentConfig,
}

pub fn cmd_simulate(config: &ExperimentConfig, out: &Path) -> Result<()> {
    let (model, spec) = config.build()?;
    let period = mean_period(config, &model, &spec)?;
    let t_final = config.duration(period);
    let x0 = config.initial_points(&model)?;
    let traj = simulate_pdmp(
        &model,
        &spec,
        &x0,
        config.initial_state,
        config.epsilon,
        t_final,
        config.output_dt,
        config.seed,
    )?;
    traj.write_csv(create(out, "trajectory.csv")?)
        .map_err(io_err)?;
    traj.write_events_csv(create(out, "events.csv")?)
        .map_err(io_err)?;
    write_json(
        out,
        "simulate.json",
        &SimulateSummary {
            t_final,
            period,
            n_events: traj.n_events,
            jumps_per_period: traj.jumps_per(period),
            expected_jumps_per_period: expected_jumps_per_period(&spec, period, config.epsilon),
            num_samples: traj.num_samples(),
            config,
        },
    )
}

#[derive(Serialize)]
struct CycleSummary<'a> {
    period: f64,
    frequency: f64,
    num_nodes: usize,
    closure_error: f64,
    normalization_drift: f64,
    config: &'a ExperimentConfig,
}

pub fn cmd_prc(config: &ExperimentConfig, out: &Path) -> Result<()> {
    let (model, spec) = config.build()?;
    let (lc, prc) = cycle_of(config, &model, &spec)?;
    write_prc_csv(&lc, &prc, create(out, "prc.csv")?).map_err(io_err)?;
    write_json(
        out,
        "cycle.json",
        &CycleSummary {
            period: lc.period,
            frequency: lc.frequency,
            num_nodes: lc.num_nodes(),
            closure_error: lc.closure_error,
            normalization_drift: prc.normalization_drift,
            config,
        },
    )
}

#[derive(Serialize)]
struct ReportWithConfig<'a, E: Serialize> {
    #[serde(flatten)]
    report: &'a LyapunovReport,
    #[serde(flatten)]
    extra: E,
    config: &'a ExperimentConfig,
}

pub fn cmd_lyapunov(config: &ExperimentConfig, out: &Path) -> Result<()> {
    let (model, spec) = config.build()?;
    let (lc, prc) = cycle_of(config, &model, &spec)?;
    let pc = phase_coupling(&model, &spec, &lc, &prc)?;
    let report = LyapunovReport::theoretical(&pc, &spec, config.epsilon)?;
    write_json(
        out,
        "lyapunov.json",
        &ReportWithConfig {
            report: &report,
            extra: serde_json::json!({ "period": lc.period }),
            config,
        },
    )
}

/// Runs the configured synchronization ensemble and its theoretical exponents.
pub fn sync_experiment(config: &ExperimentConfig) -> Result<(LyapunovReport, SyncOutcome, f64)> {
    if config.oscillators != 2 {
        return Err(Error::InvalidArgument(format!(
            "sync needs exactly 2 oscillators, config has {}",
            config.oscillators
        )));
    }
    let (model, spec) = config.build()?;
    let (lc, prc) = cycle_of(config, &model, &spec)?;
    let pc = phase_coupling(&model, &spec, &lc, &prc)?;
    let x0 = config.initial_points(&model)?;
    let setup = SyncSetup {
        epsilon: config.epsilon,
        t_final: config.duration(lc.period),
        output_dt: config.output_dt,
        n_trials: config.n_trials,
        seed: config.seed,
        x0: [x0[0].clone(), x0[1].clone()],
        n0: config.initial_state,
        fit_window: config.fit(),
        stop_on_underflow: true,
    };
    let engine = match config.engine {
        EngineKind::Pdmp => Engine::Pdmp,
        EngineKind::Phase => Engine::Phase(&pc),
        EngineKind::Qss => Engine::Qss {
            dt: config.sde_dt.unwrap_or(config.epsilon / 10.0),
        },
    };
    let outcome = run_sync(&model, &spec, &lc, &setup, engine)?;
    let report =
        LyapunovReport::theoretical(&pc, &spec, config.epsilon)?.with_empirical(&outcome.estimate);
    Ok((report, outcome, lc.period))
}

#[derive(Serialize)]
struct SyncExtra<'a> {
    period: f64,
    t_final: f64,
    trials: &'a [TrialFit],
}

pub fn cmd_sync(config: &ExperimentConfig, out: &Path) -> Result<()> {
    let (report, outcome, period) = sync_experiment(config)?;

    let mut w = create(out, "sync_trials.csv")?;
    writeln!(w, "trial,t,delta_theta,log_abs_delta").map_err(io_err)?;
    for trial in &outcome.trials {
        for (s, (t, d)) in trial.times.iter().zip(&trial.delta).enumerate() {
            if s % config.csv_stride != 0 && s + 1 != trial.times.len() {
                continue;
            }
            writeln!(
                w,
                "{},{},{},{}",
                trial.index,
                fmt_f64(*t),
                fmt_f64(*d),
                fmt_f64(d.abs().ln())
            )
            .map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)?;

    let mut w = create(out, "sync_fits.csv")?;
    writeln!(
        w,
        "trial,seed,slope,std_error,t_start,t_end,n_points,truncated,n_events"
    )
    .map_err(io_err)?;
    for trial in &outcome.trials {
        let f = &trial.fit;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            trial.index,
            trial.seed,
            fmt_f64(f.slope),
            fmt_f64(f.std_error),
            fmt_f64(f.window[0]),
            fmt_f64(f.window[1]),
            f.n_points,
            f.truncated,
            trial.n_events
        )
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;

    write_json(
        out,
        "sync.json",
        &ReportWithConfig {
            report: &report,
            extra: SyncExtra {
                period,
                t_final: config.duration(period),
                trials: &outcome.estimate.trials,
            },
            config,
        },
    )
}

#[derive(Serialize)]
struct QssSummary<'a> {
    t_final: f64,
    period: f64,
    dt: f64,
    num_samples: usize,
    config: &'a ExperimentConfig,
}

pub fn cmd_qss_sim(config: &ExperimentConfig, out: &Path) -> Result<()> {
    let (model, spec) = config.build()?;
    let period = mean_period(config, &model, &spec)?;
    let t_final = config.duration(period);
    let dt = config.sde_dt.unwrap_or(config.epsilon / 10.0);
    let x0 = config.initial_points(&model)?;
    let options = SdeOptions {
        output_dt: Some(config.output_dt),
        record_increments: false,
    };
    let run = simulate_qss_sde_with(
        &model,
        &spec,
        &x0,
        config.epsilon,
        t_final,
        dt,
        config.seed,
        &options,
        None,
    )?;
    run.trajectory
        .write_csv(create(out, "qss_trajectory.csv")?)
        .map_err(io_err)?;
    write_json(
        out,
        "qss.json",
        &QssSummary {
            t_final,
            period,
            dt,
            num_samples: run.trajectory.num_samples(),
            config,
        },
    )
}
