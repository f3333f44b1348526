//! Oscillators driven by a common randomly switching environment.
//!
//! The crate simulates piecewise-deterministic Markov processes (PDMPs) whose
//! vector field is selected by a finite-state Markov chain, reduces them to
//! phase dynamics on the limit cycle of the averaged system, and computes the
//! rate at which oscillators sharing one environment synchronize: the exact
//! Lyapunov exponent, its diffusion-approximation (QSS) counterpart, and
//! empirical estimates from simulated trajectories.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod cycle;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod io;
pub mod markov;
pub mod models;
pub mod ode;
pub mod phase;
pub mod seeds;
pub mod spectral;

pub use error::{Error, Result};
pub use markov::{build_generator, GeneratorSpec, JumpEvent};
