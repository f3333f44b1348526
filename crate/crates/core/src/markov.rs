//! Finite-state continuous-time Markov chains for the switching environment.
//!
//! Matrices follow the column convention used throughout the crate:
//! `W[(n, m)]` is the rate of the transition `m -> n`, so the generator
//! `A = W - diag(λ)` has zero column sums and `A ρ = 0`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative cut-off below which a singular value of the generator counts as zero.
pub const SINGULAR_VALUE_CUTOFF: f64 = 1e-12;

/// Validated generator of an irreducible chain together with the derived
/// algebra used by the diffusion approximation.
#[derive(Debug, Clone)]
pub struct GeneratorSpec {
    rates: DMatrix<f64>,
    generator: DMatrix<f64>,
    stationary: DVector<f64>,
    exit_rates: DVector<f64>,
    jump_probs: DMatrix<f64>,
    // cumulative[m][k] = Σ_{j<=k} P[(j, m)], used for destination sampling
    cumulative: Vec<Vec<f64>>,
    pinv: DMatrix<f64>,
    group_inv: DMatrix<f64>,
    a_tilde: DMatrix<f64>,
    noise_root: DMatrix<f64>,
}

/// One switch of the environment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    /// Absolute time of the jump.
    pub time: f64,
    pub from_state: usize,
    pub to_state: usize,
    /// Sojourn time spent in `from_state` before this jump.
    pub waiting_time: f64,
}

/// JSON form of a chain: `{"W": [[...], ...]}`, rows are destinations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
}

impl ChainConfig {
    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        let n = self.w.len();
        if n == 0 {
            return Err(Error::InvalidRate("rate matrix is empty".into()));
        }
        if let Some(row) = self.w.iter().position(|r| r.len() != n) {
            return Err(Error::InvalidRate(format!(
                "rate matrix is not square: row {row} has {} entries, expected {n}",
                self.w[row].len()
            )));
        }
        Ok(DMatrix::from_fn(n, n, |i, j| self.w[i][j]))
    }

    pub fn build(&self) -> Result<GeneratorSpec> {
        build_generator(&self.to_matrix()?)
    }
}

impl GeneratorSpec {
    /// Builds a chain from row-major rates (`rows[n][m]` = rate `m -> n`).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        ChainConfig { w: rows.to_vec() }.build()
    }

    pub fn num_states(&self) -> usize {
        self.rates.nrows()
    }

    pub fn rates(&self) -> &DMatrix<f64> {
        &self.rates
    }

    pub fn generator(&self) -> &DMatrix<f64> {
        &self.generator
    }

    pub fn stationary(&self) -> &DVector<f64> {
        &self.stationary
    }

    pub fn exit_rates(&self) -> &DVector<f64> {
        &self.exit_rates
    }

    pub fn jump_probabilities(&self) -> &DMatrix<f64> {
        &self.jump_probs
    }

    /// Moore–Penrose pseudo-inverse of the generator.
    pub fn pseudo_inverse(&self) -> &DMatrix<f64> {
        &self.pinv
    }

    /// Generalized inverse whose range is the zero-sum subspace and whose
    /// kernel is spanned by ρ (the solution of `A w = h` with `Σ w = 0`).
    pub fn group_inverse(&self) -> &DMatrix<f64> {
        &self.group_inv
    }

    /// Symmetrized diffusion matrix Ã.
    pub fn diffusion(&self) -> &DMatrix<f64> {
        &self.a_tilde
    }

    /// Square root B with `B Bᵀ = -Ã`.
    pub fn noise_root(&self) -> &DMatrix<f64> {
        &self.noise_root
    }

    /// Σ_n ρ_n λ_n, the mean jump rate (before ε-rescaling).
    pub fn mean_jump_rate(&self) -> f64 {
        self.stationary.dot(&self.exit_rates)
    }

    /// Expected number of jumps in a window of length `duration` at switching scale `epsilon`.
    pub fn expected_jumps(&self, duration: f64, epsilon: f64) -> f64 {
        duration / epsilon * self.mean_jump_rate()
    }

    /// ρ-weighted mean of a per-state vector.
    pub fn weighted_mean(&self, values: &[f64]) -> f64 {
        self.stationary.iter().zip(values).map(|(r, v)| r * v).sum()
    }
}

/// Validates `W` and derives the full generator algebra.
pub fn build_generator(w: &DMatrix<f64>) -> Result<GeneratorSpec> {
    let n = w.nrows();
    if n == 0 || w.ncols() != n {
        return Err(Error::InvalidRate(format!(
            "rate matrix must be square and non-empty, got {}x{}",
            w.nrows(),
            w.ncols()
        )));
    }
    for m in 0..n {
        for k in 0..n {
            let r = w[(k, m)];
            if !r.is_finite() {
                return Err(Error::InvalidRate(format!("W[{k}][{m}] is not finite")));
            }
            if k == m && r != 0.0 {
                return Err(Error::InvalidRate(format!(
                    "diagonal entry W[{k}][{k}] = {r} must be zero"
                )));
            }
            if r < 0.0 {
                return Err(Error::InvalidRate(format!("W[{k}][{m}] = {r} is negative")));
            }
        }
    }

    let exit_rates = DVector::from_fn(n, |m, _| w.column(m).sum());
    if n > 1 {
        if let Some(m) = exit_rates.iter().position(|&l| l <= 0.0) {
            return Err(Error::AbsorbingState(m));
        }
        check_irreducible(w)?;
    }

    let generator = w - DMatrix::from_diagonal(&exit_rates);
    let stationary = stationary_distribution(&generator)?;

    let jump_probs = DMatrix::from_fn(n, n, |k, m| {
        if exit_rates[m] > 0.0 {
            w[(k, m)] / exit_rates[m]
        } else {
            0.0
        }
    });
    let cumulative = (0..n)
        .map(|m| {
            let mut acc = 0.0;
            jump_probs
                .column(m)
                .iter()
                .map(|p| {
                    acc += p;
                    acc
                })
                .collect()
        })
        .collect();

    let pinv = pseudo_inverse(&generator)?;
    let group_inv = gauge_fix(&pinv, &stationary);
    let (a_tilde, noise_root) = symmetrize_and_root(&group_inv, &stationary)?;

    Ok(GeneratorSpec {
        rates: w.clone(),
        generator,
        stationary,
        exit_rates,
        jump_probs,
        cumulative,
        pinv,
        group_inv,
        a_tilde,
        noise_root,
    })
}

// Breadth-first reachability from state 0 along forward and reversed edges.
fn check_irreducible(w: &DMatrix<f64>) -> Result<()> {
    let n = w.nrows();
    for reverse in [false, true] {
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(m) = queue.pop_front() {
            for k in 0..n {
                let rate = if reverse { w[(m, k)] } else { w[(k, m)] };
                if rate > 0.0 && !seen[k] {
                    seen[k] = true;
                    queue.push_back(k);
                }
            }
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(Error::NotIrreducible(k));
        }
    }
    Ok(())
}

// Solves A ρ = 0, Σ ρ = 1 by LU on A with its last row replaced by ones.
fn stationary_distribution(generator: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = generator.nrows();
    if n == 1 {
        return Ok(DVector::from_element(1, 1.0));
    }
    let mut system = generator.clone();
    system.row_mut(n - 1).fill(1.0);
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let mut rho = system.lu().solve(&rhs).ok_or(Error::RankDeficient(2))?;
    let total = rho.sum();
    rho /= total;
    if let Some(k) = rho.iter().position(|&r| r <= 0.0) {
        return Err(Error::NotIrreducible(k));
    }
    Ok(rho)
}

/// Moore–Penrose pseudo-inverse of a generator via its singular value decomposition.
///
/// The SVD is read off the symmetric eigendecomposition of `[[0, A], [Aᵀ, 0]]`,
/// whose eigenvalues are ±σ_i with eigenvectors `(u_i, ±v_i)/√2`.
/// Singular values below `1e-12 σ_max` are treated as zero; an irreducible
/// generator has exactly one.
pub fn pseudo_inverse(generator: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = generator.nrows();
    if generator.ncols() != n {
        return Err(Error::InvalidArgument("generator must be square".into()));
    }
    let mut augmented = DMatrix::zeros(2 * n, 2 * n);
    augmented.view_mut((0, n), (n, n)).copy_from(generator);
    augmented
        .view_mut((n, 0), (n, n))
        .copy_from(&generator.transpose());
    let eig = augmented.symmetric_eigen();
    let mut order: Vec<usize> = (0..2 * n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let singular = &order[..n];
    let sigma_max = eig.eigenvalues[singular[0]].max(0.0);
    if sigma_max == 0.0 {
        if n == 1 {
            return Ok(DMatrix::zeros(1, 1));
        }
        return Err(Error::RankDeficient(n));
    }
    let cutoff = SINGULAR_VALUE_CUTOFF * sigma_max;
    let zeros = singular
        .iter()
        .filter(|&&i| eig.eigenvalues[i] < cutoff)
        .count();
    if zeros > 1 {
        return Err(Error::RankDeficient(zeros));
    }
    let mut pinv = DMatrix::zeros(n, n);
    for &i in singular {
        let sigma = eig.eigenvalues[i];
        if sigma >= cutoff {
            let w = eig.eigenvectors.column(i);
            let u = w.rows(0, n);
            let v = w.rows(n, n);
            pinv += (v * u.transpose()) * (2.0 / sigma);
        }
    }
    Ok(pinv)
}

// (I - ρ1ᵀ) A† (I - ρ1ᵀ): same action as A† on the zero-sum subspace, but
// with range {Σ w = 0} and kernel span(ρ).
fn gauge_fix(pinv: &DMatrix<f64>, rho: &DVector<f64>) -> DMatrix<f64> {
    let n = rho.len();
    let proj = DMatrix::identity(n, n) - rho * DVector::from_element(n, 1.0).transpose();
    &proj * pinv * &proj
}

fn symmetrize_and_root(
    inverse: &DMatrix<f64>,
    rho: &DVector<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let weighted = inverse * DMatrix::from_diagonal(rho);
    let a_tilde = (&weighted + weighted.transpose()) * 0.5;
    let eig = (-&a_tilde).symmetric_eigen();
    let mut roots = eig.eigenvalues.clone();
    for mu in roots.iter_mut() {
        if *mu < -1e-10 {
            return Err(Error::NotPsd(*mu));
        }
        if *mu < 1e-12 {
            *mu = 0.0;
        }
        *mu = mu.sqrt();
    }
    let b = &eig.eigenvectors * DMatrix::from_diagonal(&roots);
    Ok((a_tilde, b))
}

/// The embedded jump chain `P` and exit rates `λ`, with `W = P diag(λ)`.
pub fn decompose_transitions(spec: &GeneratorSpec) -> (DMatrix<f64>, DVector<f64>) {
    (spec.jump_probs.clone(), spec.exit_rates.clone())
}

/// Ã and its square root B (`B Bᵀ = -Ã`).
///
/// Ã is built from the zero-sum gauge of the generator inverse. On the
/// ρ-mean-zero vectors that the dynamics ever contracts it with, its
/// quadratic form equals the one built from the Moore–Penrose inverse.
pub fn diffusion_matrix(spec: &GeneratorSpec) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    symmetrize_and_root(&spec.group_inv, &spec.stationary)
}

/// Draws the next jump out of `current`, starting the clock at `now`.
///
/// Returns `None` only for a state with zero exit rate (the one-state chain).
/// Consumes one exponential and one uniform variate.
pub fn sample_jump<R: Rng + ?Sized>(
    spec: &GeneratorSpec,
    current: usize,
    now: f64,
    epsilon: f64,
    rng: &mut R,
) -> Option<JumpEvent> {
    let rate = spec.exit_rates[current] / epsilon;
    if rate <= 0.0 {
        return None;
    }
    let e: f64 = rng.sample(Exp1);
    let waiting_time = e / rate;
    let u: f64 = rng.random();
    let column = &spec.cumulative[current];
    let to_state = column.iter().position(|&c| u < c).unwrap_or_else(|| {
        // u landed above a cumulative sum that rounded below 1
        (0..column.len())
            .rev()
            .find(|&k| spec.jump_probs[(k, current)] > 0.0)
            .expect("non-absorbing state has a destination")
    });
    Some(JumpEvent {
        time: now + waiting_time,
        from_state: current,
        to_state,
        waiting_time,
    })
}

/// Endless stream of jumps of the environment, in time order.
pub struct JumpProcess<'a, R> {
    spec: &'a GeneratorSpec,
    epsilon: f64,
    state: usize,
    time: f64,
    rng: R,
}

impl<'a, R: Rng> JumpProcess<'a, R> {
    pub fn new(spec: &'a GeneratorSpec, initial_state: usize, epsilon: f64, rng: R) -> Self {
        Self {
            spec,
            epsilon,
            state: initial_state,
            time: 0.0,
            rng,
        }
    }

    pub fn state(&self) -> usize {
        self.state
    }
}

impl<R: Rng> Iterator for JumpProcess<'_, R> {
    type Item = JumpEvent;

    fn next(&mut self) -> Option<JumpEvent> {
        let event = sample_jump(
            self.spec,
            self.state,
            self.time,
            self.epsilon,
            &mut self.rng,
        )?;
        self.state = event.to_state;
        self.time = event.time;
        Some(event)
    }
}

/// All jumps in `[0, t_final)` of one environment realization.
pub fn sample_path<R: Rng>(
    spec: &GeneratorSpec,
    initial_state: usize,
    epsilon: f64,
    t_final: f64,
    rng: R,
) -> Vec<JumpEvent> {
    JumpProcess::new(spec, initial_state, epsilon, rng)
        .take_while(|e| e.time < t_final)
        .collect()
}

/// Residual of the truncated series identity
/// `-A diag(λ)⁻¹ Σ_{j=0}^{R} Pʲ diag(ρ) f = diag(ρ) f`, in max-norm.
///
/// `f` must be ρ-mean-zero. The residual decays geometrically with the
/// subdominant eigenvalue of the jump chain `P` when that chain is aperiodic.
pub fn series_identity_residual(spec: &GeneratorSpec, f: &[f64], order: usize) -> Result<f64> {
    let n = spec.num_states();
    if f.len() != n {
        return Err(Error::InvalidArgument(format!(
            "test vector has length {}, chain has {n} states",
            f.len()
        )));
    }
    let mean = spec.weighted_mean(f);
    let scale: f64 = spec
        .stationary
        .iter()
        .zip(f)
        .map(|(r, v)| (r * v).abs())
        .sum();
    if mean.abs() > 1e-10 * scale.max(1e-300) && mean.abs() > 1e-14 {
        return Err(Error::NotMeanZero(mean));
    }

    let target = DVector::from_fn(n, |k, _| spec.stationary[k] * f[k]);
    let mut term = target.clone();
    let mut partial = DVector::zeros(n);
    for _ in 0..=order {
        partial += &term;
        term = &spec.jump_probs * &term;
    }
    let scaled = DVector::from_fn(n, |k, _| {
        let l = spec.exit_rates[k];
        if l > 0.0 {
            partial[k] / l
        } else {
            0.0
        }
    });
    let lhs = -(&spec.generator * scaled);
    Ok((lhs - target).amax())
}
