use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong while building chains, models, cycles or
/// running simulations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid rate: {0}")]
    InvalidRate(String),

    #[error("absorbing state {0}: every exit rate out of it is zero")]
    AbsorbingState(usize),

    #[error("chain is not irreducible: state {0} is not mutually reachable from state 0")]
    NotIrreducible(usize),

    #[error("generator rank deficient: {0} near-zero singular values (expected exactly 1)")]
    RankDeficient(usize),

    #[error("diffusion matrix not PSD: eigenvalue {0:e} of -Ã")]
    NotPsd(f64),

    #[error("test vector not mean-zero: Σ ρ f = {0:e}")]
    NotMeanZero(f64),

    #[error("trajectory escaped domain at t = {time}")]
    Escaped { time: f64 },

    #[error("field blowup (non-finite velocity) at t = {time}")]
    FieldBlowup { time: f64 },

    #[error("origin singularity: trajectory reached the radial-drive singularity at t = {time}")]
    OriginSingularity { time: f64 },

    #[error("no attracting cycle found: {0}")]
    NoCycle(String),

    #[error("converged to equilibrium at {0:?}")]
    Equilibrium(Vec<f64>),

    #[error("adjoint solve inconsistent: normalization drift {0:e}")]
    AdjointInconsistent(f64),

    #[error("point not in basin: no convergence to the cycle within {0} periods")]
    PointNotInBasin(usize),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("QSS exponent positive: {0:e}")]
    QssPositive(f64),

    #[error("no averaged limit cycle: averaged mu = {0} must be positive")]
    NoAveragedCycle(f64),

    #[error("drive not normalized: |Σ ρ_n v_n| = {0:e} exceeds 1e-9")]
    DriveNotNormalized(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// True for failures of a numerical procedure, as opposed to malformed
    /// input.
    pub fn is_numerical(&self) -> bool {
        !matches!(
            self,
            Error::InvalidRate(_)
                | Error::AbsorbingState(_)
                | Error::NotIrreducible(_)
                | Error::NotMeanZero(_)
                | Error::NoAveragedCycle(_)
                | Error::DriveNotNormalized(_)
                | Error::InvalidArgument(_)
                | Error::GridMismatch(_)
        )
    }
}
