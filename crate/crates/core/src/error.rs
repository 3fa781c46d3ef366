use thiserror::Error;

/// Crate-wide error type. Variants map onto the failure modes the CLI
/// distinguishes: contract violations (bad arguments, unresolved scales)
/// versus numerical failures (divergent solves, lost ellipticity).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("ball unresolved: radius {radius} below grid spacing {spacing}")]
    BallUnresolved { radius: f64, spacing: f64 },

    #[error("kernel unresolved: t^(1/2m) = {scale} below 4h = {required}")]
    KernelUnresolved { scale: f64, required: f64 },

    #[error("unresolved configuration: {0}")]
    UnresolvedConfig(String),

    #[error("ellipticity lost: perturbation {eps} >= lambda {lambda}")]
    EllipticityLost { eps: f64, lambda: f64 },

    #[error("linear solve failed: relative residual {residual:.3e} after {iters} iterations (tol {tol:.1e})")]
    SolverDiverged {
        residual: f64,
        iters: usize,
        tol: f64,
    },

    #[error(
        "Picard divergence: contraction factor {factor:.3} >= 1 for two consecutive iterations"
    )]
    PicardDivergence { factor: f64 },

    #[error("ill-conditioned projection: Gram condition number {cond:.3e} exceeds 1e10")]
    IllConditioned { cond: f64 },

    #[error("non-finite values produced by {0}")]
    NonFinite(String),

    #[error("file format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics (solver breakdowns, lost
    /// contraction) as opposed to contract violations on the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SolverDiverged { .. }
                | Error::PicardDivergence { .. }
                | Error::IllConditioned { .. }
                | Error::NonFinite(_)
                | Error::EllipticityLost { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
