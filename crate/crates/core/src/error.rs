use thiserror::Error;

/// Errors raised by the numerical routines and the CLI plumbing.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate grid {n_theta}x{n_phi}: need n_theta >= 4 and n_phi >= 8")]
    DegenerateGrid { n_theta: usize, n_phi: usize },
    #[error("length mismatch: expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("vector is not unit length (norm {norm})")]
    NotUnit { norm: f64 },
    #[error("invalid geodesic disk: {0}")]
    InvalidDisk(String),
    #[error("degree {degree} exceeds the band limit {limit} of the grid")]
    DegreeTooLarge { degree: usize, limit: usize },
    #[error("spectral operations need a Gauss-Legendre grid")]
    NotSpectralGrid,
    #[error("the origin is not interior to the body")]
    OriginNotInterior,
    #[error("invalid body: {0}")]
    InvalidBody(String),
    #[error("support function is undefined for a sampled body not flagged convex")]
    UnsupportedSupport,
    #[error("non-positive value {value} at node {index}")]
    NonPositive { index: usize, value: f64 },
    #[error("volume {volume} is outside the admissible class (relative error {rel_err:.3e})")]
    VolumeConstraint { volume: f64, rel_err: f64 },
    #[error("deficit {0:.3e} is negative beyond quadrature slack")]
    NegativeDeficit(f64),
    #[error("{solver} did not converge: {detail}")]
    NoConvergence { solver: &'static str, detail: String },
    #[error("Hausdorff distance {dist} to the ball violates the regime bound {bound}")]
    Regime { dist: f64, bound: f64 },
    #[error("gradient not resolved at the band limit ({fraction:.3} of the energy in the top degrees)")]
    UnresolvedGradient { fraction: f64 },
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("family member at parameter {0} is an exact ball")]
    BallInFamily(f64),
    #[error("every candidate was rejected")]
    AllRejected,
    #[error("objective is not finite at the start point")]
    NonFiniteStart,
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
