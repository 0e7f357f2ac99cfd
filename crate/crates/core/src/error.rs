use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("continuity violated at {point:?}: pieces {pieces:?} differ by {gap:e}")]
    StitchingViolation {
        point: Vec<f64>,
        pieces: (usize, usize),
        gap: f64,
    },
    #[error("no active piece at {point:?}")]
    EmptyActivity { point: Vec<f64> },
    #[error("a piecewise map needs at least one piece")]
    NoPieces,
    #[error("jacobian of piece {piece} disagrees with finite differences at {point:?} (error {error:e})")]
    JacobianMismatch {
        piece: usize,
        point: Vec<f64>,
        error: f64,
    },
    #[error("map does not provide {0}")]
    CapabilityMissing(&'static str),
    #[error("point {point:?} lies outside the domain box")]
    DomainExit { point: Vec<f64> },
    #[error(
        "difference quotients blow up along {direction:?} at scale {scale:e} (|q| = {quotient:e})"
    )]
    Unbounded {
        direction: Vec<f64>,
        scale: f64,
        quotient: f64,
    },
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid limit grid: {0}")]
    InvalidGrid(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid approach path: {0}")]
    InvalidPath(String),
    #[error("no direction satisfies the Newton inclusion (best residual {residual:e}, tolerance {tolerance:e}, {candidates} candidates)")]
    SubproblemFailure {
        residual: f64,
        tolerance: f64,
        candidates: usize,
    },
    #[error("selected element (piece {piece:?}) is singular: reciprocal condition {rcond:e}")]
    SingularElement { piece: Option<usize>, rcond: f64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("no closed form registered for problem {0}")]
    NotRegistered(String),
    #[error("unknown problem id {0:?}")]
    UnknownProblem(String),
    #[error(
        "iterate {iterate} left the Kantorovich region: distance {distance:e} > radius {radius:e}"
    )]
    RegionExit {
        iterate: usize,
        distance: f64,
        radius: f64,
    },
}
