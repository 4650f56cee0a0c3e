use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid body: {0}")]
    InvalidBody(String),
    #[error("invalid direction: norm {0} is not 1")]
    InvalidDirection(f64),
    #[error("invalid jump set: {0}")]
    InvalidJump(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("empty target set")]
    EmptyTarget,
    #[error("grid too coarse for neighborhood")]
    GridTooCoarse,
    #[error("degenerate profile")]
    DegenerateProfile,
    #[error("truncation exhausts kernel")]
    TruncationExhausts,
    #[error("domain too small for θ = {0}")]
    DomainTooSmall(f64),
    #[error("uncovered node at ({0}, {1})")]
    UncoveredNode(f64, f64),
    #[error("line does not meet the domain")]
    EmptySection,
    #[error("ε under-resolved: {cells:.2} cells per inradius, need at least 4")]
    UnderResolved { cells: f64 },
    #[error("non-smooth transition; use exp_saturating for minimization")]
    NonSmoothTransition,
    #[error("minorant violated at t = {0}")]
    MinorantViolated(f64),
    #[error("empty subdomain")]
    EmptySubdomain,
    #[error("extraction under-resolved: δηε = {level_cap} is below two grid cells")]
    ExtractionUnderResolved { level_cap: f64 },
    #[error("recovery requires interior jump")]
    JumpTouchesBoundary,
    #[error("divergence; reduce step")]
    Divergence,
    #[error("no inscribed ball found")]
    NoInscribedBall,
}

pub type Result<T> = std::result::Result<T, Error>;
