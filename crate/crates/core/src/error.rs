use alloc::string::String;

use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid density field: {0}")]
    InvalidDensity(String),
    #[error("point sampling saturation budget must be positive")]
    ZeroBudget,
    #[error("at least 3 generator points are required, got {0}")]
    InsufficientPoints(usize),
    #[error("generator points are collinear")]
    CollinearPoints,
    #[error("generator point {0} lies outside the domain")]
    PointOutside(usize),
    #[error("generator points {0} and {1} coincide")]
    DuplicatePoints(usize, usize),
    #[error("degenerate tessellation: {0}")]
    DegenerateMesh(String),
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error(
        "snap-back: contact of length {length:e} m is too long for the fracture energy \
         (softening slope denominator {denominator:e})"
    )]
    SnapBack { length: f64, denominator: f64 },
    #[error("tension softening slope {kt:e} must exceed shear slope {ks:e}")]
    ShearSlopeTooLarge { kt: f64, ks: f64 },
    #[error("non-finite value in state ({0})")]
    NonFinite(&'static str),
    #[error("singular system: zero pivot at equation {0}")]
    Singular(usize),
    #[error("gauge is degenerate: {0}")]
    DegenerateGauge(String),
    #[error("no nodes match selector: {0}")]
    EmptySelector(String),
    #[error("step did not converge in {passes} staggered passes (last change {change:e})")]
    NotConverged { passes: usize, change: f64 },
    #[error("step failed after {0} bisections")]
    BisectionExhausted(usize),
    #[error("saved contact history key missing after remeshing")]
    MissingHistoryKey,
    #[error("refinement cap of {0} events per step exceeded")]
    RefinementCap(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
}
