use thiserror::Error;

use crate::flow::FlowTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("metric is not positive definite at {point:?} (pivot ratio {ratio:e})")]
    DegenerateMetric { point: Vec<f64>, ratio: f64 },

    #[error("point {point:?} is outside the admissible domain: {reason}")]
    OutOfDomain { point: Vec<f64>, reason: String },

    #[error("vector is not tangent to the sphere at {point:?} (|<y,v>| = {defect:e})")]
    NotTangent { point: Vec<f64>, defect: f64 },

    #[error("exponent p = {value} < 2 at {point:?}")]
    Inadmissible { point: Vec<f64>, value: f64 },

    #[error("degenerate point {point:?}: |dφ| = {norm:e} with p = {exponent}")]
    DegeneratePoint { point: Vec<f64>, norm: f64, exponent: f64 },

    #[error("map is not p(·)-harmonic on the domain: |τ_p| = {residual:e} > {tolerance:e}")]
    NotPHarmonic { residual: f64, tolerance: f64 },

    #[error("deformed map leaves the target chart at {point:?}")]
    OutOfRange { point: Vec<f64> },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("unknown catalog entry `{0}`")]
    UnknownCatalog(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("domain has no retained cells")]
    EmptyDomain,

    #[error("no admissible sample after {attempts} attempts")]
    Sampling { attempts: usize },

    #[error("grid too coarse: axis {axis} has {nodes} nodes (need at least 5)")]
    GridTooCoarse { axis: usize, nodes: usize },

    #[error("line search failed after {halvings} halvings at iteration {iteration}")]
    Stagnation {
        iteration: usize,
        halvings: usize,
        trace: Box<FlowTrace>,
    },

    #[error("analytic provider disagrees with the backend by {discrepancy:e} at {point:?}")]
    ProviderMismatch { point: Vec<f64>, discrepancy: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the command line: 2 for configuration
    /// problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::UnknownCatalog(_)
            | Error::InvalidParams(_)
            | Error::Config(_)
            | Error::Dimension(_)
            | Error::Io(_) => 2,
            _ => 3,
        }
    }
}
