use thiserror::Error;

use crate::em::EmTrace;
use crate::psi::PsiTrace;

/// Which axis of the feature × label grid an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisName {
    Feature,
    Label,
}

impl std::fmt::Display for AxisName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AxisName::Feature => f.write_str("feature"),
            AxisName::Label => f.write_str("label"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("invalid table: {0}")]
    InvalidTable(String),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("tables are defined over different spaces")]
    SpaceMismatch,

    #[error("target puts mass on source-null cells: {}", format_cells(.cells))]
    AbsoluteContinuityViolation { cells: Vec<(String, String)> },

    #[error("target marginal is zero on {axis} cell {cell}")]
    ZeroTargetMarginal { axis: AxisName, cell: String },

    #[error("second density vanishes on cell {cell} where the first one has mass")]
    SupportMismatch { cell: String },

    #[error("source marginal is zero on {axis} cell {cell}")]
    ZeroMarginal { axis: AxisName, cell: String },

    #[error("density is not normalized: expectation {expectation}")]
    NotNormalized { expectation: f64 },

    #[error("label factor has zero expectation under the source")]
    DegenerateFactor,

    #[error("zero denominator at {axis} cell {cell}")]
    ZeroDenominator { axis: AxisName, cell: String },

    #[error("conditional distribution undefined at feature cell {cell}")]
    UndefinedConditional { cell: String },

    #[error("label space carries no numeric label values")]
    NoLabelValues,

    #[error("partition does not cover feature cells: {}", .missing.join(", "))]
    PartitionIncomplete { missing: Vec<String> },

    #[error("infeasible marginals: {axis} cell {cell}")]
    InfeasibleMarginals { axis: AxisName, cell: String },

    #[error("{what} is not positive on {axis} cell {cell}")]
    NotPositive {
        what: &'static str,
        axis: AxisName,
        cell: String,
    },

    #[error("psi iteration did not converge after {} iterations", .0.iterations_used)]
    PsiNotConverged(Box<PsiTrace>),

    #[error("EM iteration did not converge after {} iterations", .0.iterations_used)]
    EmNotConverged(Box<EmTrace>),

    #[error("label density is not a fixed point (residual {residual:e})")]
    NotAFixedPoint { residual: f64 },

    #[error("sample is empty")]
    EmptySample,

    #[error("column {column} is constant and cannot be binned")]
    DegenerateColumn { column: String },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("invalid shift parameters: {0}")]
    InvalidShiftParams(String),

    #[error("unknown {axis} cell {cell}")]
    UnknownCell { axis: AxisName, cell: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for the two solver non-convergence variants.
    pub fn is_not_converged(&self) -> bool {
        matches!(self, Error::PsiNotConverged(_) | Error::EmNotConverged(_))
    }
}

fn format_cells(cells: &[(String, String)]) -> String {
    cells
        .iter()
        .map(|(x, y)| format!("({x},{y})"))
        .collect::<Vec<_>>()
        .join(", ")
}

pub type Result<T> = std::result::Result<T, Error>;
