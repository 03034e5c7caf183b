//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// Structural mismatch between tensor operands (slot count, kind, extent).
    #[error("shape error: {0}")]
    Shape(String),

    /// A jet was asked for more derivative orders than it stores.
    #[error("order error: requested degree {requested} exceeds jet order {order}")]
    Order { requested: usize, order: usize },

    /// Jets of different dimension or truncation order were combined.
    #[error("jet mismatch: ({dim_a},{order_a}) vs ({dim_b},{order_b})")]
    JetMismatch {
        dim_a: usize,
        order_a: usize,
        dim_b: usize,
        order_b: usize,
    },

    /// Division by a jet whose value vanishes, or other pole at the base point.
    #[error("singularity: {0}")]
    Singular(String),

    /// A field evaluation produced NaN or infinity.
    #[error("non-finite value at multi-index {multi_index:?}")]
    NonFinite { multi_index: Vec<usize> },

    /// Expression-language syntax error with byte offset into the source.
    #[error("syntax error at byte {offset}: {msg}")]
    Syntax { offset: usize, msg: String },

    /// Unknown identifier in an expression.
    #[error("unknown identifier `{name}` at byte {offset}")]
    Name { name: String, offset: usize },

    /// Evaluation left the domain of an elementary function.
    #[error("domain error at byte {offset}: {msg}")]
    Domain { offset: usize, msg: String },

    /// Tensors expressed in the splittings of different representative
    /// connections were combined.
    #[error("scale mismatch: {0}")]
    Scale(String),

    /// An operation met a slot kind it cannot act on.
    #[error("kind error: {0}")]
    Kind(String),

    /// Singular linear system (metric inversion, solve).
    #[error("linear algebra error: {0}")]
    LinearAlgebra(String),

    /// Explicit curved prolongation exists only for ranks 1 and 2.
    #[error("unsupported rank {0}: explicit prolongation requires rank 1 or 2")]
    UnsupportedRank(usize),

    /// Flat-case machinery invoked on a structure with nonzero tractor curvature.
    #[error("structure is not projectively flat: |kappa| = {kappa_norm:.3e}")]
    NotProjectivelyFlat { kappa_norm: f64 },

    /// A curve left the configured chart bounding box.
    #[error("trajectory left the chart box at t = {t}")]
    ChartExit { t: f64 },

    /// Numerical rank could not be decided at the configured threshold.
    #[error(
        "rank indeterminate: singular value {sigma:.3e} within 10x of threshold {threshold:.3e}"
    )]
    RankAmbiguous { sigma: f64, threshold: f64 },

    /// Configuration file problem.
    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
