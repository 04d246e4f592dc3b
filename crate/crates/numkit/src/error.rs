use thiserror::Error;

/// Errors surfaced by tensor construction, graph operations, and the
/// optimizer. All of them indicate caller bugs or numerical blow-ups; none
/// are recoverable mid-computation.
#[derive(Debug, Error)]
pub enum NumError {
    /// Operand shapes are incompatible with the operation.
    #[error("{op}: shape mismatch: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    /// An operation produced NaN or Inf. Per the crate's NaN policy the
    /// current step is aborted rather than letting the value propagate.
    #[error("{op}: produced a non-finite value; aborting this step")]
    NonFinite { op: &'static str },

    /// Invalid argument (out-of-range index, empty input, bad probability…).
    #[error("{op}: {detail}")]
    Invalid { op: &'static str, detail: String },

    /// `backward` was already called on this graph; recording further ops or
    /// running backward again requires a fresh forward pass.
    #[error("graph already consumed by backward; build a new forward pass")]
    GraphConsumed,

    /// `backward` requires a scalar (single-element) loss node.
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
}

pub type Result<T> = std::result::Result<T, NumError>;
