//! Error type shared by every layer of the crate.

use std::time::Duration;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, SmcError>;

/// Failures surfaced by the communicator, the kernels, the resampler and the
/// samplers.
#[derive(Debug, thiserror::Error)]
pub enum SmcError {
    #[error("group size {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("group size {requested} exceeds worker cap {cap} (SMC_MAX_WORKERS)")]
    WorkerCapExceeded { requested: usize, cap: usize },

    #[error("worker {rank} failed: {message}")]
    WorkerFailed { rank: usize, message: String },

    #[error("rank {0} cannot exchange with itself")]
    SelfExchange(usize),

    #[error("rank {rank}: receive from rank {from} timed out after {after:?}")]
    RecvTimeout {
        rank: usize,
        from: usize,
        after: Duration,
    },

    #[error("rank {rank}: peer {from} disconnected mid-collective")]
    Disconnected { rank: usize, from: usize },

    #[error("collective mismatch: expected tag {expected}, received tag {got}")]
    CollectiveMismatch { expected: i64, got: i64 },

    #[error("payload length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("payload type mismatch in collective exchange")]
    PayloadType,

    #[error("rank {0} is outside the requested subgroup")]
    OutsideSubgroup(usize),

    #[error("shift distance {r} out of range for a node of {len} elements")]
    ShiftOutOfRange { r: i64, len: usize },

    #[error("degenerate weights: global sum {0} is not a positive finite value")]
    DegenerateWeights(f64),

    #[error("weights not normalised: global sum deviates from 1 by {0:e}")]
    NotNormalised(f64),

    #[error("copy counts sum to {got}, expected {expected}")]
    MassMismatch { expected: i64, got: i64 },

    #[error("workload split invariant violated: {0}")]
    MassSplit(String),

    #[error("centralised redistribute needs {needed} scalars at rank 0, limit is {limit}")]
    Capacity { needed: u64, limit: u64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("normalisation constant must be positive, got {0}")]
    NonPositiveConstant(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
