pub mod bounds;
pub mod engine;
pub mod format;
pub mod harness;
pub mod kernels;
pub mod problems;
pub mod rng;
pub mod rounding;

pub use format::{FloatFormat, FormatError, RepValue};
pub use harness::{ExperimentConfig, ExperimentKind, HarnessError};
pub use kernels::{LPMatrix, LPVector};
pub use rng::RandomStream;
pub use rounding::{ArithOp, RoundingError, RoundingMode};
