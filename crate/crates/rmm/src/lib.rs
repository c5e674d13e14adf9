//! Reservoir memory machines: echo state networks coupled to an external
//! memory whose write and read heads, like the readout, are trained purely by
//! linear regression.
//!
//! The crate provides:
//!
//! - [`reservoir`]: deterministic cycle-with-jumps reservoirs and the plain
//!   and gated echo state dynamics,
//! - [`machine`]: the memory machine itself (state, step, rollout),
//! - [`training`]: ridge regression, head target derivation, memory
//!   alignment, and the alternating fit,
//! - [`tasks`]: benchmark sequence tasks and dataset JSON,
//! - [`harness`]: nested crossvalidation, runtime benchmarking, model files,
//!   and report writers,
//! - [`seed`]: reproducible sub-stream seeding.

pub mod error;
pub mod harness;
pub mod machine;
pub mod reservoir;
pub mod seed;
mod ser;
pub mod tasks;
pub mod training;

pub use error::{Error, Result};
