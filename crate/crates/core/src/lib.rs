//! Orthogonal Matching Pursuit with exact isometry constants, closed-form
//! recovery conditions and a seeded experiment harness.

pub mod conditions;
pub mod error;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod omp;
pub mod synth;

pub use error::{Error, Result};
pub use linalg::{IndexSet, Matrix};
pub use metrics::SparseSignal;
pub use omp::{run_omp, RecoveryTrace, StoppingRule};
