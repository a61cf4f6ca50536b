//! Hybrid model- and learning-based state estimation for truck-semitrailer
//! combinations.
//!
//! The crate combines a nonlinear single-track vehicle model, an extended
//! Kalman filter, a recurrent soft sensor with nearest-neighbor confidence
//! gating, particle-swarm parameter identification, and a synthetic-data
//! harness for in- and out-of-distribution evaluation.
//!
//! Start with the runnable examples (`cargo run --release --example ...`) or
//! the `hekf-kit` binary; the library modules mirror the pipeline stages.

pub mod error;
pub mod harness;
pub mod hekf;
pub mod ident;
pub mod kv;
pub mod ekf;
pub mod confidence;
pub mod narx;
pub mod params;
pub mod pso;
pub mod standardize;
pub mod vehicle;

pub use error::{Error, Result};

#[doc(hidden)]
pub fn cli_main() {
    unimplemented!("cli pending");
}
