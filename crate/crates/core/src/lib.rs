//! Permutation-invariant and -equivariant networks on graph tensors.
//!
//! Operators are parameterized over set-partition bases, so one parameter
//! vector serves every graph size.

pub mod checks;
pub mod equilinear;
pub mod error;
pub mod gnn;
pub mod graphs;
pub mod oracles;
pub mod par;
pub mod partitions;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
