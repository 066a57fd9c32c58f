//! Feature selection with sparse learnable masks.
//!
//! A learnable vector is projected onto the probability simplex with a
//! multiplier chosen so that exactly `F` entries stay positive; the resulting
//! sparse mask scales the inputs of a small MLP and is trained jointly with it
//! under a mutual-information objective.

pub mod baselines;
pub mod cli;
pub mod data;
pub mod error;
pub mod io;
pub mod linalg;
pub mod mask;
pub mod metrics;
pub mod miloss;
pub mod net;
pub mod simplex;
pub mod train;

pub use error::{Error, Result};
pub use linalg::Matrix;
