//! Discontinuous (hitting) and continuous (diffusive) stochastic reduction
//! processes on finite-dimensional Hilbert spaces, with deterministic oracles
//! for their ensemble behaviour and lattice builders for particle models.

pub mod continuous;
pub mod ensemble;
pub mod equivalence;
pub mod error;
pub mod fock;
pub mod hilbert;
pub mod hitting;
pub mod trajectory;

pub use error::{Error, Result};
