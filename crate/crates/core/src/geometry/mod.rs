//! Polytopes and invariant sets.

mod invariant;
mod polytope;

pub use invariant::{max_pi_set, max_rpi_set, mrpi_approx};
pub use polytope::*;
