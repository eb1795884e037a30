pub mod baselines;
pub mod controller;
pub mod deadbeat;
pub mod drmpc;
pub mod error;
pub mod fmt;
pub mod geometry;
mod horizon;
pub mod linalg;
pub mod plant;
pub mod qpsolve;
pub mod roa;
pub mod sim;

pub use controller::{ControlDecision, Controller};
pub use error::{Error, Result};
