//! Fixtures shared by the benchmarks.

use drmpc_core::plant::{example_spec, ProblemSpec};
use nalgebra::DVector;

/// The double-integrator example at `ts = 0.4`, where every controller is
/// feasible on a sizeable region.
pub fn bench_spec(horizon_n: usize, deadbeat_m: usize) -> ProblemSpec {
    example_spec(0.4, horizon_n, deadbeat_m).expect("example spec is valid")
}

/// A few states inside the RoA of every controller at `ts = 0.4`.
pub fn bench_states() -> Vec<DVector<f64>> {
    [[0.0, 0.0], [1.0, 0.2], [-1.5, 0.4], [2.0, -0.5]]
        .iter()
        .map(|x| DVector::from_row_slice(x))
        .collect()
}
