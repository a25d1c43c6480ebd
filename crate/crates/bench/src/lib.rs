//! Shared fixtures for the benchmarks.

use fracgraph::graph::build_grid;
use fracgraph::kernel::assemble_kernel_spectral;
use fracgraph::spectral::spectral_decompose;
use fracgraph::{NonlinearitySpec, PotentialSpec, ProblemSpec};

/// Grid `n × n` with `h = 1 + d(x, corner)`, `f(y) = y³` and `p = 2`.
pub fn grid_problem(n: usize, s: f64) -> ProblemSpec {
    let g = build_grid(n, n).expect("grid");
    let k = assemble_kernel_spectral(&spectral_decompose(&g).expect("eigen"), s).expect("kernel");
    ProblemSpec::new(k, 2.0, PotentialSpec::Affine { h0: 1.0, c: 1.0, x0: 0 }, NonlinearitySpec::power(4.0, 1.0))
        .expect("problem")
}
