//! Fractional calculus on finite weighted graphs.
//!
//! The pipeline is: a [`WeightedGraph`] is diagonalized into [`SpectralData`]
//! (heat kernel `p(t, x, y)`), which yields the fractional kernel
//! [`FracKernel`] `W_s`. On top of the kernel live the fractional gradient,
//! divergence and `p`-Laplacian ([`calculus`]), and the variational problem
//! `(−Δ)_p^s u + h|u|^{p−2}u = f(x, u)` with its Nehari and mountain-pass
//! solvers ([`variational`]).

// `!(x > 0.0)` is used on purpose: NaN must fail the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calculus;
pub mod error;
pub mod graph;
pub mod kernel;
pub mod quadrature;
pub mod spectral;
pub mod variational;

pub use calculus::{GradientField, RayleighConfig, RayleighEstimate, SobolevNormReport};
pub use error::{Error, Result};
pub use graph::{VertexFunction, WeightedGraph};
pub use kernel::{FracKernel, Provenance, QuadConfig};
pub use spectral::{HeatBound, SpectralData};
pub use variational::{MountainPassConfig, NehariConfig, NonlinearitySpec, PotentialSpec, ProblemSpec, SolutionReport};

/// Decimal text with 17 significant digits; parses back to the same bits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
