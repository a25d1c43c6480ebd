//! Spectral realization of the heat kernel.
//!
//! The Laplacian `L = M⁻¹(D − W)` (with `M = diag μ`) is self-adjoint in
//! `⟨u, v⟩_μ`. We diagonalize the symmetric similarity transform
//! `M^{1/2} L M^{−1/2}` and map eigenvectors back with `M^{−1/2}`, which
//! gives μ-orthonormal eigenfunctions `φ_k`. The heat kernel with respect to
//! μ is then `p(t, x, y) = Σ_k e^{−λ_k t} φ_k(x) φ_k(y)`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::graph::WeightedGraph;

/// Eigenvalues at or above this (negative) threshold are clamped to zero.
const CLAMP: f64 = 1e-10;

/// Number of log-spaced samples used by [`estimate_ax`].
pub const AX_SAMPLES: usize = 100;

#[derive(Debug, Clone)]
pub struct SpectralData {
    lambdas: DVector<f64>,
    phis: DMatrix<f64>,
    graph: WeightedGraph,
}

impl SpectralData {
    pub fn lambdas(&self) -> &DVector<f64> {
        &self.lambdas
    }

    /// Column `k` is the eigenfunction `φ_k`.
    pub fn phis(&self) -> &DMatrix<f64> {
        &self.phis
    }

    pub fn graph(&self) -> &WeightedGraph {
        &self.graph
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// `Σ_k g(λ_k) φ_k φ_kᵀ`, exactly symmetric.
    pub fn spectral_sum(&self, g: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = self.len();
        let coeff: Vec<f64> = self.lambdas.iter().map(|&l| g(l)).collect();
        let mut out = DMatrix::zeros(n, n);
        for x in 0..n {
            for y in x..n {
                let v: f64 = (0..n).map(|k| coeff[k] * self.phis[(x, k)] * self.phis[(y, k)]).sum();
                out[(x, y)] = v;
                out[(y, x)] = v;
            }
        }
        out
    }

    /// The operator `g(L)` as a matrix acting on vertex functions:
    /// `g(L) = Σ_k g(λ_k) φ_k φ_kᵀ M`.
    pub fn operator_function(&self, g: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut m = self.spectral_sum(g);
        for (y, mu) in self.graph.mu().iter().enumerate() {
            m.column_mut(y).scale_mut(*mu);
        }
        m
    }

    /// Largest deviation of `Φᵀ M Φ` from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let n = self.len();
        let mu = DMatrix::from_diagonal(&DVector::from_column_slice(self.graph.mu()));
        let gram = self.phis.transpose() * mu * &self.phis;
        (gram - DMatrix::identity(n, n)).amax()
    }

    /// CSV dump `k,lambda,phi_0,…,phi_{n−1}` (one row per eigenpair).
    pub fn to_csv(&self) -> String {
        let n = self.len();
        let mut out = String::from("k,lambda");
        for x in 0..n {
            let _ = write!(out, ",phi_{x}");
        }
        out.push('\n');
        for k in 0..n {
            let _ = write!(out, "{k},{}", fmt_f64(self.lambdas[k]));
            for x in 0..n {
                let _ = write!(out, ",{}", fmt_f64(self.phis[(x, k)]));
            }
            out.push('\n');
        }
        out
    }
}

/// Dense eigendecomposition of the graph Laplacian with μ-orthonormal eigenfunctions.
pub fn spectral_decompose(g: &WeightedGraph) -> Result<SpectralData> {
    let n = g.len();
    let mu = g.mu();
    let w = g.weights();
    let sym = DMatrix::from_fn(
        n,
        n,
        |x, y| {
            if x == y {
                w.row(x).sum() / mu[x]
            } else {
                -w[(x, y)] / (mu[x] * mu[y]).sqrt()
            }
        },
    );
    let scale = sym.amax().max(1.0);
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 10_000 * n.max(1))
        .ok_or_else(|| Error::Eigen(format!("symmetric QR did not converge (n = {n}, max |entry| = {scale:.3e})")))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut lambdas = DVector::zeros(n);
    let mut phis = DMatrix::zeros(n, n);
    for (k, &src) in order.iter().enumerate() {
        let mut lam = eig.eigenvalues[src];
        if lam < 0.0 {
            if lam < -CLAMP * scale {
                return Err(Error::Eigen(format!("negative eigenvalue {lam:.3e} of a Laplacian (scale {scale:.3e})")));
            }
            lam = 0.0;
        }
        lambdas[k] = lam;
        let mut v = eig.eigenvectors.column(src).clone_owned();
        // Deterministic sign: the first entry of maximal magnitude is positive.
        let pivot = v.iamax();
        if v[pivot] < 0.0 {
            v.neg_mut();
        }
        for x in 0..n {
            phis[(x, k)] = v[x] / mu[x].sqrt();
        }
    }

    if lambdas[0].abs() > CLAMP * scale {
        return Err(Error::Eigen(format!("bottom eigenvalue {:.3e} is not zero", lambdas[0])));
    }
    lambdas[0] = 0.0;
    if n > 1 && lambdas[1] <= CLAMP * scale {
        return Err(Error::Eigen(format!("second eigenvalue {:.3e} vanishes; graph is not connected", lambdas[1])));
    }
    Ok(SpectralData { lambdas, phis, graph: g.clone() })
}

/// Heat kernel `p(t, ·, ·)` with respect to μ.
pub fn heat_kernel(sd: &SpectralData, t: f64) -> Result<DMatrix<f64>> {
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    if t == 0.0 || sd.len() == 1 {
        // p(0) = M⁻¹ exactly; a single vertex never diffuses.
        let inv: Vec<f64> = sd.graph.mu().iter().map(|m| 1.0 / m).collect();
        return Ok(DMatrix::from_diagonal(&DVector::from_vec(inv)));
    }
    Ok(sd.spectral_sum(|l| (-l * t).exp()))
}

/// `max_{t,x} |Σ_y p(t,x,y) μ(y) − 1|` over the given times.
pub fn check_stochastic_completeness(sd: &SpectralData, times: &[f64]) -> Result<f64> {
    let mu = sd.graph.mu();
    let mut worst: f64 = 0.0;
    for &t in times {
        let p = heat_kernel(sd, t)?;
        for x in 0..sd.len() {
            let mass: f64 = (0..sd.len()).map(|y| p[(x, y)] * mu[y]).sum();
            worst = worst.max((mass - 1.0).abs());
        }
    }
    Ok(worst)
}

/// A constant `A_x` with `|1 − p(t,x,x) μ(x)| <= A_x t` for `t ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatBound {
    pub vertex: usize,
    /// Slope of `1 − p(t,x,x)μ(x)` at `t = 0⁺`: `Σ_k λ_k μ(x) φ_k(x)²`.
    /// Because `1 − e^{−λt} <= λt` this bounds the ratio for every `t > 0`.
    pub a_x: f64,
    /// Largest ratio `(1 − p(t,x,x)μ(x)) / t` on the sample grid.
    pub sampled_sup: f64,
    /// Whether the inequality held at every sample with `sampled_sup` and
    /// `sampled_sup <= a_x` (up to roundoff).
    pub verified: bool,
}

/// Log-spaced sample grid on `[1e-6, 1]`.
pub fn ax_sample_grid() -> Vec<f64> {
    (0..AX_SAMPLES).map(|i| 10f64.powf(-6.0 + 6.0 * i as f64 / (AX_SAMPLES - 1) as f64)).collect()
}

/// `1 − p(t,x,x) μ(x)` evaluated without cancellation.
pub fn diagonal_defect(sd: &SpectralData, x: usize, t: f64) -> f64 {
    let mu = sd.graph.mu()[x];
    (0..sd.len()).map(|k| -(-sd.lambdas[k] * t).exp_m1() * mu * sd.phis[(x, k)].powi(2)).sum()
}

pub fn estimate_ax(sd: &SpectralData, x: usize) -> Result<HeatBound> {
    if x >= sd.len() {
        return Err(Error::UnknownVertex(x.to_string()));
    }
    let mu = sd.graph.mu()[x];
    let a_x: f64 = (0..sd.len()).map(|k| sd.lambdas[k] * mu * sd.phis[(x, k)].powi(2)).sum();
    let grid = ax_sample_grid();
    let ratios: Vec<f64> = grid.iter().map(|&t| diagonal_defect(sd, x, t) / t).collect();
    let sampled_sup = ratios.iter().copied().fold(0.0, f64::max);
    let slack = 1e-12 * (1.0 + a_x);
    let verified = sampled_sup <= a_x + slack
        && grid
            .iter()
            .map(|&t| diagonal_defect(sd, x, t).abs())
            .zip(&grid)
            .all(|(d, &t)| d <= sampled_sup * t + slack * t);
    Ok(HeatBound { vertex: x, a_x, sampled_sup, verified })
}
