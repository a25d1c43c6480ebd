//! The fractional kernel
//!
//! ```text
//! W_s(x, y) = s/Γ(1−s) · μ(x) μ(y) · ∫_0^∞ p(t, x, y) t^{−1−s} dt,   x ≠ y,
//! ```
//!
//! stored with a zero diagonal. Two independent assemblies are provided:
//!
//! * [`assemble_kernel_spectral`]: since `Σ_k φ_k(x) φ_k(y) = 0` for `x ≠ y`,
//!   each mode integrates against `e^{−λt} − 1`, and
//!   `∫_0^∞ (e^{−λt} − 1) t^{−1−s} dt = −Γ(1−s) λ^s / s`, so
//!   `W_s(x, y) = −μ(x) μ(y) Σ_k λ_k^s φ_k(x) φ_k(y)`.
//! * [`assemble_kernel_quadrature`]: Gauss–Legendre quadrature of the time
//!   integral itself, split at `t = a` into a singular head and an infinite tail.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::graph::WeightedGraph;
use crate::quadrature::gauss_legendre_unit;
use crate::spectral::{HeatBound, SpectralData};

/// Entries smaller than this in magnitude are stored as exact zeros.
pub const ZERO_CUTOFF: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Spectral,
    Quadrature,
    Loaded,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Provenance::Spectral => "spectral",
            Provenance::Quadrature => "quadrature",
            Provenance::Loaded => "loaded",
        })
    }
}

/// Symmetric, nonnegative kernel matrix with zero diagonal.
#[derive(Debug, Clone)]
pub struct FracKernel {
    s: f64,
    w: DMatrix<f64>,
    provenance: Provenance,
    graph: WeightedGraph,
}

impl FracKernel {
    /// Wraps a precomputed kernel matrix, checking the kernel invariants.
    pub fn from_matrix(graph: WeightedGraph, s: f64, w: DMatrix<f64>, provenance: Provenance) -> Result<Self> {
        check_order(s)?;
        let n = graph.len();
        if w.nrows() != n || w.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: w.nrows() });
        }
        for x in 0..n {
            if w[(x, x)] != 0.0 {
                return Err(Error::InvalidArgument(format!("kernel diagonal at {x} is nonzero")));
            }
            for y in (x + 1)..n {
                if w[(x, y)] != w[(y, x)] || !(w[(x, y)] >= 0.0) || !w[(x, y)].is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "kernel entry ({x}, {y}) is not symmetric, finite and nonnegative"
                    )));
                }
            }
        }
        Ok(Self { s, w, provenance, graph })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn graph(&self) -> &WeightedGraph {
        &self.graph
    }

    pub fn len(&self) -> usize {
        self.graph.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graph.is_empty()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.w[(x, y)]
    }

    pub fn row_sum(&self, x: usize) -> f64 {
        self.w.row(x).sum()
    }

    /// CSV triplets `x,y,W` (upper triangle, nonzero entries, vertex labels),
    /// preceded by a `#` header recording `s` and the provenance.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# provenance={} s={} n={}\nx,y,W\n", self.provenance, fmt_f64(self.s), self.len());
        let labels = self.graph.labels();
        for x in 0..self.len() {
            for y in (x + 1)..self.len() {
                let v = self.w[(x, y)];
                if v != 0.0 {
                    let _ = writeln!(out, "{},{},{}", labels[x], labels[y], fmt_f64(v));
                }
            }
        }
        out
    }

    /// Reloads a kernel written by [`FracKernel::to_csv`] onto `graph`.
    pub fn from_csv(text: &str, graph: WeightedGraph) -> Result<Self> {
        let mut s = None;
        let n = graph.len();
        let mut w = DMatrix::zeros(n, n);
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if let Some(header) = line.strip_prefix('#') {
                for kv in header.split_whitespace() {
                    if let Some(v) = kv.strip_prefix("s=") {
                        s = Some(
                            v.parse::<f64>()
                                .map_err(|_| Error::Parse { line: i + 1, msg: format!("bad order `{v}`") })?,
                        );
                    }
                }
                continue;
            }
            if line.is_empty() || line == "x,y,W" {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let [a, b, v] = fields[..] else {
                return Err(Error::Parse { line: i + 1, msg: "expected `x,y,W`".into() });
            };
            let (x, y) = (graph.vertex_index(a)?, graph.vertex_index(b)?);
            let v: f64 = v.parse().map_err(|_| Error::Parse { line: i + 1, msg: format!("`{v}` is not a number") })?;
            w[(x, y)] = v;
            w[(y, x)] = v;
        }
        let s = s.ok_or_else(|| Error::Parse { line: 1, msg: "missing `s=` header".into() })?;
        Self::from_matrix(graph, s, w, Provenance::Loaded)
    }
}

pub fn check_order(s: f64) -> Result<()> {
    if s > 0.0 && s < 1.0 {
        Ok(())
    } else {
        Err(Error::OrderOutOfRange(s))
    }
}

/// Closed-form assembly `W_s(x, y) = −μ(x) μ(y) Σ_k λ_k^s φ_k(x) φ_k(y)`.
pub fn assemble_kernel_spectral(sd: &SpectralData, s: f64) -> Result<FracKernel> {
    check_order(s)?;
    let raw = sd.spectral_sum(|l| -l.powf(s));
    finalize(sd, s, raw, Provenance::Spectral)
}

/// Quadrature parameters for [`assemble_kernel_quadrature`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    /// Gauss–Legendre nodes per segment.
    pub nodes: usize,
    /// Split point `a` between the head `(0, a]` and the tail `[a, ∞)`.
    pub split: f64,
    /// Relative tolerance on the embedded error estimate.
    pub tol: f64,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self { nodes: 200, split: 1.0, tol: 1e-6 }
    }
}

/// Per-mode time integrals `∫_0^∞ p_k(t) t^{−1−s} dt` where `p_k` is the mode's
/// contribution `e^{−λt}` (tail) or `e^{−λt} − 1` (head).
///
/// Head, `t = a τ^{1/(1−s)}`: `t^{−1−s} dt = a^{−s}/(1−s) · (a/t) dτ`, so the
/// integrand becomes `a^{1−s}/(1−s) · expm1(−λt)/t`, bounded on `[0, 1]`.
/// Tail, `t = a/τ` then `τ = σ^{1/s}`: `∫_a^∞ e^{−λt} t^{−1−s} dt
/// = a^{−s}/s · ∫_0^1 exp(−λ a σ^{−1/s}) dσ`, smooth with all derivatives
/// vanishing at `σ = 0`.
fn mode_integrals(lambdas: &[f64], s: f64, cfg: &QuadConfig, nodes: usize) -> Vec<f64> {
    let (tau, wts) = gauss_legendre_unit(nodes);
    let a = cfg.split;
    let head_scale = a.powf(1.0 - s) / (1.0 - s);
    let tail_scale = a.powf(-s) / s;
    lambdas
        .iter()
        .map(|&lam| {
            let head: f64 = tau
                .iter()
                .zip(&wts)
                .map(|(&t, &w)| {
                    let t = a * t.powf(1.0 / (1.0 - s));
                    // t underflows for s near 1; use the limit of expm1(−λt)/t
                    if t == 0.0 {
                        -w * lam
                    } else {
                        w * (-lam * t).exp_m1() / t
                    }
                })
                .sum();
            let tail: f64 = if lam == 0.0 {
                1.0
            } else {
                tau.iter().zip(&wts).map(|(&sig, &w)| w * (-lam * a * sig.powf(-1.0 / s)).exp()).sum()
            };
            head_scale * head + tail_scale * tail
        })
        .collect()
}

/// Direct quadrature of the defining time integral.
///
/// The rule is applied to `p(t, x, y) = Σ_k e^{−λ_k t} φ_k(x) φ_k(y)`; by
/// linearity the weighted node sums are accumulated per mode and contracted
/// with the eigenfunctions once. The error estimate is the difference against
/// the same rule with half the nodes.
pub fn assemble_kernel_quadrature(sd: &SpectralData, s: f64, cfg: &QuadConfig) -> Result<FracKernel> {
    check_order(s)?;
    if cfg.nodes < 2 || !(cfg.split > 0.0) || !(cfg.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("bad quadrature config {cfg:?}")));
    }
    let pref = s / gamma(1.0 - s);
    let lambdas: Vec<f64> = sd.lambdas().iter().copied().collect();
    let fine: Vec<f64> = mode_integrals(&lambdas, s, cfg, cfg.nodes).into_iter().map(|v| pref * v).collect();
    let coarse: Vec<f64> = mode_integrals(&lambdas, s, cfg, cfg.nodes / 2).into_iter().map(|v| pref * v).collect();

    let n = sd.len();
    let phis = sd.phis();
    let contract = |c: &[f64]| -> DMatrix<f64> {
        let mut out = DMatrix::zeros(n, n);
        for x in 0..n {
            for y in (x + 1)..n {
                let v: f64 = (0..n).map(|k| c[k] * phis[(x, k)] * phis[(y, k)]).sum();
                out[(x, y)] = v;
                out[(y, x)] = v;
            }
        }
        out
    };
    let raw = contract(&fine);
    let diff: Vec<f64> = fine.iter().zip(&coarse).map(|(f, c)| f - c).collect();
    let est = contract(&diff);

    let mu = sd.graph().mu();
    let scale = (0..n)
        .flat_map(|x| (0..n).map(move |y| (x, y)))
        .filter(|(x, y)| x != y)
        .map(|(x, y)| (mu[x] * mu[y] * raw[(x, y)]).abs())
        .fold(0.0, f64::max);
    for x in 0..n {
        for y in (x + 1)..n {
            let m = mu[x] * mu[y];
            let e = (m * est[(x, y)]).abs();
            if e > cfg.tol * (m * raw[(x, y)]).abs() + 1e-13 * scale {
                return Err(Error::Quadrature { estimate: e, tol: cfg.tol, x, y });
            }
        }
    }
    finalize(sd, s, raw, Provenance::Quadrature)
}

/// Scales by `μ(x)μ(y)`, zeroes the diagonal, snaps tiny entries and rejects
/// materially negative ones.
fn finalize(sd: &SpectralData, s: f64, raw: DMatrix<f64>, provenance: Provenance) -> Result<FracKernel> {
    let n = sd.len();
    let mu = sd.graph().mu();
    let mut w = DMatrix::zeros(n, n);
    let mut max_abs: f64 = 0.0;
    for x in 0..n {
        for y in 0..n {
            if x != y {
                w[(x, y)] = mu[x] * mu[y] * raw[(x, y)];
                max_abs = max_abs.max(w[(x, y)].abs());
            }
        }
    }
    let neg_tol = 1e-12 * (1.0 + max_abs);
    for x in 0..n {
        for y in (x + 1)..n {
            let v = w[(x, y)];
            let v = if v.abs() < ZERO_CUTOFF {
                0.0
            } else if v < 0.0 {
                if v < -neg_tol {
                    return Err(Error::InvalidArgument(format!("kernel entry ({x}, {y}) = {v:.3e} is negative")));
                }
                0.0
            } else {
                v
            };
            w[(x, y)] = v;
            w[(y, x)] = v;
        }
    }
    FracKernel::from_matrix(sd.graph().clone(), s, w, provenance)
}

/// Per-vertex row-sum check against `(1/Γ(1−s)) (A_x s/(1−s) + 1) μ(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowSumReport {
    pub vertex: usize,
    pub row_sum: f64,
    pub bound: f64,
    pub pass: bool,
}

pub fn kernel_row_sums(k: &FracKernel, bounds: &[HeatBound]) -> Result<Vec<RowSumReport>> {
    if bounds.len() != k.len() {
        return Err(Error::DimensionMismatch { expected: k.len(), got: bounds.len() });
    }
    let s = k.s();
    let g = gamma(1.0 - s);
    let mu = k.graph().mu();
    Ok(bounds
        .par_iter()
        .map(|hb| {
            let x = hb.vertex;
            let row_sum = k.row_sum(x);
            let bound = (hb.a_x * s / (1.0 - s) + 1.0) * mu[x] / g;
            RowSumReport { vertex: x, row_sum, bound, pass: row_sum.is_finite() && row_sum <= bound }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_grid, build_path};
    use crate::spectral::{estimate_ax, spectral_decompose};

    fn sd_of(g: &WeightedGraph) -> SpectralData {
        spectral_decompose(g).unwrap()
    }

    #[test]
    fn k2_closed_form() {
        let sd = sd_of(&build_path(2, None, None).unwrap());
        for s in [0.1, 0.5, 0.9] {
            let k = assemble_kernel_spectral(&sd, s).unwrap();
            assert!((k.get(0, 1) - 2f64.powf(s - 1.0)).abs() < 1e-14);
            assert_eq!(k.get(0, 0), 0.0);
        }
        let k = assemble_kernel_spectral(&sd, 0.5).unwrap();
        assert!((k.get(0, 1) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-10);
    }

    #[test]
    fn k2_quadrature_matches_closed_integral() {
        let sd = sd_of(&build_path(2, None, None).unwrap());
        let k = assemble_kernel_quadrature(&sd, 0.5, &QuadConfig::default()).unwrap();
        assert!((k.get(0, 1) - 0.5f64.sqrt()).abs() < 1e-10);
        assert_eq!(k.provenance(), Provenance::Quadrature);
    }

    #[test]
    fn order_must_be_open_unit_interval() {
        let sd = sd_of(&build_path(2, None, None).unwrap());
        for s in [0.0, 1.0, -0.5, f64::NAN] {
            assert!(matches!(assemble_kernel_spectral(&sd, s), Err(Error::OrderOutOfRange(_))));
            assert!(assemble_kernel_quadrature(&sd, s, &QuadConfig::default()).is_err());
        }
    }

    #[test]
    fn single_vertex_kernel_is_empty() {
        let sd = sd_of(&build_path(1, None, None).unwrap());
        let k = assemble_kernel_spectral(&sd, 0.5).unwrap();
        assert_eq!(k.matrix().as_slice(), [0.0]);
        let hb = estimate_ax(&sd, 0).unwrap();
        let rep = kernel_row_sums(&k, &[hb]).unwrap();
        assert!(rep[0].pass && rep[0].row_sum == 0.0);
    }

    #[test]
    fn near_one_approaches_laplacian() {
        let sd = sd_of(&build_path(2, None, None).unwrap());
        let k = assemble_kernel_spectral(&sd, 0.999).unwrap();
        assert!((k.get(0, 1) - 1.0).abs() < 2e-3);
        // the head integrand steepens as s → 1 and the rule reports it
        let err = assemble_kernel_quadrature(&sd, 0.999, &QuadConfig::default()).unwrap_err();
        assert_eq!(err.category(), "quadrature");
        let q = assemble_kernel_quadrature(&sd, 0.95, &QuadConfig::default()).unwrap();
        let sp = assemble_kernel_spectral(&sd, 0.95).unwrap();
        assert!((q.get(0, 1) / sp.get(0, 1) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn p3_matches_brute_force_power() {
        // L = [[1,-1,0],[-1,2,-1],[0,-1,1]] with eigenvectors
        // (1,1,1)/√3, (1,0,-1)/√2, (1,-2,1)/√6 for λ = 0, 1, 3.
        let sd = sd_of(&build_path(3, None, None).unwrap());
        let k = assemble_kernel_spectral(&sd, 0.5).unwrap();
        let r3 = 3f64.sqrt();
        let l_half = |x: usize, y: usize| {
            let v1 = [1.0, 0.0, -1.0];
            let v2 = [1.0, -2.0, 1.0];
            v1[x] * v1[y] / 2.0 + r3 * v2[x] * v2[y] / 6.0
        };
        for x in 0..3 {
            for y in 0..3 {
                if x != y {
                    assert!((k.get(x, y) + l_half(x, y)).abs() < 1e-14, "({x},{y})");
                }
            }
        }
    }

    #[test]
    fn row_sum_bounds() {
        let sd = sd_of(&build_path(2, None, None).unwrap());
        let k = assemble_kernel_spectral(&sd, 0.5).unwrap();
        let hbs: Vec<_> = (0..2).map(|x| estimate_ax(&sd, x).unwrap()).collect();
        let rep = kernel_row_sums(&k, &hbs).unwrap();
        for r in rep {
            assert!((r.row_sum - 0.5f64.sqrt()).abs() < 1e-14);
            assert!((r.bound - 2.0 / std::f64::consts::PI.sqrt()).abs() < 1e-12);
            assert!(r.pass);
        }

        let sd = sd_of(&build_grid(4, 4).unwrap());
        let k = assemble_kernel_spectral(&sd, 0.3).unwrap();
        let hbs: Vec<_> = (0..16).map(|x| estimate_ax(&sd, x).unwrap()).collect();
        let rep = kernel_row_sums(&k, &hbs).unwrap();
        assert_eq!(rep.len(), 16);
        assert!(rep.iter().all(|r| r.pass));
        assert!(kernel_row_sums(&k, &hbs[..3]).is_err());
    }

    #[test]
    fn scaling_law() {
        for c in [0.5, 2.0, 10.0] {
            let sd = sd_of(&build_path(2, None, Some(&[c])).unwrap());
            for s in [0.25, 0.5, 0.75] {
                let k = assemble_kernel_spectral(&sd, s).unwrap();
                let want = 2f64.powf(s - 1.0) * c.powf(s);
                assert!(((k.get(0, 1) - want) / want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let g = build_grid(3, 2).unwrap();
        let k = assemble_kernel_spectral(&sd_of(&g), 0.4).unwrap();
        let text = k.to_csv();
        assert!(text.starts_with("# provenance=spectral"));
        let back = FracKernel::from_csv(&text, g).unwrap();
        assert_eq!(back.matrix(), k.matrix());
        assert_eq!(back.s(), 0.4);
        assert_eq!(back.provenance(), Provenance::Loaded);
    }
}
