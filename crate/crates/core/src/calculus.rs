//! Fractional differential calculus on a fixed `(graph, kernel)` pair.
//!
//! All integrals are against the vertex measure: `∫ u dμ = Σ_x μ(x) u(x)`.
//! The fractional gradient at `x` is the finite vector indexed by `y`:
//! `∇^s u(x)_y = sqrt(W(x,y) / (2μ(x))) · (u(x) − u(y))`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::VertexFunction;
use crate::kernel::FracKernel;

pub fn check_exponent(p: f64) -> Result<()> {
    if p.is_finite() && p >= 2.0 {
        Ok(())
    } else {
        Err(Error::ExponentUnsupported(p))
    }
}

fn check_len(k: &FracKernel, u: &VertexFunction) -> Result<()> {
    if u.len() != k.len() {
        return Err(Error::DimensionMismatch { expected: k.len(), got: u.len() });
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("vertex function has non-finite entries".into()));
    }
    Ok(())
}

/// `|r|^{p−2}`, with the value 1 at `p = 2` for every `r` (including 0).
pub fn pow_pm2(r: f64, p: f64) -> f64 {
    if p == 2.0 {
        1.0
    } else {
        r.abs().powf(p - 2.0)
    }
}

/// `|a|^{p−2} a`.
pub fn signed_pow(a: f64, p: f64) -> f64 {
    pow_pm2(a, p) * a
}

/// The fractional gradient `∇^s u`, one row per base vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField(pub DMatrix<f64>);

impl GradientField {
    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.nrows() == 0
    }

    /// `|F(x)|` for every `x`.
    pub fn lengths(&self) -> VertexFunction {
        DVector::from_fn(self.len(), |x, _| self.0.row(x).norm())
    }

    /// `∫ F · G dμ`.
    pub fn dot(&self, other: &GradientField, mu: &[f64]) -> f64 {
        (0..self.len()).map(|x| mu[x] * self.0.row(x).dot(&other.0.row(x))).sum()
    }
}

fn coeff(k: &FracKernel, x: usize, y: usize) -> f64 {
    (k.get(x, y) / (2.0 * k.graph().mu()[x])).sqrt()
}

pub fn frac_gradient(k: &FracKernel, u: &VertexFunction) -> Result<GradientField> {
    check_len(k, u)?;
    let n = k.len();
    Ok(GradientField(DMatrix::from_fn(n, n, |x, y| if x == y { 0.0 } else { coeff(k, x, y) * (u[x] - u[y]) })))
}

/// Pointwise `∇^s u · ∇^s v (x) = (1/2μ(x)) Σ_{y≠x} W(x,y)(u(x)−u(y))(v(x)−v(y))`.
pub fn frac_inner(k: &FracKernel, u: &VertexFunction, v: &VertexFunction) -> Result<VertexFunction> {
    check_len(k, u)?;
    check_len(k, v)?;
    let mu = k.graph().mu();
    let n = k.len();
    Ok(DVector::from_fn(n, |x, _| {
        let s: f64 = (0..n).filter(|&y| y != x).map(|y| k.get(x, y) * (u[x] - u[y]) * (v[x] - v[y])).sum();
        s / (2.0 * mu[x])
    }))
}

/// `|∇^s u|(x)`.
pub fn frac_length(k: &FracKernel, u: &VertexFunction) -> Result<VertexFunction> {
    Ok(frac_inner(k, u, u)?.map(|v| v.max(0.0).sqrt()))
}

/// The divergence dual to `∇^s`: `∫ (div_s F) φ dμ = −∫ F · ∇^s φ dμ` for all φ.
///
/// Testing against `δ_x/μ(x)` gives
/// `div_s F(x) = −Σ_z c(x,z) F(x,z) + (1/μ(x)) Σ_y μ(y) c(y,x) F(y,x)`
/// with `c(x,y) = sqrt(W(x,y)/(2μ(x)))`.
pub fn frac_divergence(k: &FracKernel, f: &GradientField) -> Result<VertexFunction> {
    let n = k.len();
    if f.len() != n || f.0.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: f.len() });
    }
    let mu = k.graph().mu();
    Ok(DVector::from_fn(n, |x, _| {
        let out: f64 = (0..n).filter(|&z| z != x).map(|z| coeff(k, x, z) * f.0[(x, z)]).sum();
        let inc: f64 = (0..n).filter(|&y| y != x).map(|y| mu[y] * coeff(k, y, x) * f.0[(y, x)]).sum();
        -out + inc / mu[x]
    }))
}

/// `(−Δ)_p^s u(x) = (1/2μ(x)) Σ_{y≠x} W(x,y) (|∇^s u|^{p−2}(x) + |∇^s u|^{p−2}(y)) (u(x) − u(y))`.
pub fn frac_p_laplacian(k: &FracKernel, u: &VertexFunction, p: f64) -> Result<VertexFunction> {
    check_exponent(p)?;
    let len = frac_length(k, u)?;
    let g = len.map(|r| pow_pm2(r, p));
    let mu = k.graph().mu();
    let n = k.len();
    Ok(DVector::from_fn(n, |x, _| {
        let s: f64 = (0..n).filter(|&y| y != x).map(|y| k.get(x, y) * (g[x] + g[y]) * (u[x] - u[y])).sum();
        s / (2.0 * mu[x])
    }))
}

/// Matrix of the (linear) `p = 2` operator `(−Δ)_2^s`.
pub fn p2_operator_matrix(k: &FracKernel) -> DMatrix<f64> {
    let n = k.len();
    let mu = k.graph().mu();
    DMatrix::from_fn(n, n, |x, y| if x == y { k.row_sum(x) / mu[x] } else { -k.get(x, y) / mu[x] })
}

/// `∫ |∇^s u|^{p−2} ∇^s u · ∇^s φ dμ`.
pub fn p_dirichlet_form(k: &FracKernel, u: &VertexFunction, phi: &VertexFunction, p: f64) -> Result<f64> {
    check_exponent(p)?;
    let gu = frac_gradient(k, u)?;
    let gp = frac_gradient(k, phi)?;
    let len = gu.lengths();
    let mu = k.graph().mu();
    Ok((0..k.len()).map(|x| mu[x] * pow_pm2(len[x], p) * gu.0.row(x).dot(&gp.0.row(x))).sum())
}

/// Both sides of `∫ φ (−Δ)_p^s u dμ = ∫ |∇^s u|^{p−2} ∇^s u · ∇^s φ dμ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartsResidual {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

impl PartsResidual {
    pub fn scale(&self) -> f64 {
        self.lhs.abs().max(self.rhs.abs())
    }

    /// `residual <= rel · (1 + scale)`.
    pub fn within(&self, rel: f64) -> bool {
        self.residual <= rel * (1.0 + self.scale())
    }
}

pub fn verify_parts_identity(
    k: &FracKernel,
    u: &VertexFunction,
    phi: &VertexFunction,
    p: f64,
) -> Result<PartsResidual> {
    check_len(k, phi)?;
    let lap = frac_p_laplacian(k, u, p)?;
    let mu = k.graph().mu();
    let lhs: f64 = (0..k.len()).map(|x| mu[x] * phi[x] * lap[x]).sum();
    let rhs = p_dirichlet_form(k, u, phi, p)?;
    Ok(PartsResidual { lhs, rhs, residual: (lhs - rhs).abs() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolevNormReport {
    /// `∫ |∇^s u|^p dμ`.
    pub grad_part: f64,
    /// `∫ |u|^p dμ`, or `∫ h |u|^p dμ` with a potential.
    pub zero_part: f64,
    pub total: f64,
    pub p: f64,
}

/// The `W^{s,p}` norm, or the `H_{s,p}` norm when a potential `h > 0` is given.
pub fn sobolev_norm(k: &FracKernel, u: &VertexFunction, p: f64, h: Option<&[f64]>) -> Result<SobolevNormReport> {
    check_exponent(p)?;
    check_len(k, u)?;
    if let Some(h) = h {
        if h.len() != k.len() {
            return Err(Error::DimensionMismatch { expected: k.len(), got: h.len() });
        }
        if let Some(x) = h.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::InvalidArgument(format!("potential must be positive, h({x}) = {}", h[x])));
        }
    }
    let mu = k.graph().mu();
    let len = frac_length(k, u)?;
    let grad_part: f64 = (0..k.len()).map(|x| mu[x] * len[x].powf(p)).sum();
    let zero_part: f64 = (0..k.len()).map(|x| mu[x] * h.map_or(1.0, |h| h[x]) * u[x].abs().powf(p)).sum();
    Ok(SobolevNormReport { grad_part, zero_part, total: (grad_part + zero_part).powf(1.0 / p), p })
}

/// `(u⁺, u⁻)` with `u⁺ = max(u, 0)` and `u⁻ = min(u, 0)`.
pub fn pos_neg_split(u: &VertexFunction) -> (VertexFunction, VertexFunction) {
    (u.map(|v| v.max(0.0)), u.map(|v| v.min(0.0)))
}

/// `‖u‖_{L^q(μ)}`; `q = ∞` gives the sup norm.
pub fn lq_norm(mu: &[f64], u: &VertexFunction, q: f64) -> f64 {
    if q.is_infinite() {
        u.amax()
    } else {
        u.iter().zip(mu).map(|(v, m)| m * v.abs().powf(q)).sum::<f64>().powf(1.0 / q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayleighConfig {
    /// Random starts in addition to the constant start (used for `p > 2`).
    pub starts: usize,
    pub max_iter: usize,
    /// Stop when the μ-norm of the quotient gradient is below `tol · (1 + Q)`.
    pub tol: f64,
    pub seed: u64,
}

impl Default for RayleighConfig {
    fn default() -> Self {
        Self { starts: 5, max_iter: 20_000, tol: 1e-9, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Certificate {
    /// Smallest eigenvalue of `(−Δ)_2^s + h` (only for `p = 2`).
    Exact,
    /// Best quotient found by descent; the infimum is at most this value.
    UpperBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayleighEstimate {
    pub value: f64,
    pub certificate: Certificate,
    pub p: f64,
    /// The exact `p = 2` constant for the same kernel and potential.
    pub p2_reference: f64,
    /// Final quotient of every start (constant start first); empty for `p = 2`.
    pub start_values: Vec<f64>,
}

/// `λ_2 = min spec((−Δ)_2^s + diag h)` in the μ-inner product.
fn lambda_p2(k: &FracKernel, h: &[f64]) -> Result<f64> {
    let n = k.len();
    let mu = k.graph().mu();
    let sym = DMatrix::from_fn(n, n, |x, y| {
        if x == y {
            k.row_sum(x) / mu[x] + h[x]
        } else {
            -k.get(x, y) / (mu[x] * mu[y]).sqrt()
        }
    });
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 10_000 * n.max(1))
        .ok_or_else(|| Error::Eigen("Rayleigh eigensolve did not converge".into()))?;
    Ok(eig.eigenvalues.min())
}

/// `Q(u) = ∫(|∇^s u|^p + h|u|^p) dμ / ∫|u|^p dμ` and its μ-gradient.
fn quotient(k: &FracKernel, h: &[f64], p: f64, u: &VertexFunction) -> Result<(f64, VertexFunction)> {
    let mu = k.graph().mu();
    let len = frac_length(k, u)?;
    let n = k.len();
    let num: f64 = (0..n).map(|x| mu[x] * (len[x].powf(p) + h[x] * u[x].abs().powf(p))).sum();
    let den: f64 = (0..n).map(|x| mu[x] * u[x].abs().powf(p)).sum();
    let q = num / den;
    let lap = frac_p_laplacian(k, u, p)?;
    let grad = DVector::from_fn(n, |x, _| p / den * (lap[x] + h[x] * signed_pow(u[x], p) - q * signed_pow(u[x], p)));
    Ok((q, grad))
}

fn mu_norm(mu: &[f64], v: &VertexFunction) -> f64 {
    v.iter().zip(mu).map(|(a, m)| m * a * a).sum::<f64>().sqrt()
}

/// Estimate of `λ_p = inf ∫(|∇^s u|^p + h|u|^p) dμ / ∫|u|^p dμ`.
///
/// `p = 2` is solved exactly as an eigenproblem. For `p > 2` the quotient is
/// minimized by normalized gradient descent with Armijo backtracking from the
/// constant function and `cfg.starts` random starts; the result is an upper bound.
pub fn rayleigh_lambda(k: &FracKernel, h: &[f64], p: f64, cfg: &RayleighConfig) -> Result<RayleighEstimate> {
    check_exponent(p)?;
    if h.len() != k.len() {
        return Err(Error::DimensionMismatch { expected: k.len(), got: h.len() });
    }
    if let Some(x) = h.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::InvalidArgument(format!("potential must be positive, h({x}) = {}", h[x])));
    }
    let p2 = lambda_p2(k, h)?;
    if p == 2.0 {
        return Ok(RayleighEstimate {
            value: p2,
            certificate: Certificate::Exact,
            p,
            p2_reference: p2,
            start_values: Vec::new(),
        });
    }

    let n = k.len();
    let mu = k.graph().mu();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut starts = vec![DVector::from_element(n, 1.0)];
    for _ in 0..cfg.starts {
        starts.push(DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)));
    }

    let normalize = |u: VertexFunction| -> VertexFunction {
        let nrm = lq_norm(mu, &u, p);
        u / nrm
    };
    let mut values = Vec::with_capacity(starts.len());
    let mut traces = Vec::new();
    let mut any_converged = false;
    for start in starts {
        let mut u = normalize(start);
        let (mut q, mut g) = quotient(k, h, p, &u)?;
        let mut eta: f64 = 0.1;
        let mut converged = false;
        let mut iters = 0;
        while iters < cfg.max_iter {
            let gn = mu_norm(mu, &g);
            if gn <= cfg.tol * (1.0 + q.abs()) {
                converged = true;
                break;
            }
            iters += 1;
            eta = (eta * 2.0).min(1e3);
            let mut accepted = false;
            while eta > 1e-18 {
                let cand = normalize(&u - &g * eta);
                let (qc, gc) = quotient(k, h, p, &cand)?;
                if qc <= q - 1e-4 * eta * gn * gn {
                    u = cand;
                    q = qc;
                    g = gc;
                    accepted = true;
                    break;
                }
                eta *= 0.5;
            }
            if !accepted {
                // No further decrease is representable; the iterate is stationary
                // to working precision.
                converged = gn <= 1e-6 * (1.0 + q.abs());
                break;
            }
        }
        any_converged |= converged;
        traces.push(format!("start {}: Q = {q:.12e}, iters = {iters}, converged = {converged}", values.len()));
        values.push(q);
    }
    if !any_converged {
        return Err(Error::NotConverged(traces));
    }
    let value = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(RayleighEstimate { value, certificate: Certificate::UpperBound, p, p2_reference: p2, start_values: values })
}

/// `(|a|^{p−2}a − |b|^{p−2}b)(a − b) − |a − b|^p` for `ab >= 0`.
pub fn scalar_inequality_gap(a: f64, b: f64, p: f64) -> Result<f64> {
    check_exponent(p)?;
    if a * b < 0.0 {
        return Err(Error::Precondition(format!("requires ab >= 0, got a = {a}, b = {b}")));
    }
    Ok((signed_pow(a, p) - signed_pow(b, p)) * (a - b) - (a - b).abs().powf(p))
}

/// `(|a|^{p−2}a − |b|^{p−2}b)·(a − b) − |a − b|^p / (2^{p−2} p)`.
pub fn vector_inequality_gap(a: &[f64], b: &[f64], p: f64) -> Result<f64> {
    check_exponent(p)?;
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let (na, nb) = (pow_pm2(norm(a), p), pow_pm2(norm(b), p));
    let dot: f64 = a.iter().zip(b).map(|(x, y)| (na * x - nb * y) * (x - y)).sum();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    Ok(dot - norm(&diff).powf(p) / (2f64.powf(p - 2.0) * p))
}
