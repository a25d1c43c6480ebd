//! The problem `(−Δ)_p^s u + h|u|^{p−2}u = f(x, u)` on a finite graph.
//!
//! Energy `E(u) = (1/p) ∫ (|∇^s u|^p + h|u|^p) dμ − ∫ F(x, u⁺) dμ`, its Nehari
//! manifold `{u ≠ 0 : ⟨E′(u), u⟩ = 0}`, a projected-descent ground state
//! solver, a path-based mountain-pass solver and residual checks.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::calculus::{check_exponent, frac_length, frac_p_laplacian, p_dirichlet_form, signed_pow, RayleighEstimate};
use crate::error::{Error, Result};
use crate::graph::{VertexFunction, WeightedGraph};
use crate::kernel::FracKernel;

/// Number of random test functions in the weak-form check.
pub const WEAK_TESTS: usize = 20;
const WEAK_SEED: u64 = 0x5eed_f00d;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PotentialSpec {
    Constant {
        h0: f64,
    },
    /// `h(x) = h0 + c · d(x, x0)` with the hop distance `d`.
    Affine {
        h0: f64,
        c: f64,
        x0: usize,
    },
    Table {
        values: Vec<f64>,
    },
}

impl PotentialSpec {
    pub fn values(&self, g: &WeightedGraph) -> Result<Vec<f64>> {
        let h = match self {
            Self::Constant { h0 } => vec![*h0; g.len()],
            Self::Affine { h0, c, x0 } => {
                if !(*c >= 0.0) || !c.is_finite() {
                    return Err(Error::InvalidArgument(format!("affine slope must be nonnegative, got {c}")));
                }
                g.graph_distance(*x0)?.into_iter().map(|d| h0 + c * d as f64).collect()
            }
            Self::Table { values } => {
                if values.len() != g.len() {
                    return Err(Error::DimensionMismatch { expected: g.len(), got: values.len() });
                }
                values.clone()
            }
        };
        if let Some(x) = h.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("potential must be positive, h({x}) = {}", h[x])));
        }
        Ok(h)
    }

    /// Whether the spec grows without bound along truncation families.
    pub fn is_coercive(&self) -> bool {
        matches!(self, Self::Affine { c, .. } if *c > 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coefficient {
    Uniform(f64),
    PerVertex(Vec<f64>),
}

impl Coefficient {
    fn at(&self, x: usize) -> f64 {
        match self {
            Self::Uniform(a) => *a,
            Self::PerVertex(v) => v[x],
        }
    }
}

/// One term `a(x) y^{q−1}` of a power-sum nonlinearity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTerm {
    pub a: Coefficient,
    pub q: f64,
}

type ScalarFn = Arc<dyn Fn(usize, f64) -> f64 + Send + Sync>;

/// `f(x, y)` for `y ≥ 0`, extended by zero to `y ≤ 0`.
#[derive(Clone)]
pub enum NonlinearitySpec {
    PowerSum(Vec<PowerTerm>),
    /// User-supplied `f` and its primitive `F`; accepted without certification.
    Custom {
        name: String,
        f: ScalarFn,
        primitive: ScalarFn,
    },
}

impl fmt::Debug for NonlinearitySpec {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::PowerSum(t) => fm.debug_tuple("PowerSum").field(t).finish(),
            Self::Custom { name, .. } => fm.debug_struct("Custom").field("name", name).finish(),
        }
    }
}

impl NonlinearitySpec {
    /// `f(y) = a y^{q−1}`.
    pub fn power(q: f64, a: f64) -> Self {
        Self::PowerSum(vec![PowerTerm { a: Coefficient::Uniform(a), q }])
    }

    pub fn custom(
        name: impl Into<String>,
        f: impl Fn(usize, f64) -> f64 + Send + Sync + 'static,
        primitive: impl Fn(usize, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::Custom { name: name.into(), f: Arc::new(f), primitive: Arc::new(primitive) }
    }

    pub fn f(&self, x: usize, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        match self {
            Self::PowerSum(terms) => terms.iter().map(|t| t.a.at(x) * y.powf(t.q - 1.0)).sum(),
            Self::Custom { f, .. } => f(x, y),
        }
    }

    pub fn primitive(&self, x: usize, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        match self {
            Self::PowerSum(terms) => terms.iter().map(|t| t.a.at(x) * y.powf(t.q) / t.q).sum(),
            Self::Custom { primitive, .. } => primitive(x, y),
        }
    }

    /// `min_j q_j` for power sums.
    pub fn alpha(&self) -> Option<f64> {
        match self {
            Self::PowerSum(terms) => terms.iter().map(|t| t.q).reduce(f64::min),
            Self::Custom { .. } => None,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Self::PowerSum(terms) => terms
                .iter()
                .map(|t| match &t.a {
                    Coefficient::Uniform(a) => format!("{a}*y^{}", t.q - 1.0),
                    Coefficient::PerVertex(_) => format!("a(x)*y^{}", t.q - 1.0),
                })
                .collect::<Vec<_>>()
                .join(" + "),
            Self::Custom { name, .. } => name.clone(),
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        let Self::PowerSum(terms) = self else { return Ok(()) };
        if terms.is_empty() {
            return Err(Error::InvalidArgument("power sum needs at least one term".into()));
        }
        for t in terms {
            if !(t.q > 1.0) || !t.q.is_finite() {
                return Err(Error::InvalidArgument(format!("exponent q = {} must exceed 1", t.q)));
            }
            let ok = match &t.a {
                Coefficient::Uniform(a) => *a > 0.0 && a.is_finite(),
                Coefficient::PerVertex(v) => {
                    if v.len() != n {
                        return Err(Error::DimensionMismatch { expected: n, got: v.len() });
                    }
                    v.iter().all(|a| *a > 0.0 && a.is_finite())
                }
            };
            if !ok {
                return Err(Error::InvalidArgument("coefficients must be positive and finite".into()));
            }
        }
        Ok(())
    }
}

/// Which structural hypotheses hold. `None` means not checkable (custom `f`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// `f(x, ·)` continuous on `y >= 0` with `f(x, 0) = 0`.
    pub a1: Option<bool>,
    /// `f` bounded on `V × [0, M]` for every `M`.
    pub a2: Option<bool>,
    /// `0 < α F(x, y) <= y f(x, y)` for some `α > p`.
    pub a3: Option<bool>,
    /// `limsup_{y→0⁺} f(x, y)/y^{p−1} < λ_p` uniformly in `x`.
    pub a4: Option<bool>,
    /// `f(x, y)/y^{p−1}` strictly increasing in `y > 0`.
    pub a5: Option<bool>,
    /// `inf h > 0`.
    pub h1: bool,
    /// Potential grows with the distance to a base vertex.
    pub h2: bool,
    pub alpha: Option<f64>,
    pub h0: f64,
    pub lambda_p: Option<RayleighEstimate>,
}

impl AssumptionReport {
    pub fn certified(&self) -> bool {
        [self.a1, self.a2, self.a3, self.a4, self.a5].iter().all(|v| *v == Some(true)) && self.h1
    }
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    kernel: FracKernel,
    p: f64,
    potential: PotentialSpec,
    h: Vec<f64>,
    f: NonlinearitySpec,
}

impl ProblemSpec {
    pub fn new(kernel: FracKernel, p: f64, potential: PotentialSpec, f: NonlinearitySpec) -> Result<Self> {
        check_exponent(p)?;
        let h = potential.values(kernel.graph())?;
        f.validate(kernel.len())?;
        Ok(Self { kernel, p, potential, h, f })
    }

    pub fn kernel(&self) -> &FracKernel {
        &self.kernel
    }

    pub fn graph(&self) -> &WeightedGraph {
        self.kernel.graph()
    }

    pub fn len(&self) -> usize {
        self.kernel.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernel.is_empty()
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn potential(&self) -> &PotentialSpec {
        &self.potential
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn nonlinearity(&self) -> &NonlinearitySpec {
        &self.f
    }

    /// Checks the hypotheses on `f` and `h`; `lambda` is kept as supporting data for `a4`.
    ///
    /// For power sums with every `q_j > p` the ratio `f(x,y)/y^{p−1}` vanishes at
    /// `0⁺`, and `λ_p ≥ inf h > 0`, so `a4` holds regardless of the estimate.
    pub fn assumptions(&self, lambda: Option<RayleighEstimate>) -> AssumptionReport {
        let h0 = self.h.iter().copied().fold(f64::INFINITY, f64::min);
        let (a1, a2, a3, a4, a5, alpha) = match &self.f {
            NonlinearitySpec::PowerSum(terms) => {
                let above_p = terms.iter().all(|t| t.q > self.p);
                let alpha = self.f.alpha();
                (Some(true), Some(true), Some(above_p), Some(above_p && h0 > 0.0), Some(above_p), alpha)
            }
            NonlinearitySpec::Custom { .. } => (None, None, None, None, None, None),
        };
        AssumptionReport {
            a1,
            a2,
            a3,
            a4,
            a5,
            h1: h0 > 0.0,
            h2: self.potential.is_coercive(),
            alpha,
            h0,
            lambda_p: lambda,
        }
    }

    fn check(&self, u: &VertexFunction) -> Result<()> {
        if u.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: u.len() });
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("vertex function has non-finite entries".into()));
        }
        Ok(())
    }

    /// `‖u‖^p_H = ∫ (|∇^s u|^p + h|u|^p) dμ`.
    pub fn norm_p(&self, u: &VertexFunction) -> Result<f64> {
        self.check(u)?;
        let len = frac_length(&self.kernel, u)?;
        let mu = self.graph().mu();
        Ok((0..self.len()).map(|x| mu[x] * (len[x].powf(self.p) + self.h[x] * u[x].abs().powf(self.p))).sum())
    }
}

pub fn energy(spec: &ProblemSpec, u: &VertexFunction) -> Result<f64> {
    let norm = spec.norm_p(u)?;
    let mu = spec.graph().mu();
    let pot: f64 = (0..spec.len()).map(|x| mu[x] * spec.f.primitive(x, u[x])).sum();
    Ok(norm / spec.p - pot)
}

/// The μ-representative `g = (−Δ)_p^s u + h|u|^{p−2}u − f(x, u⁺)` of `E′(u)`.
pub fn energy_gradient(spec: &ProblemSpec, u: &VertexFunction) -> Result<VertexFunction> {
    spec.check(u)?;
    let lap = frac_p_laplacian(&spec.kernel, u, spec.p)?;
    Ok(DVector::from_fn(spec.len(), |x, _| lap[x] + spec.h[x] * signed_pow(u[x], spec.p) - spec.f.f(x, u[x])))
}

/// `⟨E′(u), u⟩ = ‖u‖^p_H − ∫ f(x, u⁺) u⁺ dμ`.
pub fn nehari_functional(spec: &ProblemSpec, u: &VertexFunction) -> Result<f64> {
    let norm = spec.norm_p(u)?;
    let mu = spec.graph().mu();
    let nl: f64 = (0..spec.len()).map(|x| mu[x] * u[x].max(0.0) * spec.f.f(x, u[x])).sum();
    Ok(norm - nl)
}

fn require_positive_part(u: &VertexFunction) -> Result<()> {
    if u.iter().all(|v| *v <= 0.0) {
        return Err(Error::Precondition("u⁺ vanishes identically; no Nehari scaling exists".into()));
    }
    Ok(())
}

/// `φ(t) = ‖u‖^p_H − ∫ u⁺ f(x, t u⁺) / t^{p−1} dμ`.
pub fn nehari_phi(spec: &ProblemSpec, u: &VertexFunction, t: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("scaling t = {t} must be positive")));
    }
    require_positive_part(u)?;
    let norm = spec.norm_p(u)?;
    Ok(phi_with_norm(spec, u, norm, t))
}

fn phi_with_norm(spec: &ProblemSpec, u: &VertexFunction, norm: f64, t: f64) -> f64 {
    let mu = spec.graph().mu();
    let tp = t.powf(spec.p - 1.0);
    let nl: f64 = (0..spec.len()).filter(|&x| u[x] > 0.0).map(|x| mu[x] * u[x] * spec.f.f(x, t * u[x]) / tp).sum();
    norm - nl
}

/// The unique `t0 > 0` with `t0·u` on the Nehari manifold, and `t0·u`.
pub fn nehari_project(spec: &ProblemSpec, u: &VertexFunction) -> Result<(f64, VertexFunction)> {
    require_positive_part(u)?;
    let norm = spec.norm_p(u)?;
    if !(norm > 0.0) {
        return Err(Error::Precondition("‖u‖_H vanishes".into()));
    }
    let phi = |t: f64| phi_with_norm(spec, u, norm, t);
    let (mut lo, mut hi) = (1.0, 1.0);
    let mut steps = 0;
    if phi(1.0) > 0.0 {
        while phi(hi) > 0.0 {
            lo = hi;
            hi *= 2.0;
            steps += 1;
            if steps > 2000 || !hi.is_finite() {
                return Err(Error::Bracketing("φ(t) stays positive as t grows".into()));
            }
        }
    } else {
        while phi(lo) <= 0.0 {
            hi = lo;
            lo *= 0.5;
            steps += 1;
            if steps > 2000 || lo == 0.0 {
                return Err(Error::Bracketing("φ(t) stays nonpositive as t shrinks".into()));
            }
        }
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t0 = if phi(lo).abs() <= phi(hi).abs() { lo } else { hi };
    if phi(t0).abs() > 1e-9 * norm {
        return Err(Error::Bracketing(format!("φ is not monotone near t = {t0:.6e}")));
    }
    Ok((t0, u * t0))
}

fn mu_dot(mu: &[f64], a: &VertexFunction, b: &VertexFunction) -> f64 {
    a.iter().zip(b.iter()).zip(mu).map(|((a, b), m)| m * a * b).sum()
}

fn mu_norm(mu: &[f64], a: &VertexFunction) -> f64 {
    mu_dot(mu, a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Nehari,
    MountainPass,
    Verify,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Nehari => "nehari",
            Self::MountainPass => "mountain-pass",
            Self::Verify => "verify",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSummary {
    pub start: String,
    pub energy: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionReport {
    pub labels: Vec<String>,
    pub u: VertexFunction,
    pub energy: f64,
    pub nehari_residual: f64,
    pub pointwise_residual: f64,
    pub weak_residual: f64,
    pub min_u: f64,
    pub sup_norm: f64,
    pub method: Method,
    pub iterations: usize,
    pub converged: bool,
    /// `u ≡ 0`.
    pub trivial: bool,
    /// Energy per accepted iteration (Nehari) or path maximum per sweep (mountain pass).
    pub trace: Vec<f64>,
    /// Sweeps after which the path was re-spaced; the trace is monotone between them.
    pub stage_breaks: Vec<usize>,
    pub starts: Vec<StartSummary>,
}

impl SolutionReport {
    /// Whether the trace is non-increasing within every stage, up to rounding.
    pub fn trace_monotone(&self) -> bool {
        self.trace
            .windows(2)
            .enumerate()
            .all(|(i, w)| w[1] <= w[0] + FLAT * w[0].abs() || self.stage_breaks.contains(&(i + 1)))
    }

    /// JSON document with `u` keyed by vertex label, in vertex order.
    pub fn to_json(&self) -> Value {
        let mut u = Map::new();
        for (l, v) in self.labels.iter().zip(self.u.iter()) {
            u.insert(l.clone(), json!(v));
        }
        let trace = if self.trace.is_empty() {
            Value::Null
        } else {
            json!({
                "len": self.trace.len(),
                "first": self.trace[0],
                "last": self.trace[self.trace.len() - 1],
                "monotone": self.trace_monotone(),
                "stage_breaks": self.stage_breaks.len(),
            })
        };
        json!({
            "method": self.method.to_string(),
            "converged": self.converged,
            "trivial": self.trivial,
            "energy": self.energy,
            "nehari_residual": self.nehari_residual,
            "pointwise_residual": self.pointwise_residual,
            "weak_residual": self.weak_residual,
            "min_u": self.min_u,
            "sup_norm": self.sup_norm,
            "iterations": self.iterations,
            "u": Value::Object(u),
            "trace": trace,
            "starts": self.starts,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("vertex,u\n");
        for (l, v) in self.labels.iter().zip(self.u.iter()) {
            out.push_str(&format!("{l},{}\n", crate::fmt_f64(*v)));
        }
        out
    }
}

/// Reads `u` from a document produced by [`SolutionReport::to_json`] (or any
/// object with a `u` map keyed by label).
pub fn u_from_json(doc: &Value, g: &WeightedGraph) -> Result<VertexFunction> {
    let map = doc
        .get("u")
        .and_then(Value::as_object)
        .ok_or_else(|| Error::InvalidArgument("document has no \"u\" object".into()))?;
    if map.len() != g.len() {
        return Err(Error::DimensionMismatch { expected: g.len(), got: map.len() });
    }
    let mut u = DVector::zeros(g.len());
    for (label, v) in map {
        let x = g.vertex_index(label)?;
        u[x] = v.as_f64().ok_or_else(|| Error::InvalidArgument(format!("value for {label} is not a number")))?;
    }
    Ok(u)
}

fn pointwise_residual(spec: &ProblemSpec, u: &VertexFunction) -> Result<f64> {
    Ok(energy_gradient(spec, u)?.amax())
}

/// Recomputes every residual of `u`; reports rather than fails.
///
/// The weak form is tested against [`WEAK_TESTS`] functions with entries
/// uniform in `[−1, 1]`; the residual is `|lhs − rhs| / ∫|φ| dμ`, which is
/// comparable to the pointwise residual.
pub fn verify_solution(spec: &ProblemSpec, u: &VertexFunction, tol: f64) -> Result<SolutionReport> {
    spec.check(u)?;
    let n = spec.len();
    let mu = spec.graph().mu();
    let p = spec.p;
    let e = energy(spec, u)?;
    let nehari = nehari_functional(spec, u)?.abs();
    let pointwise = pointwise_residual(spec, u)?;
    let mut rng = ChaCha8Rng::seed_from_u64(WEAK_SEED);
    let mut weak: f64 = 0.0;
    for _ in 0..WEAK_TESTS {
        let phi = DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
        let lhs = p_dirichlet_form(&spec.kernel, u, &phi, p)?
            + (0..n).map(|x| mu[x] * spec.h[x] * signed_pow(u[x], p) * phi[x]).sum::<f64>();
        let rhs: f64 = (0..n).map(|x| mu[x] * spec.f.f(x, u[x]) * phi[x]).sum();
        let mass: f64 = (0..n).map(|x| mu[x] * phi[x].abs()).sum();
        weak = weak.max((lhs - rhs).abs() / mass);
    }
    let min_u = u.min();
    let trivial = u.amax() == 0.0;
    Ok(SolutionReport {
        labels: spec.graph().labels().to_vec(),
        u: u.clone(),
        energy: e,
        nehari_residual: nehari,
        pointwise_residual: pointwise,
        weak_residual: weak,
        min_u,
        sup_norm: u.amax(),
        method: Method::Verify,
        iterations: 0,
        converged: !trivial && pointwise <= tol && weak <= tol && min_u > 0.0 && e > 0.0,
        trivial,
        trace: Vec::new(),
        stage_breaks: Vec::new(),
        starts: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NehariConfig {
    pub random_starts: usize,
    pub constant_start: bool,
    pub max_iter: usize,
    /// Pointwise residual target.
    pub tol: f64,
    /// Relative energy change allowed over `window` iterations at convergence.
    pub energy_rtol: f64,
    pub window: usize,
    pub eta0: f64,
    pub armijo: f64,
    pub seed: u64,
}

impl Default for NehariConfig {
    fn default() -> Self {
        Self {
            random_starts: 8,
            constant_start: true,
            max_iter: 20_000,
            tol: 1e-8,
            energy_rtol: 1e-12,
            window: 10,
            eta0: 0.1,
            armijo: 1e-4,
            seed: 0,
        }
    }
}

/// Relative energy changes below this are treated as rounding noise.
const FLAT: f64 = 1e-13;

struct Run {
    u: VertexFunction,
    trace: Vec<f64>,
    iterations: usize,
    residual: f64,
    converged: bool,
}

fn nehari_descent(spec: &ProblemSpec, start: &VertexFunction, cfg: &NehariConfig) -> Result<Run> {
    let mu = spec.graph().mu();
    let (_, mut u) = nehari_project(spec, start)?;
    let mut e = energy(spec, &u)?;
    let mut trace = vec![e];
    let mut eta = cfg.eta0;
    let mut residual = f64::INFINITY;
    let window_ok = |t: &[f64]| {
        t.len() > cfg.window && {
            let last = t[t.len() - 1];
            (last - t[t.len() - 1 - cfg.window]).abs() <= cfg.energy_rtol * last.abs()
        }
    };
    for it in 0..cfg.max_iter {
        let g = energy_gradient(spec, &u)?;
        residual = g.amax();
        if residual <= cfg.tol && window_ok(&trace) {
            return Ok(Run { u, trace, iterations: it, residual, converged: true });
        }
        let gn2 = mu_dot(mu, &g, &g);
        let mut step = (eta * 2.0).min(1e3);
        let mut accepted = None;
        while step > 1e-20 {
            let cand = &u - &g * step;
            if let Ok((_, cand)) = nehari_project(spec, &cand) {
                let ec = energy(spec, &cand)?;
                let decrease = cfg.armijo * step * gn2;
                let ok = if decrease > FLAT * e.abs() {
                    ec <= e - decrease
                } else {
                    // the predicted decrease is below the resolution of E;
                    // accept on the residual instead
                    ec <= e + FLAT * e.abs() && energy_gradient(spec, &cand)?.amax() < residual
                };
                if ok {
                    accepted = Some((cand, ec));
                    break;
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some((cand, ec)) => {
                eta = step;
                u = cand;
                e = ec;
            }
            // stationary to working precision
            None if residual <= cfg.tol => {}
            None => return Ok(Run { u, trace, iterations: it, residual, converged: false }),
        }
        trace.push(e);
    }
    Ok(Run { u, trace, iterations: cfg.max_iter, residual, converged: false })
}

fn finish(
    spec: &ProblemSpec,
    run: Run,
    method: Method,
    tol: f64,
    stage_breaks: Vec<usize>,
    starts: Vec<StartSummary>,
) -> Result<SolutionReport> {
    let mut rep = verify_solution(spec, &run.u, tol)?;
    rep.converged =
        run.converged && !rep.trivial && rep.pointwise_residual <= tol && rep.min_u > 0.0 && rep.energy > 0.0;
    rep.method = method;
    rep.iterations = run.iterations;
    rep.trace = run.trace;
    rep.stage_breaks = stage_breaks;
    rep.starts = starts;
    Ok(rep)
}

/// Ground state by projected gradient descent on the Nehari manifold.
///
/// Each start iterates `u ← nehari_project(u − η g)` with Armijo backtracking;
/// starts run in parallel and the lowest-energy converged one is returned.
pub fn ground_state_solve(spec: &ProblemSpec, cfg: &NehariConfig) -> Result<SolutionReport> {
    let n = spec.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut starts: Vec<(String, VertexFunction)> = Vec::new();
    if cfg.constant_start {
        starts.push(("constant".into(), DVector::from_element(n, 1.0)));
    }
    for i in 0..cfg.random_starts {
        // (0, 1]
        starts.push((format!("random-{i}"), DVector::from_fn(n, |_, _| 1.0 - rng.random::<f64>())));
    }
    if starts.is_empty() {
        return Err(Error::InvalidArgument("no starts requested".into()));
    }
    let runs: Vec<Result<Run>> = starts.par_iter().map(|(_, u0)| nehari_descent(spec, u0, cfg)).collect();

    let mut summaries = Vec::with_capacity(runs.len());
    let mut best: Option<Run> = None;
    for ((name, _), run) in starts.iter().zip(runs) {
        match run {
            Ok(run) => {
                let e = *run.trace.last().unwrap();
                summaries.push(StartSummary {
                    start: name.clone(),
                    energy: e,
                    residual: run.residual,
                    iterations: run.iterations,
                    converged: run.converged,
                });
                if run.converged && best.as_ref().is_none_or(|b| e < *b.trace.last().unwrap()) {
                    best = Some(run);
                }
            }
            Err(err) => summaries.push(StartSummary {
                start: format!("{name}: {err}"),
                energy: f64::NAN,
                residual: f64::NAN,
                iterations: 0,
                converged: false,
            }),
        }
    }
    match best {
        Some(run) => finish(spec, run, Method::Nehari, cfg.tol, Vec::new(), summaries),
        None => Err(Error::NotConverged(
            summaries
                .iter()
                .map(|s| {
                    format!(
                        "{}: E = {:.12e}, residual = {:.3e}, iterations = {}",
                        s.start, s.energy, s.residual, s.iterations
                    )
                })
                .collect(),
        )),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MountainPassConfig {
    pub nodes: usize,
    pub max_sweeps: usize,
    /// Deformation sweeps between two re-spacings of the path.
    pub respace_every: usize,
    /// The path stage ends once the path maximum at the start of a stage
    /// drops by less than this relative amount over `stall_stages` stages.
    pub stall_rtol: f64,
    pub stall_stages: usize,
    /// Pointwise residual target.
    pub tol: f64,
    pub newton_max: usize,
    /// Size of the seeded bend of the initial path, relative to `‖u_1‖_μ`.
    pub perturbation: f64,
    pub seed: u64,
}

impl Default for MountainPassConfig {
    fn default() -> Self {
        Self {
            nodes: 41,
            max_sweeps: 100_000,
            respace_every: 10,
            stall_rtol: 1e-6,
            stall_stages: 5,
            tol: 1e-8,
            newton_max: 60,
            perturbation: 0.05,
            seed: 0,
        }
    }
}

/// `E(T·1) < 0` with `T` doubled from 1.
pub fn mountain_pass_endpoint(spec: &ProblemSpec) -> Result<VertexFunction> {
    let ones = DVector::from_element(spec.len(), 1.0);
    let mut t = 1.0;
    for _ in 0..200 {
        let u = &ones * t;
        if energy(spec, &u)? < 0.0 {
            return Ok(u);
        }
        t *= 2.0;
    }
    Err(Error::Bracketing("energy stays nonnegative along the constant ray".into()))
}

/// Redistributes the interior nodes uniformly in μ-arclength along the polyline.
fn respace(mu: &[f64], path: &mut [VertexFunction]) {
    let m = path.len();
    let mut arc = vec![0.0; m];
    for i in 1..m {
        arc[i] = arc[i - 1] + mu_norm(mu, &(&path[i] - &path[i - 1]));
    }
    let total = arc[m - 1];
    if !(total > 0.0) {
        return;
    }
    let old = path.to_vec();
    let mut seg = 0;
    for (i, node) in path.iter_mut().enumerate().take(m - 1).skip(1) {
        let target = total * i as f64 / (m - 1) as f64;
        while seg + 1 < m - 1 && arc[seg + 1] < target {
            seg += 1;
        }
        let len = arc[seg + 1] - arc[seg];
        let th = if len > 0.0 { ((target - arc[seg]) / len).clamp(0.0, 1.0) } else { 0.0 };
        *node = &old[seg] * (1.0 - th) + &old[seg + 1] * th;
    }
}

/// Symmetrized `M · J` where `J` is the central-difference Jacobian of the gradient.
fn hessian(spec: &ProblemSpec, u: &VertexFunction) -> Result<DMatrix<f64>> {
    let n = spec.len();
    let mu = spec.graph().mu();
    let mut j = DMatrix::zeros(n, n);
    for c in 0..n {
        let eps = 1e-5 * u[c].abs().max(1.0);
        let mut up = u.clone();
        up[c] += eps;
        let mut dn = u.clone();
        dn[c] -= eps;
        let col = (energy_gradient(spec, &up)? - energy_gradient(spec, &dn)?) / (2.0 * eps);
        j.set_column(c, &col);
    }
    let h = DMatrix::from_fn(n, n, |r, c| mu[r] * j[(r, c)]);
    Ok((&h + h.transpose()) * 0.5)
}

/// Mountain-pass critical point by min-max deformation of a discrete path.
///
/// The path runs from 0 to `u_1 = T·1` with `E(u_1) < 0`; interior nodes get
/// a small seeded bend so that symmetric instances are not pinned to the
/// straight ray. Each sweep takes an Armijo gradient step on the max-energy
/// node, so the path maximum never increases between two re-spacings; the
/// path is re-spaced uniformly in arclength every `respace_every` sweeps.
/// Once the path maximum stalls, the max node is refined by Newton's method
/// on `E′ = 0` with a finite-difference Hessian.
pub fn mountain_pass_solve(spec: &ProblemSpec, cfg: &MountainPassConfig) -> Result<SolutionReport> {
    if cfg.nodes < 3 || cfg.respace_every == 0 {
        return Err(Error::InvalidArgument("the path needs at least 3 nodes and a re-spacing period".into()));
    }
    let n = spec.len();
    let mu = spec.graph().mu();
    let u1 = mountain_pass_endpoint(spec)?;
    let m = cfg.nodes;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut bend = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let bn = mu_norm(mu, &bend);
    if bn > 0.0 {
        bend *= cfg.perturbation * mu_norm(mu, &u1) / bn;
    }
    let mut path: Vec<VertexFunction> = (0..m)
        .map(|i| {
            let th = i as f64 / (m - 1) as f64;
            &u1 * th + &bend * (std::f64::consts::PI * th).sin()
        })
        .collect();
    let mut energies: Vec<f64> = path.iter().map(|u| energy(spec, u)).collect::<Result<_>>()?;
    let argmax = |e: &[f64]| (1..m - 1).fold(1, |b, i| if e[i] > e[b] { i } else { b });

    let mut trace = Vec::new();
    let mut breaks = Vec::new();
    let mut stage_tops: Vec<f64> = Vec::new();
    let mut eta: f64 = 0.1;
    let mut sweeps = 0;
    'stages: while sweeps < cfg.max_sweeps {
        stage_tops.push(energies[argmax(&energies)]);
        let k = stage_tops.len();
        if k > cfg.stall_stages {
            let old = stage_tops[k - 1 - cfg.stall_stages];
            if old - stage_tops[k - 1] <= cfg.stall_rtol * stage_tops[k - 1].abs() {
                break;
            }
        }
        for _ in 0..cfg.respace_every {
            let i = argmax(&energies);
            trace.push(energies[i]);
            let g = energy_gradient(spec, &path[i])?;
            if g.amax() <= cfg.tol {
                break 'stages;
            }
            sweeps += 1;
            let gn2 = mu_dot(mu, &g, &g);
            // a node moves at most one mean spacing per sweep
            let spacing = (1..m).map(|j| mu_norm(mu, &(&path[j] - &path[j - 1]))).sum::<f64>() / (m - 1) as f64;
            let mut step = (eta * 2.0).min(spacing / gn2.sqrt());
            let mut moved = false;
            while step > 1e-20 {
                let cand = &path[i] - &g * step;
                let ec = energy(spec, &cand)?;
                if ec.is_finite() && ec <= energies[i] - 1e-4 * step * gn2 {
                    path[i] = cand;
                    energies[i] = ec;
                    eta = step;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                break 'stages;
            }
        }
        respace(mu, &mut path);
        for (e, u) in energies.iter_mut().zip(&path) {
            *e = energy(spec, u)?;
        }
        breaks.push(trace.len());
    }
    let top = argmax(&energies);

    let mut u = path[top].clone();
    let mut g = energy_gradient(spec, &u)?;
    let mut newton = 0;
    while g.amax() > cfg.tol && newton < cfg.newton_max {
        newton += 1;
        let h = hessian(spec, &u)?;
        if h.iter().any(|v| !v.is_finite()) {
            break;
        }
        let rhs = DVector::from_fn(n, |x, _| -mu[x] * g[x]);
        let delta = match h.clone().lu().solve(&rhs) {
            Some(d) if d.iter().all(|v| v.is_finite()) => d,
            _ => h.svd(true, true).solve(&rhs, 1e-12).map_err(|e| Error::Eigen(e.to_string()))?,
        };
        let gn = mu_norm(mu, &g);
        let mut alpha = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let cand = &u + &delta * alpha;
            let gc = energy_gradient(spec, &cand)?;
            if mu_norm(mu, &gc) < (1.0 - 1e-4 * alpha) * gn {
                u = cand;
                g = gc;
                improved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !improved {
            break;
        }
    }
    let residual = g.amax();
    if residual > cfg.tol || u.min() <= 0.0 {
        return Err(Error::NotConverged(vec![format!(
            "mountain pass: residual {residual:.3e} after {sweeps} sweeps and {newton} Newton steps, min u = {:.3e}",
            u.min()
        )]));
    }
    let run = Run { u, trace, iterations: sweeps + newton, residual, converged: true };
    let rep = finish(spec, run, Method::MountainPass, cfg.tol, breaks, Vec::new())?;
    if !rep.converged {
        return Err(Error::NotConverged(vec![format!(
            "mountain pass reached a critical point with energy {:.6e} and min u {:.3e}",
            rep.energy, rep.min_u
        )]));
    }
    Ok(rep)
}

/// Outcome of the sup-norm lower bound check on a Nehari point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinftyCheck {
    pub delta: f64,
    pub sup_norm: f64,
    pub pass: bool,
}

/// Every Nehari point satisfies `‖u‖_∞ ≥ δ`, where `δ` is the largest value
/// with `f(x, y) ≤ (λ_p − ε) y^{p−1}` on `[0, δ]` at every vertex.
pub fn check_linfty_lower_bound(
    spec: &ProblemSpec,
    u: &VertexFunction,
    lambda_p: f64,
    eps: f64,
) -> Result<LinftyCheck> {
    let margin = lambda_p - eps;
    if !(margin > 0.0) || !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("need 0 < ε < λ_p, got ε = {eps}, λ_p = {lambda_p}")));
    }
    let NonlinearitySpec::PowerSum(terms) = &spec.f else {
        return Err(Error::InvalidArgument("δ is only certified for power nonlinearities".into()));
    };
    if terms.iter().any(|t| t.q <= spec.p) {
        return Err(Error::InvalidArgument("δ needs every exponent above p".into()));
    }
    if u.amax() == 0.0 {
        return Err(Error::Precondition("u = 0 is not a Nehari point".into()));
    }
    let norm = spec.norm_p(u)?;
    let resid = nehari_functional(spec, u)?.abs();
    if resid > 1e-8 * norm {
        return Err(Error::Precondition(format!(
            "u is not on the Nehari manifold: |⟨E′(u),u⟩| = {resid:.3e}, ‖u‖^p = {norm:.3e}"
        )));
    }
    let p = spec.p;
    let mut delta = f64::INFINITY;
    for x in 0..spec.len() {
        // ratio(y) = f(x,y)/y^{p−1} is increasing from 0
        let ratio = |y: f64| -> f64 { terms.iter().map(|t| t.a.at(x) * y.powf(t.q - p)).sum() };
        let dx = if terms.len() == 1 {
            (margin / terms[0].a.at(x)).powf(1.0 / (terms[0].q - p))
        } else {
            let mut hi = 1.0;
            while ratio(hi) < margin {
                hi *= 2.0;
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if ratio(mid) <= margin {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        delta = delta.min(dx);
    }
    let sup_norm = u.amax();
    Ok(LinftyCheck { delta, sup_norm, pass: sup_norm >= delta })
}
