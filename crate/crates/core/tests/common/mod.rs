//! Test-side oracles and the shared graph suite.
#![allow(dead_code)]

use fracgraph::graph::{build_cycle, build_grid, build_path, random_connected};
use fracgraph::WeightedGraph;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Cyclic Jacobi rotations for a symmetric matrix; returns `(eigenvalues, eigenvectors as columns)`.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = DMatrix::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .map(|(i, j)| a[(i, j)].powi(2))
            .sum();
        let total: f64 = a.iter().map(|x| x * x).sum();
        if off <= 1e-32 * total.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}

/// `g(L)` for `L = M⁻¹(D − W)`, through the symmetric similarity `M^{1/2} L M^{−1/2}`.
pub fn laplacian_function(g: &WeightedGraph, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let n = g.len();
    let mu = g.mu();
    let w = g.weights();
    let sym = DMatrix::from_fn(n, n, |x, y| {
        let deg: f64 = if x == y { (0..n).map(|z| w[(x, z)]).sum() } else { 0.0 };
        (deg - w[(x, y)]) / (mu[x] * mu[y]).sqrt()
    });
    let scale = sym.amax().max(1.0);
    let (lam, v) = jacobi_eigen(&sym);
    // rounding-level eigenvalues are the kernel (constants) of a connected graph
    let fl: Vec<f64> = lam.iter().map(|&l| f(if l.abs() <= 1e-12 * scale { 0.0 } else { l })).collect();
    DMatrix::from_fn(n, n, |x, y| {
        let s: f64 = (0..n).map(|k| v[(x, k)] * fl[k] * v[(y, k)]).sum();
        s * (mu[y] / mu[x]).sqrt()
    })
}

/// `L^s` by the independent eigensolver.
pub fn laplacian_power(g: &WeightedGraph, s: f64) -> DMatrix<f64> {
    laplacian_function(g, |l| if l == 0.0 { 0.0 } else { l.powf(s) })
}

/// K2, P3, P5, C6, grid 4×4 and 20 random connected graphs with `n ≤ 20`.
pub fn suite() -> Vec<(String, WeightedGraph)> {
    let mut out = vec![
        ("K2".to_string(), build_path(2, None, None).unwrap()),
        ("P3".to_string(), build_path(3, None, None).unwrap()),
        ("P5".to_string(), build_path(5, None, None).unwrap()),
        ("C6".to_string(), build_cycle(6).unwrap()),
        ("grid4x4".to_string(), build_grid(4, 4).unwrap()),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..20 {
        let n = rng.random_range(2..=20);
        let p = rng.random_range(0.05..0.4);
        out.push((format!("random{i}(n={n})"), random_connected(n, p, &mut rng).unwrap()));
    }
    out
}

/// The graphs of [`suite`] that carry the counting measure.
pub fn unit_measure_suite() -> Vec<(String, WeightedGraph)> {
    suite().into_iter().filter(|(_, g)| g.mu().iter().all(|&m| m == 1.0)).collect()
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, b| a.max(b.abs()))
}
