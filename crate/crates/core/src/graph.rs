//! Weighted graphs `G = (V, E, μ, w)`: builders, the edge-list loader, the
//! μ-normalized graph Laplacian and hop distances.
//!
//! Vertices are indexed `0..n` in construction (or first-appearance) order;
//! labels only matter for I/O.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::fmt_f64;

/// A real function on the vertex set.
pub type VertexFunction = DVector<f64>;

/// Connected, finite, undirected weighted graph with a positive vertex measure.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    mu: Vec<f64>,
    w: DMatrix<f64>,
    labels: Vec<String>,
}

impl WeightedGraph {
    /// Validates and wraps a measure vector and a dense weight matrix.
    ///
    /// Fails unless `μ > 0`, `w` is symmetric, nonnegative, has a zero
    /// diagonal, and the graph `{(x, y) : w(x, y) > 0}` is connected.
    pub fn new(mu: Vec<f64>, w: DMatrix<f64>, labels: Option<Vec<String>>) -> Result<Self> {
        let n = mu.len();
        if n == 0 {
            return Err(Error::InvalidGraph("graph has no vertices".into()));
        }
        if w.nrows() != n || w.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: w.nrows() });
        }
        let labels = match labels {
            Some(l) if l.len() != n => return Err(Error::DimensionMismatch { expected: n, got: l.len() }),
            Some(l) => l,
            None => (0..n).map(|i| i.to_string()).collect(),
        };
        for (x, &m) in mu.iter().enumerate() {
            if !(m.is_finite() && m > 0.0) {
                return Err(Error::InvalidGraph(format!(
                    "measure of `{}` must be positive and finite, got {m}",
                    labels[x]
                )));
            }
        }
        for x in 0..n {
            if w[(x, x)] != 0.0 {
                return Err(Error::InvalidGraph(format!("self-loop at `{}`", labels[x])));
            }
            for y in (x + 1)..n {
                let (a, b) = (w[(x, y)], w[(y, x)]);
                if !(a.is_finite() && a >= 0.0) {
                    return Err(Error::InvalidGraph(format!(
                        "weight ({}, {}) must be nonnegative and finite, got {a}",
                        labels[x], labels[y]
                    )));
                }
                if a != b {
                    return Err(Error::InvalidGraph(format!(
                        "weights are not symmetric at ({}, {})",
                        labels[x], labels[y]
                    )));
                }
            }
        }
        let g = Self { mu, w, labels };
        g.check_connected()?;
        Ok(g)
    }

    /// Builds a graph from an undirected edge list with explicit measure.
    pub fn from_edges(mu: Vec<f64>, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let n = mu.len();
        let mut w = DMatrix::zeros(n, n);
        for &(x, y, wt) in edges {
            if x >= n || y >= n {
                return Err(Error::UnknownVertex(x.max(y).to_string()));
            }
            if x == y {
                return Err(Error::InvalidGraph(format!("self-loop at `{x}`")));
            }
            if !(wt.is_finite() && wt > 0.0) {
                return Err(Error::InvalidGraph(format!("edge ({x}, {y}) needs a positive weight, got {wt}")));
            }
            w[(x, y)] = wt;
            w[(y, x)] = wt;
        }
        Self::new(mu, w, None)
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: labels.len() });
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn vertex_index(&self, label: &str) -> Result<usize> {
        self.labels.iter().position(|l| l == label).ok_or_else(|| Error::UnknownVertex(label.to_string()))
    }

    pub fn edge_count(&self) -> usize {
        let n = self.len();
        (0..n).map(|x| ((x + 1)..n).filter(|&y| self.w[(x, y)] > 0.0).count()).sum()
    }

    pub fn neighbors(&self, x: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&y| self.w[(x, y)] > 0.0)
    }

    /// Total measure `μ(V)`.
    pub fn volume(&self) -> f64 {
        self.mu.iter().sum()
    }

    /// Matrix of `Δu(x) = (1/μ(x)) Σ_y w(x,y) (u(x) − u(y))`.
    ///
    /// With this sign the semigroup `e^{−tL}` is the heat semigroup and its
    /// kernel with respect to μ satisfies `Σ_y p(t,x,y) μ(y) = 1`.
    pub fn laplacian_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(
            n,
            n,
            |x, y| {
                if x == y {
                    self.w.row(x).sum() / self.mu[x]
                } else {
                    -self.w[(x, y)] / self.mu[x]
                }
            },
        )
    }

    /// Breadth-first hop counts `d(x, x0)`.
    pub fn graph_distance(&self, x0: usize) -> Result<Vec<usize>> {
        if x0 >= self.len() {
            return Err(Error::UnknownVertex(x0.to_string()));
        }
        Ok(self.bfs(x0).into_iter().map(|d| d.expect("connected graph")).collect())
    }

    /// Induced subgraph on the ball `B_r(x0) = {x : d(x, x0) <= r}`, keeping μ and w.
    pub fn ball_subgraph(&self, x0: usize, r: usize) -> Result<WeightedGraph> {
        let dist = self.graph_distance(x0)?;
        let keep: Vec<usize> = (0..self.len()).filter(|&x| dist[x] <= r).collect();
        self.induced(&keep)
    }

    /// Induced subgraph on `keep` (in the given order). Fails if it is disconnected.
    pub fn induced(&self, keep: &[usize]) -> Result<WeightedGraph> {
        let m = keep.len();
        let w = DMatrix::from_fn(m, m, |i, j| self.w[(keep[i], keep[j])]);
        let mu = keep.iter().map(|&x| self.mu[x]).collect();
        let labels = keep.iter().map(|&x| self.labels[x].clone()).collect();
        WeightedGraph::new(mu, w, Some(labels))
    }

    /// Edge-list text, one `u v weight` line per edge, weights at 17 significant digits.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        let n = self.len();
        for x in 0..n {
            for y in (x + 1)..n {
                if self.w[(x, y)] > 0.0 {
                    let _ = writeln!(out, "{} {} {}", self.labels[x], self.labels[y], fmt_f64(self.w[(x, y)]));
                }
            }
        }
        out
    }

    /// Measure text, one `u mu` line per vertex.
    pub fn to_measure_list(&self) -> String {
        let mut out = String::new();
        for (l, m) in self.labels.iter().zip(&self.mu) {
            let _ = writeln!(out, "{} {}", l, fmt_f64(*m));
        }
        out
    }

    fn bfs(&self, x0: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.len()];
        dist[x0] = Some(0);
        let mut queue = VecDeque::from([x0]);
        while let Some(x) = queue.pop_front() {
            let d = dist[x].unwrap();
            for y in self.neighbors(x) {
                if dist[y].is_none() {
                    dist[y] = Some(d + 1);
                    queue.push_back(y);
                }
            }
        }
        dist
    }

    fn check_connected(&self) -> Result<()> {
        let dist = self.bfs(0);
        match dist.iter().position(Option::is_none) {
            None => Ok(()),
            Some(y) => Err(Error::Disconnected(self.labels[0].clone(), self.labels[y].clone())),
        }
    }
}

/// Path graph `0 - 1 - … - n−1`. `mu` has length `n`, `w` length `n − 1`;
/// either defaults to all ones.
pub fn build_path(n: usize, mu: Option<&[f64]>, w: Option<&[f64]>) -> Result<WeightedGraph> {
    if n == 0 {
        return Err(Error::InvalidArgument("path needs at least one vertex".into()));
    }
    let mu = match mu {
        Some(m) if m.len() != n => return Err(Error::DimensionMismatch { expected: n, got: m.len() }),
        Some(m) => m.to_vec(),
        None => vec![1.0; n],
    };
    let weights = match w {
        Some(w) if w.len() != n - 1 => return Err(Error::DimensionMismatch { expected: n - 1, got: w.len() }),
        Some(w) => w.to_vec(),
        None => vec![1.0; n - 1],
    };
    let edges: Vec<_> = weights.iter().enumerate().map(|(i, &wt)| (i, i + 1, wt)).collect();
    WeightedGraph::from_edges(mu, &edges)
}

/// Cycle graph on `n >= 3` vertices, unit measure and weights.
pub fn build_cycle(n: usize) -> Result<WeightedGraph> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!("cycle needs n >= 3, got {n}")));
    }
    let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
    WeightedGraph::from_edges(vec![1.0; n], &edges)
}

/// `nx × ny` patch of the square lattice with unit measure and weights.
///
/// Vertex `(i, j)` has index `i + nx·j` and label `i_j`.
pub fn build_grid(nx: usize, ny: usize) -> Result<WeightedGraph> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidArgument(format!("grid dimensions must be positive, got {nx}x{ny}")));
    }
    let idx = |i: usize, j: usize| i + nx * j;
    let mut edges = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            if i + 1 < nx {
                edges.push((idx(i, j), idx(i + 1, j), 1.0));
            }
            if j + 1 < ny {
                edges.push((idx(i, j), idx(i, j + 1), 1.0));
            }
        }
    }
    let labels = (0..ny).flat_map(|j| (0..nx).map(move |i| format!("{i}_{j}"))).collect();
    WeightedGraph::from_edges(vec![1.0; nx * ny], &edges)?.with_labels(labels)
}

/// Random connected graph: a random spanning tree plus extra edges with
/// probability `extra_p`; measures and weights uniform in `[0.5, 2]`.
pub fn random_connected<R: Rng + ?Sized>(n: usize, extra_p: f64, rng: &mut R) -> Result<WeightedGraph> {
    if n == 0 {
        return Err(Error::InvalidArgument("graph needs at least one vertex".into()));
    }
    let mut w = DMatrix::zeros(n, n);
    for y in 1..n {
        let x = rng.random_range(0..y);
        let wt = rng.random_range(0.5..2.0);
        w[(x, y)] = wt;
        w[(y, x)] = wt;
    }
    for x in 0..n {
        for y in (x + 1)..n {
            if w[(x, y)] == 0.0 && rng.random_bool(extra_p) {
                let wt = rng.random_range(0.5..2.0);
                w[(x, y)] = wt;
                w[(y, x)] = wt;
            }
        }
    }
    let mu = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    WeightedGraph::new(mu, w, None)
}

/// Parses an edge list (`u v weight` per line) and an optional measure list
/// (`u mu` per line). `#` starts a comment. Missing measures default to 1.
pub fn load_graph(edge_list: &str, measure: Option<&str>) -> Result<WeightedGraph> {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut labels: Vec<String> = Vec::new();
    let mut edges: HashMap<(usize, usize), f64> = HashMap::new();

    let mut intern = |label: &str, labels: &mut Vec<String>| -> usize {
        *index.entry(label.to_string()).or_insert_with(|| {
            labels.push(label.to_string());
            labels.len() - 1
        })
    };

    for (lineno, fields) in data_lines(edge_list) {
        let [u, v, wt] = fields[..] else {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected `u v weight`, got {} fields", fields.len()),
            });
        };
        let wt: f64 = parse_num(wt, lineno)?;
        if u == v {
            return Err(Error::InvalidGraph(format!("self-loop at `{u}` (line {lineno})")));
        }
        if !(wt.is_finite() && wt > 0.0) {
            return Err(Error::InvalidGraph(format!(
                "edge ({u}, {v}) needs a positive weight, got {wt} (line {lineno})"
            )));
        }
        let (a, b) = (intern(u, &mut labels), intern(v, &mut labels));
        let key = (a.min(b), a.max(b));
        match edges.get(&key) {
            Some(&old) if old != wt => {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) listed with conflicting weights {old} and {wt} (line {lineno})"
                )))
            }
            _ => {
                edges.insert(key, wt);
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::InvalidGraph("edge list contains no edges".into()));
    }

    let n = labels.len();
    let mut mu = vec![1.0; n];
    if let Some(text) = measure {
        for (lineno, fields) in data_lines(text) {
            let [u, m] = fields[..] else {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected `u mu`, got {} fields", fields.len()),
                });
            };
            let x = labels.iter().position(|l| l == u).ok_or_else(|| Error::UnknownVertex(u.to_string()))?;
            mu[x] = parse_num(m, lineno)?;
        }
    }

    let mut w = DMatrix::zeros(n, n);
    for (&(a, b), &wt) in &edges {
        w[(a, b)] = wt;
        w[(b, a)] = wt;
    }
    WeightedGraph::new(mu, w, Some(labels))
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.split('#').next().unwrap_or("");
        let fields: Vec<&str> = line.split_whitespace().collect();
        (!fields.is_empty()).then_some((i + 1, fields))
    })
}

fn parse_num(s: &str, line: usize) -> Result<f64> {
    s.parse().map_err(|_| Error::Parse { line, msg: format!("`{s}` is not a number") })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn k2_laplacian() {
        let g = build_path(2, None, None).unwrap();
        let l = g.laplacian_matrix();
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn single_vertex() {
        let g = build_path(1, None, None).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.laplacian_matrix()[(0, 0)], 0.0);
        assert_eq!(build_grid(1, 1).unwrap().len(), 1);
    }

    #[test]
    fn laplacian_annihilates_constants() {
        let g = build_path(3, None, None).unwrap();
        let ones = DVector::from_element(3, 1.0);
        assert_eq!(g.laplacian_matrix() * ones, DVector::zeros(3));
    }

    #[test]
    fn grid_counts() {
        let g = build_grid(2, 2).unwrap();
        assert_eq!((g.len(), g.edge_count()), (4, 4));
        let g = build_grid(10, 10).unwrap();
        assert_eq!((g.len(), g.edge_count()), (100, 10 * 9 + 10 * 9));
        assert!(build_grid(0, 3).is_err());
    }

    #[test]
    fn rejects_bad_measure_and_weight() {
        assert!(build_path(2, Some(&[1.0, 0.0]), None).is_err());
        assert!(build_path(2, None, Some(&[-1.0])).is_err());
        assert!(build_path(0, None, None).is_err());
    }

    #[test]
    fn load_k2() {
        let g = load_graph("a b 1.0\n", None).unwrap();
        assert_eq!(g.labels(), ["a", "b"]);
        assert_eq!(g.laplacian_matrix(), build_path(2, None, None).unwrap().laplacian_matrix());
    }

    #[test]
    fn load_disconnected_names_vertices() {
        let err = load_graph("a b 1.0\nc d 1.0", None).unwrap_err();
        match err {
            Error::Disconnected(a, b) => assert_eq!((a.as_str(), b.as_str()), ("a", "c")),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn load_rejects_self_loop_conflicts_and_nonpositive() {
        assert!(matches!(load_graph("a b 2.0\na a 1.0", None), Err(Error::InvalidGraph(_))));
        assert!(matches!(load_graph("a b 2.0\nb a 1.0", None), Err(Error::InvalidGraph(_))));
        assert!(load_graph("a b 2.0\nb a 2.0", None).is_ok());
        assert!(load_graph("a b 0", None).is_err());
        assert!(load_graph("a b 1\n", Some("a -1")).is_err());
        assert!(matches!(load_graph("a b 1\n", Some("z 1")), Err(Error::UnknownVertex(_))));
        assert!(matches!(load_graph("a b\n", None), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn load_measure_and_comments() {
        let g = load_graph("# header\na b 1.5 # trailing\nb c 0.25\n", Some("b 2.0\n")).unwrap();
        assert_eq!(g.mu(), [1.0, 2.0, 1.0]);
        assert_eq!(g.weights()[(1, 2)], 0.25);
    }

    #[test]
    fn edge_list_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_connected(12, 0.3, &mut rng).unwrap();
        let back = load_graph(&g.to_edge_list(), Some(&g.to_measure_list())).unwrap();
        // Loading reorders vertices by first appearance; compare through labels.
        for x in 0..g.len() {
            let bx = back.vertex_index(&g.labels()[x]).unwrap();
            assert_eq!(back.mu()[bx].to_bits(), g.mu()[x].to_bits());
            for y in 0..g.len() {
                let by = back.vertex_index(&g.labels()[y]).unwrap();
                assert_eq!(back.weights()[(bx, by)].to_bits(), g.weights()[(x, y)].to_bits());
            }
        }
    }

    #[test]
    fn distances() {
        let k2 = build_path(2, None, None).unwrap();
        assert_eq!(k2.graph_distance(0).unwrap(), [0, 1]);
        let p3 = build_path(3, None, None).unwrap();
        assert_eq!(p3.graph_distance(0).unwrap(), [0, 1, 2]);
        let g = build_grid(3, 3).unwrap();
        assert_eq!(*g.graph_distance(4).unwrap().iter().max().unwrap(), 2);
        assert!(matches!(k2.graph_distance(5), Err(Error::UnknownVertex(_))));
    }

    #[test]
    fn balls() {
        let p5 = build_path(5, None, None).unwrap();
        assert_eq!(p5.ball_subgraph(2, 0).unwrap().len(), 1);
        let b = p5.ball_subgraph(2, 1).unwrap();
        assert_eq!(b.laplacian_matrix(), build_path(3, None, None).unwrap().laplacian_matrix());
        assert_eq!(build_grid(5, 5).unwrap().ball_subgraph(0, 2).unwrap().len(), 6);
        assert_eq!(p5.ball_subgraph(0, 4).unwrap(), p5);
    }
}
