//! Communication graphs and mixing matrices.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

/// Maximum number of Erdős–Rényi redraws before giving up.
pub const MAX_REDRAWS: u64 = 1000;

/// Above this size [`spectral_deviation`] switches from a dense
/// eigendecomposition to power iteration.
pub const DENSE_EIGEN_LIMIT: usize = 64;

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 100_000;
const SCHUR_MAX_ITER: usize = 10_000;

/// Undirected simple graph on nodes `0..n`. Edges are stored as `(i, j)` with `i < j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Graph {
    /// Builds a graph, rejecting self-loops, duplicates and out-of-range nodes.
    /// Connectivity is not required here; see [`Graph::is_connected`].
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("graph needs at least one node".into()));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidArgument(format!("edge ({a},{b}) out of range for n={n}")));
            }
            if a == b {
                return Err(Error::InvalidArgument(format!("self-loop at node {a}")));
            }
            if !set.insert((a.min(b), a.max(b))) {
                return Err(Error::InvalidArgument(format!("duplicate edge ({a},{b})")));
            }
        }
        Ok(Graph { n, edges: set })
    }

    pub fn path(n: usize) -> Result<Self> {
        Graph::new(n, (1..n).map(|i| (i - 1, i)))
    }

    pub fn complete(n: usize) -> Result<Self> {
        Graph::new(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    /// Breadth-first reachability from node 0.
    pub fn is_connected(&self) -> bool {
        let adj = self.adjacency();
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &w in &adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == self.n
    }

    /// Edge-list text: first line `n`, then one `i j` line per edge.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("{}\n", self.n);
        for (a, b) in self.edges() {
            let _ = writeln!(out, "{a} {b}");
        }
        out
    }

    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let parse_err = |line: usize, message: String| Error::Parse {
            location: format!("line {line}"),
            message,
        };
        let (line, first) = lines.next().ok_or_else(|| parse_err(1, "missing node count".into()))?;
        let n: usize = first.parse().map_err(|e| parse_err(line, format!("node count: {e}")))?;
        let mut edges = Vec::new();
        for (line, l) in lines {
            let mut it = l.split_whitespace();
            let mut next = || -> Result<usize> {
                it.next()
                    .ok_or_else(|| parse_err(line, "expected `i j`".into()))?
                    .parse()
                    .map_err(|e| parse_err(line, format!("{e}")))
            };
            let (a, b) = (next()?, next()?);
            edges.push((a, b));
        }
        Graph::new(n, edges)
    }
}

/// Draws G(n, p) and redraws with an advanced seed until the result is
/// connected.
pub fn generate_erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Graph> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("Erdős–Rényi graph needs n >= 2, got {n}")));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidArgument(format!("edge probability {p} outside (0, 1]")));
    }
    for attempt in 0..MAX_REDRAWS {
        let mut stream = rng::stream(seed.wrapping_add(attempt), rng::GLOBAL, Purpose::Graph);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if stream.random::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        let g = Graph::new(n, edges)?;
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(Error::ConnectivityFailure { n, p, attempts: MAX_REDRAWS as usize })
}

/// Weight matrix used for neighbour averaging, with its cached spectral deviation
/// `ρ(A − 11ᵀ/n)`.
#[derive(Debug, Clone)]
pub struct MixingMatrix {
    w: DMatrix<f64>,
    rho_a: f64,
}

impl MixingMatrix {
    /// Wraps an arbitrary square matrix. No stochasticity is enforced, which
    /// lets tests build deliberately broken fixtures; `rho_a` is the spectral
    /// radius of `W − 11ᵀ/n` (complex eigenvalues for non-symmetric input).
    pub fn from_weights(w: DMatrix<f64>) -> Result<Self> {
        if !w.is_square() || w.nrows() == 0 {
            return Err(Error::InvalidArgument(format!(
                "mixing matrix must be square and non-empty, got {}x{}",
                w.nrows(),
                w.ncols()
            )));
        }
        let rho_a = if is_symmetric(&w) {
            spectral_deviation_of(&w)?
        } else {
            let n = w.nrows();
            let dev = &w - DMatrix::from_element(n, n, 1.0 / n as f64);
            general_spectral_radius(dev)?
        };
        Ok(MixingMatrix { w, rho_a })
    }

    pub fn identity(n: usize) -> Self {
        MixingMatrix { w: DMatrix::identity(n, n), rho_a: if n == 1 { 0.0 } else { 1.0 } }
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[(i, j)]
    }

    pub fn rho_a(&self) -> f64 {
        self.rho_a
    }

    /// Full-precision CSV, one matrix row per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n() {
            let row: Vec<String> = (0..self.n()).map(|j| format!("{:.16e}", self.w[(i, j)])).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

fn is_symmetric(w: &DMatrix<f64>) -> bool {
    let n = w.nrows();
    (0..n).all(|i| (0..i).all(|j| w[(i, j)] == w[(j, i)]))
}

/// Metropolis weights: `1 / (1 + max(deg_i, deg_j))` on edges, remainder on the diagonal.
pub fn metropolis_weights(g: &Graph) -> Result<MixingMatrix> {
    if !g.is_connected() {
        return Err(Error::InvalidArgument("Metropolis weights need a connected graph".into()));
    }
    let n = g.n();
    let deg = g.degrees();
    let mut w = DMatrix::zeros(n, n);
    for (a, b) in g.edges() {
        let wij = 1.0 / (1.0 + deg[a].max(deg[b]) as f64);
        w[(a, b)] = wij;
        w[(b, a)] = wij;
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    MixingMatrix::from_weights(w)
}

/// `ρ(A − 11ᵀ/n)` for a symmetric doubly stochastic `A`.
pub fn spectral_deviation(a: &MixingMatrix) -> Result<f64> {
    spectral_deviation_of(a.weights())
}

fn spectral_deviation_of(w: &DMatrix<f64>) -> Result<f64> {
    let n = w.nrows();
    let dev = w - DMatrix::from_element(n, n, 1.0 / n as f64);
    if n <= DENSE_EIGEN_LIMIT {
        Ok(symmetric_spectral_radius(dev))
    } else {
        power_spectral_radius(&dev, POWER_TOL, POWER_MAX_ITER)
    }
}

fn symmetric_spectral_radius(m: DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m).eigenvalues.iter().map(|l| l.abs()).fold(0.0, f64::max)
}

/// Spectral radius of a general square matrix via a bounded real Schur
/// decomposition (the unbounded variant can stall on defective input).
fn general_spectral_radius(m: DMatrix<f64>) -> Result<f64> {
    let schur = Schur::try_new(m, f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or(Error::ToleranceFailure { tol: f64::EPSILON, max_iter: SCHUR_MAX_ITER })?;
    Ok(schur.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Largest-magnitude eigenvalue of a symmetric matrix `B` by power iteration on
/// `B²` (which separates `±λ`). Converged when the eigen-residual
/// `‖B²u − θu‖ ≤ tol·θ`.
pub fn power_spectral_radius(b: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<f64> {
    let n = b.nrows();
    let b2 = b * b;
    // Deterministic start with no special alignment to structured eigenvectors.
    let mut u = DVector::from_fn(n, |i, _| 1.0 + ((i as f64 + 1.0) * 0.618_033_988_749_895).fract());
    u /= u.norm();
    for _ in 0..max_iter {
        let w = &b2 * &u;
        let theta = u.dot(&w);
        let wn = w.norm();
        if wn == 0.0 {
            return Ok(0.0);
        }
        let residual = (&w - &u * theta).norm();
        if residual <= tol * theta.abs() {
            return Ok(theta.max(0.0).sqrt());
        }
        u = w / wn;
    }
    Err(Error::ToleranceFailure { tol, max_iter })
}

/// All entries nonnegative and every row and column sum within `tol` of one.
pub fn check_doubly_stochastic(w: &DMatrix<f64>, tol: f64) -> bool {
    if !w.is_square() {
        return false;
    }
    let n = w.nrows();
    w.iter().all(|&x| x >= 0.0)
        && (0..n).all(|i| (w.row(i).sum() - 1.0).abs() <= tol)
        && (0..n).all(|j| (w.column(j).sum() - 1.0).abs() <= tol)
}

/// `ρ(A − I) ≤ 2` (up to 1e-12).
pub fn check_shift_contraction(a: &MixingMatrix) -> bool {
    let n = a.n();
    let shifted = a.weights() - DMatrix::<f64>::identity(n, n);
    let rho = if is_symmetric(a.weights()) {
        symmetric_spectral_radius(shifted)
    } else {
        match general_spectral_radius(shifted) {
            Ok(r) => r,
            Err(_) => return false,
        }
    };
    rho <= 2.0 + 1e-12
}
