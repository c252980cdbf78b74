//! Random undirected communication graphs and their Laplacians.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::spec::SpecString;

/// Positivity tolerance for the algebraic connectivity of the mean graph.
pub const LAMBDA2_TOL: f64 = 1e-12;

/// Graph Laplacian `L = D - A` of a simple undirected graph.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianSample {
    n: usize,
    edges: Vec<(usize, usize)>,
    matrix: DMatrix<f64>,
}

impl LaplacianSample {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Edges `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn degree(&self, node: usize) -> usize {
        self.matrix[(node, node)] as usize
    }

    /// Builds the Laplacian from an edge list without validation beyond
    /// bounds and self-loops; duplicate edges are merged.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut norm: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a}, {b}) out of range for n = {n}"
                )));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at node {a}")));
            }
            norm.push((a.min(b), a.max(b)));
        }
        norm.sort_unstable();
        norm.dedup();
        Ok(Self::from_sorted_edges(n, norm))
    }

    fn from_sorted_edges(n: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut matrix = DMatrix::zeros(n, n);
        for &(i, j) in &edges {
            matrix[(i, j)] = -1.0;
            matrix[(j, i)] = -1.0;
            matrix[(i, i)] += 1.0;
            matrix[(j, j)] += 1.0;
        }
        LaplacianSample { n, edges, matrix }
    }

    /// Computes `out = (L kron I_d) x` for a stacked vector `x` of `n` blocks.
    pub fn apply_kron(&self, x: &[f64], d: usize, out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n * d);
        debug_assert_eq!(out.len(), self.n * d);
        out.fill(0.0);
        for &(i, j) in &self.edges {
            for k in 0..d {
                let diff = x[i * d + k] - x[j * d + k];
                out[i * d + k] += diff;
                out[j * d + k] -= diff;
            }
        }
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        sorted_eigenvalues(&self.matrix)
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues().last().copied().unwrap_or(0.0)
    }
}

/// `L = D - A` for a symmetric 0/1 adjacency matrix with zero diagonal.
pub fn laplacian(adjacency: &DMatrix<f64>) -> Result<LaplacianSample> {
    let n = adjacency.nrows();
    if adjacency.ncols() != n {
        return Err(Error::InvalidGraph(format!(
            "adjacency must be square, got {}x{}",
            n,
            adjacency.ncols()
        )));
    }
    let mut edges = Vec::new();
    for i in 0..n {
        if adjacency[(i, i)] != 0.0 {
            return Err(Error::InvalidGraph(format!("self-loop at node {i}")));
        }
        for j in 0..n {
            let a = adjacency[(i, j)];
            if a != 0.0 && a != 1.0 {
                return Err(Error::InvalidGraph(format!(
                    "entry ({i}, {j}) = {a} is not 0/1"
                )));
            }
            if a != adjacency[(j, i)] {
                return Err(Error::InvalidGraph(format!(
                    "adjacency is asymmetric at ({i}, {j})"
                )));
            }
            if j > i && a == 1.0 {
                edges.push((i, j));
            }
        }
    }
    Ok(LaplacianSample::from_sorted_edges(n, edges))
}

fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Second-smallest eigenvalue of a symmetric Laplacian-like matrix
/// (0 for a single node). Tiny negative rounding is clamped to 0.
pub fn lambda2_of(matrix: &DMatrix<f64>) -> f64 {
    let ev = sorted_eigenvalues(matrix);
    ev.get(1).map_or(0.0, |v| v.max(0.0))
}

/// Algebraic connectivity of a sampled graph.
pub fn lambda2(l: &LaplacianSample) -> f64 {
    lambda2_of(&l.matrix)
}

/// Deterministic base graphs addressable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BaseGraph {
    Complete,
    Path,
    Ring,
    Star,
    Empty,
}

impl BaseGraph {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "complete" => BaseGraph::Complete,
            "path" => BaseGraph::Path,
            "ring" | "cycle" => BaseGraph::Ring,
            "star" => BaseGraph::Star,
            "empty" => BaseGraph::Empty,
            other => {
                return Err(Error::Spec(format!(
                    "unknown base graph {other:?} (complete, path, ring, star, empty)"
                )))
            }
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            BaseGraph::Complete => "complete",
            BaseGraph::Path => "path",
            BaseGraph::Ring => "ring",
            BaseGraph::Star => "star",
            BaseGraph::Empty => "empty",
        }
    }

    pub fn edges(self, n: usize) -> Vec<(usize, usize)> {
        match self {
            BaseGraph::Complete => (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .collect(),
            BaseGraph::Path => (1..n).map(|i| (i - 1, i)).collect(),
            BaseGraph::Ring => {
                let mut e: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
                if n > 2 {
                    e.push((0, n - 1));
                }
                e
            }
            BaseGraph::Star => (1..n).map(|i| (0, i)).collect(),
            BaseGraph::Empty => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GraphKind {
    /// Every pair is linked independently with probability `p` at each step.
    ErdosRenyi { p: f64 },
    /// Every edge of a fixed base graph survives independently with probability `p`.
    EdgeSubsample { base: Vec<(usize, usize)>, p: f64 },
    /// The same graph at every step.
    Static { graph: LaplacianSample },
}

/// An i.i.d. distribution over Laplacians on `n` nodes.
#[derive(Debug, Clone)]
pub struct GraphModel {
    kind: GraphKind,
    n: usize,
    mean_laplacian: DMatrix<f64>,
    lambda2_mean: f64,
    label: String,
}

impl GraphModel {
    pub fn erdos_renyi(n: usize, p: f64) -> Result<Self> {
        check_n(n)?;
        check_p(p)?;
        let complete = LaplacianSample::from_sorted_edges(n, BaseGraph::Complete.edges(n));
        let mean = complete.matrix * p;
        Ok(Self::finish(
            GraphKind::ErdosRenyi { p },
            n,
            mean,
            format!("erdos_renyi:p={p}"),
        ))
    }

    pub fn edge_subsample(
        n: usize,
        base: &[(usize, usize)],
        p: f64,
        base_name: &str,
    ) -> Result<Self> {
        check_n(n)?;
        check_p(p)?;
        let base_lap = LaplacianSample::from_edges(n, base)?;
        let mean = base_lap.matrix.clone() * p;
        Ok(Self::finish(
            GraphKind::EdgeSubsample {
                base: base_lap.edges.clone(),
                p,
            },
            n,
            mean,
            format!("edge_subsample:base={base_name},p={p}"),
        ))
    }

    pub fn static_graph(graph: LaplacianSample, name: &str) -> Result<Self> {
        check_n(graph.n)?;
        let n = graph.n;
        let mean = graph.matrix.clone();
        Ok(Self::finish(
            GraphKind::Static { graph },
            n,
            mean,
            format!("static:{name}"),
        ))
    }

    fn finish(kind: GraphKind, n: usize, mean_laplacian: DMatrix<f64>, label: String) -> Self {
        let lambda2_mean = lambda2_of(&mean_laplacian);
        GraphModel {
            kind,
            n,
            mean_laplacian,
            lambda2_mean,
            label,
        }
    }

    /// Parses `erdos_renyi:p=0.5`, `edge_subsample:base=path,p=0.8` or
    /// `static:complete` for a network of `n` agents.
    pub fn parse(descriptor: &str, n: usize) -> Result<Self> {
        if let Some(rest) = descriptor.trim().strip_prefix("static:") {
            if !rest.contains('=') {
                let base = BaseGraph::parse(rest.trim())?;
                return Self::static_graph(
                    LaplacianSample::from_sorted_edges(n, base.edges(n)),
                    base.name(),
                )
                .map_err(|e| Error::Spec(e.to_string()));
            }
        }
        let spec = SpecString::parse(descriptor)?;
        match spec.name.as_str() {
            "erdos_renyi" => {
                spec.expect_keys(&["p"])?;
                Self::erdos_renyi(n, spec.f64_req("p")?)
            }
            "edge_subsample" => {
                spec.expect_keys(&["base", "p"])?;
                let base_name = spec.get("base").unwrap_or("complete");
                let base = BaseGraph::parse(base_name)?;
                Self::edge_subsample(n, &base.edges(n), spec.f64_req("p")?, base.name())
            }
            "static" => {
                // `static:complete` or `static:base=complete`
                let base_name = match spec.params.as_slice() {
                    [] => "complete",
                    [(k, v)] if k == "base" => v.as_str(),
                    _ => {
                        return Err(Error::Spec(format!(
                            "static graph expects a single base name, got {descriptor:?}"
                        )))
                    }
                };
                let base = BaseGraph::parse(base_name)?;
                Self::static_graph(
                    LaplacianSample::from_sorted_edges(n, base.edges(n)),
                    base.name(),
                )
            }
            other if other.starts_with("static") => {
                Err(Error::Spec(format!("bad static graph {other:?}")))
            }
            other => Err(Error::Spec(format!(
                "unknown graph model {other:?} (erdos_renyi, edge_subsample, static)"
            ))),
        }
        .map_err(|e| match e {
            Error::InvalidParameter(m) | Error::InvalidGraph(m) => Error::Spec(m),
            e => e,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> &GraphKind {
        &self.kind
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn mean_laplacian(&self) -> &DMatrix<f64> {
        &self.mean_laplacian
    }

    pub fn lambda2_mean(&self) -> f64 {
        self.lambda2_mean
    }

    /// Draws one Laplacian. Potential edges are visited in lexicographic
    /// order with one uniform draw each; static graphs consume nothing.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> LaplacianSample {
        match &self.kind {
            GraphKind::ErdosRenyi { p } => {
                let mut edges = Vec::new();
                for i in 0..self.n {
                    for j in i + 1..self.n {
                        if rng.random::<f64>() < *p {
                            edges.push((i, j));
                        }
                    }
                }
                LaplacianSample::from_sorted_edges(self.n, edges)
            }
            GraphKind::EdgeSubsample { base, p } => {
                let edges = base
                    .iter()
                    .copied()
                    .filter(|_| rng.random::<f64>() < *p)
                    .collect();
                LaplacianSample::from_sorted_edges(self.n, edges)
            }
            GraphKind::Static { graph } => graph.clone(),
        }
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidGraph("graph needs at least one node".into()));
    }
    Ok(())
}

fn check_p(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "edge probability must lie in [0, 1], got {p}"
        )));
    }
    Ok(())
}

/// Algebraic connectivity of the mean Laplacian and whether it is positive.
/// A single agent is trivially connected.
pub fn check_connected_in_mean(model: &GraphModel) -> (bool, f64) {
    let l2 = model.lambda2_mean();
    (model.n() == 1 || l2 > LAMBDA2_TOL, l2)
}

/// Tests `|(I - beta L kron I_d) z| <= |z|` for `z` orthogonal to the
/// consensus subspace. At `beta * lambda_max = 2` equality is attained, so
/// the comparison allows a relative slack of a few rounding units per entry.
pub fn consensus_contraction_check(
    l: &LaplacianSample,
    beta: f64,
    z: &[f64],
    d: usize,
) -> Result<bool> {
    let n = l.n();
    if d == 0 || z.len() != n * d {
        return Err(Error::InvalidDimension(format!(
            "z has length {} but n * d = {}",
            z.len(),
            n * d
        )));
    }
    let scale = z.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    for k in 0..d {
        let mean = (0..n).map(|i| z[i * d + k]).sum::<f64>() / n as f64;
        if mean.abs() > 1e-10 * scale {
            return Err(Error::InvalidInput(format!(
                "z is not orthogonal to the consensus subspace (coordinate {k} mean {mean})"
            )));
        }
    }
    let mut lz = vec![0.0; z.len()];
    l.apply_kron(z, d, &mut lz);
    let after: f64 = z
        .iter()
        .zip(&lz)
        .map(|(a, b)| {
            let v = a - beta * b;
            v * v
        })
        .sum::<f64>()
        .sqrt();
    let before = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    let slack = 1.0 + 4.0 * f64::EPSILON * (z.len() + n) as f64;
    Ok(after <= before * slack)
}
