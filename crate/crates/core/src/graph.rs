//! Undirected weighted graphs in compressed sparse row form, plus the
//! Laplacian views (unnormalized, symmetric normalized, transition) that the
//! rest of the crate is built on.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use faer::Mat;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("vertex index {index} out of range for a graph with {n} vertices")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("negative weight {weight} on edge ({i}, {j})")]
    NegativeWeight { i: usize, j: usize, weight: f64 },
    #[error("non-finite weight on edge ({i}, {j})")]
    NonFiniteWeight { i: usize, j: usize },
    #[error("edge ({i}, {j}) listed more than once")]
    DuplicateEdge { i: usize, j: usize },
    #[error("self-loop at vertex {0}, but self-loops are not allowed for this graph")]
    SelfLoopNotAllowed(usize),
    #[error("vertex {0} has zero degree")]
    ZeroDegreeVertex(usize),
    #[error("malformed edge list: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Undirected graph with nonnegative symmetric weights.
///
/// Rows are sorted by neighbor index. A self-loop is stored once in its own
/// row and contributes its weight to the degree once.
#[derive(Debug, Clone)]
pub struct Graph {
    n: usize,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
    degrees: Vec<f64>,
    volume: f64,
    allow_self_loops: bool,
}

/// Builds a graph from an undirected edge list.
///
/// Zero-weight edges are validated and then dropped. Each unordered pair may
/// appear at most once, in either orientation.
pub fn build_graph(
    edges: &[(usize, usize, f64)],
    n: usize,
    allow_self_loops: bool,
) -> Result<Graph, GraphError> {
    let mut normalized = Vec::with_capacity(edges.len());
    for &(i, j, w) in edges {
        for index in [i, j] {
            if index >= n {
                return Err(GraphError::IndexOutOfRange { index, n });
            }
        }
        if !w.is_finite() {
            return Err(GraphError::NonFiniteWeight { i, j });
        }
        if w < 0.0 {
            return Err(GraphError::NegativeWeight { i, j, weight: w });
        }
        if i == j && !allow_self_loops {
            return Err(GraphError::SelfLoopNotAllowed(i));
        }
        normalized.push((i.min(j), i.max(j), w));
    }
    normalized.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    for pair in normalized.windows(2) {
        if pair[0].0 == pair[1].0 && pair[0].1 == pair[1].1 {
            return Err(GraphError::DuplicateEdge { i: pair[0].0, j: pair[0].1 });
        }
    }
    normalized.retain(|e| e.2 > 0.0);
    Ok(Graph::from_unique_edges(n, &normalized, allow_self_loops))
}

impl Graph {
    /// `edges` must hold validated, positive, deduplicated pairs with `i <= j`.
    fn from_unique_edges(n: usize, edges: &[(usize, usize, f64)], allow_self_loops: bool) -> Self {
        let mut counts = vec![0usize; n];
        for &(i, j, _) in edges {
            counts[i] += 1;
            if i != j {
                counts[j] += 1;
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for c in &counts {
            offsets.push(offsets.last().unwrap() + c);
        }
        let nnz = *offsets.last().unwrap();
        let mut targets = vec![0usize; nnz];
        let mut weights = vec![0.0; nnz];
        let mut cursor = offsets[..n].to_vec();
        for &(i, j, w) in edges {
            targets[cursor[i]] = j;
            weights[cursor[i]] = w;
            cursor[i] += 1;
            if i != j {
                targets[cursor[j]] = i;
                weights[cursor[j]] = w;
                cursor[j] += 1;
            }
        }
        for i in 0..n {
            let range = offsets[i]..offsets[i + 1];
            let mut row: Vec<(usize, f64)> = targets[range.clone()]
                .iter()
                .copied()
                .zip(weights[range.clone()].iter().copied())
                .collect();
            row.sort_unstable_by_key(|e| e.0);
            for (slot, (t, w)) in range.zip(row) {
                targets[slot] = t;
                weights[slot] = w;
            }
        }
        let degrees: Vec<f64> = (0..n)
            .map(|i| weights[offsets[i]..offsets[i + 1]].iter().sum())
            .collect();
        let volume = degrees.iter().sum();
        Graph {
            n,
            offsets,
            targets,
            weights,
            degrees,
            volume,
            allow_self_loops,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of unordered edges, self-loops included.
    pub fn num_edges(&self) -> usize {
        let loops = (0..self.n).filter(|&i| self.weight(i, i) > 0.0).count();
        (self.targets.len() + loops) / 2
    }

    pub fn allow_self_loops(&self) -> bool {
        self.allow_self_loops
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.degrees[i]
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[i]..self.offsets[i + 1];
        self.targets[range.clone()]
            .iter()
            .copied()
            .zip(self.weights[range].iter().copied())
    }

    pub(crate) fn row_targets(&self, i: usize) -> &[usize] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    pub(crate) fn row_weights(&self, i: usize) -> &[f64] {
        &self.weights[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Position of `(i, j)` in the CSR storage, if the edge exists.
    pub(crate) fn slot(&self, i: usize, j: usize) -> Option<usize> {
        self.row_targets(i)
            .binary_search(&j)
            .ok()
            .map(|k| self.offsets[i] + k)
    }

    pub(crate) fn nnz(&self) -> usize {
        self.targets.len()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.weights[s])
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.slot(i, j).is_some()
    }

    /// Unordered edges `(i, j, w)` with `i <= j`, in row order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            self.neighbors(i)
                .filter(move |&(j, _)| j >= i)
                .map(move |(j, w)| (i, j, w))
        })
    }

    pub fn w_min(&self) -> f64 {
        self.weights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn w_max(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }

    pub fn d_min(&self) -> f64 {
        self.degrees.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn d_max(&self) -> f64 {
        self.degrees.iter().copied().fold(0.0, f64::max)
    }

    /// True when every pair of distinct vertices is joined by an edge.
    pub fn is_complete(&self) -> bool {
        (0..self.n).all(|i| {
            let off_diagonal = self.row_targets(i).iter().filter(|&&j| j != i).count();
            off_diagonal == self.n - 1
        })
    }

    /// True when every stored weight equals 1.
    pub fn is_unweighted(&self) -> bool {
        self.weights.iter().all(|&w| w == 1.0)
    }

    /// Same edge set with every weight replaced by 1.
    pub fn unweighted(&self) -> Graph {
        let edges: Vec<_> = self.edges().map(|(i, j, _)| (i, j, 1.0)).collect();
        Graph::from_unique_edges(self.n, &edges, self.allow_self_loops)
    }

    /// Copy of the graph with edge `(i, j)` removed.
    pub fn without_edge(&self, i: usize, j: usize) -> Graph {
        let (a, b) = (i.min(j), i.max(j));
        let edges: Vec<_> = self.edges().filter(|&(u, v, _)| (u, v) != (a, b)).collect();
        Graph::from_unique_edges(self.n, &edges, self.allow_self_loops)
    }

    /// Dense weight matrix W.
    pub fn dense_weights(&self) -> Mat<f64> {
        let mut w = Mat::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, wij) in self.neighbors(i) {
                w[(i, j)] = wij;
            }
        }
        w
    }

    fn require_positive_degrees(&self) -> Result<(), GraphError> {
        match self.degrees.iter().position(|&d| d <= 0.0) {
            Some(i) => Err(GraphError::ZeroDegreeVertex(i)),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConnectivityFlags {
    pub connected: bool,
    pub bipartite: bool,
}

/// Connectivity by breadth-first search and bipartiteness by 2-coloring, over
/// the positive-weight edges. A self-loop makes a graph non-bipartite.
pub fn connectivity_flags(g: &Graph) -> ConnectivityFlags {
    let n = g.n();
    let mut color: Vec<Option<bool>> = vec![None; n];
    let mut components = 0;
    let mut bipartite = true;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if color[start].is_some() {
            continue;
        }
        components += 1;
        color[start] = Some(false);
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            let cu = color[u].unwrap();
            for &v in g.row_targets(u) {
                match color[v] {
                    None => {
                        color[v] = Some(!cu);
                        queue.push_back(v);
                    }
                    Some(cv) if cv == cu => bipartite = false,
                    Some(_) => {}
                }
            }
        }
    }
    ConnectivityFlags {
        connected: components <= 1,
        bipartite,
    }
}

/// Whether the subgraph induced on the vertices not in `removed` is connected.
/// An empty remainder counts as disconnected.
pub fn connected_without(g: &Graph, removed: &[usize]) -> bool {
    let n = g.n();
    let mut seen = vec![false; n];
    for &r in removed {
        seen[r] = true;
    }
    let Some(start) = (0..n).find(|&v| !seen[v]) else {
        return false;
    };
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(u) = stack.pop() {
        for &v in g.row_targets(u) {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen.iter().all(|&s| s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaplacianKind {
    /// L = D − W
    Unnormalized,
    /// L_sym = D^{-1/2} L D^{-1/2}
    Normalized,
    /// P = D^{-1} W
    Transition,
}

#[derive(Debug, Clone)]
pub struct LaplacianView {
    pub kind: LaplacianKind,
    pub matrix: Mat<f64>,
}

pub fn laplacian(g: &Graph, kind: LaplacianKind) -> Result<LaplacianView, GraphError> {
    let n = g.n();
    let matrix = match kind {
        LaplacianKind::Unnormalized => {
            let mut l = Mat::zeros(n, n);
            for i in 0..n {
                l[(i, i)] = g.degree(i);
                for (j, w) in g.neighbors(i) {
                    l[(i, j)] -= w;
                }
            }
            l
        }
        LaplacianKind::Normalized => {
            g.require_positive_degrees()?;
            let a = normalized_adjacency(g)?;
            Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - a[(i, j)])
        }
        LaplacianKind::Transition => {
            g.require_positive_degrees()?;
            let mut p = Mat::zeros(n, n);
            for i in 0..n {
                let d = g.degree(i);
                for (j, w) in g.neighbors(i) {
                    p[(i, j)] = w / d;
                }
            }
            p
        }
    };
    Ok(LaplacianView { kind, matrix })
}

/// A = D^{-1/2} W D^{-1/2}, the symmetric matrix similar to P.
pub fn normalized_adjacency(g: &Graph) -> Result<Mat<f64>, GraphError> {
    g.require_positive_degrees()?;
    let n = g.n();
    let inv_sqrt: Vec<f64> = g.degrees().iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut a = Mat::zeros(n, n);
    for i in 0..n {
        for (j, w) in g.neighbors(i) {
            a[(i, j)] = w * inv_sqrt[i] * inv_sqrt[j];
        }
    }
    Ok(a)
}

/// Writes the edge-list text format: a header `n m allow_self_loops`, then one
/// `i j w` line per unordered edge with `i <= j`.
pub fn write_edge_list<W: Write>(g: &Graph, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{} {} {}", g.n(), g.num_edges(), g.allow_self_loops())?;
    for (i, j, w) in g.edges() {
        writeln!(out, "{i} {j} {w}")?;
    }
    Ok(())
}

pub fn read_edge_list<R: BufRead>(input: R) -> Result<Graph, GraphError> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| GraphError::Parse("missing header".into()))??;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(GraphError::Parse(format!("bad header {header:?}")));
    }
    let n: usize = parse_field(fields[0])?;
    let m: usize = parse_field(fields[1])?;
    let allow_self_loops = match fields[2] {
        "true" | "1" => true,
        "false" | "0" => false,
        other => return Err(GraphError::Parse(format!("bad self-loop flag {other:?}"))),
    };
    let mut edges = Vec::with_capacity(m);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(GraphError::Parse(format!("bad edge line {line:?}")));
        }
        edges.push((parse_field(parts[0])?, parse_field(parts[1])?, parse_field(parts[2])?));
    }
    if edges.len() != m {
        return Err(GraphError::Parse(format!(
            "header announces {m} edges, found {}",
            edges.len()
        )));
    }
    build_graph(&edges, n, allow_self_loops)
}

fn parse_field<T: std::str::FromStr>(s: &str) -> Result<T, GraphError> {
    s.parse()
        .map_err(|_| GraphError::Parse(format!("cannot parse {s:?}")))
}

/// Small named graphs used across tests and examples.
pub mod named {
    use super::{build_graph, Graph};

    pub fn path(n: usize) -> Graph {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i, 1.0)).collect();
        build_graph(&edges, n, false).expect("valid path")
    }

    pub fn cycle(n: usize) -> Graph {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
        build_graph(&edges, n, false).expect("valid cycle")
    }

    pub fn complete(n: usize) -> Graph {
        complete_weighted(n, 1.0)
    }

    pub fn complete_weighted(n: usize, w: f64) -> Graph {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                edges.push((i, j, w));
            }
        }
        build_graph(&edges, n, false).expect("valid complete graph")
    }

    /// Star with center 0 and `leaves` leaves.
    pub fn star(leaves: usize) -> Graph {
        let edges: Vec<_> = (1..=leaves).map(|i| (0, i, 1.0)).collect();
        build_graph(&edges, leaves + 1, false).expect("valid star")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> Graph {
        named::complete(3)
    }

    #[test]
    fn single_edge_caches() {
        let g = build_graph(&[(0, 1, 1.0)], 2, false).unwrap();
        assert_eq!(g.degrees(), &[1.0, 1.0]);
        assert_eq!(g.volume(), 2.0);
    }

    #[test]
    fn triangle_caches() {
        let g = triangle();
        assert_eq!(g.degrees(), &[2.0, 2.0, 2.0]);
        assert_eq!(g.volume(), 6.0);
        assert_eq!(g.num_edges(), 3);
    }

    #[test]
    fn weighted_edge_row_sum() {
        let g = build_graph(&[(0, 1, 2.5)], 2, false).unwrap();
        assert_eq!(g.degrees(), &[2.5, 2.5]);
        assert_eq!(g.volume(), 5.0);
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(
            build_graph(&[(0, 1, 1.0), (1, 0, 2.0)], 2, false),
            Err(GraphError::DuplicateEdge { i: 0, j: 1 })
        ));
        assert!(matches!(
            build_graph(&[(0, 1, -1.0)], 2, false),
            Err(GraphError::NegativeWeight { .. })
        ));
        assert!(matches!(
            build_graph(&[(0, 2, 1.0)], 2, false),
            Err(GraphError::IndexOutOfRange { index: 2, n: 2 })
        ));
        assert!(matches!(
            build_graph(&[(1, 1, 1.0)], 2, false),
            Err(GraphError::SelfLoopNotAllowed(1))
        ));
        assert!(matches!(
            build_graph(&[(0, 1, f64::NAN)], 2, false),
            Err(GraphError::NonFiniteWeight { .. })
        ));
    }

    #[test]
    fn zero_weight_edges_are_dropped() {
        let g = build_graph(&[(0, 1, 0.0), (1, 2, 1.0)], 3, false).unwrap();
        assert!(!g.has_edge(0, 1));
        assert_eq!(g.num_edges(), 1);
    }

    #[test]
    fn self_loop_counts_once() {
        let g = build_graph(&[(0, 0, 3.0), (0, 1, 1.0)], 2, true).unwrap();
        assert_eq!(g.degree(0), 4.0);
        assert_eq!(g.degree(1), 1.0);
        assert_eq!(g.num_edges(), 2);
        let l = laplacian(&g, LaplacianKind::Unnormalized).unwrap().matrix;
        assert_eq!(l[(0, 0)] + l[(0, 1)], 0.0);
    }

    #[test]
    fn connectivity_examples() {
        let flags = connectivity_flags(&named::path(3));
        assert_eq!(flags, ConnectivityFlags { connected: true, bipartite: true });
        let flags = connectivity_flags(&triangle());
        assert_eq!(flags, ConnectivityFlags { connected: true, bipartite: false });
        let g = build_graph(&[(0, 1, 1.0), (2, 3, 1.0)], 4, false).unwrap();
        let flags = connectivity_flags(&g);
        assert_eq!(flags, ConnectivityFlags { connected: false, bipartite: true });
        let g = build_graph(&[(0, 0, 1.0), (0, 1, 1.0)], 2, true).unwrap();
        assert!(!connectivity_flags(&g).bipartite);
    }

    #[test]
    fn removal_connectivity() {
        assert!(connected_without(&triangle(), &[0]));
        assert!(!connected_without(&named::path(3), &[1]));
        assert!(!connected_without(&named::path(2), &[0, 1]));
    }

    #[test]
    fn laplacian_examples() {
        let edge = build_graph(&[(0, 1, 1.0)], 2, false).unwrap();
        let p = laplacian(&edge, LaplacianKind::Transition).unwrap().matrix;
        assert_eq!((p[(0, 0)], p[(0, 1)], p[(1, 0)], p[(1, 1)]), (0.0, 1.0, 1.0, 0.0));

        let l = laplacian(&triangle(), LaplacianKind::Unnormalized).unwrap().matrix;
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(l[(i, j)], if i == j { 2.0 } else { -1.0 });
            }
        }

        let heavy = build_graph(&[(0, 1, 2.5)], 2, false).unwrap();
        let ls = laplacian(&heavy, LaplacianKind::Normalized).unwrap().matrix;
        assert!((ls[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((ls[(0, 1)] + 1.0).abs() < 1e-15);
        assert!((ls[(1, 0)] + 1.0).abs() < 1e-15);
        assert!((ls[(1, 1)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_degree_rejected_for_normalized_views() {
        let g = build_graph(&[(0, 1, 1.0)], 3, false).unwrap();
        assert!(matches!(
            laplacian(&g, LaplacianKind::Normalized),
            Err(GraphError::ZeroDegreeVertex(2))
        ));
        assert!(matches!(
            laplacian(&g, LaplacianKind::Transition),
            Err(GraphError::ZeroDegreeVertex(2))
        ));
        assert!(laplacian(&g, LaplacianKind::Unnormalized).is_ok());
    }

    #[test]
    fn edge_list_round_trip_is_exact() {
        let g = build_graph(&[(0, 1, 0.1), (1, 2, 1.0 / 3.0), (2, 2, 2e-300)], 4, true).unwrap();
        let mut buf = Vec::new();
        write_edge_list(&g, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("4 3 true\n"));
        let back = read_edge_list(&buf[..]).unwrap();
        let a: Vec<_> = g.edges().collect();
        let b: Vec<_> = back.edges().collect();
        assert_eq!(a, b);
    }

    #[test]
    fn edge_list_header_mismatch() {
        let text = "3 2 false\n0 1 1\n";
        assert!(matches!(read_edge_list(text.as_bytes()), Err(GraphError::Parse(_))));
    }
}
