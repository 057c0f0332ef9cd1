//! Lattice graphs over projected node coordinates, plus eigenvector
//! centrality.
//!
//! Topology is fixed by (rows, cols, connectivity); only node coordinates
//! and hence edge distances vary between images. Graphs here are small (tens
//! of nodes), so the adjacency matrix is stored densely.

use crate::error::{Error, Result};

/// Lattice node with its image-plane coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub row: usize,
    pub col: usize,
    pub x: f64,
    pub y: f64,
}

/// Undirected edge; `u < v` always, `distance` is Euclidean.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub distance: f64,
}

/// Which lattice pairs get edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    /// |drow| + |dcol| = 1.
    #[default]
    Four,
    /// max(|drow|, |dcol|) = 1.
    Eight,
}

/// Grid graph with nodes in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct GridGraph {
    pub rows: usize,
    pub cols: usize,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    /// Flattened n x n 0/1 matrix, symmetric, zero diagonal.
    pub adjacency: Vec<u8>,
    neighbor_lists: Vec<Vec<usize>>,
}

impl GridGraph {
    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    /// Neighbor indices of `v`, ascending. Panics on an invalid index.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbor_lists[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbor_lists[v].len()
    }

    pub fn adjacent(&self, u: usize, v: usize) -> bool {
        self.adjacency[u * self.n() + v] != 0
    }

    /// Euclidean distance between two node coordinates.
    pub fn distance(&self, u: usize, v: usize) -> f64 {
        let (a, b) = (&self.nodes[u], &self.nodes[v]);
        ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
    }

    /// Two-step walks from `v`: pairs (u, z) with u adjacent to v and z
    /// adjacent to u, excluding z = v. A z reachable through two different
    /// u appears once per walk. Panics on an invalid index.
    pub fn second_order(&self, v: usize) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for &u in &self.neighbor_lists[v] {
            for &z in &self.neighbor_lists[u] {
                if z != v {
                    pairs.push((u, z));
                }
            }
        }
        pairs
    }
}

/// Connect row-major lattice coordinates into a [`GridGraph`].
pub fn build_grid_graph(
    coords: &[(f64, f64)],
    rows: usize,
    cols: usize,
    connectivity: Connectivity,
) -> Result<GridGraph> {
    if rows == 0 || cols == 0 || coords.is_empty() {
        return Err(Error::Dimension("grid needs at least one node".into()));
    }
    if coords.len() != rows * cols {
        return Err(Error::Dimension(format!(
            "{} coordinates cannot fill a {rows}x{cols} grid",
            coords.len()
        )));
    }
    let n = rows * cols;
    let nodes: Vec<Node> = coords
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| Node { row: i / cols, col: i % cols, x, y })
        .collect();
    let mut edges = Vec::new();
    let mut adjacency = vec![0u8; n * n];
    let mut connect = |u: usize, v: usize| {
        let d = ((nodes[u].x - nodes[v].x).powi(2) + (nodes[u].y - nodes[v].y).powi(2)).sqrt();
        edges.push(Edge { u, v, distance: d });
        adjacency[u * n + v] = 1;
        adjacency[v * n + u] = 1;
    };
    for r in 0..rows {
        for c in 0..cols {
            let v = r * cols + c;
            if c + 1 < cols {
                connect(v, v + 1);
            }
            if r + 1 < rows {
                connect(v, v + cols);
            }
            if connectivity == Connectivity::Eight && r + 1 < rows {
                if c > 0 {
                    connect(v, v + cols - 1);
                }
                if c + 1 < cols {
                    connect(v, v + cols + 1);
                }
            }
        }
    }
    let mut neighbor_lists = vec![Vec::new(); n];
    for v in 0..n {
        for u in 0..n {
            if adjacency[v * n + u] != 0 {
                neighbor_lists[v].push(u);
            }
        }
    }
    Ok(GridGraph { rows, cols, nodes, edges, adjacency, neighbor_lists })
}

/// Default power-iteration budget used by the pipeline.
pub const CENTRALITY_MAX_ITER: usize = 1000;
/// Default power-iteration tolerance used by the pipeline.
pub const CENTRALITY_TOL: f64 = 1e-10;

/// Centrality scores with the dominant-eigenvalue estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralityVector {
    /// Unit-L2 scores, one per node, positive on connected graphs.
    pub c: Vec<f64>,
    /// Rayleigh quotient cᵀAc of the adjacency matrix.
    pub eigenvalue: f64,
}

/// Power iteration for the dominant eigenvector of a 0/1 adjacency matrix.
///
/// Iterates (A + I)x, which shares eigenvectors with A but shifts the
/// spectrum off the bipartite plus-minus pair, so the iteration cannot
/// oscillate. Convergence requires both successive normalized iterates
/// within `tol` (L2) and Rayleigh residual ||Ac - eigenvalue*c|| below
/// 10*tol.
pub fn centrality_from_adjacency(
    adjacency: &[u8],
    n: usize,
    max_iter: usize,
    tol: f64,
) -> Result<CentralityVector> {
    if n == 0 || adjacency.len() != n * n {
        return Err(Error::Dimension(format!(
            "adjacency length {} is not {n}x{n}",
            adjacency.len()
        )));
    }
    let matvec_a = |x: &[f64], out: &mut [f64]| {
        for (i, o) in out.iter_mut().enumerate() {
            *o = adjacency[i * n..(i + 1) * n]
                .iter()
                .zip(x)
                .map(|(&a, &v)| a as f64 * v)
                .sum();
        }
    };
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut ax = vec![0.0; n];
    for _ in 0..max_iter {
        matvec_a(&x, &mut ax);
        let mut next: Vec<f64> = x.iter().zip(&ax).map(|(&xi, &ai)| xi + ai).collect();
        let norm = next.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in &mut next {
            *v /= norm;
        }
        let diff = x
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        x = next;
        if diff < tol {
            matvec_a(&x, &mut ax);
            let eigenvalue: f64 = x.iter().zip(&ax).map(|(a, b)| a * b).sum();
            let residual = x
                .iter()
                .zip(&ax)
                .map(|(&xi, &ai)| (ai - eigenvalue * xi).powi(2))
                .sum::<f64>()
                .sqrt();
            if residual < 10.0 * tol {
                return Ok(CentralityVector { c: x, eigenvalue });
            }
        }
    }
    Err(Error::Convergence(format!(
        "centrality did not converge within {max_iter} iterations"
    )))
}

/// Eigenvector centrality of a grid graph. Reads only the adjacency, never
/// node coordinates.
pub fn eigenvector_centrality(
    graph: &GridGraph,
    max_iter: usize,
    tol: f64,
) -> Result<CentralityVector> {
    centrality_from_adjacency(&graph.adjacency, graph.n(), max_iter, tol)
}

/// JSON dump of a graph and its centrality scores.
pub fn graph_json(graph: &GridGraph, centrality: &CentralityVector) -> String {
    let nodes: Vec<serde_json::Value> = graph
        .nodes
        .iter()
        .enumerate()
        .map(|(id, node)| {
            serde_json::json!({
                "id": id,
                "row": node.row,
                "col": node.col,
                "x": node.x,
                "y": node.y,
                "centrality": centrality.c[id],
            })
        })
        .collect();
    let edges: Vec<serde_json::Value> = graph
        .edges
        .iter()
        .map(|e| serde_json::json!({ "u": e.u, "v": e.v, "distance": e.distance }))
        .collect();
    let doc = serde_json::json!({
        "rows": graph.rows,
        "cols": graph.cols,
        "nodes": nodes,
        "edges": edges,
    });
    serde_json::to_string_pretty(&doc).expect("graph json never fails to serialize")
}
