//! CSR graphs laid out on the virtual block space, and BFS over them.

use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bytes per entry of the offsets array.
pub const OFFSET_BYTES: u64 = 8;
/// Bytes per neighbor id in the adjacency array.
pub const VERTEX_ID_BYTES: u64 = 4;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("line {line}: expected \"u v\", got {text:?}")]
    Parse { line: usize, text: String },
    #[error("reading edge list: {0}")]
    Io(#[from] std::io::Error),
    #[error("graph has no vertices")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "model")]
pub enum GraphModel {
    /// Out-degrees drawn from a discrete Pareto tail with the given exponent.
    PowerLaw { exponent: f64, min_degree: u32 },
    /// Uniformly random directed edges with the given mean out-degree.
    ErdosRenyi { avg_degree: f64 },
}

impl Default for GraphModel {
    fn default() -> Self {
        GraphModel::PowerLaw {
            exponent: 2.1,
            min_degree: 2,
        }
    }
}

/// Directed graph in compressed sparse row form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticGraph {
    offsets: Vec<u64>,
    adjacency: Vec<u32>,
}

impl SyntheticGraph {
    /// Builds a CSR graph from directed `(u, v)` pairs over `vertices` vertices.
    pub fn from_edges(vertices: u32, edges: &[(u32, u32)]) -> Self {
        let n = vertices as usize;
        let mut degree = vec![0u64; n];
        for &(u, _) in edges {
            degree[u as usize] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill: Vec<u64> = offsets[..n].to_vec();
        let mut adjacency = vec![0u32; edges.len()];
        for &(u, v) in edges {
            adjacency[fill[u as usize] as usize] = v;
            fill[u as usize] += 1;
        }
        Self { offsets, adjacency }
    }

    /// Undirected path `0 - 1 - ... - (n-1)`, stored as both directions.
    pub fn path(vertices: u32) -> Self {
        let mut edges = Vec::new();
        for v in 0..vertices.saturating_sub(1) {
            edges.push((v, v + 1));
            edges.push((v + 1, v));
        }
        Self::from_edges(vertices, &edges)
    }

    pub fn generate<R: Rng>(model: GraphModel, vertices: u32, rng: &mut R) -> Self {
        let n = vertices.max(1);
        let mut edges = Vec::new();
        match model {
            GraphModel::PowerLaw {
                exponent,
                min_degree,
            } => {
                let tail = 1.0 / (exponent - 1.0);
                let cap = f64::from(n.saturating_sub(1).max(1));
                for u in 0..n {
                    let x: f64 = rng.gen_range(f64::EPSILON..1.0);
                    let d = (f64::from(min_degree.max(1)) * x.powf(-tail)).floor().min(cap) as u32;
                    for _ in 0..d {
                        edges.push((u, pick_other(rng, u, n)));
                    }
                }
            }
            GraphModel::ErdosRenyi { avg_degree } => {
                let m = (f64::from(n) * avg_degree).round() as u64;
                for _ in 0..m {
                    let u = rng.gen_range(0..n);
                    edges.push((u, pick_other(rng, u, n)));
                }
                edges.sort_by_key(|e| e.0);
            }
        }
        Self::from_edges(n, &edges)
    }

    /// Reads a whitespace-separated `u v` edge list; `#` and `%` start comments.
    pub fn from_edge_list(path: &Path) -> Result<Self, GraphError> {
        let text = fs::read_to_string(path)?;
        Self::parse_edge_list(&text)
    }

    pub fn parse_edge_list(text: &str) -> Result<Self, GraphError> {
        let mut edges = Vec::new();
        let mut max_id = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split(['#', '%']).next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let parse = |s: Option<&str>| s.and_then(|t| t.parse::<u32>().ok());
            match (parse(it.next()), parse(it.next()), it.next()) {
                (Some(u), Some(v), None) => {
                    max_id = max_id.max(Some(u.max(v)));
                    edges.push((u, v));
                }
                _ => {
                    return Err(GraphError::Parse {
                        line: i + 1,
                        text: raw.to_string(),
                    })
                }
            }
        }
        let vertices = max_id.ok_or(GraphError::Empty)? + 1;
        Ok(Self::from_edges(vertices, &edges))
    }

    pub fn vertices(&self) -> u32 {
        (self.offsets.len() - 1) as u32
    }

    pub fn edges(&self) -> u64 {
        self.adjacency.len() as u64
    }

    pub fn degree(&self, v: u32) -> u64 {
        self.offsets[v as usize + 1] - self.offsets[v as usize]
    }

    pub fn neighbors(&self, v: u32) -> &[u32] {
        let lo = self.offsets[v as usize] as usize;
        let hi = self.offsets[v as usize + 1] as usize;
        &self.adjacency[lo..hi]
    }

    pub fn offsets(&self) -> &[u64] {
        &self.offsets
    }

    /// Byte offset where the adjacency array starts.
    pub fn adjacency_base(&self) -> u64 {
        self.offsets.len() as u64 * OFFSET_BYTES
    }

    /// Total bytes of the serialized layout.
    pub fn footprint(&self) -> u64 {
        self.adjacency_base() + self.edges() * VERTEX_ID_BYTES
    }

    /// Mean neighbor-list size in bytes.
    pub fn mean_list_bytes(&self) -> f64 {
        self.edges() as f64 * VERTEX_ID_BYTES as f64 / f64::from(self.vertices())
    }
}

fn pick_other<R: Rng>(rng: &mut R, u: u32, n: u32) -> u32 {
    if n <= 1 {
        return u;
    }
    let v = rng.gen_range(0..n - 1);
    if v >= u {
        v + 1
    } else {
        v
    }
}

/// Vertices reachable from `source`, in BFS visit order.
pub fn bfs_order(graph: &SyntheticGraph, source: u32) -> Vec<u32> {
    let n = graph.vertices() as usize;
    if source as usize >= n {
        return Vec::new();
    }
    let mut seen = vec![false; n];
    let mut order = Vec::new();
    let mut frontier = VecDeque::from([source]);
    seen[source as usize] = true;
    while let Some(v) = frontier.pop_front() {
        order.push(v);
        for &w in graph.neighbors(v) {
            if !seen[w as usize] {
                seen[w as usize] = true;
                frontier.push_back(w);
            }
        }
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn csr_invariants_hold_for_generated_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for model in [
            GraphModel::default(),
            GraphModel::ErdosRenyi { avg_degree: 8.0 },
        ] {
            let g = SyntheticGraph::generate(model, 2_000, &mut rng);
            let total: u64 = (0..g.vertices()).map(|v| g.degree(v)).sum();
            assert_eq!(total, g.edges());
            assert!(g.offsets().windows(2).all(|w| w[0] <= w[1]));
            assert!(g.neighbors(0).iter().all(|&v| v < g.vertices()));
        }
    }

    #[test]
    fn path_graph_bfs_visits_in_order() {
        let g = SyntheticGraph::path(10);
        assert_eq!(bfs_order(&g, 0), (0..10).collect::<Vec<_>>());
        assert_eq!(g.edges(), 18);
    }

    #[test]
    fn parses_edge_lists() {
        let g = SyntheticGraph::parse_edge_list("# header\n0 1\n1 2 % trailing\n\n2 0\n").unwrap();
        assert_eq!(g.vertices(), 3);
        assert_eq!(g.neighbors(1), &[2]);
        let err = SyntheticGraph::parse_edge_list("0 1\nbogus\n").unwrap_err();
        assert!(matches!(err, GraphError::Parse { line: 2, .. }));
        assert!(matches!(SyntheticGraph::parse_edge_list("# nothing\n"), Err(GraphError::Empty)));
    }

    #[test]
    fn layout_places_adjacency_after_offsets() {
        let g = SyntheticGraph::path(4);
        assert_eq!(g.adjacency_base(), 5 * OFFSET_BYTES);
        assert_eq!(g.footprint(), 5 * 8 + 6 * 4);
    }
}
