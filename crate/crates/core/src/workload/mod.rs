//! Deterministic access-stream generators and I/O amplification accounting.

mod amplification;
mod graph;

pub use amplification::{amplification, granule_span, AmplificationLedger, GranuleCache};
pub use graph::{bfs_order, GraphError, GraphModel, SyntheticGraph, OFFSET_BYTES, VERTEX_ID_BYTES};

use std::collections::VecDeque;
use std::path::PathBuf;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::device::Opcode;
use crate::kernel::SeedSplitter;
use crate::units::{Bytes, Rate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadKind {
    Sequential,
    UniformRandom,
    GraphBfs,
    EmbeddingLookup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphSpec {
    pub vertices: u32,
    pub source: u32,
    /// Ingest this edge list instead of synthesizing.
    pub edge_list: Option<PathBuf>,
    #[serde(flatten)]
    pub model: GraphModel,
}

impl Default for GraphSpec {
    fn default() -> Self {
        Self {
            vertices: 100_000,
            source: 0,
            edge_list: None,
            model: GraphModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    /// File the stream addresses (offsets are file-relative).
    pub file: u32,
    /// Application issuing the requests.
    pub app: u32,
    pub op: Opcode,
    /// Bytes each request actually consumes (row width for embedding lookups).
    pub request_useful_bytes: Bytes,
    pub footprint: Bytes,
    /// Transfer granularity; defaults to the scenario block size.
    pub granularity: Option<Bytes>,
    /// Overrides the scenario seed for the stream.
    pub seed: Option<u64>,
    /// Closed loop: number of issuing threads.
    pub threads: Option<u32>,
    /// Open loop: fixed injection rate.
    pub rate: Option<Rate>,
    /// Random offsets are multiples of the request size.
    pub aligned: bool,
    pub max_requests: Option<u64>,
    /// LRU granule cache capacity for amplification accounting; 0 disables it.
    pub cache_granules: u64,
    pub graph: Option<GraphSpec>,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            kind: WorkloadKind::UniformRandom,
            file: 1,
            app: 1,
            op: Opcode::Read,
            request_useful_bytes: Bytes(512),
            footprint: Bytes(1 << 30),
            granularity: None,
            seed: None,
            threads: Some(1),
            rate: None,
            aligned: true,
            max_requests: None,
            cache_granules: 0,
            graph: None,
        }
    }
}

/// Which part of the data structure an access touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccessKind {
    Data,
    /// The `offsets[v]`, `offsets[v+1]` pair of a CSR vertex.
    VertexOffsets(u32),
    NeighborList(u32),
}

/// One request: a file-relative byte range the workload will consume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Access {
    pub offset: u64,
    pub useful: u64,
    pub op: Opcode,
    pub kind: AccessKind,
}

/// A workload with its graph (if any) materialized.
#[derive(Debug, Clone)]
pub struct Workload {
    spec: WorkloadSpec,
    seed: u64,
    graph: Option<Arc<SyntheticGraph>>,
}

impl Workload {
    pub fn new(spec: WorkloadSpec, scenario_seed: u64) -> Result<Self, GraphError> {
        let seed = spec.seed.unwrap_or(scenario_seed);
        let graph = if spec.kind == WorkloadKind::GraphBfs {
            let gspec = spec.graph.clone().unwrap_or_default();
            let g = match &gspec.edge_list {
                Some(path) => SyntheticGraph::from_edge_list(path)?,
                None => SyntheticGraph::generate(
                    gspec.model,
                    gspec.vertices,
                    &mut SeedSplitter::new(seed).stream("graph"),
                ),
            };
            Some(Arc::new(g))
        } else {
            None
        };
        Ok(Self { spec, seed, graph })
    }

    pub fn with_graph(spec: WorkloadSpec, seed: u64, graph: SyntheticGraph) -> Self {
        Self {
            spec,
            seed,
            graph: Some(Arc::new(graph)),
        }
    }

    pub fn spec(&self) -> &WorkloadSpec {
        &self.spec
    }

    pub fn graph(&self) -> Option<&SyntheticGraph> {
        self.graph.as_deref()
    }

    /// Bytes of the file the stream may touch.
    pub fn footprint(&self) -> u64 {
        match &self.graph {
            Some(g) => g.footprint(),
            None => self.spec.footprint.0,
        }
    }

    /// A fresh stream; every call yields the identical sequence.
    pub fn stream(&self) -> AccessStream {
        let rng = SeedSplitter::new(self.seed).stream("workload");
        let req = self.spec.request_useful_bytes.0.max(1);
        let footprint = self.footprint();
        let source = match self.spec.kind {
            WorkloadKind::Sequential => Source::Sequential { next: 0 },
            WorkloadKind::UniformRandom => Source::Random { rng },
            WorkloadKind::EmbeddingLookup => Source::Embedding { rng },
            WorkloadKind::GraphBfs => {
                let graph = self.graph.clone().expect("graph workload has a graph");
                let source = self.spec.graph.as_ref().map_or(0, |g| g.source);
                Source::Bfs(BfsStream::new(graph, source))
            }
        };
        AccessStream {
            source,
            request: req,
            footprint,
            aligned: self.spec.aligned,
            op: self.spec.op,
            remaining: self.spec.max_requests,
        }
    }
}

#[derive(Debug)]
enum Source {
    Sequential { next: u64 },
    Random { rng: ChaCha8Rng },
    Embedding { rng: ChaCha8Rng },
    Bfs(BfsStream),
}

#[derive(Debug)]
pub struct AccessStream {
    source: Source,
    request: u64,
    footprint: u64,
    aligned: bool,
    op: Opcode,
    remaining: Option<u64>,
}

impl Iterator for AccessStream {
    type Item = Access;

    fn next(&mut self) -> Option<Access> {
        if self.remaining == Some(0) {
            return None;
        }
        let req = self.request;
        let access = match &mut self.source {
            Source::Sequential { next } => {
                if *next + req > self.footprint {
                    return None;
                }
                let offset = *next;
                *next += req;
                data(offset, req, self.op)
            }
            Source::Random { rng } => {
                if req > self.footprint {
                    return None;
                }
                let offset = if self.aligned {
                    rng.gen_range(0..self.footprint / req) * req
                } else {
                    rng.gen_range(0..=self.footprint - req)
                };
                data(offset, req, self.op)
            }
            Source::Embedding { rng } => {
                let rows = self.footprint / req;
                if rows == 0 {
                    return None;
                }
                data(rng.gen_range(0..rows) * req, req, self.op)
            }
            Source::Bfs(bfs) => {
                let mut a = bfs.next()?;
                a.op = self.op;
                a
            }
        };
        if let Some(r) = self.remaining.as_mut() {
            *r -= 1;
        }
        Some(access)
    }
}

fn data(offset: u64, useful: u64, op: Opcode) -> Access {
    Access {
        offset,
        useful,
        op,
        kind: AccessKind::Data,
    }
}

/// Frontier-driven traversal: reading a vertex's neighbor list is what
/// discovers the next wave, so the stream depends on the graph's contents.
#[derive(Debug)]
struct BfsStream {
    graph: Arc<SyntheticGraph>,
    seen: Vec<bool>,
    frontier: VecDeque<u32>,
    pending: VecDeque<Access>,
}

impl BfsStream {
    fn new(graph: Arc<SyntheticGraph>, source: u32) -> Self {
        let n = graph.vertices() as usize;
        let mut seen = vec![false; n];
        let mut frontier = VecDeque::new();
        if (source as usize) < n {
            seen[source as usize] = true;
            frontier.push_back(source);
        }
        Self {
            graph,
            seen,
            frontier,
            pending: VecDeque::new(),
        }
    }
}

impl Iterator for BfsStream {
    type Item = Access;

    fn next(&mut self) -> Option<Access> {
        if let Some(a) = self.pending.pop_front() {
            return Some(a);
        }
        let v = self.frontier.pop_front()?;
        let g = &self.graph;
        let offsets = Access {
            offset: u64::from(v) * OFFSET_BYTES,
            useful: 2 * OFFSET_BYTES,
            op: Opcode::Read,
            kind: AccessKind::VertexOffsets(v),
        };
        let degree = g.degree(v);
        if degree > 0 {
            self.pending.push_back(Access {
                offset: g.adjacency_base() + g.offsets()[v as usize] * VERTEX_ID_BYTES,
                useful: degree * VERTEX_ID_BYTES,
                op: Opcode::Read,
                kind: AccessKind::NeighborList(v),
            });
            for &w in g.neighbors(v) {
                if !self.seen[w as usize] {
                    self.seen[w as usize] = true;
                    self.frontier.push_back(w);
                }
            }
        }
        Some(offsets)
    }
}
