use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PairIndex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    /// `side × side` grid with 4-neighbour edges; node `r·side + c`.
    Lattice4 { side: usize },
    RandomErdos { connectivity: f64 },
    Custom,
}

/// Undirected graph over `m` nodes; edges are stored as `u > v`, sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub m: usize,
    pub edges: Vec<PairIndex>,
    pub topology: Topology,
}

impl GraphSpec {
    pub fn new(m: usize, edges: Vec<PairIndex>, topology: Topology) -> Result<Self> {
        let mut edges = edges;
        for e in &edges {
            if e.u <= e.v || e.u >= m {
                return Err(Error::Config(format!("invalid edge {e} for m = {m}")));
            }
        }
        edges.sort();
        edges.dedup();
        Ok(Self { m, edges, topology })
    }

    pub fn has_edge(&self, e: PairIndex) -> bool {
        self.edges.binary_search(&e).is_ok()
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.m];
        for e in &self.edges {
            out[e.u].push(e.v);
            out[e.v].push(e.u);
        }
        for n in &mut out {
            n.sort_unstable();
        }
        out
    }

    pub fn degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|e| e.u == node || e.v == node).count()
    }

    pub fn without_edges(&self, removed: &[PairIndex]) -> Self {
        Self {
            m: self.m,
            edges: self
                .edges
                .iter()
                .copied()
                .filter(|e| !removed.contains(e))
                .collect(),
            topology: Topology::Custom,
        }
    }
}

/// 4-neighbour lattice on a `g × g` grid: `g²` nodes, `2g(g−1)` edges.
pub fn build_lattice(g: usize) -> Result<GraphSpec> {
    if g < 2 {
        return Err(Error::Config(format!("lattice side must be at least 2, got {g}")));
    }
    let mut edges = Vec::with_capacity(2 * g * (g - 1));
    for r in 0..g {
        for c in 0..g {
            let node = r * g + c;
            if c + 1 < g {
                edges.push(PairIndex::new(node, node + 1));
            }
            if r + 1 < g {
                edges.push(PairIndex::new(node, node + g));
            }
        }
    }
    GraphSpec::new(g * g, edges, Topology::Lattice4 { side: g })
}

/// Erdős–Rényi graph: each of the `m(m−1)/2` pairs is an edge independently
/// with probability `connectivity`.
pub fn build_random<R: Rng + ?Sized>(m: usize, connectivity: f64, rng: &mut R) -> Result<GraphSpec> {
    if !(connectivity > 0.0 && connectivity < 1.0) {
        return Err(Error::Config(format!(
            "connectivity must lie in (0, 1), got {connectivity}"
        )));
    }
    if m < 2 {
        return Err(Error::Config("random graph needs at least 2 nodes".into()));
    }
    let mut edges = Vec::new();
    for v in 0..m {
        for u in v + 1..m {
            if rng.random::<f64>() < connectivity {
                edges.push(PairIndex { u, v });
            }
        }
    }
    GraphSpec::new(m, edges, Topology::RandomErdos { connectivity })
}
