//! Country-level communication graph and its centrality metrics.
//!
//! Routers (or ASes) of one country merge into a single node; consecutive
//! distinct countries on any stored path become an undirected edge. The
//! result is simple: no self-loops and no multi-edges.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::experiments::{fmt6, involved};
use crate::path_store::PathStore;
use crate::trace_model::CountryCode;

pub const EIGEN_TOLERANCE: f64 = 1e-10;
pub const EIGEN_MAX_ITERATIONS: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph has no edges")]
    NoEdges,
    #[error("power iteration did not converge after {0} iterations")]
    NonConvergence(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountryGraph {
    nodes: Vec<CountryCode>,
    /// Sorted neighbour indices per node.
    adj: Vec<Vec<usize>>,
}

impl CountryGraph {
    /// Builds a graph from explicit nodes and edges. Self-loops and repeated
    /// edges are dropped; edge endpoints are added as nodes if missing.
    pub fn from_edges(
        nodes: impl IntoIterator<Item = CountryCode>,
        edges: impl IntoIterator<Item = (CountryCode, CountryCode)>,
    ) -> Self {
        let edges: BTreeSet<(CountryCode, CountryCode)> = edges
            .into_iter()
            .filter(|(a, b)| a != b)
            .map(|(a, b)| if a < b { (a, b) } else { (b, a) })
            .collect();
        let mut node_set: BTreeSet<CountryCode> = nodes.into_iter().collect();
        for (a, b) in &edges {
            node_set.insert(*a);
            node_set.insert(*b);
        }
        let nodes: Vec<CountryCode> = node_set.into_iter().collect();
        let pos: BTreeMap<CountryCode, usize> =
            nodes.iter().enumerate().map(|(i, c)| (*c, i)).collect();
        let mut adj = vec![Vec::new(); nodes.len()];
        for (a, b) in &edges {
            adj[pos[a]].push(pos[b]);
            adj[pos[b]].push(pos[a]);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Self { nodes, adj }
    }

    /// Sorted node list; centrality vectors follow this order.
    pub fn nodes(&self) -> &[CountryCode] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    /// Edges as `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(CountryCode, CountryCode)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (i, list) in self.adj.iter().enumerate() {
            for &j in list {
                if i < j {
                    out.push((self.nodes[i], self.nodes[j]));
                }
            }
        }
        out
    }

    fn bfs(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.nodes.len()];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(v) = queue.pop_front() {
            let d = dist[v].expect("queued nodes have a distance");
            for &w in &self.adj[v] {
                if dist[w].is_none() {
                    dist[w] = Some(d + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    fn by_node<T>(&self, values: Vec<T>) -> BTreeMap<CountryCode, T> {
        self.nodes.iter().copied().zip(values).collect()
    }
}

/// Merges every stored path into one undirected country graph.
pub fn build_graph(store: &PathStore) -> CountryGraph {
    let mut edges = BTreeSet::new();
    for (_, paths) in store.pairs() {
        for p in paths {
            for w in p.hops().windows(2) {
                edges.insert((w[0], w[1]));
            }
        }
    }
    CountryGraph::from_edges(store.countries(), edges)
}

pub fn degree_vector(g: &CountryGraph) -> Vec<usize> {
    g.adj.iter().map(Vec::len).collect()
}

/// Raw neighbour count per node.
pub fn degree_centrality(g: &CountryGraph) -> BTreeMap<CountryCode, usize> {
    g.by_node(degree_vector(g))
}

/// Inverse mean BFS distance to the reachable nodes, scaled by the reachable
/// fraction `r / (n - 1)`. Isolated nodes score 0.
pub fn closeness_vector(g: &CountryGraph) -> Vec<f64> {
    let n = g.node_count();
    (0..n)
        .into_par_iter()
        .map(|v| {
            let dist = g.bfs(v);
            let (reach, total) = dist
                .iter()
                .flatten()
                .filter(|d| **d > 0)
                .fold((0usize, 0usize), |(r, t), d| (r + 1, t + d));
            if reach == 0 {
                0.0
            } else {
                (reach as f64 / (n - 1) as f64) * (reach as f64 / total as f64)
            }
        })
        .collect()
}

pub fn closeness_centrality(g: &CountryGraph) -> BTreeMap<CountryCode, f64> {
    g.by_node(closeness_vector(g))
}

/// Dominant eigenvector of the adjacency matrix, unit L2 norm.
///
/// Iterates on `A + I`, which has the same eigenvectors but keeps bipartite
/// graphs from oscillating. Starts from the uniform vector.
pub fn eigenvector_vector(g: &CountryGraph) -> Result<Vec<f64>, GraphError> {
    if g.edge_count() == 0 {
        return Err(GraphError::NoEdges);
    }
    let n = g.node_count();
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    for _ in 0..EIGEN_MAX_ITERATIONS {
        let mut y: Vec<f64> = (0..n)
            .map(|v| x[v] + g.adj[v].iter().map(|&w| x[w]).sum::<f64>())
            .collect();
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in &mut y {
            *v /= norm;
        }
        let delta = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        x = y;
        if delta < EIGEN_TOLERANCE {
            return Ok(x);
        }
    }
    Err(GraphError::NonConvergence(EIGEN_MAX_ITERATIONS))
}

pub fn eigenvector_centrality(g: &CountryGraph) -> Result<BTreeMap<CountryCode, f64>, GraphError> {
    Ok(g.by_node(eigenvector_vector(g)?))
}

/// Exact shortest-path counts behind load centrality.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadCounts {
    /// Shortest paths between ordered pairs `(s, t)`, `s != t`, that have the
    /// node as an interior hop.
    pub through: Vec<u128>,
    /// Shortest paths over all ordered pairs `s != t` in the same component.
    pub total: u128,
}

impl LoadCounts {
    pub fn fractions(&self) -> Vec<f64> {
        self.through
            .iter()
            .map(|&t| {
                if self.total == 0 {
                    0.0
                } else {
                    t as f64 / self.total as f64
                }
            })
            .collect()
    }
}

/// For each source, counts shortest paths by BFS layers (`sigma`) and the
/// number of shortest continuations below each node (`below`); a node `v`
/// is interior to `sigma[v] * below[v]` shortest paths from that source.
pub fn load_counts(g: &CountryGraph) -> LoadCounts {
    let n = g.node_count();
    let per_source: Vec<(Vec<u128>, u128)> = (0..n)
        .into_par_iter()
        .map(|s| {
            let mut dist: Vec<Option<usize>> = vec![None; n];
            let mut sigma = vec![0u128; n];
            let mut order = Vec::with_capacity(n);
            dist[s] = Some(0);
            sigma[s] = 1;
            let mut queue = VecDeque::from([s]);
            while let Some(v) = queue.pop_front() {
                order.push(v);
                let dv = dist[v].unwrap();
                for &w in &g.adj[v] {
                    match dist[w] {
                        None => {
                            dist[w] = Some(dv + 1);
                            sigma[w] = sigma[v];
                            queue.push_back(w);
                        }
                        Some(dw) if dw == dv + 1 => sigma[w] += sigma[v],
                        _ => {}
                    }
                }
            }
            let mut below = vec![0u128; n];
            for &v in order.iter().rev() {
                let dv = dist[v].unwrap();
                below[v] = g.adj[v]
                    .iter()
                    .filter(|&&w| dist[w] == Some(dv + 1))
                    .map(|&w| 1 + below[w])
                    .sum();
            }
            let mut through = vec![0u128; n];
            for &v in &order[1..] {
                through[v] = sigma[v] * below[v];
            }
            let total: u128 = order[1..].iter().map(|&t| sigma[t]).sum();
            (through, total)
        })
        .collect();
    let mut counts = LoadCounts {
        through: vec![0; n],
        total: 0,
    };
    for (through, total) in per_source {
        for (acc, t) in counts.through.iter_mut().zip(through) {
            *acc += t;
        }
        counts.total += total;
    }
    counts
}

/// Fraction of all shortest paths that pass through each node.
pub fn load_centrality(g: &CountryGraph) -> BTreeMap<CountryCode, f64> {
    g.by_node(load_counts(g).fractions())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentralityRow {
    pub country: CountryCode,
    pub degree: usize,
    pub closeness: f64,
    pub eigenvector: f64,
    pub load: f64,
    /// Mean involved-country count over every reachable destination.
    pub mean_involved: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentralityScatter {
    pub rows: Vec<CentralityRow>,
}

impl CentralityScatter {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("country,degree,closeness,eigenvector,load,mean_involved\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.country,
                r.degree,
                fmt6(r.closeness),
                fmt6(r.eigenvector),
                fmt6(r.load),
                fmt6(r.mean_involved)
            )
            .unwrap();
        }
        out
    }
}

/// Mean `|involved(x, y)|` over the destinations reachable from `x`
/// (excluding `x` itself); 0 when there are none.
pub fn mean_involved(store: &PathStore, x: CountryCode) -> f64 {
    let counts: Vec<usize> = store
        .targets_from(x)
        .filter(|(y, _)| *y != x)
        .map(|(y, _)| involved(store, x, y).len())
        .collect();
    if counts.is_empty() {
        0.0
    } else {
        counts.iter().sum::<usize>() as f64 / counts.len() as f64
    }
}

/// One row per graph node joining the four centralities with exposure.
pub fn centrality_scatter(
    store: &PathStore,
    g: &CountryGraph,
) -> Result<CentralityScatter, GraphError> {
    let degree = degree_vector(g);
    let closeness = closeness_vector(g);
    let eigen = eigenvector_vector(g)?;
    let load = load_counts(g).fractions();
    let exposure: Vec<f64> = g
        .nodes()
        .par_iter()
        .map(|&x| mean_involved(store, x))
        .collect();
    let rows = (0..g.node_count())
        .map(|i| CentralityRow {
            country: g.nodes()[i],
            degree: degree[i],
            closeness: closeness[i],
            eigenvector: eigen[i],
            load: load[i],
            mean_involved: exposure[i],
        })
        .collect();
    Ok(CentralityScatter { rows })
}
