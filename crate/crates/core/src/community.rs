//! Divisive community detection by repeated removal of the edge with the
//! highest shortest-path betweenness, with the cut chosen by modularity.

use std::collections::{BTreeMap, VecDeque};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{connected_components, Graph};

/// Disjoint cover of the nodes by non-empty blocks.
///
/// Blocks are kept sorted internally and ordered by their smallest node, so
/// block ids are dense and canonical.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
    #[serde(skip)]
    membership: Vec<usize>,
}

impl Partition {
    /// Canonicalizes arbitrary per-node labels.
    pub fn from_membership<L: Ord + Copy>(labels: &[L]) -> Self {
        let mut groups: BTreeMap<L, Vec<usize>> = BTreeMap::new();
        for (node, &label) in labels.iter().enumerate() {
            groups.entry(label).or_default().push(node);
        }
        Self::from_blocks_unchecked(labels.len(), groups.into_values().collect())
    }

    /// Validates that `blocks` are non-empty, disjoint and cover `0..n`.
    pub fn from_blocks(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; n];
        for block in &blocks {
            if block.is_empty() {
                return Err(Error::invalid("partition has an empty block"));
            }
            for &v in block {
                if v >= n {
                    return Err(Error::invalid(format!("node {v} outside 0..{n}")));
                }
                if std::mem::replace(&mut seen[v], true) {
                    return Err(Error::invalid(format!("node {v} appears in two blocks")));
                }
            }
        }
        if let Some(v) = seen.iter().position(|&s| !s) {
            return Err(Error::invalid(format!("node {v} is in no block")));
        }
        Ok(Self::from_blocks_unchecked(n, blocks))
    }

    fn from_blocks_unchecked(n: usize, mut blocks: Vec<Vec<usize>>) -> Self {
        for b in &mut blocks {
            b.sort_unstable();
        }
        blocks.sort_unstable_by_key(|b| b[0]);
        let mut membership = vec![0; n];
        for (id, b) in blocks.iter().enumerate() {
            for &v in b {
                membership[v] = id;
            }
        }
        Partition { blocks, membership }
    }

    pub fn single_block(n: usize) -> Self {
        Self::from_blocks_unchecked(
            n,
            if n == 0 {
                vec![]
            } else {
                vec![(0..n).collect()]
            },
        )
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block_of(&self, node: usize) -> usize {
        self.membership[node]
    }

    pub fn membership(&self) -> &[usize] {
        &self.membership
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.membership.len()
    }
}

/// Edge betweenness keyed by `(u, v)` with `u < v`.
pub type EdgeBetweenness = BTreeMap<(usize, usize), f64>;

/// Adjacency with edge ids, used while edges are being removed.
struct Working {
    adj: Vec<Vec<(usize, usize)>>,
    edges: Vec<(usize, usize)>,
    alive: Vec<bool>,
}

impl Working {
    fn new(g: &Graph) -> Self {
        let edges = g.edges().to_vec();
        let mut adj = vec![Vec::new(); g.node_count()];
        for (id, &(u, v)) in edges.iter().enumerate() {
            adj[u].push((v, id));
            adj[v].push((u, id));
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        let alive = vec![true; edges.len()];
        Working { adj, edges, alive }
    }

    fn remove(&mut self, id: usize) {
        self.alive[id] = false;
        let (u, v) = self.edges[id];
        self.adj[u].retain(|&(_, e)| e != id);
        self.adj[v].retain(|&(_, e)| e != id);
    }

    /// Brandes accumulation over all sources; each unordered pair is seen
    /// from both ends, hence the final halving.
    fn betweenness(&self) -> Vec<f64> {
        let n = self.adj.len();
        let mut score = vec![0.0; self.edges.len()];
        let mut sigma = vec![0.0f64; n];
        let mut dist = vec![usize::MAX; n];
        let mut delta = vec![0.0f64; n];
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::with_capacity(n);
        for s in 0..n {
            if self.adj[s].is_empty() {
                continue;
            }
            order.clear();
            sigma.iter_mut().for_each(|x| *x = 0.0);
            dist.iter_mut().for_each(|x| *x = usize::MAX);
            delta.iter_mut().for_each(|x| *x = 0.0);
            sigma[s] = 1.0;
            dist[s] = 0;
            queue.push_back(s);
            while let Some(v) = queue.pop_front() {
                order.push(v);
                for &(w, _) in &self.adj[v] {
                    if dist[w] == usize::MAX {
                        dist[w] = dist[v] + 1;
                        queue.push_back(w);
                    }
                    if dist[w] == dist[v] + 1 {
                        sigma[w] += sigma[v];
                    }
                }
            }
            for &w in order.iter().rev() {
                for &(v, id) in &self.adj[w] {
                    if dist[v] != usize::MAX && dist[v] + 1 == dist[w] {
                        let c = sigma[v] / sigma[w] * (1.0 + delta[w]);
                        score[id] += c;
                        delta[v] += c;
                    }
                }
            }
        }
        for (x, &alive) in score.iter_mut().zip(&self.alive) {
            *x = if alive { *x / 2.0 } else { 0.0 };
        }
        score
    }

    fn reachable(&self, from: usize, to: usize) -> bool {
        let mut seen = vec![false; self.adj.len()];
        let mut stack = vec![from];
        seen[from] = true;
        while let Some(u) = stack.pop() {
            if u == to {
                return true;
            }
            for &(v, _) in &self.adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        false
    }

    fn partition(&self) -> Partition {
        let pairs = self
            .edges
            .iter()
            .zip(&self.alive)
            .filter(|(_, &a)| a)
            .map(|(&e, _)| e);
        let g = Graph::from_edges(self.adj.len(), pairs).expect("working edges are a simple graph");
        Partition::from_blocks_unchecked(g.node_count(), connected_components(&g))
    }
}

/// Betweenness of every edge: the number of shortest paths through it,
/// summed over unordered node pairs with ties split equally.
pub fn edge_betweenness(g: &Graph) -> EdgeBetweenness {
    let w = Working::new(g);
    w.edges.iter().copied().zip(w.betweenness()).collect()
}

/// Newman–Girvan modularity of `partition` on `g`.
pub fn modularity(g: &Graph, partition: &Partition) -> Result<f64> {
    let m = g.edge_count();
    if m == 0 {
        return Err(Error::EdgelessModularity);
    }
    if partition.node_count() != g.node_count() {
        return Err(Error::invalid("partition does not cover the graph's nodes"));
    }
    let k = partition.len();
    let mut within = vec![0usize; k];
    let mut ends = vec![0usize; k];
    for &(u, v) in g.edges() {
        let (bu, bv) = (partition.block_of(u), partition.block_of(v));
        ends[bu] += 1;
        ends[bv] += 1;
        if bu == bv {
            within[bu] += 1;
        }
    }
    let m = m as f64;
    Ok(within
        .iter()
        .zip(&ends)
        .map(|(&w, &e)| {
            let a = e as f64 / (2.0 * m);
            w as f64 / m - a * a
        })
        .sum())
}

/// One edge removal.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RemovalStep {
    pub edge: (usize, usize),
    pub betweenness: f64,
    /// Connected components after the removal.
    pub components: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Dendrogram {
    pub removals: Vec<RemovalStep>,
    /// Component partitions in the order they appeared, starting with the
    /// components of the input graph.
    pub partitions: Vec<Partition>,
    /// Modularity of each entry of `partitions` on the input graph; empty
    /// when the graph has no edges.
    pub modularity: Vec<f64>,
}

// Betweenness values closer than this (relative) are treated as tied.
const BETWEENNESS_TIE: f64 = 1e-9;
const MODULARITY_TIE: f64 = 1e-12;

/// Girvan–Newman: recompute betweenness, remove the top edge (smallest
/// `(u, v)` among ties), repeat until no edges are left. Returns the
/// history and the observed component partition of highest modularity
/// (fewest blocks among ties).
pub fn girvan_newman(g: &Graph) -> (Dendrogram, Partition) {
    let mut work = Working::new(g);
    let mut partitions = vec![work.partition()];
    let mut removals = Vec::with_capacity(g.edge_count());
    let mut components = partitions[0].len();

    for _ in 0..g.edge_count() {
        let scores = work.betweenness();
        let top = scores
            .iter()
            .zip(&work.alive)
            .filter(|(_, &a)| a)
            .map(|(&s, _)| s)
            .fold(f64::NEG_INFINITY, f64::max);
        let cutoff = top - BETWEENNESS_TIE * top.abs().max(1.0);
        let id = (0..scores.len())
            .find(|&i| work.alive[i] && scores[i] >= cutoff)
            .expect("an alive edge attains the maximum");
        let (u, v) = work.edges[id];
        work.remove(id);
        if !work.reachable(u, v) {
            components += 1;
            partitions.push(work.partition());
        }
        removals.push(RemovalStep {
            edge: (u, v),
            betweenness: scores[id],
            components,
        });
    }

    let modularity: Vec<f64> = match g.edge_count() {
        0 => Vec::new(),
        _ => partitions
            .iter()
            .map(|p| modularity(g, p).expect("edges present and partition covers graph"))
            .collect(),
    };
    let mut best = 0;
    for (i, &q) in modularity.iter().enumerate() {
        if q > modularity[best] + MODULARITY_TIE {
            best = i;
        }
    }
    let chosen = partitions[best].clone();
    (
        Dendrogram {
            removals,
            partitions,
            modularity,
        },
        chosen,
    )
}
