//! Simple undirected graphs, the two-type planted-partition generator and
//! type-mixing metrics.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{seeded, SimRng};

/// Simple undirected graph over dense node ids `0..n`.
///
/// Edges are stored once as `(u, v)` with `u < v`, sorted lexicographically.
/// Neighbor lists are sorted by id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    adj: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Graph with `n` nodes and no edges.
    pub fn empty(n: usize) -> Self {
        Graph {
            adj: vec![Vec::new(); n],
            edges: Vec::new(),
        }
    }

    /// Builds a graph from unordered pairs. Self-loops, duplicates and
    /// out-of-range ids are rejected.
    pub fn from_edges<I>(n: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut set = BTreeSet::new();
        for (a, b) in pairs {
            if a >= n || b >= n {
                return Err(Error::invalid(format!(
                    "edge ({a}, {b}) references a node outside 0..{n}"
                )));
            }
            if a == b {
                return Err(Error::invalid(format!("self-loop on node {a}")));
            }
            if !set.insert((a.min(b), a.max(b))) {
                return Err(Error::invalid(format!("duplicate edge ({a}, {b})")));
            }
        }
        Ok(Self::from_sorted_unique(n, set.into_iter().collect()))
    }

    fn from_sorted_unique(n: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in &edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Graph { adj, edges }
    }

    /// Complete graph on `n` nodes.
    pub fn complete(n: usize) -> Self {
        let edges = (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .collect();
        Self::from_sorted_unique(n, edges)
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(u, v)` with `u < v`, in ascending order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adj[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adj[u].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.adj.len() && self.adj[u].binary_search(&v).is_ok()
    }

    pub fn is_connected(&self) -> bool {
        connected_components(self).len() <= 1
    }

    /// Checks the structural invariants: no self-loops, no duplicate pairs,
    /// symmetric adjacency and degree sum equal to twice the edge count.
    pub fn validate(&self) -> Result<()> {
        let n = self.node_count();
        for w in self.edges.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::invalid("edge list not strictly ascending"));
            }
        }
        for &(u, v) in &self.edges {
            if u >= v || v >= n {
                return Err(Error::invalid(format!("malformed edge ({u}, {v})")));
            }
        }
        for u in 0..n {
            for &v in &self.adj[u] {
                if v == u || !self.has_edge(v, u) {
                    return Err(Error::invalid(format!(
                        "asymmetric adjacency at ({u}, {v})"
                    )));
                }
            }
        }
        let degree_sum: usize = self.adj.iter().map(Vec::len).sum();
        if degree_sum != 2 * self.edges.len() {
            return Err(Error::invalid(
                "degree sum differs from twice the edge count",
            ));
        }
        Ok(())
    }
}

/// Fixed per-node social type labels, each 0 or 1.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SocialTypes(Vec<u8>);

impl SocialTypes {
    pub fn new(labels: Vec<u8>) -> Result<Self> {
        if let Some(i) = labels.iter().position(|&t| t > 1) {
            return Err(Error::invalid(format!(
                "social type of node {i} is {}, expected 0 or 1",
                labels[i]
            )));
        }
        Ok(SocialTypes(labels))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, node: usize) -> u8 {
        self.0[node]
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    /// Number of nodes carrying each label.
    pub fn counts(&self) -> [usize; 2] {
        let ones = self.0.iter().filter(|&&t| t == 1).count();
        [self.0.len() - ones, ones]
    }

    /// The same population with labels 0 and 1 exchanged.
    pub fn swapped(&self) -> Self {
        SocialTypes(self.0.iter().map(|&t| 1 - t).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TypeAssignment {
    /// Each node independently type 0 or 1 with probability 1/2.
    UniformRandom,
    /// Exactly `n / 2` nodes of type 0 (rounded down), the rest type 1,
    /// placed by a uniform shuffle.
    ExactHalfSplit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "policy")]
pub enum ConnectivityPolicy {
    AllowDisconnected,
    ResampleUntilConnected { max_attempts: u32 },
}

impl Default for ConnectivityPolicy {
    fn default() -> Self {
        ConnectivityPolicy::ResampleUntilConnected { max_attempts: 1000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub n: usize,
    pub p_within: f64,
    pub p_between: f64,
    pub type_assignment: TypeAssignment,
    pub seed: u64,
    pub connectivity: ConnectivityPolicy,
}

impl GeneratorParams {
    /// Exact-half split, resample-until-connected with 1000 attempts.
    pub fn new(n: usize, p_within: f64, p_between: f64, seed: u64) -> Self {
        GeneratorParams {
            n,
            p_within,
            p_between,
            type_assignment: TypeAssignment::ExactHalfSplit,
            seed,
            connectivity: ConnectivityPolicy::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid(format!(
                "node count must be at least 2, got {}",
                self.n
            )));
        }
        for (name, p) in [("p_within", self.p_within), ("p_between", self.p_between)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} = {p} is not a probability")));
            }
        }
        if let ConnectivityPolicy::ResampleUntilConnected { max_attempts: 0 } = self.connectivity {
            return Err(Error::invalid("max_attempts must be at least 1"));
        }
        Ok(())
    }
}

fn assign_types(n: usize, rule: TypeAssignment, rng: &mut SimRng) -> SocialTypes {
    let labels = match rule {
        TypeAssignment::UniformRandom => (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect(),
        TypeAssignment::ExactHalfSplit => {
            let mut labels: Vec<u8> = (0..n).map(|i| u8::from(i >= n / 2)).collect();
            labels.shuffle(rng);
            labels
        }
    };
    SocialTypes(labels)
}

fn draw_edges(types: &SocialTypes, p_within: f64, p_between: f64, rng: &mut SimRng) -> Graph {
    let n = types.len();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if types.get(u) == types.get(v) {
                p_within
            } else {
                p_between
            };
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Graph::from_sorted_unique(n, edges)
}

/// Draws a two-type planted-partition graph.
///
/// Types are assigned first; then every unordered pair `u < v` (in
/// lexicographic order) is included with probability `p_within` when both
/// ends share a type and `p_between` otherwise. Under
/// [`ConnectivityPolicy::ResampleUntilConnected`] only the edges are redrawn
/// (from the same stream) until the graph is connected.
pub fn generate_planted_partition(params: &GeneratorParams) -> Result<(Graph, SocialTypes)> {
    params.validate()?;
    let mut rng = seeded(params.seed);
    let types = assign_types(params.n, params.type_assignment, &mut rng);
    match params.connectivity {
        ConnectivityPolicy::AllowDisconnected => {
            let g = draw_edges(&types, params.p_within, params.p_between, &mut rng);
            Ok((g, types))
        }
        ConnectivityPolicy::ResampleUntilConnected { max_attempts } => {
            for _ in 0..max_attempts {
                let g = draw_edges(&types, params.p_within, params.p_between, &mut rng);
                if g.is_connected() {
                    return Ok((g, types));
                }
            }
            Err(Error::ConnectivityBudgetExhausted { max_attempts })
        }
    }
}

/// Maximal connected node sets, each sorted, ordered by smallest member.
pub fn connected_components(g: &Graph) -> Vec<Vec<usize>> {
    let n = g.node_count();
    let mut seen = vec![false; n];
    let mut components = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut members = Vec::new();
        while let Some(u) = stack.pop() {
            members.push(u);
            for &v in g.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        members.sort_unstable();
        components.push(members);
    }
    components
}

/// Edge-end mixing between the two social types.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixingSummary {
    /// `e[i][j]`: fraction of edge ends leaving a type-`i` node toward a
    /// type-`j` node.
    pub e: [[f64; 2]; 2],
    /// Marginals, `a[i] = e[i][0] + e[i][1]`.
    pub a: [f64; 2],
    /// Assortativity coefficient; `None` when every edge end sits in a
    /// single class and the coefficient's denominator vanishes.
    pub r: Option<f64>,
}

impl MixingSummary {
    /// Builds the summary from a raw mixing matrix (normalized on entry).
    pub fn from_matrix(e: [[f64; 2]; 2]) -> Self {
        let total: f64 = e.iter().flatten().sum();
        let e = e.map(|row| row.map(|x| x / total));
        let a = [e[0][0] + e[0][1], e[1][0] + e[1][1]];
        let sum_sq = a[0] * a[0] + a[1] * a[1];
        let trace = e[0][0] + e[1][1];
        let denom = 1.0 - sum_sq;
        let r = (denom > 1e-15).then(|| (trace - sum_sq) / denom);
        MixingSummary { e, a, r }
    }

    /// `r` with the degenerate case mapped to NaN.
    pub fn r_or_nan(&self) -> f64 {
        self.r.unwrap_or(f64::NAN)
    }
}

/// Mixing matrix and assortativity coefficient of the realized graph.
pub fn mixing_summary(g: &Graph, types: &SocialTypes) -> Result<MixingSummary> {
    if g.edge_count() == 0 {
        return Err(Error::EdgelessMixing);
    }
    if types.len() != g.node_count() {
        return Err(Error::invalid("type vector length differs from node count"));
    }
    let mut counts = [[0u64; 2]; 2];
    for &(u, v) in g.edges() {
        let (tu, tv) = (types.get(u) as usize, types.get(v) as usize);
        counts[tu][tv] += 1;
        counts[tv][tu] += 1;
    }
    let ends = 2.0 * g.edge_count() as f64;
    Ok(MixingSummary::from_matrix(
        counts.map(|row| row.map(|c| c as f64 / ends)),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half_split(n: usize, pw: f64, pb: f64, seed: u64) -> GeneratorParams {
        GeneratorParams {
            connectivity: ConnectivityPolicy::AllowDisconnected,
            ..GeneratorParams::new(n, pw, pb, seed)
        }
    }

    #[test]
    fn degenerate_probabilities_give_two_blocks() {
        let (g, types) = generate_planted_partition(&half_split(4, 1.0, 0.0, 3)).unwrap();
        g.validate().unwrap();
        assert_eq!(g.edge_count(), 2);
        for &(u, v) in g.edges() {
            assert_eq!(types.get(u), types.get(v));
        }
        let comps = connected_components(&g);
        assert_eq!(comps.len(), 2);
        assert!(comps.iter().all(|c| c.len() == 2));
    }

    #[test]
    fn complete_case() {
        let (g, _) = generate_planted_partition(&GeneratorParams::new(100, 1.0, 1.0, 1)).unwrap();
        assert_eq!(g.edge_count(), 4950);
        assert_eq!(g, Graph::complete(100));
    }

    #[test]
    fn rejects_tiny_and_bad_probabilities() {
        assert!(matches!(
            generate_planted_partition(&GeneratorParams::new(1, 0.5, 0.5, 0)),
            Err(Error::InvalidParameter(_))
        ));
        assert!(generate_planted_partition(&GeneratorParams::new(10, 1.5, 0.5, 0)).is_err());
        let zero_budget = GeneratorParams {
            connectivity: ConnectivityPolicy::ResampleUntilConnected { max_attempts: 0 },
            ..GeneratorParams::new(10, 0.5, 0.5, 0)
        };
        assert!(generate_planted_partition(&zero_budget).is_err());
    }

    #[test]
    fn exhausted_resampling_names_budget() {
        let params = GeneratorParams {
            connectivity: ConnectivityPolicy::ResampleUntilConnected { max_attempts: 5 },
            ..GeneratorParams::new(10, 0.0, 0.0, 0)
        };
        let err = generate_planted_partition(&params).unwrap_err();
        assert!(matches!(
            err,
            Error::ConnectivityBudgetExhausted { max_attempts: 5 }
        ));
        assert!(err.to_string().contains('5'));
    }

    #[test]
    fn resampled_graphs_are_connected() {
        for seed in 0..20 {
            let (g, _) =
                generate_planted_partition(&GeneratorParams::new(100, 0.09, 0.01, seed)).unwrap();
            assert!(g.is_connected());
        }
    }

    #[test]
    fn exact_split_balances_types() {
        let (_, types) = generate_planted_partition(&half_split(101, 0.1, 0.1, 8)).unwrap();
        assert_eq!(types.counts(), [50, 51]);
    }

    #[test]
    fn same_seed_same_graph() {
        let p = GeneratorParams::new(60, 0.1, 0.02, 42);
        assert_eq!(
            generate_planted_partition(&p).unwrap(),
            generate_planted_partition(&p).unwrap()
        );
    }

    #[test]
    fn from_edges_rejects_malformed_input() {
        assert!(Graph::from_edges(3, [(0, 0)]).is_err());
        assert!(Graph::from_edges(3, [(0, 1), (1, 0)]).is_err());
        assert!(Graph::from_edges(3, [(0, 3)]).is_err());
        let g = Graph::from_edges(3, [(2, 1), (0, 1)]).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        g.validate().unwrap();
    }

    #[test]
    fn components_examples() {
        assert_eq!(
            connected_components(&Graph::complete(5)),
            vec![vec![0, 1, 2, 3, 4]]
        );
        assert_eq!(
            connected_components(&Graph::empty(3)),
            vec![vec![0], vec![1], vec![2]]
        );
        let g = Graph::from_edges(5, [(3, 4), (0, 2)]).unwrap();
        assert_eq!(
            connected_components(&g),
            vec![vec![0, 2], vec![1], vec![3, 4]]
        );
    }

    #[test]
    fn perfectly_assortative_graph() {
        let g = Graph::from_edges(4, [(0, 1), (2, 3)]).unwrap();
        let types = SocialTypes::new(vec![0, 0, 1, 1]).unwrap();
        let mix = mixing_summary(&g, &types).unwrap();
        assert_eq!(mix.r, Some(1.0));
    }

    #[test]
    fn independent_mixing_matrix() {
        let mix = MixingSummary::from_matrix([[0.25, 0.25], [0.25, 0.25]]);
        assert_eq!(mix.r, Some(0.0));
        assert_eq!(mix.a, [0.5, 0.5]);
    }

    #[test]
    fn single_class_is_flagged() {
        let g = Graph::complete(3);
        let types = SocialTypes::new(vec![1, 1, 1]).unwrap();
        let mix = mixing_summary(&g, &types).unwrap();
        assert_eq!(mix.r, None);
        assert!(mix.r_or_nan().is_nan());
    }

    #[test]
    fn edgeless_mixing_is_an_error() {
        let types = SocialTypes::new(vec![0, 1]).unwrap();
        assert!(matches!(
            mixing_summary(&Graph::empty(2), &types),
            Err(Error::EdgelessMixing)
        ));
    }

    #[test]
    fn social_types_reject_other_labels() {
        assert!(SocialTypes::new(vec![0, 2]).is_err());
    }
}
