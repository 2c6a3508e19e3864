//! Copying dynamics of the binary cultural trait.
//!
//! One elementary step picks a node uniformly at random; the node picks one
//! of its neighbors uniformly and copies that neighbor's trait. Under the
//! biased variant the copy is accepted only with probability
//! `bias[type(node)][incoming trait]`. A node without neighbors still
//! consumes the step but never changes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, SocialTypes};
use crate::rng::SimRng;
use crate::stats::{chi_squared, contingency_from_state, ContingencyTable};

/// Per-node binary cultural trait.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CulturalState(Vec<u8>);

impl CulturalState {
    pub fn new(traits: Vec<u8>) -> Result<Self> {
        if let Some(i) = traits.iter().position(|&y| y > 1) {
            return Err(Error::invalid(format!(
                "trait of node {i} is {}, expected 0 or 1",
                traits[i]
            )));
        }
        Ok(CulturalState(traits))
    }

    /// Every node carries `value`.
    pub fn uniform(n: usize, value: u8) -> Self {
        CulturalState(vec![value.min(1); n])
    }

    /// State whose node `i` carries bit `i` of `bits`.
    pub fn from_bits(n: usize, bits: u32) -> Self {
        CulturalState((0..n).map(|i| ((bits >> i) & 1) as u8).collect())
    }

    pub fn to_bits(&self) -> u32 {
        self.0
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &y)| acc | (u32::from(y) << i))
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

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&y| y == 1).count()
    }

    pub fn is_homogeneous(&self) -> bool {
        self.0.windows(2).all(|w| w[0] == w[1])
    }

    fn set(&mut self, node: usize, value: u8) {
        self.0[node] = value;
    }
}

/// Each node's trait drawn independently, 0 or 1 with equal probability.
pub fn init_uniform_traits(n: usize, rng: &mut SimRng) -> CulturalState {
    CulturalState((0..n).map(|_| u8::from(rng.random_bool(0.5))).collect())
}

/// Acceptance probabilities `bias[type][trait]`, all in `(0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 2]; 2]", into = "[[f64; 2]; 2]")]
pub struct BiasMatrix([[f64; 2]; 2]);

impl BiasMatrix {
    pub fn new(entries: [[f64; 2]; 2]) -> Result<Self> {
        for (t, row) in entries.iter().enumerate() {
            for (y, &b) in row.iter().enumerate() {
                if !(b > 0.0 && b <= 1.0) {
                    return Err(Error::invalid(format!(
                        "bias[{t}][{y}] = {b} is outside (0, 1]"
                    )));
                }
            }
        }
        Ok(BiasMatrix(entries))
    }

    /// The all-ones matrix, under which biased copying is neutral copying.
    pub fn neutral() -> Self {
        BiasMatrix([[1.0; 2]; 2])
    }

    pub fn accept(&self, social_type: u8, incoming: u8) -> f64 {
        self.0[social_type as usize][incoming as usize]
    }

    pub fn entries(&self) -> [[f64; 2]; 2] {
        self.0
    }
}

impl TryFrom<[[f64; 2]; 2]> for BiasMatrix {
    type Error = Error;

    fn try_from(entries: [[f64; 2]; 2]) -> Result<Self> {
        BiasMatrix::new(entries)
    }
}

impl From<BiasMatrix> for [[f64; 2]; 2] {
    fn from(b: BiasMatrix) -> Self {
        b.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Stepper {
    Neutral,
    Biased { bias: BiasMatrix },
}

impl Stepper {
    /// Probability that `node`, once selected, ends up holding `incoming`
    /// after copying a neighbor carrying it.
    fn acceptance(&self, types: &SocialTypes, node: usize, incoming: u8) -> f64 {
        match self {
            Stepper::Neutral => 1.0,
            Stepper::Biased { bias } => bias.accept(types.get(node), incoming),
        }
    }
}

/// Elapsed time of a run, in elementary steps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepClock {
    pub steps: u64,
    n: usize,
}

impl StepClock {
    pub fn new(n: usize) -> Self {
        StepClock { steps: 0, n }
    }

    /// Steps per node.
    pub fn sweeps(&self) -> f64 {
        self.steps as f64 / self.n as f64
    }

    fn tick(&mut self) {
        self.steps += 1;
    }
}

fn copy_step(
    g: &Graph,
    state: &mut CulturalState,
    mut accept: impl FnMut(usize, u8, &mut SimRng) -> bool,
    clock: &mut StepClock,
    rng: &mut SimRng,
) -> Option<usize> {
    clock.tick();
    let node = rng.random_range(0..g.node_count());
    let neighbors = g.neighbors(node);
    if neighbors.is_empty() {
        return None;
    }
    let incoming = state.get(neighbors[rng.random_range(0..neighbors.len())]);
    if incoming == state.get(node) || !accept(node, incoming, rng) {
        return None;
    }
    state.set(node, incoming);
    Some(node)
}

/// One neutral copy attempt. Returns the node whose trait changed, if any.
pub fn neutral_step(
    g: &Graph,
    state: &mut CulturalState,
    clock: &mut StepClock,
    rng: &mut SimRng,
) -> Option<usize> {
    copy_step(g, state, |_, _, _| true, clock, rng)
}

/// One biased copy attempt. The acceptance draw is skipped when the incoming
/// trait equals the current one or the acceptance probability is 1, so with
/// an all-ones matrix this consumes randomness exactly like [`neutral_step`].
pub fn biased_step(
    g: &Graph,
    state: &mut CulturalState,
    types: &SocialTypes,
    bias: &BiasMatrix,
    clock: &mut StepClock,
    rng: &mut SimRng,
) -> Option<usize> {
    copy_step(
        g,
        state,
        |node, incoming, rng| {
            let p = bias.accept(types.get(node), incoming);
            p >= 1.0 || rng.random_bool(p)
        },
        clock,
        rng,
    )
}

/// True when no edge joins nodes with different traits, i.e. every
/// connected component is trait-homogeneous.
pub fn is_absorbed(state: &CulturalState, g: &Graph) -> bool {
    discordant_edges(state, g) == 0
}

fn discordant_edges(state: &CulturalState, g: &Graph) -> usize {
    g.edges()
        .iter()
        .filter(|&&(u, v)| state.get(u) != state.get(v))
        .count()
}

/// A running copy process over a fixed graph.
///
/// Tracks the number of discordant edges incrementally so that absorption is
/// known after every step without a full scan.
pub struct Simulation<'a> {
    graph: &'a Graph,
    types: &'a SocialTypes,
    stepper: Stepper,
    state: CulturalState,
    clock: StepClock,
    discordant: usize,
}

impl<'a> Simulation<'a> {
    pub fn new(
        graph: &'a Graph,
        types: &'a SocialTypes,
        initial: CulturalState,
        stepper: Stepper,
    ) -> Result<Self> {
        if initial.len() != graph.node_count() || types.len() != graph.node_count() {
            return Err(Error::invalid(format!(
                "state has {} entries and types {}, graph has {} nodes",
                initial.len(),
                types.len(),
                graph.node_count()
            )));
        }
        let discordant = discordant_edges(&initial, graph);
        Ok(Simulation {
            graph,
            types,
            stepper,
            state: initial,
            clock: StepClock::new(graph.node_count()),
            discordant,
        })
    }

    pub fn step(&mut self, rng: &mut SimRng) -> Option<usize> {
        let changed = match &self.stepper {
            Stepper::Neutral => neutral_step(self.graph, &mut self.state, &mut self.clock, rng),
            Stepper::Biased { bias } => biased_step(
                self.graph,
                &mut self.state,
                self.types,
                bias,
                &mut self.clock,
                rng,
            ),
        };
        if let Some(node) = changed {
            let now = self.state.get(node);
            for &v in self.graph.neighbors(node) {
                if self.state.get(v) == now {
                    self.discordant -= 1;
                } else {
                    self.discordant += 1;
                }
            }
        }
        changed
    }

    pub fn is_absorbed(&self) -> bool {
        self.discordant == 0
    }

    pub fn state(&self) -> &CulturalState {
        &self.state
    }

    pub fn clock(&self) -> StepClock {
        self.clock
    }

    pub fn into_state(self) -> CulturalState {
        self.state
    }

    fn sample(&self) -> Sample {
        let table = contingency_from_state(self.types, &self.state, None);
        Sample {
            step: self.clock.steps,
            chi2: chi_squared(&table).statistic,
            table,
            absorbed: self.is_absorbed(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Maximum number of elementary steps.
    pub budget: u64,
    /// Sampling interval in steps.
    pub record_every: u64,
    /// Stop as soon as the state is absorbing.
    pub stop_on_absorption: bool,
}

impl RunConfig {
    pub fn new(budget: u64, record_every: u64) -> Self {
        RunConfig {
            budget,
            record_every,
            stop_on_absorption: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::invalid("step budget must be at least 1"));
        }
        if self.record_every == 0 {
            return Err(Error::invalid("record interval must be at least 1"));
        }
        Ok(())
    }
}

/// One recorded observation of a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Sample {
    pub step: u64,
    pub chi2: f64,
    pub table: ContingencyTable,
    pub absorbed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub n: usize,
    pub samples: Vec<Sample>,
}

impl TrajectoryRecord {
    /// Earliest sample attaining the largest chi-square.
    pub fn peak(&self) -> Option<&Sample> {
        self.samples
            .iter()
            .reduce(|best, s| if s.chi2 > best.chi2 { s } else { best })
    }

    /// Step of the first absorbed sample.
    pub fn absorption_step(&self) -> Option<u64> {
        self.samples.iter().find(|s| s.absorbed).map(|s| s.step)
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }
}

/// Runs the dynamics, sampling at step 0 and every `record_every` steps.
///
/// With `stop_on_absorption` the run ends at the first absorbing state and
/// that state is always recorded.
pub fn run(
    g: &Graph,
    types: &SocialTypes,
    initial: CulturalState,
    stepper: Stepper,
    config: RunConfig,
    rng: &mut SimRng,
) -> Result<TrajectoryRecord> {
    run_observed(g, types, initial, stepper, config, rng, |_, _| {})
}

/// [`run`], calling `observe` with every recorded sample and the state it
/// was taken from.
pub fn run_observed(
    g: &Graph,
    types: &SocialTypes,
    initial: CulturalState,
    stepper: Stepper,
    config: RunConfig,
    rng: &mut SimRng,
    mut observe: impl FnMut(&Sample, &CulturalState),
) -> Result<TrajectoryRecord> {
    config.validate()?;
    let mut sim = Simulation::new(g, types, initial, stepper)?;
    let mut samples = Vec::new();
    let mut record = |sim: &Simulation<'_>, samples: &mut Vec<Sample>| {
        let s = sim.sample();
        observe(&s, sim.state());
        samples.push(s);
    };
    record(&sim, &mut samples);
    if !(config.stop_on_absorption && sim.is_absorbed()) {
        while sim.clock().steps < config.budget {
            sim.step(rng);
            let due = sim.clock().steps % config.record_every == 0;
            let stop = config.stop_on_absorption && sim.is_absorbed();
            if due || stop {
                record(&sim, &mut samples);
            }
            if stop {
                break;
            }
        }
    }
    Ok(TrajectoryRecord {
        n: g.node_count(),
        samples,
    })
}

/// Largest graph the exact solver accepts (2^14 states).
pub const EXACT_NODE_CAP: usize = 14;

// Above this many transient states the linear systems are solved iteratively.
const DENSE_LIMIT: usize = 4096;

/// Exact absorption statistics from a given initial state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AbsorptionOracle {
    /// Probability of ending in the all-ones state.
    pub prob_all_ones: f64,
    /// Expected number of elementary steps until absorption.
    pub expected_steps: f64,
}

/// Off-diagonal one-step transitions from the state encoded by `bits`: each
/// entry is `(bits with node i flipped, probability)`. The remaining mass
/// stays in place.
pub fn flip_transitions(
    g: &Graph,
    types: &SocialTypes,
    stepper: &Stepper,
    bits: u32,
) -> Vec<(u32, f64)> {
    let n = g.node_count();
    let trait_of = |i: usize| ((bits >> i) & 1) as u8;
    (0..n)
        .filter_map(|i| {
            let nb = g.neighbors(i);
            if nb.is_empty() {
                return None;
            }
            let own = trait_of(i);
            let differing = nb.iter().filter(|&&j| trait_of(j) != own).count();
            if differing == 0 {
                return None;
            }
            let p = differing as f64 / (n as f64 * nb.len() as f64)
                * stepper.acceptance(types, i, 1 - own);
            Some((bits ^ (1 << i), p))
        })
        .collect()
}

/// Dense one-step transition matrix over all `2^n` states (n ≤ 12).
pub fn transition_matrix(
    g: &Graph,
    types: &SocialTypes,
    stepper: &Stepper,
) -> Result<Vec<Vec<f64>>> {
    let n = g.node_count();
    if n > 12 {
        return Err(Error::StateSpaceTooLarge { nodes: n, cap: 12 });
    }
    let size = 1usize << n;
    let mut m = vec![vec![0.0; size]; size];
    for (x, row) in m.iter_mut().enumerate() {
        let mut out = 0.0;
        for (y, p) in flip_transitions(g, types, stepper, x as u32) {
            row[y as usize] += p;
            out += p;
        }
        row[x] += 1.0 - out;
    }
    Ok(m)
}

fn state_absorbed(g: &Graph, bits: u32) -> bool {
    g.edges()
        .iter()
        .all(|&(u, v)| (bits >> u) & 1 == (bits >> v) & 1)
}

/// Solves the absorbing chain exactly for the all-ones absorption
/// probability and the expected absorption time from `initial`.
///
/// Only states reachable from `initial` enter the linear systems. Up to
/// 4096 transient states they are solved by Gaussian elimination; larger
/// systems use Gauss-Seidel iteration to a relative change below 1e-15.
pub fn exact_absorption_oracle(
    g: &Graph,
    types: &SocialTypes,
    initial: &CulturalState,
    stepper: &Stepper,
) -> Result<AbsorptionOracle> {
    let n = g.node_count();
    if n > EXACT_NODE_CAP {
        return Err(Error::StateSpaceTooLarge {
            nodes: n,
            cap: EXACT_NODE_CAP,
        });
    }
    if initial.len() != n || types.len() != n {
        return Err(Error::invalid(
            "state or type vector length differs from node count",
        ));
    }
    let all_ones = ((1u64 << n) - 1) as u32;
    let start = initial.to_bits();
    if state_absorbed(g, start) {
        return Ok(AbsorptionOracle {
            prob_all_ones: if start == all_ones { 1.0 } else { 0.0 },
            expected_steps: 0.0,
        });
    }

    // Enumerate reachable transient states.
    let mut index = vec![usize::MAX; 1 << n];
    let mut transient = vec![start];
    index[start as usize] = 0;
    let mut rows: Vec<Vec<(u32, f64)>> = Vec::new();
    let mut cursor = 0;
    while cursor < transient.len() {
        let x = transient[cursor];
        let row = flip_transitions(g, types, stepper, x);
        for &(y, _) in &row {
            if index[y as usize] == usize::MAX && !state_absorbed(g, y) {
                index[y as usize] = transient.len();
                transient.push(y);
            }
        }
        rows.push(row);
        cursor += 1;
    }

    // (I - Q) h = 1 and (I - Q) u = R·[all ones]; with the self-loop folded
    // in, row x reads out(x)·z_x - Σ_y P(x,y) z_y = rhs_x.
    let system: Vec<SparseRow> = rows
        .iter()
        .map(|row| {
            let diag: f64 = row.iter().map(|&(_, p)| p).sum();
            let mut off = Vec::new();
            let mut hit_ones = 0.0;
            for &(y, p) in row {
                match index[y as usize] {
                    usize::MAX if y == all_ones => hit_ones += p,
                    usize::MAX => {}
                    j => off.push((j, p)),
                }
            }
            SparseRow {
                diag,
                off,
                hit_ones,
            }
        })
        .collect();

    let (u, h) = if system.len() <= DENSE_LIMIT {
        solve_dense(&system)
    } else {
        solve_gauss_seidel(&system)
    };
    Ok(AbsorptionOracle {
        prob_all_ones: u[0],
        expected_steps: h[0],
    })
}

struct SparseRow {
    diag: f64,
    off: Vec<(usize, f64)>,
    hit_ones: f64,
}

fn solve_dense(system: &[SparseRow]) -> (Vec<f64>, Vec<f64>) {
    let size = system.len();
    let width = size + 2;
    let mut a = vec![0.0; size * width];
    for (i, row) in system.iter().enumerate() {
        let r = &mut a[i * width..(i + 1) * width];
        r[i] = row.diag;
        for &(j, p) in &row.off {
            r[j] -= p;
        }
        r[size] = row.hit_ones;
        r[size + 1] = 1.0;
    }
    for col in 0..size {
        let pivot = (col..size)
            .max_by(|&x, &y| {
                a[x * width + col]
                    .abs()
                    .total_cmp(&a[y * width + col].abs())
            })
            .unwrap_or(col);
        if pivot != col {
            for k in 0..width {
                a.swap(col * width + k, pivot * width + k);
            }
        }
        let (upper, lower) = a.split_at_mut((col + 1) * width);
        let prow = &upper[col * width..];
        let pv = prow[col];
        for row in lower.chunks_exact_mut(width) {
            let f = row[col] / pv;
            if f != 0.0 {
                for k in col..width {
                    row[k] -= f * prow[k];
                }
            }
        }
    }
    let mut u = vec![0.0; size];
    let mut h = vec![0.0; size];
    for i in (0..size).rev() {
        let r = &a[i * width..(i + 1) * width];
        let mut su = r[size];
        let mut sh = r[size + 1];
        for j in i + 1..size {
            su -= r[j] * u[j];
            sh -= r[j] * h[j];
        }
        u[i] = su / r[i];
        h[i] = sh / r[i];
    }
    (u, h)
}

fn solve_gauss_seidel(system: &[SparseRow]) -> (Vec<f64>, Vec<f64>) {
    let size = system.len();
    let mut u = vec![0.0; size];
    let mut h = vec![0.0; size];
    for _ in 0..1_000_000 {
        let mut change: f64 = 0.0;
        for (i, row) in system.iter().enumerate() {
            let mut su = row.hit_ones;
            let mut sh = 1.0;
            for &(j, p) in &row.off {
                su += p * u[j];
                sh += p * h[j];
            }
            let (nu, nh) = (su / row.diag, sh / row.diag);
            change = change
                .max((nu - u[i]).abs())
                .max((nh - h[i]).abs() / nh.max(1.0));
            u[i] = nu;
            h[i] = nh;
        }
        if change < 1e-15 {
            break;
        }
    }
    (u, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn path2() -> (Graph, SocialTypes) {
        (
            Graph::from_edges(2, [(0, 1)]).unwrap(),
            SocialTypes::new(vec![0, 1]).unwrap(),
        )
    }

    fn star3() -> (Graph, SocialTypes) {
        (
            Graph::from_edges(3, [(0, 1), (0, 2)]).unwrap(),
            SocialTypes::new(vec![0, 1, 0]).unwrap(),
        )
    }

    #[test]
    fn init_is_reproducible_and_balanced() {
        assert_eq!(
            init_uniform_traits(50, &mut seeded(4)),
            init_uniform_traits(50, &mut seeded(4))
        );
        let s = init_uniform_traits(10_000, &mut seeded(1));
        let se = (0.25f64 / 10_000.0).sqrt();
        assert!((s.count_ones() as f64 / 10_000.0 - 0.5).abs() < 3.0 * se);
        let ones = (0..200)
            .filter(|&seed| init_uniform_traits(1, &mut seeded(seed)).get(0) == 1)
            .count();
        assert!((60..140).contains(&ones));
    }

    #[test]
    fn homogeneous_state_is_fixed() {
        let g = Graph::complete(6);
        let mut s = CulturalState::uniform(6, 1);
        let mut clock = StepClock::new(6);
        let mut rng = seeded(0);
        for _ in 0..100 {
            assert_eq!(neutral_step(&g, &mut s, &mut clock, &mut rng), None);
        }
        assert_eq!(s, CulturalState::uniform(6, 1));
        assert_eq!(clock.steps, 100);
    }

    #[test]
    fn two_node_path_absorbs_in_one_step() {
        let (g, _) = path2();
        for seed in 0..50 {
            let mut s = CulturalState::new(vec![0, 1]).unwrap();
            let mut clock = StepClock::new(2);
            assert!(neutral_step(&g, &mut s, &mut clock, &mut seeded(seed)).is_some());
            assert!(is_absorbed(&s, &g));
        }
    }

    #[test]
    fn isolated_node_never_changes() {
        let g = Graph::from_edges(3, [(0, 1)]).unwrap();
        let types = SocialTypes::new(vec![0, 1, 0]).unwrap();
        let bias = BiasMatrix::new([[1.0, 0.5], [0.5, 1.0]]).unwrap();
        let mut s = CulturalState::new(vec![1, 0, 1]).unwrap();
        let mut clock = StepClock::new(3);
        let mut rng = seeded(9);
        for _ in 0..500 {
            biased_step(&g, &mut s, &types, &bias, &mut clock, &mut rng);
            assert_eq!(s.get(2), 1);
        }
        assert!((clock.sweeps() - 500.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn all_ones_bias_replays_neutral_path() {
        let (g, types) = (
            Graph::complete(8),
            SocialTypes::new(vec![0, 1, 0, 1, 0, 1, 0, 1]).unwrap(),
        );
        let s0 = CulturalState::new(vec![0, 1, 1, 0, 1, 0, 0, 1]).unwrap();
        let cfg = RunConfig::new(400, 7);
        let biased = Stepper::Biased {
            bias: BiasMatrix::neutral(),
        };
        let a = run(
            &g,
            &types,
            s0.clone(),
            Stepper::Neutral,
            cfg,
            &mut seeded(3),
        )
        .unwrap();
        let b = run(&g, &types, s0, biased, cfg, &mut seeded(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bias_validation() {
        assert!(BiasMatrix::new([[1.0, 0.0], [1.0, 1.0]]).is_err());
        assert!(BiasMatrix::new([[1.0, 1.1], [1.0, 1.0]]).is_err());
        assert!(BiasMatrix::new([[1.0, f64::NAN], [1.0, 1.0]]).is_err());
        assert!(BiasMatrix::new([[0.01, 1.0], [1.0, 0.2]]).is_ok());
    }

    #[test]
    fn absorption_detection() {
        let g = Graph::complete(4);
        assert!(is_absorbed(&CulturalState::uniform(4, 0), &g));
        assert!(!is_absorbed(
            &CulturalState::new(vec![0, 1, 0, 0]).unwrap(),
            &g
        ));
        let split = Graph::from_edges(4, [(0, 1), (2, 3)]).unwrap();
        assert!(is_absorbed(
            &CulturalState::new(vec![0, 0, 1, 1]).unwrap(),
            &split
        ));
    }

    #[test]
    fn componentwise_homogeneous_has_no_transitions() {
        let g = Graph::from_edges(4, [(0, 1), (2, 3)]).unwrap();
        let types = SocialTypes::new(vec![0, 1, 0, 1]).unwrap();
        let bits = CulturalState::new(vec![0, 0, 1, 1]).unwrap().to_bits();
        assert!(flip_transitions(&g, &types, &Stepper::Neutral, bits).is_empty());
    }

    #[test]
    fn budget_one_on_absorbed_state() {
        let g = Graph::complete(4);
        let types = SocialTypes::new(vec![0, 0, 1, 1]).unwrap();
        let rec = run(
            &g,
            &types,
            CulturalState::uniform(4, 1),
            Stepper::Neutral,
            RunConfig::new(1, 1),
            &mut seeded(0),
        )
        .unwrap();
        assert_eq!(rec.samples.len(), 1);
        assert!(rec.samples[0].absorbed);
        assert_eq!(rec.samples[0].chi2, 0.0);
    }

    #[test]
    fn zero_budget_or_interval_rejected() {
        let (g, types) = path2();
        let s = CulturalState::new(vec![0, 1]).unwrap();
        for cfg in [RunConfig::new(0, 1), RunConfig::new(5, 0)] {
            assert!(run(&g, &types, s.clone(), Stepper::Neutral, cfg, &mut seeded(0)).is_err());
        }
    }

    #[test]
    fn sampling_schedule() {
        // An edgeless graph never absorbs by copying, but it is already
        // absorbed, so switch early stopping off to observe the schedule.
        let g = Graph::empty(4);
        let types = SocialTypes::new(vec![0, 0, 1, 1]).unwrap();
        let cfg = RunConfig {
            stop_on_absorption: false,
            ..RunConfig::new(17, 5)
        };
        let rec = run(
            &g,
            &types,
            CulturalState::new(vec![0, 1, 0, 1]).unwrap(),
            Stepper::Neutral,
            cfg,
            &mut seeded(0),
        )
        .unwrap();
        let steps: Vec<u64> = rec.samples.iter().map(|s| s.step).collect();
        assert_eq!(steps, vec![0, 5, 10, 15]);
    }

    #[test]
    fn oracle_small_cases() {
        let (g, types) = path2();
        let o = exact_absorption_oracle(
            &g,
            &types,
            &CulturalState::new(vec![0, 1]).unwrap(),
            &Stepper::Neutral,
        )
        .unwrap();
        assert!((o.prob_all_ones - 0.5).abs() < 1e-12);
        assert!((o.expected_steps - 1.0).abs() < 1e-12);

        let (g, types) = star3();
        let s = CulturalState::new(vec![1, 0, 0]).unwrap();
        let o = exact_absorption_oracle(&g, &types, &s, &Stepper::Neutral).unwrap();
        assert!((o.prob_all_ones - 0.5).abs() < 1e-12);

        for value in [0, 1] {
            let o = exact_absorption_oracle(
                &g,
                &types,
                &CulturalState::uniform(3, value),
                &Stepper::Neutral,
            )
            .unwrap();
            assert_eq!(o.prob_all_ones, f64::from(value));
            assert_eq!(o.expected_steps, 0.0);
        }
    }

    #[test]
    fn oracle_refuses_large_graphs() {
        let g = Graph::complete(15);
        let types = SocialTypes::new(vec![0; 15]).unwrap();
        let err = exact_absorption_oracle(
            &g,
            &types,
            &CulturalState::uniform(15, 0),
            &Stepper::Neutral,
        );
        assert!(matches!(
            err,
            Err(Error::StateSpaceTooLarge { nodes: 15, cap: 14 })
        ));
    }

    #[test]
    fn transition_rows_are_stochastic() {
        let (g, types) = star3();
        let bias = Stepper::Biased {
            bias: BiasMatrix::new([[0.3, 1.0], [1.0, 0.6]]).unwrap(),
        };
        for row in transition_matrix(&g, &types, &bias).unwrap() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn gauss_seidel_agrees_with_dense() {
        let g = Graph::from_edges(6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 3)]).unwrap();
        let types = SocialTypes::new(vec![0, 1, 0, 1, 0, 1]).unwrap();
        let stepper = Stepper::Biased {
            bias: BiasMatrix::new([[1.0, 0.4], [0.7, 1.0]]).unwrap(),
        };
        let start = CulturalState::new(vec![1, 0, 0, 1, 1, 0]).unwrap();
        let mut index = vec![usize::MAX; 64];
        let mut transient = Vec::new();
        for bits in 0..64u32 {
            if !state_absorbed(&g, bits) {
                index[bits as usize] = transient.len();
                transient.push(bits);
            }
        }
        let system: Vec<SparseRow> = transient
            .iter()
            .map(|&x| {
                let row = flip_transitions(&g, &types, &stepper, x);
                SparseRow {
                    diag: row.iter().map(|&(_, p)| p).sum(),
                    off: row
                        .iter()
                        .filter(|&&(y, _)| index[y as usize] != usize::MAX)
                        .map(|&(y, p)| (index[y as usize], p))
                        .collect(),
                    hit_ones: row.iter().filter(|&&(y, _)| y == 63).map(|&(_, p)| p).sum(),
                }
            })
            .collect();
        let (ud, hd) = solve_dense(&system);
        let (ug, hg) = solve_gauss_seidel(&system);
        for i in 0..system.len() {
            assert!((ud[i] - ug[i]).abs() < 1e-10);
            assert!((hd[i] - hg[i]).abs() < 1e-8 * hd[i]);
        }
        let o = exact_absorption_oracle(&g, &types, &start, &stepper).unwrap();
        let k = index[start.to_bits() as usize];
        assert!((o.prob_all_ones - ud[k]).abs() < 1e-12);
    }
}
