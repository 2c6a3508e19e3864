//! Browser bindings. Every entry point is stateless: the page passes the
//! generator parameters and a seed, and the graph is rebuilt from them, so a
//! given set of inputs always draws the same picture.

use culturenet::dynamics::run_observed;
use culturenet::rng::{derive_seed, stream};
use culturenet::stats::conditional_test_report;
use culturenet::{
    generate_planted_partition, girvan_newman, init_uniform_traits, mixing_summary, BiasMatrix,
    CulturalState, GeneratorParams, Graph, RunConfig, SocialTypes, Stepper, TrajectoryRecord,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

// Keeps GN and the permutation test responsive on the main thread.
const MAX_NODES: usize = 300;

#[derive(Debug, Serialize)]
pub struct GraphView {
    pub nodes: usize,
    pub types: Vec<u8>,
    pub edges: Vec<(usize, usize)>,
    pub r: Option<f64>,
    pub connected: bool,
}

#[derive(Debug, Serialize)]
pub struct TracePoint {
    pub sweep: f64,
    pub chi2: f64,
}

#[derive(Debug, Serialize)]
pub struct SimulationView {
    pub graph: GraphView,
    pub trace: Vec<TracePoint>,
    pub peak_sweep: f64,
    pub peak_chi2: f64,
    pub absorbed_at: Option<f64>,
    /// Traits at the χ² peak.
    pub peak_traits: Vec<u8>,
    pub final_traits: Vec<u8>,
}

#[derive(Debug, Serialize)]
pub struct CommunityView {
    pub simulation: SimulationView,
    pub membership: Vec<usize>,
    pub communities: usize,
    /// Absent for edgeless graphs.
    pub modularity: Option<f64>,
    pub unconditional_p: f64,
    pub conditional_p: f64,
    pub conditional_statistic: f64,
    pub conditional_df: u32,
}

fn build(
    n: usize,
    p_within: f64,
    p_between: f64,
    seed: u64,
) -> culturenet::Result<(Graph, SocialTypes)> {
    if n > MAX_NODES {
        return Err(culturenet::Error::InvalidParameter(format!(
            "the demo is limited to {MAX_NODES} nodes"
        )));
    }
    generate_planted_partition(&GeneratorParams::new(n, p_within, p_between, seed))
}

fn view(g: &Graph, types: &SocialTypes) -> GraphView {
    GraphView {
        nodes: g.node_count(),
        types: types.as_slice().to_vec(),
        edges: g.edges().to_vec(),
        r: mixing_summary(g, types).ok().and_then(|m| m.r),
        connected: g.is_connected(),
    }
}

/// `bias` is the off-diagonal acceptance probability; 1 means neutral copying.
fn stepper(bias: f64) -> culturenet::Result<Stepper> {
    if bias == 1.0 {
        return Ok(Stepper::Neutral);
    }
    Ok(Stepper::Biased {
        bias: BiasMatrix::new([[1.0, bias], [bias, 1.0]])?,
    })
}

pub fn generate_view(
    n: usize,
    p_within: f64,
    p_between: f64,
    seed: u64,
) -> culturenet::Result<GraphView> {
    let (g, types) = build(n, p_within, p_between, seed)?;
    Ok(view(&g, &types))
}

pub fn simulate_view(
    n: usize,
    p_within: f64,
    p_between: f64,
    seed: u64,
    sweeps: u64,
    bias: f64,
) -> culturenet::Result<SimulationView> {
    let (g, types) = build(n, p_within, p_between, seed)?;
    let stepper = stepper(bias)?;
    let dyn_seed = derive_seed(seed, 1);
    let mut rng = stream(dyn_seed, 0);
    let initial = init_uniform_traits(n, &mut rng);
    let config = RunConfig::new(sweeps.max(1) * n as u64, n as u64);

    let mut best: Option<(f64, CulturalState)> = None;
    let mut last = None;
    let record: TrajectoryRecord = run_observed(
        &g,
        &types,
        initial,
        stepper,
        config,
        &mut rng,
        |s, state| {
            if best.as_ref().is_none_or(|(chi2, _)| s.chi2 > *chi2) {
                best = Some((s.chi2, state.clone()));
            }
            last = Some(state.as_slice().to_vec());
        },
    )?;
    let peak = record
        .peak()
        .copied()
        .expect("a run records its initial state");
    let sweep = |step: u64| step as f64 / n as f64;
    let view = SimulationView {
        graph: view(&g, &types),
        trace: record
            .samples
            .iter()
            .map(|s| TracePoint {
                sweep: sweep(s.step),
                chi2: s.chi2,
            })
            .collect(),
        peak_sweep: sweep(peak.step),
        peak_chi2: peak.chi2,
        absorbed_at: record.absorption_step().map(sweep),
        peak_traits: best.map(|(_, s)| s.as_slice().to_vec()).unwrap_or_default(),
        final_traits: last.unwrap_or_default(),
    };
    Ok(view)
}

pub fn community_view(
    n: usize,
    p_within: f64,
    p_between: f64,
    seed: u64,
    sweeps: u64,
    bias: f64,
    permutations: u32,
) -> culturenet::Result<CommunityView> {
    let simulation = simulate_view(n, p_within, p_between, seed, sweeps, bias)?;
    let (g, types) = build(n, p_within, p_between, seed)?;
    let (_, partition) = girvan_newman(&g);
    let modularity = culturenet::modularity(&g, &partition).ok();
    let state = CulturalState::new(simulation.peak_traits.clone())?;
    let single = culturenet::Partition::single_block(n);
    let unconditional =
        conditional_test_report(&types, &state, &single, permutations, derive_seed(seed, 2))?;
    let conditional = conditional_test_report(
        &types,
        &state,
        &partition,
        permutations,
        derive_seed(seed, 3),
    )?;
    Ok(CommunityView {
        membership: partition.membership().to_vec(),
        communities: partition.len(),
        modularity,
        unconditional_p: unconditional.p_permutation,
        conditional_p: conditional.p_permutation,
        conditional_statistic: conditional.statistic,
        conditional_df: conditional.df,
        simulation,
    })
}

fn to_js<T: Serialize>(value: culturenet::Result<T>) -> Result<String, JsError> {
    let value = value.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

/// Draws a planted-partition graph; returns JSON.
#[wasm_bindgen]
pub fn generate(n: usize, p_within: f64, p_between: f64, seed: u64) -> Result<String, JsError> {
    to_js(generate_view(n, p_within, p_between, seed))
}

/// Runs copying dynamics for `sweeps` sweeps and returns the χ² trace as JSON.
#[wasm_bindgen]
pub fn simulate(
    n: usize,
    p_within: f64,
    p_between: f64,
    seed: u64,
    sweeps: u64,
    bias: f64,
) -> Result<String, JsError> {
    to_js(simulate_view(n, p_within, p_between, seed, sweeps, bias))
}

/// Simulation plus Girvan–Newman communities and both independence tests at the χ² peak.
#[wasm_bindgen]
pub fn communities(
    n: usize,
    p_within: f64,
    p_between: f64,
    seed: u64,
    sweeps: u64,
    bias: f64,
    permutations: u32,
) -> Result<String, JsError> {
    to_js(community_view(
        n,
        p_within,
        p_between,
        seed,
        sweeps,
        bias,
        permutations,
    ))
}
