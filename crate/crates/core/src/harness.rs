//! Replicated experiments: the chi-square time course on assortative versus
//! non-assortative graphs, and the unconditional versus community-conditional
//! test contrast.
//!
//! Each replicate draws its graph seed and its dynamics stream from the
//! master seed and its own index only, so results for replicate `i` do not
//! depend on how many other replicates run or in which order.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::community::{girvan_newman, modularity, Partition};
use crate::dynamics::{
    init_uniform_traits, run_observed, CulturalState, RunConfig, Stepper, TrajectoryRecord,
};
use crate::error::{Error, Result};
use crate::graph::{
    generate_planted_partition, mixing_summary, ConnectivityPolicy, GeneratorParams, Graph,
    SocialTypes, TypeAssignment,
};
use crate::rng::{derive_seed, stream, SimRng};
use crate::stats::{chi_squared_critical, conditional_test_report, TestReport};
use crate::VERSION;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphMode {
    /// One graph shared by every replicate.
    FixedGraph,
    /// A fresh graph per replicate.
    ResamplePerReplicate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Generator settings without the seed, which each replicate derives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub nodes: usize,
    pub p_within: f64,
    pub p_between: f64,
    pub type_assignment: TypeAssignment,
    pub connectivity: ConnectivityPolicy,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            nodes: 100,
            p_within: 0.09,
            p_between: 0.01,
            type_assignment: TypeAssignment::ExactHalfSplit,
            connectivity: ConnectivityPolicy::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn params(&self, seed: u64) -> GeneratorParams {
        GeneratorParams {
            n: self.nodes,
            p_within: self.p_within,
            p_between: self.p_between,
            type_assignment: self.type_assignment,
            seed,
            connectivity: self.connectivity,
        }
    }
}

/// Full experiment description; the JSON config file mirrors it field for
/// field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub generator: GeneratorConfig,
    /// Edge probability of the non-assortative comparison arm.
    pub control_p: f64,
    pub graph_mode: GraphMode,
    pub stepper: Stepper,
    pub replicates: usize,
    /// Step budget; defaults to 200 sweeps.
    pub budget: Option<u64>,
    /// Sampling interval in steps; defaults to one sweep.
    pub record_every: Option<u64>,
    pub stop_on_absorption: bool,
    pub alpha: f64,
    pub permutations: u32,
    pub master_seed: u64,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            generator: GeneratorConfig::default(),
            control_p: 0.05,
            graph_mode: GraphMode::ResamplePerReplicate,
            stepper: Stepper::Neutral,
            replicates: 200,
            budget: None,
            record_every: None,
            stop_on_absorption: true,
            alpha: 0.05,
            permutations: 1000,
            master_seed: 0,
            output: None,
            format: OutputFormat::Csv,
        }
    }
}

impl ExperimentConfig {
    pub fn budget(&self) -> u64 {
        self.budget.unwrap_or(200 * self.generator.nodes as u64)
    }

    pub fn record_every(&self) -> u64 {
        self.record_every.unwrap_or(self.generator.nodes as u64)
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            budget: self.budget(),
            record_every: self.record_every(),
            stop_on_absorption: self.stop_on_absorption,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.params(0).validate()?;
        if !(0.0..=1.0).contains(&self.control_p) {
            return Err(Error::invalid(format!(
                "control_p = {} is not a probability",
                self.control_p
            )));
        }
        if self.replicates == 0 {
            return Err(Error::invalid("replicates must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::invalid(format!(
                "alpha = {} is outside (0, 1]",
                self.alpha
            )));
        }
        if self.permutations == 0 {
            return Err(Error::invalid("permutations must be at least 1"));
        }
        self.run_config().validate()
    }
}

/// Metadata block echoed at the top of every output.
#[derive(Clone, Debug, Serialize)]
pub struct Metadata {
    pub artifact: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: ExperimentConfig,
}

impl Metadata {
    pub fn new(command: &'static str, config: &ExperimentConfig) -> Self {
        Metadata {
            artifact: "culturenet",
            version: VERSION,
            command,
            config: config.clone(),
        }
    }
}

/// Labels mixed into the master seed, one per experiment arm.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Arm {
    Assortative,
    Control,
    Contrast,
}

impl Arm {
    fn seed(self, master: u64) -> u64 {
        derive_seed(master, self as u64 + 1)
    }
}

fn map_replicates<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(f).collect()
    }
}

struct ReplicateSetup {
    graph: Graph,
    types: SocialTypes,
    rng: SimRng,
}

fn setup_replicate(
    generator: &GeneratorConfig,
    mode: GraphMode,
    arm_seed: u64,
    index: usize,
) -> Result<ReplicateSetup> {
    let graph_seed = match mode {
        GraphMode::ResamplePerReplicate => derive_seed(arm_seed, index as u64),
        GraphMode::FixedGraph => derive_seed(arm_seed, u64::MAX),
    };
    let (graph, types) = generate_planted_partition(&generator.params(graph_seed))?;
    Ok(ReplicateSetup {
        graph,
        types,
        rng: stream(arm_seed, index as u64),
    })
}

/// Per-replicate summary of a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    /// Assortativity of the replicate's graph.
    pub r: Option<f64>,
    pub peak_chi2: f64,
    pub peak_step: u64,
    pub final_chi2: f64,
    pub absorbed: bool,
    pub absorption_step: Option<u64>,
    pub recorded_samples: usize,
    /// Samples whose chi-square exceeds the df = 1 critical value at alpha.
    pub significant_samples: usize,
}

/// Cross-replicate chi-square quantiles at one recorded step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub step: u64,
    pub sweep: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ArmResult {
    pub label: &'static str,
    pub p_within: f64,
    pub p_between: f64,
    pub summary: Vec<SummaryRow>,
    pub replicates: Vec<ReplicateResult>,
    /// Replicate 0's full trajectory.
    pub representative: TrajectoryRecord,
    #[serde(skip)]
    pub trajectories: Vec<TrajectoryRecord>,
}

impl ArmResult {
    pub fn median_peak(&self) -> f64 {
        let mut peaks: Vec<f64> = self.replicates.iter().map(|r| r.peak_chi2).collect();
        quantile(&mut peaks, 0.5)
    }

    pub fn mean_r(&self) -> f64 {
        let rs: Vec<f64> = self.replicates.iter().filter_map(|r| r.r).collect();
        rs.iter().sum::<f64>() / rs.len() as f64
    }

    /// Fraction of all recorded samples counted as significant.
    pub fn significant_fraction(&self) -> f64 {
        let (sig, total) = self.replicates.iter().fold((0, 0), |(s, t), r| {
            (s + r.significant_samples, t + r.recorded_samples)
        });
        sig as f64 / total as f64
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Fig1Output {
    pub metadata: Metadata,
    pub arms: Vec<ArmResult>,
}

/// Linear-interpolation quantile (the usual "type 7"); sorts `values`.
pub fn quantile(values: &mut [f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    values[lo] + (values[hi] - values[lo]) * (pos - lo as f64)
}

fn value_at(record: &TrajectoryRecord, step: u64) -> f64 {
    let idx = record.samples.partition_point(|s| s.step <= step);
    record.samples[idx.saturating_sub(1)].chi2
}

fn run_arm(
    config: &ExperimentConfig,
    label: &'static str,
    arm: Arm,
    p_within: f64,
    p_between: f64,
) -> Result<ArmResult> {
    let generator = GeneratorConfig {
        p_within,
        p_between,
        ..config.generator.clone()
    };
    let arm_seed = arm.seed(config.master_seed);
    let run_cfg = config.run_config();
    let critical = chi_squared_critical(config.alpha, 1)?;

    let outcomes = map_replicates(config.replicates, |index| -> Result<_> {
        let mut setup = setup_replicate(&generator, config.graph_mode, arm_seed, index)?;
        let r = mixing_summary(&setup.graph, &setup.types)
            .ok()
            .and_then(|m| m.r);
        let initial = init_uniform_traits(setup.graph.node_count(), &mut setup.rng);
        let record = run_observed(
            &setup.graph,
            &setup.types,
            initial,
            config.stepper,
            run_cfg,
            &mut setup.rng,
            |_, _| {},
        )?;
        let peak = *record.peak().expect("step 0 is always recorded");
        let last = *record.last().expect("step 0 is always recorded");
        let result = ReplicateResult {
            replicate: index,
            r,
            peak_chi2: peak.chi2,
            peak_step: peak.step,
            final_chi2: last.chi2,
            absorbed: last.absorbed,
            absorption_step: record.absorption_step(),
            recorded_samples: record.samples.len(),
            significant_samples: record.samples.iter().filter(|s| s.chi2 > critical).count(),
        };
        Ok((result, record))
    });
    let (replicates, trajectories): (Vec<_>, Vec<_>) = outcomes
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();

    let n = config.generator.nodes as f64;
    let every = run_cfg.record_every;
    let summary = (0..=run_cfg.budget / every)
        .map(|k| {
            let step = k * every;
            let mut values: Vec<f64> = trajectories.iter().map(|t| value_at(t, step)).collect();
            SummaryRow {
                step,
                sweep: step as f64 / n,
                median: quantile(&mut values, 0.5),
                q1: quantile(&mut values, 0.25),
                q3: quantile(&mut values, 0.75),
            }
        })
        .collect();

    Ok(ArmResult {
        label,
        p_within,
        p_between,
        summary,
        replicates,
        representative: trajectories[0].clone(),
        trajectories,
    })
}

/// Runs the configured replicates on the assortative graph family
/// (`generator.p_within`, `generator.p_between`) and on the flat control
/// family (`control_p` for every pair).
pub fn run_fig1(config: &ExperimentConfig) -> Result<Fig1Output> {
    config.validate()?;
    let g = &config.generator;
    let assortative = run_arm(
        config,
        "assortative",
        Arm::Assortative,
        g.p_within,
        g.p_between,
    )?;
    let control = run_arm(
        config,
        "control",
        Arm::Control,
        config.control_p,
        config.control_p,
    )?;
    Ok(Fig1Output {
        metadata: Metadata::new("fig1", config),
        arms: vec![assortative, control],
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CiReplicate {
    pub replicate: usize,
    pub r: Option<f64>,
    pub peak_step: u64,
    pub peak_chi2: f64,
    pub communities: usize,
    pub modularity: Option<f64>,
    pub unconditional: TestReport,
    pub conditional: TestReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct CiContrastReport {
    pub metadata: Metadata,
    pub alpha: f64,
    pub replicates_run: usize,
    /// Replicates absorbed at every recorded sample, left out of the rates.
    pub excluded: Vec<usize>,
    pub included: usize,
    /// Share of included replicates with permutation p ≤ alpha.
    pub unconditional_rejection_rate: f64,
    pub conditional_rejection_rate: f64,
    /// Same, using the asymptotic chi-square p-values.
    pub unconditional_asymptotic_rejection_rate: f64,
    pub conditional_asymptotic_rejection_rate: f64,
    pub replicates: Vec<CiReplicate>,
}

fn rate(count: usize, total: usize) -> f64 {
    if total == 0 {
        f64::NAN
    } else {
        count as f64 / total as f64
    }
}

/// Simulates each replicate, snapshots the state at its chi-square peak,
/// splits the graph into communities and tests type–trait association both
/// over the whole population and stratified by community.
pub fn run_ci_contrast(config: &ExperimentConfig) -> Result<CiContrastReport> {
    config.validate()?;
    let arm_seed = Arm::Contrast.seed(config.master_seed);
    let run_cfg = config.run_config();

    let outcomes = map_replicates(config.replicates, |index| -> Result<Option<CiReplicate>> {
        let mut setup = setup_replicate(&config.generator, config.graph_mode, arm_seed, index)?;
        let r = mixing_summary(&setup.graph, &setup.types)
            .ok()
            .and_then(|m| m.r);
        let initial = init_uniform_traits(setup.graph.node_count(), &mut setup.rng);
        let mut peak: Option<(f64, u64, bool, CulturalState)> = None;
        run_observed(
            &setup.graph,
            &setup.types,
            initial,
            config.stepper,
            run_cfg,
            &mut setup.rng,
            |sample, state| {
                if peak.as_ref().is_none_or(|p| sample.chi2 > p.0) {
                    peak = Some((sample.chi2, sample.step, sample.absorbed, state.clone()));
                }
            },
        )?;
        let (peak_chi2, peak_step, absorbed, state) = peak.expect("step 0 is always recorded");
        if absorbed {
            return Ok(None);
        }
        let (_, communities) = girvan_newman(&setup.graph);
        let q = modularity(&setup.graph, &communities).ok();
        let test_seed = derive_seed(arm_seed, index as u64);
        let whole = Partition::single_block(setup.graph.node_count());
        let unconditional = conditional_test_report(
            &setup.types,
            &state,
            &whole,
            config.permutations,
            derive_seed(test_seed, 1),
        )?;
        let conditional = conditional_test_report(
            &setup.types,
            &state,
            &communities,
            config.permutations,
            derive_seed(test_seed, 2),
        )?;
        Ok(Some(CiReplicate {
            replicate: index,
            r,
            peak_step,
            peak_chi2,
            communities: communities.len(),
            modularity: q,
            unconditional,
            conditional,
        }))
    });

    let mut excluded = Vec::new();
    let mut replicates = Vec::new();
    for (index, outcome) in outcomes.into_iter().enumerate() {
        match outcome? {
            Some(rep) => replicates.push(rep),
            None => excluded.push(index),
        }
    }
    let alpha = config.alpha;
    let count = |f: &dyn Fn(&CiReplicate) -> bool| replicates.iter().filter(|r| f(r)).count();
    let asym = |t: &TestReport| t.p_asymptotic.is_some_and(|p| p <= alpha);
    let included = replicates.len();
    Ok(CiContrastReport {
        metadata: Metadata::new("ci-contrast", config),
        alpha,
        replicates_run: config.replicates,
        included,
        unconditional_rejection_rate: rate(
            count(&|r| r.unconditional.p_permutation <= alpha),
            included,
        ),
        conditional_rejection_rate: rate(
            count(&|r| r.conditional.p_permutation <= alpha),
            included,
        ),
        unconditional_asymptotic_rejection_rate: rate(count(&|r| asym(&r.unconditional)), included),
        conditional_asymptotic_rejection_rate: rate(count(&|r| asym(&r.conditional)), included),
        excluded,
        replicates,
    })
}
