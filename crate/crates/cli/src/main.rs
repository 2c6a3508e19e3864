//! `culturenet` command-line driver.
//!
//! Exit status: 0 on success, 1 on usage errors, 2 on runtime errors.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use culturenet::community::{girvan_newman, modularity, Partition};
use culturenet::dynamics::{init_uniform_traits, run_observed, BiasMatrix, CulturalState, Stepper};
use culturenet::graph::{
    generate_planted_partition, mixing_summary, ConnectivityPolicy, Graph, TypeAssignment,
};
use culturenet::harness::{
    run_ci_contrast, run_fig1, CiContrastReport, ExperimentConfig, Fig1Output, GraphMode, Metadata,
    OutputFormat,
};
use culturenet::io;
use culturenet::rng::{derive_seed, stream};
use culturenet::stats::conditional_test_report;

#[derive(Parser)]
#[command(
    name = "culturenet",
    version,
    about = "Neutral copying dynamics on homophilous networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a two-type planted-partition graph.
    ///
    /// CSV output writes `<output>.edges` and `<output>.attrs.csv`
    /// (default prefix `graph`); JSON output writes one document to
    /// `--output` or stdout.
    Generate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        generator: GeneratorArgs,
    },
    /// Run copying dynamics and emit chi-square trajectories.
    Simulate(SimulateArgs),
    /// Girvan–Newman communities of an edge-list graph.
    Communities(CommunitiesArgs),
    /// Community-conditional independence test of type and trait.
    Test(TestArgs),
    /// Chi-square time course on assortative and flat graphs.
    ///
    /// CSV output writes `<output>_summary.csv`, `<output>_replicates.csv`,
    /// `<output>_trace_assortative.csv` and `<output>_trace_control.csv`
    /// (default prefix `fig1`).
    Fig1(ExperimentArgs),
    /// Rejection rates of the unconditional and conditional tests.
    CiContrast(ExperimentArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file or prefix (see the subcommand help).
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TypeRule {
    ExactHalf,
    Uniform,
}

#[derive(Clone, Copy, ValueEnum)]
enum Connectivity {
    Resample,
    AllowDisconnected,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Fixed,
    Resample,
}

#[derive(Args, Clone, Default)]
struct GeneratorArgs {
    /// Number of nodes [default: 100].
    #[arg(long)]
    nodes: Option<usize>,
    /// Edge probability between nodes of the same type [default: 0.09].
    #[arg(long)]
    p_within: Option<f64>,
    /// Edge probability between nodes of different types [default: 0.01].
    #[arg(long)]
    p_between: Option<f64>,
    /// Social type assignment [default: exact-half].
    #[arg(long, value_enum)]
    type_assignment: Option<TypeRule>,
    /// Connectivity policy [default: resample].
    #[arg(long, value_enum)]
    connectivity: Option<Connectivity>,
    /// Resampling budget for `--connectivity resample` [default: 1000].
    #[arg(long)]
    max_attempts: Option<u32>,
}

impl GeneratorArgs {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        let g = &mut cfg.generator;
        if let Some(n) = self.nodes {
            g.nodes = n;
        }
        if let Some(p) = self.p_within {
            g.p_within = p;
        }
        if let Some(p) = self.p_between {
            g.p_between = p;
        }
        if let Some(rule) = self.type_assignment {
            g.type_assignment = match rule {
                TypeRule::ExactHalf => TypeAssignment::ExactHalfSplit,
                TypeRule::Uniform => TypeAssignment::UniformRandom,
            };
        }
        let attempts = self.max_attempts.unwrap_or(match g.connectivity {
            ConnectivityPolicy::ResampleUntilConnected { max_attempts } => max_attempts,
            ConnectivityPolicy::AllowDisconnected => 1000,
        });
        g.connectivity = match self.connectivity {
            Some(Connectivity::AllowDisconnected) => ConnectivityPolicy::AllowDisconnected,
            Some(Connectivity::Resample) => ConnectivityPolicy::ResampleUntilConnected {
                max_attempts: attempts,
            },
            None => match g.connectivity {
                ConnectivityPolicy::ResampleUntilConnected { .. } => {
                    ConnectivityPolicy::ResampleUntilConnected {
                        max_attempts: attempts,
                    }
                }
                other => other,
            },
        };
    }
}

#[derive(Args, Clone, Default)]
struct DynamicsArgs {
    /// Step budget [default: 200 sweeps].
    #[arg(long)]
    budget: Option<u64>,
    /// Sampling interval in steps [default: one sweep].
    #[arg(long)]
    record_every: Option<u64>,
    /// Biased copying with acceptance probabilities `b00,b01,b10,b11`
    /// (`b<type><trait>`); neutral when absent.
    #[arg(long, value_parser = parse_bias)]
    bias: Option<BiasMatrix>,
    /// Number of replicates [default: 200; simulate: 1].
    #[arg(long)]
    replicates: Option<usize>,
    /// Keep stepping after absorption.
    #[arg(long)]
    no_early_stop: bool,
}

impl DynamicsArgs {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if self.budget.is_some() {
            cfg.budget = self.budget;
        }
        if self.record_every.is_some() {
            cfg.record_every = self.record_every;
        }
        if let Some(bias) = self.bias {
            cfg.stepper = Stepper::Biased { bias };
        }
        if let Some(r) = self.replicates {
            cfg.replicates = r;
        }
        if self.no_early_stop {
            cfg.stop_on_absorption = false;
        }
    }
}

fn parse_bias(s: &str) -> std::result::Result<BiasMatrix, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    let [b00, b01, b10, b11] = v[..] else {
        return Err(format!(
            "expected four comma-separated values, got {}",
            v.len()
        ));
    };
    BiasMatrix::new([[b00, b01], [b10, b11]]).map_err(|e| e.to_string())
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    common: Common,
    /// JSON experiment config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    generator: GeneratorArgs,
    #[command(flatten)]
    dynamics: DynamicsArgs,
    /// Edge probability of the flat comparison arm [default: 0.05].
    #[arg(long)]
    control_p: Option<f64>,
    /// Graph per replicate or one shared graph [default: resample].
    #[arg(long, value_enum)]
    graph_mode: Option<Mode>,
    /// Significance level [default: 0.05].
    #[arg(long)]
    alpha: Option<f64>,
    /// Permutations per test [default: 1000].
    #[arg(long)]
    permutations: Option<u32>,
}

impl ExperimentArgs {
    fn config(&self, default_format: OutputFormat) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing {}", path.display()))?
            }
            None => ExperimentConfig {
                format: default_format,
                ..ExperimentConfig::default()
            },
        };
        self.generator.apply(&mut cfg);
        self.dynamics.apply(&mut cfg);
        if let Some(p) = self.control_p {
            cfg.control_p = p;
        }
        if let Some(mode) = self.graph_mode {
            cfg.graph_mode = match mode {
                Mode::Fixed => GraphMode::FixedGraph,
                Mode::Resample => GraphMode::ResamplePerReplicate,
            };
        }
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        if let Some(p) = self.permutations {
            cfg.permutations = p;
        }
        apply_common(&self.common, &mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn apply_common(common: &Common, cfg: &mut ExperimentConfig) {
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    if common.output.is_some() {
        cfg.output.clone_from(&common.output);
    }
    if let Some(f) = common.format {
        cfg.format = f.into();
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Edge-list graph; generated from the generator flags when absent.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// `node,social_type` CSV for `--graph`.
    #[arg(long, requires = "graph")]
    attrs: Option<PathBuf>,
    /// Initial `node,social_type,trait` CSV; random traits when absent.
    #[arg(long)]
    traits: Option<PathBuf>,
    /// Write replicate 0's final state as a `node,social_type,trait` CSV.
    #[arg(long)]
    final_state: Option<PathBuf>,
    #[command(flatten)]
    generator: GeneratorArgs,
    #[command(flatten)]
    dynamics: DynamicsArgs,
}

#[derive(Args)]
struct CommunitiesArgs {
    #[command(flatten)]
    common: Common,
    /// Edge-list graph.
    #[arg(long)]
    graph: PathBuf,
    /// Node count, for graphs with isolated trailing nodes.
    #[arg(long)]
    nodes: Option<usize>,
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    common: Common,
    /// Edge-list graph, used for community detection when no partition is given.
    #[arg(long, required_unless_present = "partition")]
    graph: Option<PathBuf>,
    /// `node,social_type,trait` CSV.
    #[arg(long)]
    attrs: PathBuf,
    /// `node,community` CSV; Girvan–Newman communities when absent.
    #[arg(long)]
    partition: Option<PathBuf>,
    /// Permutation count.
    #[arg(long, default_value_t = 1000)]
    permutations: u32,
}

/// Output sink: a file when a path is given, stdout otherwise.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn write_json<T: serde::Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let mut w = sink(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn read_graph(path: &Path, nodes: Option<usize>) -> Result<Graph> {
    Ok(io::read_path(path, |r| io::read_edge_list(r, nodes))?)
}

fn generate(common: &Common, generator: &GeneratorArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::default();
    generator.apply(&mut cfg);
    let params = cfg.generator.params(common.seed.unwrap_or(0));
    let (g, types) = generate_planted_partition(&params)?;
    let mixing = mixing_summary(&g, &types).ok();
    match common.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let prefix = common
                .output
                .clone()
                .unwrap_or_else(|| PathBuf::from("graph"));
            io::write_path(&with_suffix(&prefix, ".edges"), |w| {
                io::write_edge_list(&g, w)
            })?;
            io::write_path(&with_suffix(&prefix, ".attrs.csv"), |w| {
                io::write_attributes(&types, w)
            })?;
            eprintln!(
                "{} nodes, {} edges, r = {}",
                g.node_count(),
                g.edge_count(),
                mixing
                    .and_then(|m| m.r)
                    .map_or("undefined".into(), |r| format!("{r:.4}"))
            );
        }
        Format::Json => {
            let doc = serde_json::json!({
                "artifact": "culturenet",
                "version": culturenet::VERSION,
                "params": params,
                "nodes": g.node_count(),
                "edges": g.edges(),
                "social_types": types.as_slice(),
                "mixing": mixing,
            });
            write_json(&doc, common.output.as_deref())?;
        }
    }
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let mut cfg = ExperimentConfig {
        replicates: 1,
        ..ExperimentConfig::default()
    };
    args.generator.apply(&mut cfg);
    args.dynamics.apply(&mut cfg);
    apply_common(&args.common, &mut cfg);

    let initial_file = args
        .traits
        .as_deref()
        .map(|p| io::read_path(p, io::read_trait_state))
        .transpose()?;
    let (graph, types) = match &args.graph {
        Some(path) => {
            let types = match (&args.attrs, &initial_file) {
                (Some(a), _) => io::read_path(a, io::read_attributes)?,
                (None, Some((t, _))) => t.clone(),
                (None, None) => bail!("--graph needs --attrs or --traits for the social types"),
            };
            let g = read_graph(path, Some(types.len()))?;
            if g.node_count() != types.len() {
                bail!(
                    "graph has {} nodes but {} social types were given",
                    g.node_count(),
                    types.len()
                );
            }
            (g, types)
        }
        None => {
            let seed = derive_seed(cfg.master_seed, 0);
            generate_planted_partition(&cfg.generator.params(seed))?
        }
    };
    cfg.generator.nodes = graph.node_count();
    cfg.validate()?;
    if let Some((t, s)) = &initial_file {
        if t != &types || s.len() != graph.node_count() {
            bail!("--traits does not match the graph's social types");
        }
    }

    let run_cfg = cfg.run_config();
    let mut records = Vec::with_capacity(cfg.replicates);
    let mut final_state = None;
    for index in 0..cfg.replicates {
        let mut rng = stream(cfg.master_seed, index as u64);
        let initial = match &initial_file {
            Some((_, s)) => s.clone(),
            None => init_uniform_traits(graph.node_count(), &mut rng),
        };
        let mut last: Option<CulturalState> = None;
        let record = run_observed(
            &graph,
            &types,
            initial,
            cfg.stepper,
            run_cfg,
            &mut rng,
            |_, s| {
                if index == 0 {
                    last = Some(s.clone());
                }
            },
        )?;
        if index == 0 {
            final_state = last;
        }
        records.push(record);
    }

    if let (Some(path), Some(state)) = (&args.final_state, &final_state) {
        io::write_path(path, |w| io::write_trait_state(&types, state, w))?;
    }
    let metadata = Metadata::new("simulate", &cfg);
    let mut w = sink(cfg.output.as_deref())?;
    match cfg.format {
        OutputFormat::Csv => {
            io::write_metadata_comment(&metadata, &mut w)?;
            io::write_trajectory_header(&mut w)?;
            for (i, rec) in records.iter().enumerate() {
                io::write_trajectory_rows(i, rec, &mut w)?;
            }
        }
        OutputFormat::Json => {
            let doc = serde_json::json!({ "metadata": metadata, "trajectories": records });
            serde_json::to_writer_pretty(&mut w, &doc)?;
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn communities(args: &CommunitiesArgs) -> Result<()> {
    let g = read_graph(&args.graph, args.nodes)?;
    let (dendrogram, partition) = girvan_newman(&g);
    let q = modularity(&g, &partition).ok();
    match args.common.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut w = sink(args.common.output.as_deref())?;
            io::write_partition(&partition, &mut w)?;
            w.flush()?;
            eprintln!(
                "{} communities, Q = {}",
                partition.len(),
                q.map_or("undefined".into(), |q| format!("{q:.6}"))
            );
        }
        Format::Json => {
            let doc = serde_json::json!({
                "artifact": "culturenet",
                "version": culturenet::VERSION,
                "communities": partition.len(),
                "modularity": q,
                "membership": partition.membership(),
                "removals": dendrogram.removals,
                "cut_modularity": dendrogram.modularity,
            });
            write_json(&doc, args.common.output.as_deref())?;
        }
    }
    Ok(())
}

fn test(args: &TestArgs) -> Result<()> {
    let (types, state) = io::read_path(&args.attrs, io::read_trait_state)?;
    let partition: Partition = match &args.partition {
        Some(p) => io::read_path(p, io::read_partition)?,
        None => {
            let path = args
                .graph
                .as_deref()
                .expect("clap requires --graph without --partition");
            girvan_newman(&read_graph(path, Some(types.len()))?).1
        }
    };
    if partition.node_count() != types.len() {
        bail!(
            "partition covers {} nodes but the attribute file has {}",
            partition.node_count(),
            types.len()
        );
    }
    if let Some(path) = &args.graph {
        let g = read_graph(path, Some(types.len()))?;
        if g.node_count() != types.len() {
            bail!(
                "graph has {} nodes but the attribute file has {}",
                g.node_count(),
                types.len()
            );
        }
    }
    let report = conditional_test_report(
        &types,
        &state,
        &partition,
        args.permutations,
        args.common.seed.unwrap_or(0),
    )?;
    match args.common.format.unwrap_or(Format::Json) {
        Format::Json => write_json(&report, args.common.output.as_deref())?,
        Format::Csv => {
            let mut w = sink(args.common.output.as_deref())?;
            io::write_metadata_comment(
                &serde_json::json!({
                    "statistic": report.statistic,
                    "df": report.df,
                    "p_asymptotic": report.p_asymptotic,
                    "p_permutation": report.p_permutation,
                    "permutations": report.permutations,
                    "seed": report.seed,
                }),
                &mut w,
            )?;
            writeln!(w, "community_id,size,n00,n01,n10,n11,statistic,df")?;
            for c in &report.per_community {
                let [[a, b], [cc, d]] = c.table;
                writeln!(
                    w,
                    "{},{},{a},{b},{cc},{d},{},{}",
                    c.community_id, c.size, c.statistic, c.df
                )?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_fig1_csv(out: &Fig1Output, prefix: &Path) -> Result<()> {
    io::write_path(&with_suffix(prefix, "_summary.csv"), |w| {
        io::write_metadata_comment(&out.metadata, w)?;
        writeln!(w, "arm,step,sweep,median,q1,q3")?;
        for arm in &out.arms {
            for row in &arm.summary {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    arm.label, row.step, row.sweep, row.median, row.q1, row.q3
                )?;
            }
        }
        Ok(())
    })?;
    io::write_path(&with_suffix(prefix, "_replicates.csv"), |w| {
        io::write_metadata_comment(&out.metadata, w)?;
        writeln!(
            w,
            "arm,replicate,r,peak_chi2,peak_step,final_chi2,absorbed,absorption_step,recorded_samples,significant_samples"
        )?;
        for arm in &out.arms {
            for r in &arm.replicates {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{},{}",
                    arm.label,
                    r.replicate,
                    opt(r.r),
                    r.peak_chi2,
                    r.peak_step,
                    r.final_chi2,
                    r.absorbed,
                    opt(r.absorption_step),
                    r.recorded_samples,
                    r.significant_samples
                )?;
            }
        }
        Ok(())
    })?;
    for arm in &out.arms {
        io::write_path(
            &with_suffix(prefix, &format!("_trace_{}.csv", arm.label)),
            |w| {
                io::write_metadata_comment(&out.metadata, w)?;
                io::write_trajectory_header(w)?;
                io::write_trajectory_rows(0, &arm.representative, w)
            },
        )?;
    }
    Ok(())
}

fn fig1(args: &ExperimentArgs) -> Result<()> {
    let cfg = args.config(OutputFormat::Csv)?;
    let out = run_fig1(&cfg)?;
    match cfg.format {
        OutputFormat::Csv => {
            let prefix = cfg.output.clone().unwrap_or_else(|| PathBuf::from("fig1"));
            write_fig1_csv(&out, &prefix)?;
        }
        OutputFormat::Json => write_json(&out, cfg.output.as_deref())?,
    }
    for arm in &out.arms {
        eprintln!(
            "{}: median peak chi2 = {:.3}, mean r = {:.4}",
            arm.label,
            arm.median_peak(),
            arm.mean_r()
        );
    }
    Ok(())
}

fn write_ci_csv(report: &CiContrastReport, w: &mut dyn Write) -> Result<()> {
    io::write_metadata_comment(&report.metadata, w)?;
    io::write_metadata_comment(
        &serde_json::json!({
            "alpha": report.alpha,
            "included": report.included,
            "excluded": report.excluded,
            "unconditional_rejection_rate": report.unconditional_rejection_rate,
            "conditional_rejection_rate": report.conditional_rejection_rate,
        }),
        w,
    )?;
    writeln!(
        w,
        "replicate,r,peak_step,peak_chi2,communities,modularity,unconditional_statistic,unconditional_p,conditional_statistic,conditional_df,conditional_p"
    )?;
    for r in &report.replicates {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.replicate,
            opt(r.r),
            r.peak_step,
            r.peak_chi2,
            r.communities,
            opt(r.modularity),
            r.unconditional.statistic,
            r.unconditional.p_permutation,
            r.conditional.statistic,
            r.conditional.df,
            r.conditional.p_permutation
        )?;
    }
    Ok(())
}

fn ci_contrast(args: &ExperimentArgs) -> Result<()> {
    let cfg = args.config(OutputFormat::Json)?;
    let report = run_ci_contrast(&cfg)?;
    match cfg.format {
        OutputFormat::Json => write_json(&report, cfg.output.as_deref())?,
        OutputFormat::Csv => {
            let mut w = sink(cfg.output.as_deref())?;
            write_ci_csv(&report, &mut w)?;
            w.flush()?;
        }
    }
    eprintln!(
        "{} included, {} excluded; rejection at alpha = {}: unconditional {:.3}, conditional {:.3}",
        report.included,
        report.excluded.len(),
        report.alpha,
        report.unconditional_rejection_rate,
        report.conditional_rejection_rate
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Generate { common, generator } => generate(common, generator),
        Command::Simulate(args) => simulate(args),
        Command::Communities(args) => communities(args),
        Command::Test(args) => test(args),
        Command::Fig1(args) => fig1(args),
        Command::CiContrast(args) => ci_contrast(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<culturenet::Error>() {
                Some(culturenet::Error::InvalidParameter(_)) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
