//! Command-line front end. Every subcommand writes one JSON document (or LP
//! text for `export-lp`) to the output path or standard output.
//!
//! Exit codes: 0 on completion whatever the verdicts, 2 on input errors,
//! 3 on internal errors.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bounds::{propagate_with, BoundMethod, GapStats, PropagationOptions};
use crate::encoder::{Encoder, ObjectiveMode};
use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, NodeId, PerturbationSpec};
use crate::io::{graph_from_json, model_from_json, read_file, FragileField, SpecFile};
use crate::milp::{export_lp, BranchRule, SolverConfig};
use crate::model::{forward, GnnModel};
use crate::oracle::{attack_sample, brute_force_verify_with, OracleGuard};
use crate::verifier::{delta_sweep, verify_batch, Aggregate, BatchOptions, Mode, SweepPoint, TaskStatus, VerifyOptions, Witness};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "gnnverify", version, about = "Exact robustness verification for message-passing GNNs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Verify target nodes and write a report.
    Verify(VerifyArgs),
    /// Report per-layer bound gaps for tightened and plain propagation.
    Bounds(BoundsArgs),
    /// Exhaustive structural verification (all attribute budgets zero).
    Oracle(OracleArgs),
    /// Random search for prediction-flipping perturbations.
    Attack(AttackArgs),
    /// Print predicted classes and logits.
    Predict(PredictArgs),
    /// Write the full encoding of one task as an LP file.
    ExportLp(ExportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub graph: PathBuf,
    /// Perturbation spec file; the inline flags below override its fields.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// `all-edges` or `add-sampled:k`.
    #[arg(long)]
    pub fragile: Option<String>,
    #[arg(long)]
    pub delta: Option<usize>,
    #[arg(long)]
    pub local_default: Option<usize>,
    /// Uniform attribute budget; replaces every per-entry budget.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Seed for fragile-set sampling and target sampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct TargetArgs {
    /// Comma-separated node indices.
    #[arg(long, value_delimiter = ',')]
    pub targets: Option<Vec<NodeId>>,
    /// Number of nodes sampled uniformly without replacement.
    #[arg(long)]
    pub sample: Option<usize>,
    #[arg(long)]
    pub all: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Incremental,
    Monolithic,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveArg {
    Full,
    PairwiseNext,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundArg {
    Tightened,
    Plain,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::Incremental)]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Full)]
    pub objective: ObjectiveArg,
    #[arg(long, value_enum, default_value_t = BoundArg::Tightened)]
    pub bounds: BoundArg,
    /// Per-task time limit in seconds.
    #[arg(long, default_value_t = 300.0)]
    pub time_limit: f64,
    #[arg(long)]
    pub node_limit: Option<u64>,
    #[arg(long, default_value_t = 1e-6)]
    pub feasibility_tol: f64,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub targets: TargetArgs,
    #[command(flatten)]
    pub solve: SolveArgs,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Verify misclassified targets against their current prediction.
    #[arg(long)]
    pub force: bool,
    /// Also report verdict counts for each listed global budget.
    #[arg(long, value_delimiter = ',')]
    pub sweep: Option<Vec<usize>>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub targets: TargetArgs,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub targets: TargetArgs,
    #[arg(long, default_value_t = 25)]
    pub max_fragile: usize,
    #[arg(long, default_value_t = 6)]
    pub max_delta: usize,
    /// Lift both enumeration limits.
    #[arg(long)]
    pub no_guard: bool,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AttackArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub targets: TargetArgs,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub graph: PathBuf,
    /// Nodes to report; all nodes when omitted.
    #[arg(long, value_delimiter = ',')]
    pub targets: Option<Vec<NodeId>>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub node: NodeId,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Full)]
    pub objective: ObjectiveArg,
    #[arg(long, value_enum, default_value_t = BoundArg::Tightened)]
    pub bounds: BoundArg,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

impl From<ObjectiveArg> for ObjectiveMode {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Full => ObjectiveMode::Full,
            ObjectiveArg::PairwiseNext => ObjectiveMode::PairwiseNext,
        }
    }
}

impl From<BoundArg> for BoundMethod {
    fn from(b: BoundArg) -> Self {
        match b {
            BoundArg::Tightened => BoundMethod::Tightened,
            BoundArg::Plain => BoundMethod::Plain,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileRef {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Inputs {
    pub model: FileRef,
    pub graph: FileRef,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec: Option<FileRef>,
}

/// The resolved perturbation settings recorded in every report.
#[derive(Debug, Clone, Serialize)]
pub struct SpecRecord {
    pub fragile: String,
    pub fragile_pairs: usize,
    pub delta: usize,
    pub local_default: Option<usize>,
    pub eps_default: f64,
    pub eps_overrides: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TargetRecord {
    pub method: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample: Option<usize>,
    pub nodes: Vec<NodeId>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport<T: Serialize, C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub inputs: Inputs,
    pub spec: SpecRecord,
    pub targets: TargetRecord,
    pub config: C,
    pub tasks: Vec<T>,
    pub aggregate: Aggregate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<SweepPoint>>,
}

struct Loaded {
    model: GnnModel,
    graph: AttributedGraph,
    spec: PerturbationSpec,
    inputs: Inputs,
    record: SpecRecord,
}

fn file_ref(path: &Path, sha256: String) -> FileRef {
    FileRef {
        path: path.display().to_string(),
        sha256,
    }
}

fn load_model_graph(model: &Path, graph: &Path) -> Result<(GnnModel, AttributedGraph, FileRef, FileRef)> {
    let mf = read_file(model)?;
    let gf = read_file(graph)?;
    let m = model_from_json(&mf.text).map_err(|e| with_path(e, model))?;
    let g = graph_from_json(&gf.text).map_err(|e| with_path(e, graph))?;
    Ok((m, g, file_ref(model, mf.sha256), file_ref(graph, gf.sha256)))
}

fn with_path(e: Error, path: &Path) -> Error {
    let p = path.display();
    match e {
        Error::InvalidModel(m) => Error::InvalidModel(format!("{p}: {m}")),
        Error::InvalidGraph(m) => Error::InvalidGraph(format!("{p}: {m}")),
        Error::InvalidSpec(m) => Error::InvalidSpec(format!("{p}: {m}")),
        other => other,
    }
}

fn load(input: &InputArgs) -> Result<Loaded> {
    let (model, graph, model_ref, graph_ref) = load_model_graph(&input.model, &input.graph)?;
    let (mut file, spec_ref) = match &input.spec {
        Some(path) => {
            let f = read_file(path)?;
            let parsed: SpecFile =
                serde_json::from_str(&f.text).map_err(|e| Error::InvalidSpec(format!("{}: {e}", path.display())))?;
            (parsed, Some(file_ref(path, f.sha256)))
        }
        None => {
            if input.fragile.is_none() || input.delta.is_none() {
                return Err(Error::InvalidSpec(
                    "give --spec, or both --fragile and --delta".into(),
                ));
            }
            let file = SpecFile {
                fragile: FragileField::Regime(String::new()),
                delta: 0,
                local_default: None,
                local: BTreeMap::new(),
                eps_default: 0.0,
                eps: BTreeMap::new(),
                seed: None,
            };
            (file, None)
        }
    };
    if let Some(f) = &input.fragile {
        file.fragile = FragileField::Regime(f.clone());
    }
    if let Some(d) = input.delta {
        file.delta = d;
    }
    if let Some(l) = input.local_default {
        file.local_default = Some(l);
    }
    if let Some(e) = input.eps {
        file.eps_default = e;
        file.eps.clear();
    }
    if file.seed.is_none() || input.spec.is_none() {
        file.seed = Some(input.seed);
    }
    let regime = file.fragile.regime()?;
    let record = SpecRecord {
        fragile: regime.label(),
        fragile_pairs: 0,
        delta: file.delta,
        local_default: file.local_default,
        eps_default: file.eps_default,
        eps_overrides: file.eps.len(),
    };
    let spec = file.into_spec(&graph)?;
    let record = SpecRecord {
        fragile_pairs: spec.units(&graph).len(),
        ..record
    };
    Ok(Loaded {
        model,
        graph,
        spec,
        inputs: Inputs {
            model: model_ref,
            graph: graph_ref,
            spec: spec_ref,
        },
        record,
    })
}

/// Resolves the target selection; sampled targets come back sorted.
pub fn select_targets(args: &TargetArgs, num_nodes: usize, seed: u64) -> Result<TargetRecord> {
    if let Some(list) = &args.targets {
        if let Some(&bad) = list.iter().find(|&&t| t >= num_nodes) {
            return Err(Error::InvalidNode { node: bad, num_nodes });
        }
        return Ok(TargetRecord {
            method: "list",
            sample: None,
            nodes: list.clone(),
        });
    }
    if let Some(k) = args.sample {
        if k > num_nodes {
            return Err(Error::InvalidSpec(format!("cannot sample {k} of {num_nodes} nodes")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut nodes = sample(&mut rng, num_nodes, k).into_vec();
        nodes.sort_unstable();
        return Ok(TargetRecord {
            method: "sample",
            sample: Some(k),
            nodes,
        });
    }
    Ok(TargetRecord {
        method: "all",
        sample: None,
        nodes: (0..num_nodes).collect(),
    })
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(path) => std::fs::write(path, text)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

fn emit_json(output: Option<&Path>, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    emit(output, &text)
}

#[derive(Debug, Clone, Serialize)]
struct VerifyConfig {
    mode: ModeArg,
    objective: ObjectiveArg,
    bounds: BoundArg,
    time_limit_s: f64,
    node_limit: Option<u64>,
    feasibility_tol: f64,
    workers: usize,
    force: bool,
}

fn verify_options(s: &SolveArgs) -> Result<VerifyOptions> {
    if !(s.time_limit.is_finite() && s.time_limit >= 0.0) {
        return Err(Error::SolverConfig(format!("bad time limit {}", s.time_limit)));
    }
    let solver = SolverConfig {
        feasibility_tol: s.feasibility_tol,
        node_limit: s.node_limit,
        branching: BranchRule::MostFractional,
        ..SolverConfig::default()
    };
    solver.validate()?;
    Ok(VerifyOptions {
        mode: match s.mode {
            ModeArg::Incremental => Mode::Incremental,
            ModeArg::Monolithic => Mode::Monolithic,
        },
        objective: s.objective.into(),
        bound_method: s.bounds.into(),
        solver,
        time_limit: Some(Duration::from_secs_f64(s.time_limit)),
    })
}

fn cmd_verify(args: &VerifyArgs) -> Result<()> {
    let l = load(&args.input)?;
    let targets = select_targets(&args.targets, l.graph.num_nodes(), args.input.seed)?;
    let options = BatchOptions {
        verify: verify_options(&args.solve)?,
        workers: args.workers,
        force: args.force,
    };
    let batch = verify_batch(&l.model, &l.graph, &l.spec, &targets.nodes, &options)?;
    let sweep = match &args.sweep {
        Some(deltas) => Some(delta_sweep(&l.model, &l.graph, &l.spec, &targets.nodes, deltas, &options)?),
        None => None,
    };
    let report = RunReport {
        tool: "gnnverify",
        version: env!("CARGO_PKG_VERSION"),
        command: "verify",
        seed: args.input.seed,
        inputs: l.inputs,
        spec: l.record,
        targets,
        config: VerifyConfig {
            mode: args.solve.mode,
            objective: args.solve.objective,
            bounds: args.solve.bounds,
            time_limit_s: args.solve.time_limit,
            node_limit: args.solve.node_limit,
            feasibility_tol: args.solve.feasibility_tol,
            workers: args.workers,
            force: args.force,
        },
        tasks: batch.tasks,
        aggregate: batch.aggregate,
        sweep,
    };
    emit_json(args.output.as_deref(), &report)
}

#[derive(Debug, Clone, Serialize)]
struct BoundsTask {
    node: NodeId,
    tightened: Vec<GapStats>,
    plain: Vec<GapStats>,
}

#[derive(Debug, Clone, Serialize)]
struct LayerGap {
    layer: usize,
    tightened_mean_gap: f64,
    tightened_max_gap: f64,
    plain_mean_gap: f64,
    plain_max_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
struct BoundsReport {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    inputs: Inputs,
    spec: SpecRecord,
    targets: TargetRecord,
    layers: Vec<LayerGap>,
    tasks: Vec<BoundsTask>,
}

/// Per-layer mean of the task means and maximum of the task maxima.
fn summarize(stats: &[&[GapStats]], layers: usize) -> Vec<(f64, f64)> {
    (0..layers)
        .map(|k| {
            let entries: Vec<&GapStats> = stats.iter().filter_map(|s| s.get(k)).filter(|g| g.count > 0).collect();
            let mean = if entries.is_empty() {
                0.0
            } else {
                entries.iter().map(|g| g.mean_gap).sum::<f64>() / entries.len() as f64
            };
            (mean, entries.iter().map(|g| g.max_gap).fold(0.0, f64::max))
        })
        .collect()
}

fn cmd_bounds(args: &BoundsArgs) -> Result<()> {
    let l = load(&args.input)?;
    let targets = select_targets(&args.targets, l.graph.num_nodes(), args.input.seed)?;
    let mut tasks = Vec::new();
    for &t in &targets.nodes {
        let gaps = |method| {
            propagate_with(&l.model, &l.graph, &l.spec, t, PropagationOptions { method, slack: 0.0 }).map(|b| b.gap_stats())
        };
        tasks.push(BoundsTask {
            node: t,
            tightened: gaps(BoundMethod::Tightened)?,
            plain: gaps(BoundMethod::Plain)?,
        });
    }
    let k = l.model.num_layers();
    let tight = summarize(&tasks.iter().map(|t| t.tightened.as_slice()).collect::<Vec<_>>(), k);
    let plain = summarize(&tasks.iter().map(|t| t.plain.as_slice()).collect::<Vec<_>>(), k);
    let layers = (0..k)
        .map(|i| LayerGap {
            layer: i + 1,
            tightened_mean_gap: tight[i].0,
            tightened_max_gap: tight[i].1,
            plain_mean_gap: plain[i].0,
            plain_max_gap: plain[i].1,
        })
        .collect();
    let report = BoundsReport {
        tool: "gnnverify",
        version: env!("CARGO_PKG_VERSION"),
        command: "bounds",
        seed: args.input.seed,
        inputs: l.inputs,
        spec: l.record,
        targets,
        layers,
        tasks,
    };
    emit_json(args.output.as_deref(), &report)
}

#[derive(Debug, Clone, Serialize)]
struct SearchTask {
    node: NodeId,
    status: TaskStatus,
    iterations: Vec<()>,
    time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    witness: Option<Witness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
    stats: SearchStats,
}

#[derive(Debug, Clone, Serialize)]
struct SearchStats {
    predicted: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    perturbations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    best_margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trials: Option<usize>,
}

fn search_aggregate(tasks: &[SearchTask]) -> Aggregate {
    Aggregate::from_statuses(tasks.iter().map(|t| t.status))
}

fn error_task(node: NodeId, start: Instant, e: Error) -> SearchTask {
    SearchTask {
        node,
        status: TaskStatus::Error,
        iterations: Vec::new(),
        time_s: start.elapsed().as_secs_f64(),
        witness: None,
        note: Some(e.to_string()),
        stats: SearchStats {
            predicted: None,
            perturbations: None,
            best_margin: None,
            trials: None,
        },
    }
}

#[derive(Debug, Clone, Serialize)]
struct OracleConfig {
    max_fragile: Option<usize>,
    max_delta: Option<usize>,
}

fn cmd_oracle(args: &OracleArgs) -> Result<()> {
    let l = load(&args.input)?;
    let targets = select_targets(&args.targets, l.graph.num_nodes(), args.input.seed)?;
    let guard = if args.no_guard {
        OracleGuard::unlimited()
    } else {
        OracleGuard {
            max_fragile: args.max_fragile,
            max_delta: args.max_delta,
        }
    };
    let tasks: Vec<SearchTask> = targets
        .nodes
        .iter()
        .map(|&t| {
            let start = Instant::now();
            match brute_force_verify_with(&l.model, &l.graph, &l.spec, t, guard) {
                Ok(v) => SearchTask {
                    node: t,
                    status: v.status.into(),
                    iterations: Vec::new(),
                    time_s: start.elapsed().as_secs_f64(),
                    witness: v.witness,
                    note: None,
                    stats: SearchStats {
                        predicted: Some(v.predicted),
                        perturbations: Some(v.perturbations),
                        best_margin: Some(v.best_margin),
                        trials: None,
                    },
                },
                Err(e) => error_task(t, start, e),
            }
        })
        .collect();
    let report = RunReport {
        tool: "gnnverify",
        version: env!("CARGO_PKG_VERSION"),
        command: "oracle",
        seed: args.input.seed,
        inputs: l.inputs,
        spec: l.record,
        targets,
        config: OracleConfig {
            max_fragile: (!args.no_guard).then_some(args.max_fragile),
            max_delta: (!args.no_guard).then_some(args.max_delta),
        },
        aggregate: search_aggregate(&tasks),
        tasks,
        sweep: None,
    };
    emit_json(args.output.as_deref(), &report)
}

#[derive(Debug, Clone, Serialize)]
struct AttackConfig {
    trials: usize,
}

fn cmd_attack(args: &AttackArgs) -> Result<()> {
    let l = load(&args.input)?;
    let targets = select_targets(&args.targets, l.graph.num_nodes(), args.input.seed)?;
    let tasks: Vec<SearchTask> = targets
        .nodes
        .iter()
        .map(|&t| {
            let start = Instant::now();
            let seed = args.input.seed.wrapping_add(t as u64);
            match attack_sample(&l.model, &l.graph, &l.spec, t, args.trials, seed) {
                Ok(w) => SearchTask {
                    node: t,
                    status: if w.is_some() { TaskStatus::NonRobust } else { TaskStatus::Unknown },
                    iterations: Vec::new(),
                    time_s: start.elapsed().as_secs_f64(),
                    stats: SearchStats {
                        predicted: w.as_ref().map(|w| w.predicted),
                        perturbations: None,
                        best_margin: None,
                        trials: Some(args.trials),
                    },
                    note: w.is_none().then(|| "no flip found".to_string()),
                    witness: w,
                },
                Err(e) => error_task(t, start, e),
            }
        })
        .collect();
    let report = RunReport {
        tool: "gnnverify",
        version: env!("CARGO_PKG_VERSION"),
        command: "attack",
        seed: args.input.seed,
        inputs: l.inputs,
        spec: l.record,
        targets,
        config: AttackConfig { trials: args.trials },
        aggregate: search_aggregate(&tasks),
        tasks,
        sweep: None,
    };
    emit_json(args.output.as_deref(), &report)
}

#[derive(Debug, Clone, Serialize)]
struct Prediction {
    node: NodeId,
    class: usize,
    logits: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
struct PredictReport {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    inputs: Inputs,
    predictions: Vec<Prediction>,
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let (model, graph, model_ref, graph_ref) = load_model_graph(&args.model, &args.graph)?;
    let nodes: Vec<NodeId> = args.targets.clone().unwrap_or_else(|| (0..graph.num_nodes()).collect());
    let predictions = nodes
        .iter()
        .map(|&t| {
            graph.check_node(t)?;
            let logits = forward(&model, &graph, t)?;
            Ok(Prediction {
                node: t,
                class: logits.predicted_class(),
                logits: logits.values,
                label: graph.labels().map(|l| l[t]),
            })
        })
        .collect::<Result<_>>()?;
    let report = PredictReport {
        tool: "gnnverify",
        version: env!("CARGO_PKG_VERSION"),
        command: "predict",
        inputs: Inputs {
            model: model_ref,
            graph: graph_ref,
            spec: None,
        },
        predictions,
    };
    emit_json(args.output.as_deref(), &report)
}

fn cmd_export_lp(args: &ExportArgs) -> Result<()> {
    let l = load(&args.input)?;
    l.graph.check_node(args.node)?;
    let predicted = crate::model::predict(&l.model, &l.graph, args.node)?;
    let bounds = propagate_with(
        &l.model,
        &l.graph,
        &l.spec,
        args.node,
        PropagationOptions {
            method: args.bounds.into(),
            slack: 0.0,
        },
    )?;
    let mut encoder = Encoder::new(&l.model, &l.graph, &l.spec, &bounds, predicted)?;
    let fragments = encoder.encode_all(args.objective.into())?;
    let comment = format!(
        "gnnverify {} target {} predicted class {}\nmodel sha256 {}\ngraph sha256 {}",
        env!("CARGO_PKG_VERSION"),
        args.node,
        predicted,
        l.inputs.model.sha256,
        l.inputs.graph.sha256
    );
    emit(args.output.as_deref(), &export_lp(&fragments, &comment)?)
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Verify(a) => cmd_verify(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Attack(a) => cmd_attack(a),
        Command::Predict(a) => cmd_predict(a),
        Command::ExportLp(a) => cmd_export_lp(a),
    }
}

pub fn exit_code(result: &Result<()>) -> i32 {
    match result {
        Ok(()) => EXIT_OK,
        Err(e) if e.is_input_error() => EXIT_INPUT,
        Err(_) => EXIT_INTERNAL,
    }
}

/// Parses the arguments, runs the command and reports errors on standard
/// error. Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let result = run(&cli);
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    exit_code(&result)
}
