//! Per-node verification: bound propagation, encoding, layer-by-layer
//! solving and witness extraction, plus batch execution over many targets.
//!
//! In incremental mode the objective and input fragments are conjoined
//! first, then layers are added from the output layer backwards. Every
//! intermediate problem treats the embeddings feeding the newest layer as
//! free within their interval boxes, so it relaxes the full problem: an
//! infeasible intermediate problem already proves robustness. Monolithic
//! mode conjoins everything and solves once.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{propagate_with, BoundMethod, PropagationOptions};
use crate::encoder::{encoding_stats, Encoder, EncodingStats, MilpFragment, ObjectiveMode, VarKind, VarRegistry};
use crate::error::{Error, Result};
use crate::graph::{apply_perturbation, validate_perturbation, Arc, AttributedGraph, EdgeEditSet, NodeId, PerturbationSpec};
use crate::milp::{Assignment, SolveStats, SolveStatus, SolverConfig, SolverInstance};
use crate::model::{forward, predict, GnnModel};

/// Slack accepted when checking that a witness flips or ties the prediction.
pub const WITNESS_LOGIT_TOL: f64 = 1e-5;

/// Relative slack for pulling solver attribute values back into their boxes.
const ATTR_ROUNDING_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Incremental,
    Monolithic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub mode: Mode,
    pub objective: ObjectiveMode,
    pub bound_method: BoundMethod,
    /// Node and tolerance settings. Its time limit is ignored in favour of
    /// `time_limit`, which covers the whole task.
    pub solver: SolverConfig,
    pub time_limit: Option<Duration>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            mode: Mode::Incremental,
            objective: ObjectiveMode::Full,
            bound_method: BoundMethod::Tightened,
            solver: SolverConfig::default(),
            time_limit: Some(Duration::from_secs(300)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Robust,
    NonRobust,
    Unknown,
}

/// A concrete admissible perturbation under which some rival class reaches
/// the predicted class's logit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub deletions: Vec<Arc>,
    pub insertions: Vec<Arc>,
    pub attrs: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub predicted: usize,
    pub rival: usize,
    /// Rival logit minus predicted logit on the perturbed graph.
    pub margin: f64,
}

impl Witness {
    pub fn edits(&self) -> EdgeEditSet {
        EdgeEditSet {
            deletions: self.deletions.iter().copied().collect(),
            insertions: self.insertions.iter().copied().collect(),
        }
    }

    /// Validates the perturbation and recomputes the logits with a forward
    /// pass, returning the checked witness.
    pub fn build(
        model: &GnnModel,
        g: &AttributedGraph,
        spec: &PerturbationSpec,
        t: NodeId,
        predicted: usize,
        edits: EdgeEditSet,
        attrs: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let report = validate_perturbation(g, spec, &edits, &attrs)?;
        if !report.is_valid() {
            return Err(Error::WitnessValidation(report.to_string()));
        }
        let perturbed = apply_perturbation(g, spec, &edits, attrs.clone())?;
        let logits = forward(model, &perturbed, t)?;
        let (rival, best) = logits.best_rival(predicted);
        Ok(Self {
            deletions: edits.deletions.into_iter().collect(),
            insertions: edits.insertions.into_iter().collect(),
            attrs,
            margin: best - logits.values[predicted],
            logits: logits.values,
            predicted,
            rival,
        })
    }

    pub fn flips(&self, tol: f64) -> bool {
        self.margin >= -tol
    }
}

/// One solve of the incremental loop; `layer` is the deepest layer whose
/// constraints were present, `0` for monolithic solves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub layer: usize,
    pub status: SolveStatus,
    pub solver: SolveStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: Status,
    pub predicted: usize,
    /// Layer whose addition made the problem infeasible.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub robust_at: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    /// Last layer whose solve completed, for `Unknown` verdicts.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub last_completed: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub iterations: Vec<IterationRecord>,
    pub encoding: EncodingStats,
}

impl Verdict {
    fn new(status: Status, predicted: usize) -> Self {
        Self {
            status,
            predicted,
            robust_at: None,
            witness: None,
            last_completed: None,
            reason: None,
            iterations: Vec::new(),
            encoding: EncodingStats::default(),
        }
    }
}

/// Maps a satisfying assignment to an edit set and a perturbed attribute
/// matrix. Toggles set to one become deletions or insertions depending on
/// whether the pair is an edge; attribute values are pulled into their
/// boxes when they sit outside by no more than the rounding tolerance.
pub fn extract_witness(
    assignment: &Assignment,
    registry: &VarRegistry,
    g: &AttributedGraph,
    spec: &PerturbationSpec,
) -> Result<(EdgeEditSet, Vec<Vec<f64>>)> {
    let units: BTreeMap<Arc, _> = spec.units(g).into_iter().map(|u| ((u.tail, u.head), u)).collect();
    let mut chosen = Vec::new();
    let mut attrs = g.attrs().to_vec();
    for (&id, &value) in assignment {
        match registry.kind(id) {
            VarKind::Perturb { tail, head } => {
                if value >= 0.5 {
                    let unit = units.get(&(tail, head)).ok_or_else(|| {
                        Error::WitnessValidation(format!("toggle for ({tail}, {head}) is not a fragile unit"))
                    })?;
                    chosen.push(*unit);
                }
            }
            VarKind::Attr { node, dim } => {
                let x = g.attr(node)[dim];
                let eps = spec.eps(node, dim);
                let (lo, hi) = (x - eps, x + eps);
                let slack = ATTR_ROUNDING_TOL * (1.0 + x.abs().max(value.abs()));
                if value < lo - slack || value > hi + slack {
                    return Err(Error::WitnessValidation(format!(
                        "attribute ({node}, {dim}) = {value} lies outside [{lo}, {hi}]"
                    )));
                }
                attrs[node][dim] = value.clamp(lo, hi);
            }
            _ => {}
        }
    }
    Ok((EdgeEditSet::from_units(&chosen), attrs))
}

struct Task<'a> {
    model: &'a GnnModel,
    g: &'a AttributedGraph,
    spec: &'a PerturbationSpec,
    t: NodeId,
    options: &'a VerifyOptions,
    start: Instant,
}

impl Task<'_> {
    fn remaining(&self) -> Option<Duration> {
        self.options.time_limit.map(|l| l.saturating_sub(self.start.elapsed()))
    }

    fn solve(&self, inst: &mut SolverInstance, layer: usize, verdict: &mut Verdict) -> Result<crate::milp::SolveOutcome> {
        inst.set_time_limit(self.remaining());
        let outcome = inst.solve()?;
        verdict.iterations.push(IterationRecord {
            layer,
            status: outcome.status,
            solver: outcome.stats,
        });
        Ok(outcome)
    }

    fn finish_sat(&self, assignment: &Assignment, registry: &VarRegistry, verdict: &mut Verdict) {
        let built = extract_witness(assignment, registry, self.g, self.spec).and_then(|(edits, attrs)| {
            Witness::build(self.model, self.g, self.spec, self.t, verdict.predicted, edits, attrs)
        });
        match built {
            Ok(w) if w.flips(WITNESS_LOGIT_TOL) => {
                verdict.status = Status::NonRobust;
                verdict.witness = Some(w);
            }
            Ok(w) => {
                verdict.status = Status::Unknown;
                verdict.reason = Some(format!(
                    "witness failed validation: rival margin {} below tolerance",
                    w.margin
                ));
            }
            Err(e) => {
                verdict.status = Status::Unknown;
                verdict.reason = Some(format!("witness failed validation: {e}"));
            }
        }
    }

    fn run(&self) -> Result<Verdict> {
        self.spec.validate_against(self.g)?;
        self.g.check_node(self.t)?;
        let predicted = predict(self.model, self.g, self.t)?;
        let mut verdict = Verdict::new(Status::Unknown, predicted);
        let bounds = propagate_with(
            self.model,
            self.g,
            self.spec,
            self.t,
            PropagationOptions {
                method: self.options.bound_method,
                slack: 0.0,
            },
        )?;
        let mut encoder = Encoder::new(self.model, self.g, self.spec, &bounds, predicted)?;
        let mut inst = SolverInstance::new(self.options.solver.clone())?;
        let num_layers = self.model.num_layers();
        let mut fragments: Vec<MilpFragment> = vec![encoder.encode_input()?, encoder.encode_objective(self.options.objective)?];

        match self.options.mode {
            Mode::Monolithic => {
                for k in 1..=num_layers {
                    fragments.push(encoder.encode_layer(k)?);
                }
                for f in &fragments {
                    inst.add_fragment(f)?;
                }
                verdict.encoding = encoding_stats(&fragments, encoder.registry());
                let outcome = self.solve(&mut inst, 0, &mut verdict)?;
                match outcome.status {
                    SolveStatus::Unsat => {
                        verdict.status = Status::Robust;
                        verdict.robust_at = Some(1);
                    }
                    SolveStatus::Sat => {
                        let a = outcome.assignment.expect("sat outcome carries an assignment");
                        self.finish_sat(&a, encoder.registry(), &mut verdict);
                    }
                    SolveStatus::Unknown => verdict.reason = outcome.reason,
                }
            }
            Mode::Incremental => {
                for f in &fragments {
                    inst.add_fragment(f)?;
                }
                for k in (1..=num_layers).rev() {
                    let layer = encoder.encode_layer(k)?;
                    inst.add_fragment(&layer)?;
                    fragments.push(layer);
                    verdict.encoding = encoding_stats(&fragments, encoder.registry());
                    let outcome = self.solve(&mut inst, k, &mut verdict)?;
                    match outcome.status {
                        SolveStatus::Unsat => {
                            verdict.status = Status::Robust;
                            verdict.robust_at = Some(k);
                            break;
                        }
                        SolveStatus::Unknown => {
                            verdict.reason = outcome.reason;
                            break;
                        }
                        SolveStatus::Sat => {
                            verdict.last_completed = Some(k);
                            if k == 1 {
                                let a = outcome.assignment.expect("sat outcome carries an assignment");
                                self.finish_sat(&a, encoder.registry(), &mut verdict);
                            }
                        }
                    }
                }
            }
        }
        if verdict.status != Status::Unknown {
            verdict.last_completed = None;
        }
        Ok(verdict)
    }
}

/// Decides whether any admissible perturbation makes some other class reach
/// the logit of the class predicted on the unperturbed graph.
pub fn verify_node(
    model: &GnnModel,
    g: &AttributedGraph,
    spec: &PerturbationSpec,
    t: NodeId,
    options: &VerifyOptions,
) -> Result<Verdict> {
    Task {
        model,
        g,
        spec,
        t,
        options,
        start: Instant::now(),
    }
    .run()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BatchOptions {
    pub verify: VerifyOptions,
    /// Worker threads; `0` or `1` runs tasks one after another.
    pub workers: usize,
    /// Verify targets whose prediction disagrees with their label.
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskStatus {
    Robust,
    NonRobust,
    Unknown,
    Skipped,
    Error,
}

impl From<Status> for TaskStatus {
    fn from(s: Status) -> Self {
        match s {
            Status::Robust => TaskStatus::Robust,
            Status::NonRobust => TaskStatus::NonRobust,
            Status::Unknown => TaskStatus::Unknown,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskStats {
    pub predicted: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub robust_at: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub last_completed: Option<usize>,
    pub encoding: EncodingStats,
    pub nodes: u64,
    pub lp_iterations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub node: NodeId,
    pub status: TaskStatus,
    pub iterations: Vec<IterationRecord>,
    pub time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub stats: TaskStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Aggregate {
    pub tasks: usize,
    pub solved: usize,
    pub robust: usize,
    pub nonrobust: usize,
    pub unknown: usize,
    pub skipped: usize,
    pub errors: usize,
}

impl Aggregate {
    pub fn from_statuses(statuses: impl IntoIterator<Item = TaskStatus>) -> Self {
        let mut a = Aggregate::default();
        for s in statuses {
            a.tasks += 1;
            match s {
                TaskStatus::Robust => a.robust += 1,
                TaskStatus::NonRobust => a.nonrobust += 1,
                TaskStatus::Unknown => a.unknown += 1,
                TaskStatus::Skipped => a.skipped += 1,
                TaskStatus::Error => a.errors += 1,
            }
        }
        a.solved = a.robust + a.nonrobust;
        a
    }

    pub fn of(tasks: &[TaskReport]) -> Self {
        Self::from_statuses(tasks.iter().map(|t| t.status))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub tasks: Vec<TaskReport>,
    pub aggregate: Aggregate,
}

fn run_task(model: &GnnModel, g: &AttributedGraph, spec: &PerturbationSpec, t: NodeId, options: &BatchOptions) -> TaskReport {
    let start = Instant::now();
    let label = g.labels().and_then(|l| l.get(t).copied());
    let mut stats = TaskStats {
        predicted: None,
        label,
        robust_at: None,
        last_completed: None,
        encoding: EncodingStats::default(),
        nodes: 0,
        lp_iterations: 0,
    };
    let report = |status, iterations, witness, note: Option<String>, stats| TaskReport {
        node: t,
        status,
        iterations,
        time_s: start.elapsed().as_secs_f64(),
        witness,
        note,
        stats,
    };
    let predicted = match g.check_node(t).and_then(|_| predict(model, g, t)) {
        Ok(c) => c,
        Err(e) => return report(TaskStatus::Error, Vec::new(), None, Some(e.to_string()), stats),
    };
    stats.predicted = Some(predicted);
    if let Some(l) = label {
        if l != predicted && !options.force {
            let note = format!("misclassified: predicted {predicted}, label {l}");
            return report(TaskStatus::Skipped, Vec::new(), None, Some(note), stats);
        }
    }
    match verify_node(model, g, spec, t, &options.verify) {
        Ok(v) => {
            stats.robust_at = v.robust_at;
            stats.last_completed = v.last_completed;
            stats.encoding = v.encoding;
            stats.nodes = v.iterations.iter().map(|i| i.solver.nodes).sum();
            stats.lp_iterations = v.iterations.iter().map(|i| i.solver.lp_iterations).sum();
            report(v.status.into(), v.iterations, v.witness, v.reason, stats)
        }
        Err(e) => report(TaskStatus::Error, Vec::new(), None, Some(e.to_string()), stats),
    }
}

/// Verifies each target on its own solver instance. Task failures are
/// recorded in the report and do not stop the batch; results keep the
/// order of `targets`.
pub fn verify_batch(
    model: &GnnModel,
    g: &AttributedGraph,
    spec: &PerturbationSpec,
    targets: &[NodeId],
    options: &BatchOptions,
) -> Result<BatchReport> {
    let tasks: Vec<TaskReport> = if options.workers <= 1 {
        targets.iter().map(|&t| run_task(model, g, spec, t, options)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.workers)
            .build()
            .map_err(|e| Error::Unsupported(format!("cannot start worker pool: {e}")))?;
        pool.install(|| targets.par_iter().map(|&t| run_task(model, g, spec, t, options)).collect())
    };
    let aggregate = Aggregate::of(&tasks);
    Ok(BatchReport { tasks, aggregate })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub delta: usize,
    pub aggregate: Aggregate,
}

/// Verdict counts as the global structural budget varies, all other budgets
/// fixed.
pub fn delta_sweep(
    model: &GnnModel,
    g: &AttributedGraph,
    spec: &PerturbationSpec,
    targets: &[NodeId],
    deltas: &[usize],
    options: &BatchOptions,
) -> Result<Vec<SweepPoint>> {
    deltas
        .iter()
        .map(|&delta| {
            let s = spec.clone().with_delta(delta);
            let report = verify_batch(model, g, &s, targets, options)?;
            Ok(SweepPoint {
                delta,
                aggregate: report.aggregate,
            })
        })
        .collect()
}
