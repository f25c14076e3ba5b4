//! Exact mixed-integer feasibility solver for encoded verification tasks.
//!
//! Fragments are conjoined into a [`SolverInstance`]. Each solve lowers the
//! indicator, max and product constraints into big-M rows using the current
//! variable boxes, tightens those boxes by activity-based propagation, and
//! runs a depth-first branch and bound with a bounded-variable simplex at
//! every node. Box tightenings found at the root are kept in the instance,
//! so they carry over to later solves after more fragments are added.
//!
//! A point is reported as feasible only after it has been checked against
//! the original, unlowered constraints.

mod branch;
mod lower;
mod lp_format;
mod simplex;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::encoder::{Constraint, MilpFragment, TaggedConstraint, VarDecl, VarDomain, VarId};
use crate::error::{Error, Result};

pub use lower::{lower, lower_keeping_indicators, Column, IndicatorRow, LinearModel, Row};
pub use lp_format::{export_lp, parse_lp_summary, write_lp, LpSummary};

use branch::{propagate, Search, SearchResult, SearchStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchRule {
    #[default]
    MostFractional,
    FirstFractional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Relative violation accepted when checking a point against the
    /// original constraints.
    pub feasibility_tol: f64,
    pub integrality_tol: f64,
    /// `None` for no limit; a zero limit yields `Unknown` immediately.
    pub time_limit: Option<Duration>,
    pub node_limit: Option<u64>,
    pub branching: BranchRule,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-6,
            integrality_tol: 1e-6,
            time_limit: None,
            node_limit: None,
            branching: BranchRule::MostFractional,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("feasibility tolerance", self.feasibility_tol),
            ("integrality tolerance", self.integrality_tol),
        ] {
            if !(v.is_finite() && v > 0.0 && v < 0.5) {
                return Err(Error::SolverConfig(format!("{name} must lie in (0, 0.5), got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveStatus {
    Sat,
    Unsat,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SolveStats {
    pub nodes: u64,
    pub lp_iterations: u64,
    /// Variable boxes narrowed at the root, over the instance's lifetime.
    pub tightened_bounds: usize,
    pub rows: usize,
    pub columns: usize,
    pub elapsed_ms: f64,
}

pub type Assignment = BTreeMap<VarId, f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub assignment: Option<Assignment>,
    pub reason: Option<String>,
    pub stats: SolveStats,
}

impl SolveOutcome {
    fn new(status: SolveStatus, stats: SolveStats) -> Self {
        Self {
            status,
            assignment: None,
            reason: None,
            stats,
        }
    }

    fn unknown(reason: impl Into<String>, stats: SolveStats) -> Self {
        Self {
            reason: Some(reason.into()),
            ..Self::new(SolveStatus::Unknown, stats)
        }
    }
}

/// Relative violation of one constraint under an assignment; binaries are
/// read as `value ≥ 0.5`.
pub fn constraint_violation(c: &Constraint, value: &dyn Fn(VarId) -> f64) -> f64 {
    let rel = |diff: f64, scale: f64| diff / scale.max(1.0);
    match c {
        Constraint::Linear(l) => rel(l.violation(value), l.scale(value)),
        Constraint::Indicator {
            binary,
            phase,
            constraint,
        } => {
            if (value(*binary) >= 0.5) == *phase {
                rel(constraint.violation(value), constraint.scale(value))
            } else {
                0.0
            }
        }
        Constraint::MaxOf {
            target,
            args,
            include_zero,
        } => {
            let init = if *include_zero { 0.0 } else { f64::NEG_INFINITY };
            let m = args.iter().map(|&a| value(a)).fold(init, f64::max);
            let z = value(*target);
            rel((z - m).abs(), z.abs().max(m.abs()))
        }
        Constraint::Product {
            degree,
            message,
            terms,
            ..
        } => {
            let d = value(*degree);
            let msg = value(*message);
            let s: f64 = terms.iter().map(|&a| value(a)).sum();
            let product = rel((d * msg - s).abs(), (d * msg).abs().max(s.abs()));
            if d.round() == 0.0 {
                product.max(msg.abs())
            } else {
                product
            }
        }
    }
}

/// Conjunction of fragments plus the boxes learned so far.
#[derive(Debug, Clone, Default)]
pub struct SolverInstance {
    config: SolverConfig,
    vars: BTreeMap<VarId, VarDecl>,
    constraints: Vec<TaggedConstraint>,
    tightened: usize,
}

impl SolverInstance {
    pub fn new(config: SolverConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            ..Self::default()
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// Replaces the time limit used by later solves.
    pub fn set_time_limit(&mut self, limit: Option<Duration>) {
        self.config.time_limit = limit;
    }

    pub fn vars(&self) -> &BTreeMap<VarId, VarDecl> {
        &self.vars
    }

    pub fn constraints(&self) -> &[TaggedConstraint] {
        &self.constraints
    }

    /// Conjoins a fragment. A variable declared again keeps the
    /// intersection of its boxes.
    pub fn add_fragment(&mut self, fragment: &MilpFragment) -> Result<()> {
        for d in &fragment.vars {
            match self.vars.get_mut(&d.id) {
                None => {
                    self.vars.insert(d.id, d.clone());
                }
                Some(existing) => {
                    if existing.domain != d.domain {
                        return Err(Error::BoundConflict(format!("{} declared with two domains", d.name)));
                    }
                    let lo = existing.lo.max(d.lo);
                    let hi = existing.hi.min(d.hi);
                    if lo > hi + 1e-9 * (1.0 + lo.abs()) {
                        return Err(Error::BoundConflict(format!(
                            "{}: [{}, {}] and [{}, {}] do not intersect",
                            d.name, existing.lo, existing.hi, d.lo, d.hi
                        )));
                    }
                    existing.lo = lo.min(hi);
                    existing.hi = hi;
                }
            }
        }
        self.constraints.extend(fragment.constraints.iter().cloned());
        Ok(())
    }

    pub fn lower(&self) -> Result<LinearModel> {
        let plain: Vec<Constraint> = self.constraints.iter().map(|c| c.constraint.clone()).collect();
        lower(&self.vars, &plain)
    }

    /// Largest relative violation of any original constraint, or of any
    /// variable box or integrality requirement.
    pub fn max_violation(&self, assignment: &Assignment) -> f64 {
        let value = |v: VarId| assignment.get(&v).copied().unwrap_or(f64::NAN);
        let mut worst: f64 = 0.0;
        for (id, d) in &self.vars {
            let x = value(*id);
            if x.is_nan() {
                return f64::INFINITY;
            }
            let out = (d.lo - x).max(x - d.hi).max(0.0) / x.abs().max(1.0);
            worst = worst.max(out);
            if d.domain == VarDomain::Binary {
                worst = worst.max((x - x.round()).abs());
            }
        }
        for c in &self.constraints {
            let v = constraint_violation(&c.constraint, &value);
            if v.is_nan() {
                return f64::INFINITY;
            }
            worst = worst.max(v);
        }
        worst
    }

    pub fn solve(&mut self) -> Result<SolveOutcome> {
        let start = Instant::now();
        let deadline = self.config.time_limit.map(|d| start + d);
        let mut stats = SolveStats::default();
        let finish = |mut outcome: SolveOutcome| {
            outcome.stats.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
            Ok(outcome)
        };
        if self.config.time_limit == Some(Duration::ZERO) {
            return finish(SolveOutcome::unknown("time limit reached", stats));
        }

        // Root tightening, applied to the instance, then a second lowering
        // with the narrower big-M constants.
        for _ in 0..2 {
            let model = self.lower()?;
            let (mut lo, mut hi, integer) = column_boxes(&model);
            if !propagate(&model.rows, &mut lo, &mut hi, &integer) {
                stats.rows = model.rows.len();
                stats.columns = model.columns.len();
                stats.tightened_bounds = self.tightened;
                return finish(SolveOutcome::new(SolveStatus::Unsat, stats));
            }
            for (id, c) in model.var_columns() {
                let d = self.vars.get_mut(&id).expect("declared");
                if lo[c] > d.lo || hi[c] < d.hi {
                    d.lo = d.lo.max(lo[c]);
                    d.hi = d.hi.min(hi[c]).max(d.lo);
                    self.tightened += 1;
                }
            }
        }

        let model = self.lower()?;
        stats.rows = model.rows.len();
        stats.columns = model.columns.len();
        stats.tightened_bounds = self.tightened;
        let (lo, hi, _) = column_boxes(&model);
        let tol = self.config.feasibility_tol;
        let to_assignment = |x: &[f64]| -> Assignment {
            model
                .var_columns()
                .map(|(id, c)| {
                    let v = if model.columns[c].integer { x[c].round() } else { x[c] };
                    (id, v)
                })
                .collect()
        };
        let accept = |x: &[f64]| self.max_violation(&to_assignment(x)) <= tol;
        let search = Search {
            model: &model,
            config: &self.config,
            deadline,
            accept: &accept,
        };
        let mut search_stats = SearchStats::default();
        let result = search.run(lo, hi, &mut search_stats);
        stats.nodes = search_stats.nodes;
        stats.lp_iterations = search_stats.lp_iterations;
        let outcome = match result {
            SearchResult::Found(x) => SolveOutcome {
                assignment: Some(to_assignment(&x)),
                ..SolveOutcome::new(SolveStatus::Sat, stats)
            },
            SearchResult::Exhausted => SolveOutcome::new(SolveStatus::Unsat, stats),
            SearchResult::Stopped(reason) => SolveOutcome::unknown(reason, stats),
        };
        finish(outcome)
    }
}

fn column_boxes(model: &LinearModel) -> (Vec<f64>, Vec<f64>, Vec<bool>) {
    (
        model.columns.iter().map(|c| c.lo).collect(),
        model.columns.iter().map(|c| c.hi).collect(),
        model.columns.iter().map(|c| c.integer).collect(),
    )
}
