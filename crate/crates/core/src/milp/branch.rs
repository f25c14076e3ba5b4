//! Depth-first branch and bound over the lowered model.

use std::sync::Arc;
use std::time::Instant;

use super::lower::{LinearModel, Row};
use super::simplex::{LpStatus, Simplex, SparseRow};
use super::{BranchRule, SolverConfig};

const PROPAGATION_ROUNDS: usize = 20;
const BOUND_SAFETY: f64 = 1e-9;

/// Activity-based bound tightening. Returns `false` when some box becomes
/// empty.
pub(crate) fn propagate(rows: &[Row], lo: &mut [f64], hi: &mut [f64], integer: &[bool]) -> bool {
    for _ in 0..PROPAGATION_ROUNDS {
        let mut changed = false;
        for row in rows {
            let mut min_act = 0.0;
            let mut max_act = 0.0;
            for &(c, a) in &row.terms {
                if a > 0.0 {
                    min_act += a * lo[c];
                    max_act += a * hi[c];
                } else {
                    min_act += a * hi[c];
                    max_act += a * lo[c];
                }
            }
            if !min_act.is_finite() || !max_act.is_finite() {
                continue;
            }
            let scale = 1.0 + min_act.abs().max(max_act.abs());
            if min_act > row.hi + 1e-7 * scale || max_act < row.lo - 1e-7 * scale {
                return false;
            }
            for &(c, a) in &row.terms {
                let (c_min, c_max) = if a > 0.0 { (a * lo[c], a * hi[c]) } else { (a * hi[c], a * lo[c]) };
                let mut new_lo = f64::NEG_INFINITY;
                let mut new_hi = f64::INFINITY;
                if row.hi.is_finite() {
                    let bound = (row.hi - (min_act - c_min)) / a;
                    if a > 0.0 {
                        new_hi = bound;
                    } else {
                        new_lo = bound;
                    }
                }
                if row.lo.is_finite() {
                    let bound = (row.lo - (max_act - c_max)) / a;
                    if a > 0.0 {
                        new_lo = new_lo.max(bound);
                    } else {
                        new_hi = new_hi.min(bound);
                    }
                }
                if integer[c] {
                    new_lo = (new_lo - 1e-6).ceil();
                    new_hi = (new_hi + 1e-6).floor();
                } else {
                    new_lo -= BOUND_SAFETY * (1.0 + new_lo.abs());
                    new_hi += BOUND_SAFETY * (1.0 + new_hi.abs());
                }
                let width = hi[c] - lo[c];
                let min_gain = if integer[c] { 0.5 } else { 1e-6 * (1.0 + width) };
                if new_lo > lo[c] + min_gain {
                    lo[c] = new_lo;
                    changed = true;
                }
                if new_hi < hi[c] - min_gain {
                    hi[c] = new_hi;
                    changed = true;
                }
                if lo[c] > hi[c] {
                    if lo[c] - hi[c] > 1e-7 * (1.0 + lo[c].abs()) {
                        return false;
                    }
                    hi[c] = lo[c];
                }
            }
        }
        if !changed {
            break;
        }
    }
    true
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum SearchResult {
    /// Column values of an integral, LP-feasible point.
    Found(Vec<f64>),
    Exhausted,
    Stopped(String),
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct SearchStats {
    pub nodes: u64,
    pub lp_iterations: u64,
}

struct Node {
    lp: Simplex,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

pub(crate) struct Search<'a> {
    pub model: &'a LinearModel,
    pub config: &'a SolverConfig,
    pub deadline: Option<Instant>,
    /// Accepts or rejects an integral leaf.
    pub accept: &'a dyn Fn(&[f64]) -> bool,
}

impl Search<'_> {
    fn lp_budget(&self) -> u64 {
        let size = (self.model.rows.len() + self.model.columns.len()) as u64;
        50_000 + 50 * size
    }

    pub fn run(&self, lo: Vec<f64>, hi: Vec<f64>, stats: &mut SearchStats) -> SearchResult {
        let integer: Vec<bool> = self.model.columns.iter().map(|c| c.integer).collect();
        let rows: Arc<Vec<SparseRow>> = Arc::new(
            self.model
                .rows
                .iter()
                .map(|r| SparseRow {
                    terms: r.terms.clone(),
                    lo: r.lo,
                    hi: r.hi,
                })
                .collect(),
        );
        let lp = Simplex::new(self.model.columns.len(), rows, &lo, &hi);
        let mut stack = vec![Node { lp, lo, hi }];
        let mut trouble: Option<String> = None;
        while let Some(mut node) = stack.pop() {
            if self.deadline.is_some_and(|d| Instant::now() >= d) {
                return SearchResult::Stopped("time limit reached".into());
            }
            if self.config.node_limit.is_some_and(|limit| stats.nodes >= limit) {
                return SearchResult::Stopped("node limit reached".into());
            }
            stats.nodes += 1;
            if !propagate(&self.model.rows, &mut node.lo, &mut node.hi, &integer) {
                continue;
            }
            for j in 0..node.lo.len() {
                if node.lp.bounds(j) != (node.lo[j], node.hi[j]) {
                    node.lp.set_bounds(j, node.lo[j], node.hi[j]);
                }
            }
            let before = node.lp.iterations;
            let status = node.lp.solve(self.deadline, self.lp_budget());
            stats.lp_iterations += node.lp.iterations - before;
            match status {
                LpStatus::Feasible => {}
                LpStatus::Infeasible => continue,
                LpStatus::TimeLimit => return SearchResult::Stopped("time limit reached".into()),
                LpStatus::IterationLimit => {
                    trouble = Some("LP iteration limit reached at some node".into());
                    continue;
                }
            }
            let x = node.lp.values();
            let branch_col = self.pick_branch(x, &integer);
            let Some(c) = branch_col else {
                match self.finish_leaf(&node, &integer, stats) {
                    Some(found) => return SearchResult::Found(found),
                    None => {
                        trouble = Some("integral LP point rejected by the constraint check".into());
                        continue;
                    }
                }
            };
            let up_first = x[c] >= 0.5;
            let mut down = Node {
                lp: node.lp.clone(),
                lo: node.lo.clone(),
                hi: node.hi.clone(),
            };
            down.hi[c] = 0.0;
            let mut up = node;
            up.lo[c] = 1.0;
            if up_first {
                stack.push(down);
                stack.push(up);
            } else {
                stack.push(up);
                stack.push(down);
            }
        }
        match trouble {
            Some(reason) => SearchResult::Stopped(reason),
            None => SearchResult::Exhausted,
        }
    }

    fn pick_branch(&self, x: &[f64], integer: &[bool]) -> Option<usize> {
        let tol = self.config.integrality_tol;
        let mut best: Option<(usize, f64)> = None;
        for (c, &v) in x.iter().enumerate() {
            if !integer[c] {
                continue;
            }
            let frac = (v - v.round()).abs();
            if frac <= tol {
                continue;
            }
            match self.config.branching {
                BranchRule::FirstFractional => return Some(c),
                BranchRule::MostFractional => {
                    if best.is_none_or(|(_, f)| frac > f) {
                        best = Some((c, frac));
                    }
                }
            }
        }
        best.map(|b| b.0)
    }

    /// Fixes the binaries to their rounded values, re-solves and hands the
    /// point to the acceptance check.
    fn finish_leaf(&self, node: &Node, integer: &[bool], stats: &mut SearchStats) -> Option<Vec<f64>> {
        let x = node.lp.values().to_vec();
        if (self.accept)(&x) {
            return Some(x);
        }
        let mut lp = node.lp.clone();
        let mut lo = node.lo.clone();
        let mut hi = node.hi.clone();
        for c in 0..x.len() {
            if integer[c] {
                let r = x[c].round();
                lo[c] = r;
                hi[c] = r;
            }
        }
        if !propagate(&self.model.rows, &mut lo, &mut hi, integer) {
            return None;
        }
        for c in 0..x.len() {
            lp.set_bounds(c, lo[c], hi[c]);
        }
        let before = lp.iterations;
        let status = lp.solve(self.deadline, self.lp_budget());
        stats.lp_iterations += lp.iterations - before;
        if status != LpStatus::Feasible {
            return None;
        }
        let y = lp.values().to_vec();
        (self.accept)(&y).then_some(y)
    }
}
