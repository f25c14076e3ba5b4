//! Interval bounds for every quantity of the encoding.
//!
//! The aggregation bounds answer one question: given contributors that are
//! fixed (`X1`), deletable (`X2`) and insertable (`X3`), each ranging over an
//! interval, and at most `s` edits, what range can `aggr(X1 ∪ X2' ∪ X3')`
//! take? Max and mean bounds are exact extrema of that problem.

mod propagate;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Aggregation, Layer};

pub use propagate::{propagate, propagate_with, BoundMethod, BoundsTable, GapStats, NodeBounds, PropagationOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "inverted interval [{lo}, {hi}]");
        Self { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Self { lo: x, hi: x }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64, tol: f64) -> bool {
        x >= self.lo - tol && x <= self.hi + tol
    }

    pub fn is_subset_of(&self, other: &Interval, tol: f64) -> bool {
        self.lo >= other.lo - tol && self.hi <= other.hi + tol
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval::new(self.lo.min(other.lo), self.hi.max(other.hi))
    }

    pub fn neg(&self) -> Interval {
        Interval::new(-self.hi, -self.lo)
    }

    pub fn widen(&self, slack: f64) -> Interval {
        Interval::new(self.lo - slack, self.hi + slack)
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

#[derive(Clone, Copy)]
struct Key(f64);

impl PartialEq for Key {
    fn eq(&self, other: &Self) -> bool {
        self.0.total_cmp(&other.0) == Ordering::Equal
    }
}
impl Eq for Key {}
impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// The `count` largest values, descending, using a bounded heap.
fn largest(values: impl IntoIterator<Item = f64>, count: usize) -> Vec<f64> {
    if count == 0 {
        return Vec::new();
    }
    let mut heap: BinaryHeap<std::cmp::Reverse<Key>> = BinaryHeap::with_capacity(count + 1);
    for x in values {
        if heap.len() < count {
            heap.push(std::cmp::Reverse(Key(x)));
        } else if heap.peek().is_some_and(|top| x > top.0 .0) {
            heap.pop();
            heap.push(std::cmp::Reverse(Key(x)));
        }
    }
    let mut out: Vec<f64> = heap.into_iter().map(|r| r.0 .0).collect();
    out.sort_by(|a, b| b.total_cmp(a));
    out
}

/// The `count` smallest values, ascending.
fn smallest(values: impl IntoIterator<Item = f64>, count: usize) -> Vec<f64> {
    largest(values.into_iter().map(|x| -x), count)
        .into_iter()
        .map(|x| -x)
        .collect()
}

/// `hi(X, k)` for each requested rank: the k-th largest upper bound, or
/// `−∞` when `k > |X|`. One heap sized by the largest rank serves all ranks.
pub fn hi_k(xs: &[Interval], ks: &[usize]) -> Vec<f64> {
    let k_max = ks.iter().copied().max().unwrap_or(0);
    let top = largest(xs.iter().map(|x| x.hi), k_max);
    ks.iter()
        .map(|&k| if k == 0 { f64::INFINITY } else { top.get(k - 1).copied().unwrap_or(f64::NEG_INFINITY) })
        .collect()
}

/// `lo(X, k)` for each requested rank: the k-th smallest lower bound, `+∞`
/// when `k ≤ 0` or `k > |X|`.
pub fn lo_k(xs: &[Interval], ks: &[usize]) -> Vec<f64> {
    let k_max = ks.iter().copied().max().unwrap_or(0);
    let bottom = smallest(xs.iter().map(|x| x.lo), k_max);
    ks.iter()
        .map(|&k| if k == 0 { f64::INFINITY } else { bottom.get(k - 1).copied().unwrap_or(f64::INFINITY) })
        .collect()
}

fn hi1(xs: &[Interval]) -> f64 {
    xs.iter().map(|x| x.hi).fold(f64::NEG_INFINITY, f64::max)
}

fn lo1(xs: &[Interval]) -> f64 {
    xs.iter().map(|x| x.lo).fold(f64::INFINITY, f64::min)
}

/// Contributors to one aggregated coordinate and the edit budget.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregationBoundProblem {
    /// Always present.
    pub fixed: Vec<Interval>,
    /// Present unless deleted.
    pub deletable: Vec<Interval>,
    /// Absent unless inserted.
    pub insertable: Vec<Interval>,
    pub budget: usize,
}

impl AggregationBoundProblem {
    pub fn new(fixed: Vec<Interval>, deletable: Vec<Interval>, insertable: Vec<Interval>, budget: usize) -> Self {
        Self {
            fixed,
            deletable,
            insertable,
            budget,
        }
    }

    pub fn len(&self) -> usize {
        self.fixed.len() + self.deletable.len() + self.insertable.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Whether some admissible choice leaves no contributor at all.
    pub fn can_be_empty(&self) -> bool {
        self.fixed.is_empty() && self.budget >= self.deletable.len()
    }

    /// Every candidate interval, fixed and editable.
    pub fn all(&self) -> impl Iterator<Item = &Interval> {
        self.fixed.iter().chain(&self.deletable).chain(&self.insertable)
    }
}

pub fn sum_bounds(p: &AggregationBoundProblem) -> Interval {
    let s = p.budget;
    let base_hi: f64 = p.fixed.iter().chain(&p.deletable).map(|x| x.hi).sum();
    let base_lo: f64 = p.fixed.iter().chain(&p.deletable).map(|x| x.lo).sum();
    // Y = {−x : x ∈ X2} ∪ X3
    let y_hi = p.deletable.iter().map(|x| -x.lo).chain(p.insertable.iter().map(|x| x.hi));
    let y_lo = p.deletable.iter().map(|x| -x.hi).chain(p.insertable.iter().map(|x| x.lo));
    let gain: f64 = largest(y_hi, s).into_iter().map(|v| v.max(0.0)).sum();
    let loss: f64 = smallest(y_lo, s).into_iter().map(|v| v.min(0.0)).sum();
    Interval::new(base_lo + loss, base_hi + gain)
}

pub fn max_bounds(p: &AggregationBoundProblem) -> Interval {
    let (x1, x2, x3, s) = (&p.fixed, &p.deletable, &p.insertable, p.budget);
    if s == 0 {
        if x1.is_empty() && x2.is_empty() {
            return Interval::point(0.0);
        }
        let lo = x1.iter().chain(x2.iter()).map(|x| x.lo).fold(f64::NEG_INFINITY, f64::max);
        let hi = hi1(x1).max(hi1(x2));
        return Interval::new(lo, hi);
    }
    let can_empty = x1.is_empty() && s >= x2.len();
    let hi = if can_empty {
        0f64.max(hi1(x2)).max(hi1(x3))
    } else {
        hi1(x1).max(hi1(x2)).max(hi1(x3))
    };
    let lo = match (x1.is_empty(), s >= x2.len()) {
        (true, true) => {
            // A lone inserted contributor needs every deletion plus one insertion.
            let lone_insert = if s > x2.len() { lo1(x3) } else { f64::INFINITY };
            0f64.min(lo1(x2)).min(lone_insert)
        }
        (true, false) => lo_k(x2, &[x2.len() - s])[0],
        (false, true) => lo_k(x1, &[x1.len()])[0],
        (false, false) => lo_k(x1, &[x1.len()])[0].max(lo_k(x2, &[x2.len() - s])[0]),
    };
    Interval::new(lo, hi)
}

pub fn mean_bounds(p: &AggregationBoundProblem) -> Interval {
    let (x1, x2, x3, s) = (&p.fixed, &p.deletable, &p.insertable, p.budget);
    let max_del = s.min(x2.len());
    let max_ins = s.min(x3.len());

    // Deleting s2 members of X2 drops the s2 smallest upper bounds (for the
    // maximum) or the s2 largest lower bounds (for the minimum).
    let drop_hi = prefix_sums(&smallest(x2.iter().map(|x| x.hi), max_del));
    let drop_lo = prefix_sums(&largest(x2.iter().map(|x| x.lo), max_del));
    let add_hi = prefix_sums(&largest(x3.iter().map(|x| x.hi), max_ins));
    let add_lo = prefix_sums(&smallest(x3.iter().map(|x| x.lo), max_ins));

    let fixed_hi: f64 = x1.iter().chain(x2.iter()).map(|x| x.hi).sum();
    let fixed_lo: f64 = x1.iter().chain(x2.iter()).map(|x| x.lo).sum();

    let mut best_hi = f64::NEG_INFINITY;
    let mut best_lo = f64::INFINITY;
    for s2 in 0..=max_del {
        for s3 in 0..=max_ins.min(s - s2) {
            let n = x1.len() + x2.len() - s2 + s3;
            let (hi, lo) = if n == 0 {
                (0.0, 0.0)
            } else {
                let n = n as f64;
                ((fixed_hi - drop_hi[s2] + add_hi[s3]) / n, (fixed_lo - drop_lo[s2] + add_lo[s3]) / n)
            };
            best_hi = best_hi.max(hi);
            best_lo = best_lo.min(lo);
        }
    }
    Interval::new(best_lo, best_hi)
}

fn prefix_sums(values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len() + 1);
    out.push(0.0);
    let mut acc = 0.0;
    for v in values {
        acc += v;
        out.push(acc);
    }
    out
}

/// Baseline bounds that ignore the edit budget: every editable contributor
/// may independently appear or not.
pub fn plain_bounds(aggr: Aggregation, p: &AggregationBoundProblem) -> Interval {
    match aggr {
        Aggregation::Sum => {
            let editable = p.deletable.iter().chain(&p.insertable);
            let hi = p.fixed.iter().map(|x| x.hi).sum::<f64>() + editable.clone().map(|x| x.hi.max(0.0)).sum::<f64>();
            let lo = p.fixed.iter().map(|x| x.lo).sum::<f64>() + editable.map(|x| x.lo.min(0.0)).sum::<f64>();
            Interval::new(lo, hi)
        }
        Aggregation::Max => {
            if p.is_empty() {
                return Interval::point(0.0);
            }
            let mut lo = p.all().map(|x| x.lo).fold(f64::INFINITY, f64::min);
            let mut hi = p.all().map(|x| x.hi).fold(f64::NEG_INFINITY, f64::max);
            if p.can_be_empty() {
                lo = lo.min(0.0);
                hi = hi.max(0.0);
            }
            Interval::new(lo, hi)
        }
        Aggregation::Mean => {
            let mut his: Vec<f64> = p.deletable.iter().chain(&p.insertable).map(|x| x.hi).collect();
            let mut los: Vec<f64> = p.deletable.iter().chain(&p.insertable).map(|x| x.lo).collect();
            his.sort_by(|a, b| b.total_cmp(a));
            los.sort_by(|a, b| a.total_cmp(b));
            let n1 = p.fixed.len();
            let mut sum_hi: f64 = p.fixed.iter().map(|x| x.hi).sum();
            let mut sum_lo: f64 = p.fixed.iter().map(|x| x.lo).sum();
            let mean = |sum: f64, n: usize| if n == 0 { 0.0 } else { sum / n as f64 };
            let mut hi = mean(sum_hi, n1);
            let mut lo = mean(sum_lo, n1);
            for j in 0..his.len() {
                sum_hi += his[j];
                sum_lo += los[j];
                hi = hi.max(mean(sum_hi, n1 + j + 1));
                lo = lo.min(mean(sum_lo, n1 + j + 1));
            }
            Interval::new(lo, hi)
        }
    }
}

pub fn aggregation_bounds(aggr: Aggregation, method: BoundMethod, p: &AggregationBoundProblem) -> Interval {
    match (method, aggr) {
        (BoundMethod::Plain, _) => plain_bounds(aggr, p),
        (BoundMethod::Tightened, Aggregation::Sum) => sum_bounds(p),
        (BoundMethod::Tightened, Aggregation::Max) => max_bounds(p),
        (BoundMethod::Tightened, Aggregation::Mean) => mean_bounds(p),
    }
}

/// Interval image of `y = W1 h + W2 msg + b`.
pub fn linear_bounds(layer: &Layer, h: &[Interval], msg: &[Interval]) -> Result<Vec<Interval>> {
    if h.len() != layer.in_dim() || msg.len() != layer.in_dim() {
        return Err(Error::Shape(format!(
            "linear layer expects {} inputs, got {} and {}",
            layer.in_dim(),
            h.len(),
            msg.len()
        )));
    }
    let out = (0..layer.out_dim())
        .map(|i| {
            let b = layer.bias_at(i);
            let (mut lo, mut hi) = (b, b);
            for (w, x) in layer.w_self.row(i).iter().zip(h).chain(layer.w_neigh.row(i).iter().zip(msg)) {
                if *w >= 0.0 {
                    lo += w * x.lo;
                    hi += w * x.hi;
                } else {
                    lo += w * x.hi;
                    hi += w * x.lo;
                }
            }
            Interval::new(lo, hi)
        })
        .collect();
    Ok(out)
}

pub fn relu_bounds(iv: Interval) -> Interval {
    Interval::new(iv.lo.max(0.0), iv.hi.max(0.0))
}
