//! Dense bounded-variable primal simplex.
//!
//! Every row `i` is written as `Σ a_ij x_j − r_i = 0` with the slack `r_i`
//! carrying the row bounds, so all bounds live on columns. Only feasibility
//! is sought: phase 1 minimises the total bound violation of the basic
//! variables. Nonbasic columns may rest anywhere inside their bounds, which
//! lets branch-and-bound children reuse the parent's basis after a bound
//! change.

use std::sync::Arc;
use std::time::Instant;

const PIVOT_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const PRIMAL_TOL: f64 = 1e-9;
/// Room a nonbasic column needs before it may enter.
const MOVE_TOL: f64 = 1e-13;
/// Relative margin by which an infeasibility certificate must exclude zero.
const CERTIFICATE_TOL: f64 = 1e-9;
/// Pivots between refactorizations, at least this many and at least the
/// number of rows.
const REFACTOR_EVERY: usize = 100;
const DEGENERATE_LIMIT: usize = 50;
const NONBASIC: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LpStatus {
    Feasible,
    Infeasible,
    IterationLimit,
    TimeLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SparseRow {
    pub terms: Vec<(usize, f64)>,
    pub lo: f64,
    pub hi: f64,
}

fn tol(bound: f64) -> f64 {
    PRIMAL_TOL * (1.0 + bound.abs())
}

#[derive(Debug, Clone)]
pub(crate) struct Simplex {
    m: usize,
    n: usize,
    width: usize,
    rows: Arc<Vec<SparseRow>>,
    /// `B⁻¹ [A | −I]`, row-major.
    t: Vec<f64>,
    basis: Vec<usize>,
    row_of: Vec<usize>,
    x: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    since_refactor: usize,
    pub iterations: u64,
}

/// Whether `from` lies strictly below `to` by more than rounding noise.
fn has_room(from: f64, to: f64) -> bool {
    if from == f64::NEG_INFINITY || to == f64::INFINITY {
        return true;
    }
    to - from > MOVE_TOL * (1.0 + from.abs().max(to.abs()))
}

fn resting_value(lo: f64, hi: f64) -> f64 {
    if lo.is_finite() {
        lo
    } else if hi.is_finite() {
        hi
    } else {
        0.0
    }
}

impl Simplex {
    pub fn new(n: usize, rows: Arc<Vec<SparseRow>>, lo: &[f64], hi: &[f64]) -> Self {
        let m = rows.len();
        let width = n + m;
        let mut all_lo = lo.to_vec();
        let mut all_hi = hi.to_vec();
        all_lo.extend(rows.iter().map(|r| r.lo));
        all_hi.extend(rows.iter().map(|r| r.hi));
        let mut x = vec![0.0; width];
        for j in 0..n {
            x[j] = resting_value(all_lo[j], all_hi[j]);
        }
        let mut lp = Self {
            m,
            n,
            width,
            rows,
            t: Vec::new(),
            basis: Vec::new(),
            row_of: Vec::new(),
            x,
            lo: all_lo,
            hi: all_hi,
            since_refactor: 0,
            iterations: 0,
        };
        lp.reset_to_slack_basis();
        lp
    }

    /// Structural column values.
    pub fn values(&self) -> &[f64] {
        &self.x[..self.n]
    }

    pub fn bounds(&self, j: usize) -> (f64, f64) {
        (self.lo[j], self.hi[j])
    }

    pub fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        self.lo[j] = lo;
        self.hi[j] = hi;
        if self.row_of[j] == NONBASIC {
            let target = self.x[j].max(lo).min(hi);
            self.shift_nonbasic(j, target - self.x[j]);
        }
    }

    fn shift_nonbasic(&mut self, j: usize, delta: f64) {
        if delta == 0.0 {
            return;
        }
        self.x[j] += delta;
        for i in 0..self.m {
            let a = self.t[i * self.width + j];
            if a != 0.0 {
                self.x[self.basis[i]] -= a * delta;
            }
        }
    }

    fn reset_to_slack_basis(&mut self) {
        let (m, n, w) = (self.m, self.n, self.width);
        self.basis = (n..w).collect();
        self.row_of = vec![NONBASIC; w];
        for i in 0..m {
            self.row_of[n + i] = i;
        }
        for j in 0..n {
            self.x[j] = self.x[j].max(self.lo[j]).min(self.hi[j]);
            if !self.x[j].is_finite() {
                self.x[j] = resting_value(self.lo[j], self.hi[j]);
            }
        }
        self.t = vec![0.0; m * w];
        for (i, row) in self.rows.iter().enumerate() {
            let mut act = 0.0;
            for &(j, a) in &row.terms {
                self.t[i * w + j] -= a;
                act += a * self.x[j];
            }
            self.t[i * w + n + i] = 1.0;
            self.x[n + i] = act;
        }
        self.since_refactor = 0;
    }

    /// Recomputes the tableau and the basic values from the original rows.
    fn refactor(&mut self) {
        let (m, n, w) = (self.m, self.n, self.width);
        let mut b = vec![0.0; m * m];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, a) in &row.terms {
                let r = self.row_of[j];
                if r != NONBASIC {
                    b[i * m + r] += a;
                }
            }
            let r = self.row_of[n + i];
            if r != NONBASIC {
                b[i * m + r] -= 1.0;
            }
        }
        let Some(inv) = invert(&mut b, m) else {
            self.reset_to_slack_basis();
            return;
        };
        // `inv` maps row space to basis positions: column r of B is basis[r].
        let mut t = vec![0.0; m * w];
        for (k, row) in self.rows.iter().enumerate() {
            for r in 0..m {
                let f = inv[r * m + k];
                if f == 0.0 {
                    continue;
                }
                let dst = &mut t[r * w..(r + 1) * w];
                for &(j, a) in &row.terms {
                    dst[j] += f * a;
                }
                dst[n + k] -= f;
            }
        }
        for v in t.iter_mut() {
            if v.abs() < 1e-13 {
                *v = 0.0;
            }
        }
        self.t = t;
        for r in 0..m {
            let row = &self.t[r * w..(r + 1) * w];
            let mut val = 0.0;
            for (j, &a) in row.iter().enumerate() {
                if a != 0.0 && self.row_of[j] == NONBASIC {
                    val -= a * self.x[j];
                }
            }
            self.x[self.basis[r]] = val;
        }
        self.since_refactor = 0;
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let w = self.width;
        let p = self.t[r * w + q];
        let mut prow: Vec<f64> = self.t[r * w..(r + 1) * w].iter().map(|v| v / p).collect();
        prow[q] = 1.0;
        let support: Vec<usize> = (0..w).filter(|&j| prow[j] != 0.0).collect();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * w + q];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.t[i * w..(i + 1) * w];
            for &j in &support {
                row[j] -= f * prow[j];
            }
            row[q] = 0.0;
        }
        self.t[r * w..(r + 1) * w].copy_from_slice(&prow);
        let leaving = self.basis[r];
        self.row_of[leaving] = NONBASIC;
        self.row_of[q] = r;
        self.basis[r] = q;
        self.since_refactor += 1;
    }

    /// Phase-1 cost of each basic row: −1 below its lower bound, +1 above.
    fn infeasibilities(&self) -> Vec<(usize, f64)> {
        (0..self.m)
            .filter_map(|i| {
                let b = self.basis[i];
                let v = self.x[b];
                if v < self.lo[b] - tol(self.lo[b]) {
                    Some((i, -1.0))
                } else if v > self.hi[b] + tol(self.hi[b]) {
                    Some((i, 1.0))
                } else {
                    None
                }
            })
            .collect()
    }

    pub fn solve(&mut self, deadline: Option<Instant>, max_iterations: u64) -> LpStatus {
        let w = self.width;
        let mut degenerate = 0usize;
        let mut local_iters = 0u64;
        loop {
            if local_iters >= max_iterations {
                return LpStatus::IterationLimit;
            }
            if local_iters % 32 == 0 && deadline.is_some_and(|d| Instant::now() >= d) {
                return LpStatus::TimeLimit;
            }
            if self.since_refactor >= REFACTOR_EVERY.max(self.m) {
                self.refactor();
            }
            let infeasible = self.infeasibilities();
            if infeasible.is_empty() {
                return LpStatus::Feasible;
            }
            let bland = degenerate >= DEGENERATE_LIMIT;

            let mut reduced = vec![0.0; w];
            for &(i, c) in &infeasible {
                let row = &self.t[i * w..(i + 1) * w];
                for (d, &a) in reduced.iter_mut().zip(row) {
                    *d -= c * a;
                }
            }
            let mut entering: Option<(usize, f64)> = None;
            for (j, &d) in reduced.iter().enumerate() {
                if self.row_of[j] != NONBASIC {
                    continue;
                }
                let up = d < -DUAL_TOL && has_room(self.x[j], self.hi[j]);
                let down = d > DUAL_TOL && has_room(self.lo[j], self.x[j]);
                if !(up || down) {
                    continue;
                }
                let better = match entering {
                    None => true,
                    Some((_, best)) => !bland && d.abs() > best.abs(),
                };
                if better {
                    entering = Some((j, d));
                }
            }
            let Some((q, dq)) = entering else {
                if self.since_refactor > 0 && !self.certifies_infeasibility(&infeasible) {
                    self.refactor();
                    continue;
                }
                return LpStatus::Infeasible;
            };
            let s = if dq < 0.0 { 1.0 } else { -1.0 };

            let mut theta = self.hi[q] - self.lo[q];
            let mut leave: Option<(usize, f64)> = None;
            let mut best_pivot = 0.0;
            for i in 0..self.m {
                let alpha = -self.t[i * w + q] * s;
                if alpha.abs() <= PIVOT_TOL {
                    continue;
                }
                let b = self.basis[i];
                let v = self.x[b];
                let below = v < self.lo[b] - tol(self.lo[b]);
                let above = v > self.hi[b] + tol(self.hi[b]);
                let target = if alpha > 0.0 {
                    if below {
                        self.lo[b]
                    } else if above {
                        continue;
                    } else {
                        self.hi[b]
                    }
                } else if above {
                    self.hi[b]
                } else if below {
                    continue;
                } else {
                    self.lo[b]
                };
                if !target.is_finite() {
                    continue;
                }
                let ratio = ((target - v) / alpha).max(0.0);
                let slack = 1e-12 * (1.0 + theta.abs().min(1e12));
                let take = if ratio < theta - slack {
                    true
                } else if ratio <= theta + slack {
                    match leave {
                        None => true,
                        Some((r, _)) if bland => b < self.basis[r],
                        Some(_) => alpha.abs() > best_pivot,
                    }
                } else {
                    false
                };
                if take {
                    theta = ratio.min(theta);
                    leave = Some((i, target));
                    best_pivot = alpha.abs();
                }
            }
            if !theta.is_finite() {
                // Numerical trouble: no basic variable limits an improving ray.
                if self.since_refactor > 0 {
                    self.refactor();
                    local_iters += 1;
                    continue;
                }
                return LpStatus::IterationLimit;
            }

            for i in 0..self.m {
                let a = self.t[i * w + q];
                if a != 0.0 {
                    let b = self.basis[i];
                    self.x[b] -= a * s * theta;
                }
            }
            self.x[q] += s * theta;
            match leave {
                Some((r, target)) => {
                    self.x[self.basis[r]] = target;
                    self.pivot(r, q);
                }
                None => self.x[q] = if s > 0.0 { self.hi[q] } else { self.lo[q] },
            }
            if theta <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.iterations += 1;
            local_iters += 1;
        }
    }
}

impl Simplex {
    /// Checks a phase-1 optimum against the original rows. The weights of
    /// the infeasible rows, read off the slack columns, combine the rows into
    /// one equation `z·(x, r) = 0`; infeasibility holds if `z·(x, r)` cannot
    /// vanish anywhere in the box.
    fn certifies_infeasibility(&self, infeasible: &[(usize, f64)]) -> bool {
        let (m, n, w) = (self.m, self.n, self.width);
        let y: Vec<f64> = (0..m)
            .map(|k| -infeasible.iter().map(|&(i, c)| c * self.t[i * w + n + k]).sum::<f64>())
            .collect();
        let mut z = vec![0.0; w];
        for (k, row) in self.rows.iter().enumerate() {
            if y[k] == 0.0 {
                continue;
            }
            for &(j, a) in &row.terms {
                z[j] += y[k] * a;
            }
            z[n + k] -= y[k];
        }
        let (mut min_sum, mut max_sum, mut scale) = (0.0, 0.0, 1.0f64);
        for (j, &a) in z.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let (lo, hi) = if j < n { (self.lo[j], self.hi[j]) } else { self.slack_range(j - n) };
            let (lo_term, hi_term) = if a > 0.0 { (a * lo, a * hi) } else { (a * hi, a * lo) };
            if !lo_term.is_finite() || !hi_term.is_finite() {
                return false;
            }
            min_sum += lo_term;
            max_sum += hi_term;
            scale = scale.max(lo_term.abs()).max(hi_term.abs());
        }
        min_sum > CERTIFICATE_TOL * scale || max_sum < -CERTIFICATE_TOL * scale
    }

    /// Row bounds intersected with the activity range over the column box.
    fn slack_range(&self, k: usize) -> (f64, f64) {
        let (mut lo, mut hi) = (0.0, 0.0);
        for &(j, a) in &self.rows[k].terms {
            if a > 0.0 {
                lo += a * self.lo[j];
                hi += a * self.hi[j];
            } else {
                lo += a * self.hi[j];
                hi += a * self.lo[j];
            }
        }
        let i = self.n + k;
        (lo.max(self.lo[i]), hi.min(self.hi[i]))
    }
}

/// Gauss-Jordan inverse with partial pivoting; `None` if singular.
fn invert(a: &mut [f64], m: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; m * m];
    for i in 0..m {
        inv[i * m + i] = 1.0;
    }
    for col in 0..m {
        let (piv, mag) = (col..m)
            .map(|r| (r, a[r * m + col].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if mag < 1e-11 {
            return None;
        }
        if piv != col {
            for k in 0..m {
                a.swap(piv * m + k, col * m + k);
                inv.swap(piv * m + k, col * m + k);
            }
        }
        let p = a[col * m + col];
        for k in 0..m {
            a[col * m + k] /= p;
            inv[col * m + k] /= p;
        }
        for r in 0..m {
            if r == col {
                continue;
            }
            let f = a[r * m + col];
            if f == 0.0 {
                continue;
            }
            for k in 0..m {
                a[r * m + k] -= f * a[col * m + k];
                inv[r * m + k] -= f * inv[col * m + k];
            }
        }
    }
    Some(inv)
}
