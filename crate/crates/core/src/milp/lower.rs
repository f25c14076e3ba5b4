//! Lowering of indicator, max and product constraints into linear rows over
//! binaries, with big-M constants taken from the current variable boxes.

use std::collections::BTreeMap;

use crate::encoder::{Constraint, LinearConstraint, Sense, VarDecl, VarId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub integer: bool,
}

/// `lo ≤ Σ coef·x ≤ hi`
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub lo: f64,
    pub hi: f64,
}

/// `binary = phase → Σ coef·x sense rhs`, kept for LP export.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorRow {
    pub name: String,
    pub binary: usize,
    pub phase: bool,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// A mixed-binary model whose rows are linear; indicator rows appear only
/// when lowering for export.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearModel {
    pub columns: Vec<Column>,
    pub rows: Vec<Row>,
    pub indicators: Vec<IndicatorRow>,
    pub(crate) var_cols: BTreeMap<VarId, usize>,
}

impl LinearModel {
    pub fn column_of(&self, id: VarId) -> Option<usize> {
        self.var_cols.get(&id).copied()
    }

    pub fn var_columns(&self) -> impl Iterator<Item = (VarId, usize)> + '_ {
        self.var_cols.iter().map(|(&v, &c)| (v, c))
    }

    pub fn num_integer(&self) -> usize {
        self.columns.iter().filter(|c| c.integer).count()
    }
}

struct Lowering<'a> {
    model: LinearModel,
    decls: &'a BTreeMap<VarId, VarDecl>,
    keep_indicators: bool,
}

fn merge_terms(terms: impl IntoIterator<Item = (usize, f64)>) -> Vec<(usize, f64)> {
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    for (c, a) in terms {
        *acc.entry(c).or_insert(0.0) += a;
    }
    acc.into_iter().filter(|&(_, a)| a != 0.0).collect()
}

impl Lowering<'_> {
    fn col(&self, id: VarId) -> Result<usize> {
        self.model
            .column_of(id)
            .ok_or_else(|| Error::MissingBounds(format!("variable {} is referenced but not declared", id.0)))
    }

    fn bounds(&self, c: usize) -> (f64, f64) {
        let col = &self.model.columns[c];
        (col.lo, col.hi)
    }

    fn new_binary(&mut self, name: String) -> usize {
        self.model.columns.push(Column {
            name,
            lo: 0.0,
            hi: 1.0,
            integer: true,
        });
        self.model.columns.len() - 1
    }

    fn push_row(&mut self, name: String, terms: Vec<(usize, f64)>, lo: f64, hi: f64) {
        self.model.rows.push(Row {
            name,
            terms: merge_terms(terms),
            lo,
            hi,
        });
    }

    fn linear_terms(&self, c: &LinearConstraint) -> Result<Vec<(usize, f64)>> {
        let terms: Vec<(usize, f64)> = c
            .terms
            .iter()
            .map(|&(v, a)| Ok((self.col(v)?, a)))
            .collect::<Result<_>>()?;
        Ok(merge_terms(terms))
    }

    fn linear(&mut self, name: String, c: &LinearConstraint) -> Result<()> {
        let terms = self.linear_terms(c)?;
        let (lo, hi) = match c.sense {
            Sense::Le => (f64::NEG_INFINITY, c.rhs),
            Sense::Ge => (c.rhs, f64::INFINITY),
            Sense::Eq => (c.rhs, c.rhs),
        };
        self.push_row(name, terms, lo, hi);
        Ok(())
    }

    fn activity_range(&self, terms: &[(usize, f64)]) -> (f64, f64) {
        terms.iter().fold((0.0, 0.0), |(lo, hi), &(c, a)| {
            let (l, h) = self.bounds(c);
            if a >= 0.0 {
                (lo + a * l, hi + a * h)
            } else {
                (lo + a * h, hi + a * l)
            }
        })
    }

    /// `b = phase → lhs sense rhs` as big-M rows.
    fn indicator(&mut self, name: &str, b: usize, phase: bool, c: &LinearConstraint) -> Result<()> {
        let terms = self.linear_terms(c)?;
        if self.keep_indicators {
            self.model.indicators.push(IndicatorRow {
                name: name.to_string(),
                binary: b,
                phase,
                terms,
                sense: c.sense,
                rhs: c.rhs,
            });
            return Ok(());
        }
        let (amin, amax) = self.activity_range(&terms);
        let upper = matches!(c.sense, Sense::Le | Sense::Eq);
        let lower = matches!(c.sense, Sense::Ge | Sense::Eq);
        if upper {
            let m = amax - c.rhs;
            if m > 0.0 {
                let mut row = terms.clone();
                // phase 1: lhs + M·b ≤ rhs + M; phase 0: lhs − M·b ≤ rhs
                if phase {
                    row.push((b, m));
                    self.push_row(format!("{name}_le"), row, f64::NEG_INFINITY, c.rhs + m);
                } else {
                    row.push((b, -m));
                    self.push_row(format!("{name}_le"), row, f64::NEG_INFINITY, c.rhs);
                }
            }
        }
        if lower {
            let m = c.rhs - amin;
            if m > 0.0 {
                let mut row = terms;
                if phase {
                    row.push((b, -m));
                    self.push_row(format!("{name}_ge"), row, c.rhs - m, f64::INFINITY);
                } else {
                    row.push((b, m));
                    self.push_row(format!("{name}_ge"), row, c.rhs, f64::INFINITY);
                }
            }
        }
        Ok(())
    }

    fn max_of(&mut self, name: &str, target: VarId, args: &[VarId], include_zero: bool) -> Result<()> {
        let z = self.col(target)?;
        let mut cands: Vec<(Option<usize>, f64, f64)> = args
            .iter()
            .map(|&a| {
                let c = self.col(a)?;
                let (lo, hi) = self.bounds(c);
                Ok((Some(c), lo, hi))
            })
            .collect::<Result<_>>()?;
        if include_zero {
            cands.push((None, 0.0, 0.0));
        }
        if cands.is_empty() {
            return Err(Error::InvalidModel(format!("{name}: max over an empty set")));
        }
        let max_lo = cands.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
        cands.retain(|c| c.2 >= max_lo);
        let term = |c: Option<usize>| c.map(|c| vec![(z, 1.0), (c, -1.0)]).unwrap_or_else(|| vec![(z, 1.0)]);
        if let [(c, _, _)] = cands[..] {
            self.push_row(format!("{name}_eq"), term(c), 0.0, 0.0);
            return Ok(());
        }
        let z_hi = self.bounds(z).1.min(cands.iter().map(|c| c.2).fold(f64::NEG_INFINITY, f64::max));
        let mut pick = Vec::with_capacity(cands.len());
        for (j, &(c, lo, _)) in cands.iter().enumerate() {
            self.push_row(format!("{name}_ge{j}"), term(c), 0.0, f64::INFINITY);
            let s = self.new_binary(format!("{name}_sel{j}"));
            pick.push((s, 1.0));
            let m = (z_hi - lo).max(0.0);
            let mut row = term(c);
            row.push((s, m));
            self.push_row(format!("{name}_le{j}"), row, f64::NEG_INFINITY, m);
        }
        self.push_row(format!("{name}_pick"), pick, 1.0, 1.0);
        Ok(())
    }
}

/// Lowers `constraints` over the declared variables. Declared variables come
/// first, in id order; selector binaries follow.
pub fn lower(decls: &BTreeMap<VarId, VarDecl>, constraints: &[Constraint]) -> Result<LinearModel> {
    lower_with(decls, constraints, false)
}

/// Like [`lower`], but indicator constraints (including those produced by
/// product constraints) stay as indicator rows.
pub fn lower_keeping_indicators(decls: &BTreeMap<VarId, VarDecl>, constraints: &[Constraint]) -> Result<LinearModel> {
    lower_with(decls, constraints, true)
}

fn lower_with(decls: &BTreeMap<VarId, VarDecl>, constraints: &[Constraint], keep_indicators: bool) -> Result<LinearModel> {
    let mut lw = Lowering {
        model: LinearModel::default(),
        decls,
        keep_indicators,
    };
    for (&id, d) in lw.decls {
        lw.model.var_cols.insert(id, lw.model.columns.len());
        lw.model.columns.push(Column {
            name: d.name.clone(),
            lo: d.lo,
            hi: d.hi,
            integer: d.is_binary(),
        });
    }
    for (idx, c) in constraints.iter().enumerate() {
        let name = format!("c{idx}");
        match c {
            Constraint::Linear(l) => lw.linear(name, l)?,
            Constraint::Indicator {
                binary,
                phase,
                constraint,
            } => {
                let b = lw.col(*binary)?;
                lw.indicator(&name, b, *phase, constraint)?;
            }
            Constraint::MaxOf {
                target,
                args,
                include_zero,
            } => lw.max_of(&name, *target, args, *include_zero)?,
            Constraint::Product {
                degree: _,
                message,
                terms,
                choices,
            } => {
                for &(d, sel) in choices {
                    let b = lw.col(sel)?;
                    let row = if d == 0 {
                        LinearConstraint::fix(*message, 0.0)
                    } else {
                        let mut t = vec![(*message, d as f64)];
                        t.extend(terms.iter().map(|&a| (a, -1.0)));
                        LinearConstraint::new(t, Sense::Eq, 0.0)
                    };
                    lw.indicator(&format!("{name}_d{d}"), b, true, &row)?;
                }
            }
        }
    }
    Ok(lw.model)
}
