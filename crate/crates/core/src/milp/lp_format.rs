//! CPLEX LP text format for the lowered model.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::lower::{lower_keeping_indicators, LinearModel};
use crate::encoder::{Constraint, MilpFragment, VarDecl, VarId};
use crate::error::{Error, Result};

const TERMS_PER_LINE: usize = 8;

fn number(x: f64) -> String {
    if x == f64::INFINITY {
        "+inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x:?}")
    }
}

fn write_terms(out: &mut String, model: &LinearModel, terms: &[(usize, f64)]) {
    if terms.is_empty() {
        out.push_str(" 0 ");
        out.push_str(model.columns.first().map_or("x", |c| c.name.as_str()));
        return;
    }
    for (i, &(c, a)) in terms.iter().enumerate() {
        if i > 0 && i % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        let sign = if a < 0.0 { '-' } else { '+' };
        let _ = write!(out, " {sign} {} {}", number(a.abs()), model.columns[c].name);
    }
}

/// Writes a feasibility problem (zero objective) with one constraint per row
/// side, indicator rows in `b = 1 -> ...` form, explicit bounds, and the
/// binaries section.
pub fn write_lp(model: &LinearModel, comment: &str) -> String {
    let mut out = String::new();
    for line in comment.lines() {
        let _ = writeln!(out, "\\ {line}");
    }
    out.push_str("Minimize\n obj:");
    match model.columns.first() {
        Some(c) => {
            let _ = writeln!(out, " 0 {}", c.name);
        }
        None => out.push('\n'),
    }
    out.push_str("Subject To\n");
    for row in &model.rows {
        let sides: Vec<(&str, &str, f64)> = if row.lo == row.hi {
            vec![("", "=", row.lo)]
        } else {
            let mut s = Vec::new();
            if row.lo.is_finite() {
                s.push((if row.hi.is_finite() { "_lo" } else { "" }, ">=", row.lo));
            }
            if row.hi.is_finite() {
                s.push((if row.lo.is_finite() { "_hi" } else { "" }, "<=", row.hi));
            }
            s
        };
        for (suffix, op, rhs) in sides {
            let _ = write!(out, " {}{suffix}:", row.name);
            write_terms(&mut out, model, &row.terms);
            let _ = writeln!(out, " {op} {}", number(rhs));
        }
    }
    for ind in &model.indicators {
        let _ = write!(
            out,
            " {}: {} = {} ->",
            ind.name,
            model.columns[ind.binary].name,
            u8::from(ind.phase)
        );
        write_terms(&mut out, model, &ind.terms);
        let _ = writeln!(out, " {} {}", ind.sense, number(ind.rhs));
    }
    out.push_str("Bounds\n");
    for c in &model.columns {
        if c.lo.is_infinite() && c.hi.is_infinite() {
            let _ = writeln!(out, " {} free", c.name);
        } else {
            let _ = writeln!(out, " {} <= {} <= {}", number(c.lo), c.name, number(c.hi));
        }
    }
    let binaries: Vec<&str> = model.columns.iter().filter(|c| c.integer).map(|c| c.name.as_str()).collect();
    if !binaries.is_empty() {
        out.push_str("Binaries\n");
        for chunk in binaries.chunks(TERMS_PER_LINE) {
            let _ = writeln!(out, " {}", chunk.join(" "));
        }
    }
    out.push_str("End\n");
    out
}

/// LP text for the conjunction of `fragments`, with max constraints
/// lowered and indicators kept.
pub fn export_lp(fragments: &[MilpFragment], comment: &str) -> Result<String> {
    let mut decls: BTreeMap<VarId, VarDecl> = BTreeMap::new();
    let mut constraints: Vec<Constraint> = Vec::new();
    for f in fragments {
        for d in &f.vars {
            let entry = decls.entry(d.id).or_insert_with(|| d.clone());
            entry.lo = entry.lo.max(d.lo);
            entry.hi = entry.hi.min(d.hi);
            if entry.lo > entry.hi {
                return Err(Error::BoundConflict(format!("{}: empty box after intersection", d.name)));
            }
        }
        constraints.extend(f.constraints.iter().map(|c| c.constraint.clone()));
    }
    let model = lower_keeping_indicators(&decls, &constraints)?;
    Ok(write_lp(&model, comment))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LpSummary {
    pub constraints: usize,
    pub bounds: usize,
    pub binaries: usize,
}

/// Counts the constraints, bound lines and binaries of an LP file, checking
/// its section structure.
pub fn parse_lp_summary(text: &str) -> Result<LpSummary> {
    #[derive(PartialEq)]
    enum Section {
        Preamble,
        Objective,
        Constraints,
        Bounds,
        Binaries,
        End,
    }
    let mut section = Section::Preamble;
    let mut summary = LpSummary::default();
    let mut seen_objective = false;
    for raw in text.lines() {
        let line = raw.split('\\').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let lower = line.to_ascii_lowercase();
        let next = match lower.as_str() {
            "minimize" | "maximize" | "minimum" | "maximum" | "min" | "max" => Some(Section::Objective),
            "subject to" | "such that" | "st" | "s.t." => Some(Section::Constraints),
            "bounds" | "bound" => Some(Section::Bounds),
            "binaries" | "binary" | "bin" => Some(Section::Binaries),
            "end" => Some(Section::End),
            _ => None,
        };
        if let Some(s) = next {
            if s == Section::Objective {
                seen_objective = true;
            }
            section = s;
            continue;
        }
        match section {
            Section::Preamble | Section::End => {
                return Err(Error::InvalidSpec(format!("LP text outside a section: {line}")));
            }
            Section::Objective => {}
            Section::Constraints => {
                if line.contains(':') {
                    summary.constraints += 1;
                }
            }
            Section::Bounds => summary.bounds += 1,
            Section::Binaries => summary.binaries += line.split_whitespace().count(),
        }
    }
    if !seen_objective || section != Section::End {
        return Err(Error::InvalidSpec("LP text lacks an objective or the End marker".into()));
    }
    Ok(summary)
}
