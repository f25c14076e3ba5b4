//! Brute-force ground truth: exhaustive enumeration of structural
//! perturbations, and a randomised attack that can only find flips.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{apply_perturbation, AttributedGraph, EdgeEditSet, FragileUnit, NodeId, PerturbationSpec};
use crate::model::{forward, predict, GnnModel};
use crate::verifier::{Status, Witness};

/// Limits on exhaustive enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleGuard {
    pub max_fragile: usize,
    pub max_delta: usize,
}

impl Default for OracleGuard {
    fn default() -> Self {
        Self {
            max_fragile: 25,
            max_delta: 6,
        }
    }
}

impl OracleGuard {
    pub fn unlimited() -> Self {
        Self {
            max_fragile: usize::MAX,
            max_delta: usize::MAX,
        }
    }
}

/// Every admissible set of toggled fragile units, in lexicographic order of
/// unit indices, starting with the empty set.
#[derive(Debug, Clone)]
pub struct StructuralEnumeration {
    units: Vec<FragileUnit>,
    /// Remaining local budget per head, consumed by the chosen units.
    room: BTreeMap<NodeId, usize>,
    delta: usize,
    chosen: Vec<usize>,
    started: bool,
    done: bool,
    count: usize,
}

impl StructuralEnumeration {
    pub fn units(&self) -> &[FragileUnit] {
        &self.units
    }

    /// Edit sets emitted so far.
    pub fn emitted(&self) -> usize {
        self.count
    }

    fn fits(&self, j: usize) -> bool {
        let mut need: BTreeMap<NodeId, usize> = BTreeMap::new();
        for h in self.units[j].heads() {
            *need.entry(h).or_default() += 1;
        }
        need.iter().all(|(h, &n)| self.room[h] >= n)
    }

    fn first_fit(&self, from: usize) -> Option<usize> {
        (from..self.units.len()).find(|&j| self.fits(j))
    }

    fn push(&mut self, j: usize) {
        for h in self.units[j].heads() {
            *self.room.get_mut(&h).expect("head tracked") -= 1;
        }
        self.chosen.push(j);
    }

    fn pop(&mut self) -> Option<usize> {
        let j = self.chosen.pop()?;
        for h in self.units[j].heads() {
            *self.room.get_mut(&h).expect("head tracked") += 1;
        }
        Some(j)
    }

    fn advance(&mut self) -> bool {
        if self.chosen.len() < self.delta {
            let from = self.chosen.last().map_or(0, |&j| j + 1);
            if let Some(j) = self.first_fit(from) {
                self.push(j);
                return true;
            }
        }
        while let Some(j) = self.pop() {
            if let Some(k) = self.first_fit(j + 1) {
                self.push(k);
                return true;
            }
        }
        false
    }

    fn current(&self) -> EdgeEditSet {
        EdgeEditSet::from_units(self.chosen.iter().map(|&j| &self.units[j]))
    }
}

impl Iterator for StructuralEnumeration {
    type Item = EdgeEditSet;

    fn next(&mut self) -> Option<EdgeEditSet> {
        if self.done {
            return None;
        }
        if self.started && !self.advance() {
            self.done = true;
            return None;
        }
        self.started = true;
        self.count += 1;
        Some(self.current())
    }
}

pub fn enumerate_structural(g: &AttributedGraph, spec: &PerturbationSpec) -> Result<StructuralEnumeration> {
    enumerate_structural_with(g, spec, OracleGuard::default())
}

pub fn enumerate_structural_with(
    g: &AttributedGraph,
    spec: &PerturbationSpec,
    guard: OracleGuard,
) -> Result<StructuralEnumeration> {
    spec.validate_against(g)?;
    let units = spec.units(g);
    if units.len() > guard.max_fragile {
        return Err(Error::GuardExceeded(format!(
            "{} fragile pairs exceed the limit of {}",
            units.len(),
            guard.max_fragile
        )));
    }
    if spec.delta() > guard.max_delta {
        return Err(Error::GuardExceeded(format!(
            "global budget {} exceeds the limit of {}",
            spec.delta(),
            guard.max_delta
        )));
    }
    let room = units
        .iter()
        .flat_map(FragileUnit::heads)
        .map(|h| (h, spec.local_budget(h)))
        .collect();
    Ok(StructuralEnumeration {
        units,
        room,
        delta: spec.delta(),
        chosen: Vec::new(),
        started: false,
        done: false,
        count: 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleVerdict {
    pub status: Status,
    pub predicted: usize,
    /// First flipping perturbation in enumeration order.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    pub perturbations: usize,
    /// Largest rival-minus-predicted logit over all perturbations.
    pub best_margin: f64,
}

pub fn brute_force_verify(
    model: &GnnModel,
    g: &AttributedGraph,
    spec: &PerturbationSpec,
    t: NodeId,
) -> Result<OracleVerdict> {
    brute_force_verify_with(model, g, spec, t, OracleGuard::default())
}

/// Runs a forward pass on every structural perturbation. Robust iff no
/// perturbation lets another class reach the predicted class's logit.
pub fn brute_force_verify_with(
    model: &GnnModel,
    g: &AttributedGraph,
    spec: &PerturbationSpec,
    t: NodeId,
    guard: OracleGuard,
) -> Result<OracleVerdict> {
    if !spec.is_structural_only() {
        return Err(Error::Unsupported(
            "exhaustive verification needs all attribute budgets to be zero".into(),
        ));
    }
    g.check_node(t)?;
    let predicted = predict(model, g, t)?;
    let mut enumeration = enumerate_structural_with(g, spec, guard)?;
    let mut witness = None;
    let mut best_margin = f64::NEG_INFINITY;
    for edits in enumeration.by_ref() {
        let perturbed = apply_perturbation(g, spec, &edits, g.attrs().to_vec())?;
        let margin = forward(model, &perturbed, t)?.rival_margin(predicted);
        best_margin = best_margin.max(margin);
        if margin >= 0.0 && witness.is_none() {
            witness = Some(Witness::build(model, g, spec, t, predicted, edits, g.attrs().to_vec())?);
        }
    }
    Ok(OracleVerdict {
        status: if witness.is_some() { Status::NonRobust } else { Status::Robust },
        predicted,
        witness,
        perturbations: enumeration.emitted(),
        best_margin,
    })
}

/// Draws a random admissible edit set: a size up to the global budget, then
/// units in random order, skipping any that would break a local budget.
pub fn sample_edits(g: &AttributedGraph, spec: &PerturbationSpec, rng: &mut impl Rng) -> EdgeEditSet {
    let mut units = spec.units(g);
    let target = rng.gen_range(0..=spec.delta().min(units.len()));
    units.shuffle(rng);
    let mut used: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut chosen = Vec::new();
    for u in units {
        if chosen.len() == target {
            break;
        }
        let mut need: BTreeMap<NodeId, usize> = BTreeMap::new();
        for h in u.heads() {
            *need.entry(h).or_default() += 1;
        }
        if need.iter().all(|(&h, &n)| used.get(&h).copied().unwrap_or(0) + n <= spec.local_budget(h)) {
            for (h, n) in need {
                *used.entry(h).or_default() += n;
            }
            chosen.push(u);
        }
    }
    EdgeEditSet::from_units(&chosen)
}

/// Draws perturbed attributes: with probability one half every entry sits
/// at a random corner of its box, otherwise uniformly inside it.
pub fn sample_attrs(g: &AttributedGraph, spec: &PerturbationSpec, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let corner = rng.gen_bool(0.5);
    g.attrs()
        .iter()
        .enumerate()
        .map(|(v, row)| {
            row.iter()
                .enumerate()
                .map(|(i, &x)| {
                    let e = spec.eps(v, i);
                    if e == 0.0 {
                        x
                    } else if corner {
                        if rng.gen_bool(0.5) {
                            x + e
                        } else {
                            x - e
                        }
                    } else {
                        rng.gen_range(x - e..=x + e)
                    }
                })
                .collect()
        })
        .collect()
}

/// Random search for a flipping perturbation. Returns the first one found;
/// finding none proves nothing.
pub fn attack_sample(
    model: &GnnModel,
    g: &AttributedGraph,
    spec: &PerturbationSpec,
    t: NodeId,
    trials: usize,
    seed: u64,
) -> Result<Option<Witness>> {
    if trials == 0 {
        return Err(Error::InvalidSpec("an attack needs at least one trial".into()));
    }
    spec.validate_against(g)?;
    g.check_node(t)?;
    let predicted = predict(model, g, t)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let edits = sample_edits(g, spec, &mut rng);
        let attrs = sample_attrs(g, spec, &mut rng);
        let perturbed = apply_perturbation(g, spec, &edits, attrs.clone())?;
        if forward(model, &perturbed, t)?.rival_margin(predicted) >= 0.0 {
            return Ok(Some(Witness::build(model, g, spec, t, predicted, edits, attrs)?));
        }
    }
    Ok(None)
}
