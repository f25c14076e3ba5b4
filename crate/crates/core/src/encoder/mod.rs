//! Mixed-integer encoding of a verification task.
//!
//! A task is split into fragments: the input perturbation, one fragment per
//! GNN layer, and the objective. Every fragment declares each variable it
//! references together with its box from the [`BoundsTable`], so fragments
//! can be conjoined in any order.
//!
//! [`BoundsTable`]: crate::bounds::BoundsTable

mod encode;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bounds::Interval;
use crate::graph::NodeId;

pub use encode::{Encoder, ObjectiveMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarId(pub u32);

impl VarId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarKind {
    /// Perturbed attribute `attr_{v,i}`; doubles as `h^{(0)}_{v,i}`.
    Attr { node: NodeId, dim: usize },
    /// Toggle of one fragile unit, keyed by its canonical arc.
    Perturb { tail: NodeId, head: NodeId },
    /// Contribution `a^{(k)}_{v,i,u}` of `u` to the message of `v`.
    Contribution { layer: usize, node: NodeId, dim: usize, from: NodeId },
    Message { layer: usize, node: NodeId, dim: usize },
    PreActivation { layer: usize, node: NodeId, dim: usize },
    /// Post-ReLU embedding of a hidden layer.
    Embedding { layer: usize, node: NodeId, dim: usize },
    Degree { node: NodeId },
    DegreeIndicator { node: NodeId, degree: usize },
    /// Set when a max-aggregated neighbourhood ends up empty.
    EmptyIndicator { node: NodeId },
    /// Max over contributions before the empty-neighbourhood correction.
    MaxValue { layer: usize, node: NodeId, dim: usize },
    ObjectiveIndicator { class: usize },
}

impl VarKind {
    /// Variables of the encoding proper, as opposed to lowering auxiliaries.
    pub fn is_core(&self) -> bool {
        !matches!(
            self,
            VarKind::DegreeIndicator { .. }
                | VarKind::EmptyIndicator { .. }
                | VarKind::MaxValue { .. }
                | VarKind::ObjectiveIndicator { .. }
        )
    }
}

impl fmt::Display for VarKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            VarKind::Attr { node, dim } => write!(f, "attr_v{node}_i{dim}"),
            VarKind::Perturb { tail, head } => write!(f, "pe_{tail}_{head}"),
            VarKind::Contribution { layer, node, dim, from } => write!(f, "a_k{layer}_v{node}_i{dim}_u{from}"),
            VarKind::Message { layer, node, dim } => write!(f, "msg_k{layer}_v{node}_i{dim}"),
            VarKind::PreActivation { layer, node, dim } => write!(f, "y_k{layer}_v{node}_i{dim}"),
            VarKind::Embedding { layer, node, dim } => write!(f, "h_k{layer}_v{node}_i{dim}"),
            VarKind::Degree { node } => write!(f, "deg_v{node}"),
            VarKind::DegreeIndicator { node, degree } => write!(f, "degind_v{node}_d{degree}"),
            VarKind::EmptyIndicator { node } => write!(f, "empty_v{node}"),
            VarKind::MaxValue { layer, node, dim } => write!(f, "maxval_k{layer}_v{node}_i{dim}"),
            VarKind::ObjectiveIndicator { class } => write!(f, "objind_c{class}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarDomain {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarDecl {
    pub id: VarId,
    pub name: String,
    pub domain: VarDomain,
    pub lo: f64,
    pub hi: f64,
}

impl VarDecl {
    pub fn interval(&self) -> Interval {
        Interval::new(self.lo, self.hi)
    }

    pub fn is_binary(&self) -> bool {
        self.domain == VarDomain::Binary
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        })
    }
}

/// `Σ coef·x  sense  rhs`
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn new(terms: Vec<(VarId, f64)>, sense: Sense, rhs: f64) -> Self {
        Self { terms, sense, rhs }
    }

    /// `x − y = 0`
    pub fn equal(x: VarId, y: VarId) -> Self {
        Self::new(vec![(x, 1.0), (y, -1.0)], Sense::Eq, 0.0)
    }

    /// `x = c`
    pub fn fix(x: VarId, c: f64) -> Self {
        Self::new(vec![(x, 1.0)], Sense::Eq, c)
    }

    pub fn activity(&self, value: impl Fn(VarId) -> f64) -> f64 {
        self.terms.iter().map(|&(v, c)| c * value(v)).sum()
    }

    /// Amount by which an assignment violates the constraint, 0 if satisfied.
    pub fn violation(&self, value: impl Fn(VarId) -> f64) -> f64 {
        let lhs = self.activity(value);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }

    /// Scale used to make violations relative: the largest term magnitude.
    pub fn scale(&self, value: impl Fn(VarId) -> f64) -> f64 {
        self.terms
            .iter()
            .map(|&(v, c)| (c * value(v)).abs())
            .fold(self.rhs.abs().max(1.0), f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    Linear(LinearConstraint),
    /// `binary = phase → constraint`
    Indicator {
        binary: VarId,
        phase: bool,
        constraint: LinearConstraint,
    },
    /// `target = max(args ∪ {0 if include_zero})`
    MaxOf {
        target: VarId,
        args: Vec<VarId>,
        include_zero: bool,
    },
    /// `degree · message = Σ terms`, with `degree = 0 → message = 0`. The
    /// `choices` list the admissible degree values and the binary selecting
    /// each; it drives the lowering into indicators.
    Product {
        degree: VarId,
        message: VarId,
        terms: Vec<VarId>,
        choices: Vec<(usize, VarId)>,
    },
}

impl Constraint {
    pub fn vars(&self) -> Vec<VarId> {
        match self {
            Constraint::Linear(c) => c.terms.iter().map(|t| t.0).collect(),
            Constraint::Indicator { binary, constraint, .. } => {
                std::iter::once(*binary).chain(constraint.terms.iter().map(|t| t.0)).collect()
            }
            Constraint::MaxOf { target, args, .. } => std::iter::once(*target).chain(args.iter().copied()).collect(),
            Constraint::Product {
                degree,
                message,
                terms,
                choices,
            } => [*degree, *message]
                .into_iter()
                .chain(terms.iter().copied())
                .chain(choices.iter().map(|c| c.1))
                .collect(),
        }
    }
}

/// Which equation of the encoding a constraint instantiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    AttributeBox,
    GlobalBudget,
    LocalBudget,
    Contribution,
    Aggregation,
    Degree,
    LinearTransform,
    Activation,
    Objective,
    /// Constraints introduced by lowering choices (indicator selections,
    /// empty-neighbourhood detection).
    Auxiliary,
}

/// Constraints sharing a group instantiate one equation at one
/// `(layer, node, dim)` position; the group is the unit the encoding-size
/// ceiling counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConstraintGroup {
    pub family: Family,
    pub layer: usize,
    pub node: NodeId,
    pub dim: usize,
}

impl ConstraintGroup {
    pub fn new(family: Family, layer: usize, node: NodeId, dim: usize) -> Self {
        Self {
            family,
            layer,
            node,
            dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaggedConstraint {
    pub constraint: Constraint,
    pub group: ConstraintGroup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Input,
    Layer(usize),
    Objective,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpFragment {
    pub stage: Stage,
    pub vars: Vec<VarDecl>,
    pub constraints: Vec<TaggedConstraint>,
}

impl MilpFragment {
    pub fn new(stage: Stage) -> Self {
        Self {
            stage,
            vars: Vec::new(),
            constraints: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty() && self.constraints.is_empty()
    }
}

/// Interns variable kinds into dense ids for one task.
#[derive(Debug, Clone, Default)]
pub struct VarRegistry {
    ids: BTreeMap<VarKind, VarId>,
    kinds: Vec<VarKind>,
}

impl VarRegistry {
    pub fn intern(&mut self, kind: VarKind) -> VarId {
        if let Some(&id) = self.ids.get(&kind) {
            return id;
        }
        let id = VarId(self.kinds.len() as u32);
        self.ids.insert(kind, id);
        self.kinds.push(kind);
        id
    }

    pub fn get(&self, kind: &VarKind) -> Option<VarId> {
        self.ids.get(kind).copied()
    }

    pub fn kind(&self, id: VarId) -> VarKind {
        self.kinds[id.index()]
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (VarId, VarKind)> + '_ {
        self.kinds.iter().enumerate().map(|(i, &k)| (VarId(i as u32), k))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EncodingStats {
    /// Real variables of the encoding proper.
    pub num_real: usize,
    /// Structural perturbation binaries.
    pub num_binary: usize,
    /// Instantiated equations, counted per constraint group.
    pub num_constraints: usize,
    pub aux_real: usize,
    /// Degree, empty-neighbourhood and objective indicators.
    pub aux_binary: usize,
    /// Selector binaries the solver introduces when lowering max terms.
    pub lowering_binary: usize,
    /// Individual constraint objects across all fragments.
    pub raw_constraints: usize,
}

pub fn encoding_stats(fragments: &[MilpFragment], registry: &VarRegistry) -> EncodingStats {
    let mut vars: BTreeMap<VarId, &VarDecl> = BTreeMap::new();
    for f in fragments {
        for d in &f.vars {
            vars.insert(d.id, d);
        }
    }
    let mut stats = EncodingStats::default();
    for (id, decl) in &vars {
        let core = registry.kind(*id).is_core();
        match (core, decl.domain) {
            (true, VarDomain::Continuous) => stats.num_real += 1,
            (true, VarDomain::Binary) => stats.num_binary += 1,
            (false, VarDomain::Continuous) => stats.aux_real += 1,
            (false, VarDomain::Binary) => stats.aux_binary += 1,
        }
    }
    let mut groups = BTreeSet::new();
    for c in fragments.iter().flat_map(|f| &f.constraints) {
        stats.raw_constraints += 1;
        if c.group.family != Family::Auxiliary {
            groups.insert(c.group);
        }
        if let Constraint::MaxOf { args, include_zero, .. } = &c.constraint {
            let candidates = args.len() + usize::from(*include_zero);
            if candidates > 1 {
                stats.lowering_binary += candidates;
            }
        }
    }
    stats.num_constraints = groups.len();
    stats
}
