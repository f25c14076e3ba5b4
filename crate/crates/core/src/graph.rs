//! Attributed directed graphs and the admissible perturbation space.
//!
//! A graph stores arcs `(u, v)` meaning "u sends a message to v". Undirected
//! inputs are stored as two arcs per edge; in that case every fragile edge is
//! toggled as one unit covering both arcs, so the global budget counts
//! undirected edges while local budgets still count incoming arcs per node.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use crate::error::{Error, Result};

pub type NodeId = usize;
pub type Arc = (NodeId, NodeId);

/// Absolute tolerance used when comparing perturbed attributes to their box.
pub const ATTR_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct AttributedGraph {
    num_nodes: usize,
    directed: bool,
    edges: BTreeSet<Arc>,
    incoming: Vec<Vec<NodeId>>,
    attrs: Vec<Vec<f64>>,
    labels: Option<Vec<usize>>,
}

impl AttributedGraph {
    /// Builds a graph from an edge list. For undirected graphs each listed
    /// pair contributes both arcs, and listing a pair twice (in either
    /// orientation) is rejected as a duplicate.
    pub fn new(
        num_nodes: usize,
        directed: bool,
        edges: impl IntoIterator<Item = Arc>,
        attrs: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if attrs.len() != num_nodes {
            return Err(Error::InvalidGraph(format!(
                "expected {num_nodes} attribute rows, got {}",
                attrs.len()
            )));
        }
        let width = attrs.first().map_or(0, Vec::len);
        for (v, row) in attrs.iter().enumerate() {
            if row.len() != width {
                return Err(Error::InvalidGraph(format!(
                    "attribute row {v} has {} entries, expected {width}",
                    row.len()
                )));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidGraph(format!(
                    "attribute row {v} has a non-finite entry"
                )));
            }
        }
        let mut arcs = BTreeSet::new();
        for (u, v) in edges {
            check_node(u, num_nodes)?;
            check_node(v, num_nodes)?;
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop at node {u}")));
            }
            let fresh = if directed {
                arcs.insert((u, v))
            } else {
                let a = arcs.insert((u, v));
                let b = arcs.insert((v, u));
                a && b
            };
            if !fresh {
                return Err(Error::InvalidGraph(format!("duplicate edge ({u}, {v})")));
            }
        }
        let mut incoming = vec![Vec::new(); num_nodes];
        for &(u, v) in &arcs {
            incoming[v].push(u);
        }
        for list in &mut incoming {
            list.sort_unstable();
        }
        Ok(Self {
            num_nodes,
            directed,
            edges: arcs,
            incoming,
            attrs,
            labels: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.num_nodes {
            return Err(Error::InvalidGraph(format!(
                "expected {} labels, got {}",
                self.num_nodes,
                labels.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    /// Width `d_0` of the attribute vectors.
    pub fn attr_dim(&self) -> usize {
        self.attrs.first().map_or(0, Vec::len)
    }

    pub fn attrs(&self) -> &[Vec<f64>] {
        &self.attrs
    }

    pub fn attr(&self, v: NodeId) -> &[f64] {
        &self.attrs[v]
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// All stored arcs in ascending order.
    pub fn arcs(&self) -> impl Iterator<Item = Arc> + '_ {
        self.edges.iter().copied()
    }

    pub fn num_arcs(&self) -> usize {
        self.edges.len()
    }

    pub fn has_arc(&self, u: NodeId, v: NodeId) -> bool {
        self.edges.contains(&(u, v))
    }

    /// Incoming neighbours of `v`, ascending.
    pub fn in_neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.incoming[v]
    }

    pub fn check_node(&self, v: NodeId) -> Result<()> {
        check_node(v, self.num_nodes)
    }

    /// Edge list as it would be written to an interchange file: arcs for
    /// directed graphs, one `(min, max)` pair per edge otherwise.
    pub fn edge_list(&self) -> Vec<Arc> {
        if self.directed {
            self.arcs().collect()
        } else {
            self.arcs().filter(|&(u, v)| u < v).collect()
        }
    }
}

fn check_node(v: NodeId, num_nodes: usize) -> Result<()> {
    if v < num_nodes {
        Ok(())
    } else {
        Err(Error::InvalidNode { node: v, num_nodes })
    }
}

/// Fragile set, structural budgets and attribute budgets.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSpec {
    fragile: BTreeSet<Arc>,
    delta: usize,
    local_default: usize,
    local: BTreeMap<NodeId, usize>,
    eps_default: f64,
    eps: BTreeMap<(NodeId, usize), f64>,
}

impl PerturbationSpec {
    /// A spec with the given fragile pairs and global budget. Local budgets
    /// default to unlimited and attribute budgets to zero. For undirected
    /// graphs each fragile pair covers both orientations.
    pub fn new(g: &AttributedGraph, fragile: impl IntoIterator<Item = Arc>, delta: usize) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (u, v) in fragile {
            if u >= g.num_nodes() || v >= g.num_nodes() {
                return Err(Error::InvalidSpec(format!(
                    "fragile pair ({u}, {v}) references a node outside 0..{}",
                    g.num_nodes()
                )));
            }
            if u == v {
                return Err(Error::InvalidSpec(format!("fragile self-loop at node {u}")));
            }
            set.insert((u, v));
            if !g.is_directed() {
                set.insert((v, u));
            }
        }
        Ok(Self {
            fragile: set,
            delta,
            local_default: usize::MAX,
            local: BTreeMap::new(),
            eps_default: 0.0,
            eps: BTreeMap::new(),
        })
    }

    /// `F = E`: every existing edge may be deleted, nothing may be inserted.
    pub fn all_edges(g: &AttributedGraph, delta: usize) -> Result<Self> {
        Self::new(g, g.arcs(), delta)
    }

    pub fn with_delta(mut self, delta: usize) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_local_default(mut self, budget: usize) -> Self {
        self.local_default = budget;
        self
    }

    pub fn with_local(mut self, v: NodeId, budget: usize) -> Self {
        self.local.insert(v, budget);
        self
    }

    pub fn with_eps_default(mut self, eps: f64) -> Result<Self> {
        check_eps(eps)?;
        self.eps_default = eps;
        Ok(self)
    }

    pub fn with_eps(mut self, v: NodeId, i: usize, eps: f64) -> Result<Self> {
        check_eps(eps)?;
        self.eps.insert((v, i), eps);
        Ok(self)
    }

    pub fn fragile(&self) -> &BTreeSet<Arc> {
        &self.fragile
    }

    pub fn is_fragile(&self, u: NodeId, v: NodeId) -> bool {
        self.fragile.contains(&(u, v))
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    pub fn local_default(&self) -> usize {
        self.local_default
    }

    pub fn local_overrides(&self) -> &BTreeMap<NodeId, usize> {
        &self.local
    }

    pub fn eps_default(&self) -> f64 {
        self.eps_default
    }

    pub fn eps_overrides(&self) -> &BTreeMap<(NodeId, usize), f64> {
        &self.eps
    }

    pub fn local_budget(&self, v: NodeId) -> usize {
        self.local.get(&v).copied().unwrap_or(self.local_default)
    }

    pub fn eps(&self, v: NodeId, i: usize) -> f64 {
        self.eps.get(&(v, i)).copied().unwrap_or(self.eps_default)
    }

    /// True when every attribute budget is zero.
    pub fn is_structural_only(&self) -> bool {
        self.eps_default == 0.0 && self.eps.values().all(|&e| e == 0.0)
    }

    /// Checks the perturbation spec against a graph: indices in range and, for undirected
    /// graphs, a symmetric fragile set.
    pub fn validate_against(&self, g: &AttributedGraph) -> Result<()> {
        for &(u, v) in &self.fragile {
            if u >= g.num_nodes() || v >= g.num_nodes() {
                return Err(Error::InvalidSpec(format!(
                    "fragile pair ({u}, {v}) out of range"
                )));
            }
            if !g.is_directed() && !self.fragile.contains(&(v, u)) {
                return Err(Error::InvalidSpec(format!(
                    "undirected graph but fragile pair ({u}, {v}) lacks its reverse"
                )));
            }
        }
        for (&(v, i), _) in &self.eps {
            if v >= g.num_nodes() || i >= g.attr_dim() {
                return Err(Error::InvalidSpec(format!(
                    "attribute budget for ({v}, {i}) out of range"
                )));
            }
        }
        for &v in self.local.keys() {
            if v >= g.num_nodes() {
                return Err(Error::InvalidSpec(format!("local budget for node {v} out of range")));
            }
        }
        Ok(())
    }

    /// The toggle units of the fragile set, in ascending order of their
    /// canonical arc.
    pub fn units(&self, g: &AttributedGraph) -> Vec<FragileUnit> {
        self.fragile
            .iter()
            .filter(|&&(u, v)| g.is_directed() || u < v)
            .map(|&(u, v)| FragileUnit {
                tail: u,
                head: v,
                undirected: !g.is_directed(),
                present: g.has_arc(u, v),
            })
            .collect()
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps.is_finite() && eps >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidSpec(format!(
            "attribute budget must be finite and non-negative, got {eps}"
        )))
    }
}

/// One perturbation decision: a single arc, or both arcs of an undirected
/// edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FragileUnit {
    pub tail: NodeId,
    pub head: NodeId,
    pub undirected: bool,
    /// Whether the unit's arcs exist in the unperturbed graph.
    pub present: bool,
}

impl FragileUnit {
    pub fn arcs(&self) -> impl Iterator<Item = Arc> {
        let first = (self.tail, self.head);
        let second = self.undirected.then_some((self.head, self.tail));
        std::iter::once(first).chain(second)
    }

    pub fn heads(&self) -> impl Iterator<Item = NodeId> {
        self.arcs().map(|(_, v)| v)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NeighborPartition {
    /// `(u, v) ∈ E \ F`
    pub fixed_in: Vec<NodeId>,
    /// `(u, v) ∈ E ∩ F`
    pub fragile_in: Vec<NodeId>,
    /// `(u, v) ∈ F \ E`
    pub fragile_absent: Vec<NodeId>,
}

impl NeighborPartition {
    pub fn len(&self) -> usize {
        self.fixed_in.len() + self.fragile_in.len() + self.fragile_absent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of incident fragile pairs, present or absent.
    pub fn num_fragile(&self) -> usize {
        self.fragile_in.len() + self.fragile_absent.len()
    }

    /// All candidate contributors in ascending node order.
    pub fn all(&self) -> Vec<NodeId> {
        let mut all: Vec<_> = self
            .fixed_in
            .iter()
            .chain(&self.fragile_in)
            .chain(&self.fragile_absent)
            .copied()
            .collect();
        all.sort_unstable();
        all
    }
}

pub fn partition_incoming(g: &AttributedGraph, spec: &PerturbationSpec, v: NodeId) -> NeighborPartition {
    let mut part = NeighborPartition::default();
    for &u in g.in_neighbors(v) {
        if spec.is_fragile(u, v) {
            part.fragile_in.push(u);
        } else {
            part.fixed_in.push(u);
        }
    }
    part.fragile_absent = spec
        .fragile
        .iter()
        .filter(|&&(u, w)| w == v && !g.has_arc(u, v))
        .map(|&(u, _)| u)
        .collect();
    part
}

/// `{u : a directed path u → t of length ≤ k exists} ∪ {t}`.
pub fn relevant_nodes(g: &AttributedGraph, t: NodeId, k: usize) -> Result<BTreeSet<NodeId>> {
    g.check_node(t)?;
    Ok(hop_distances(|v| g.in_neighbors(v).to_vec(), t, k).into_keys().collect())
}

/// Backward BFS from `t` along the given incoming-neighbour relation, up to
/// `k` hops. Maps each reached node to its hop distance.
pub fn hop_distances<F>(mut incoming: F, t: NodeId, k: usize) -> BTreeMap<NodeId, usize>
where
    F: FnMut(NodeId) -> Vec<NodeId>,
{
    let mut dist = BTreeMap::new();
    dist.insert(t, 0);
    let mut queue = VecDeque::from([t]);
    while let Some(v) = queue.pop_front() {
        let d = dist[&v];
        if d == k {
            continue;
        }
        for u in incoming(v) {
            if !dist.contains_key(&u) {
                dist.insert(u, d + 1);
                queue.push_back(u);
            }
        }
    }
    dist
}

/// The part of the graph that can influence the prediction at a target: hop
/// distances are taken over `E ∪ F`, since an inserted fragile pair pulls its
/// tail into the receptive field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scope {
    pub target: NodeId,
    pub num_layers: usize,
    dist: BTreeMap<NodeId, usize>,
}

impl Scope {
    pub fn new(g: &AttributedGraph, spec: &PerturbationSpec, t: NodeId, num_layers: usize) -> Result<Self> {
        g.check_node(t)?;
        let mut potential: Vec<Vec<NodeId>> = (0..g.num_nodes()).map(|v| g.in_neighbors(v).to_vec()).collect();
        for &(u, v) in spec.fragile() {
            if !g.has_arc(u, v) {
                potential[v].push(u);
            }
        }
        let dist = hop_distances(|v| potential[v].clone(), t, num_layers);
        Ok(Self {
            target: t,
            num_layers,
            dist,
        })
    }

    /// Nodes within `k` hops of the target.
    pub fn within(&self, k: usize) -> impl Iterator<Item = NodeId> + '_ {
        self.dist.iter().filter(move |(_, &d)| d <= k).map(|(&v, _)| v)
    }

    /// Nodes whose layer-`k` embedding is needed (`N_{K−k}(t)`).
    pub fn nodes_at_layer(&self, k: usize) -> Vec<NodeId> {
        self.within(self.num_layers.saturating_sub(k)).collect()
    }

    pub fn distance(&self, v: NodeId) -> Option<usize> {
        self.dist.get(&v).copied()
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.dist.contains_key(&v)
    }

    /// `|N_K(t)|`
    pub fn len(&self) -> usize {
        self.dist.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dist.is_empty()
    }

    /// Whether toggling a unit can change the target's prediction.
    pub fn unit_matters(&self, unit: &FragileUnit) -> bool {
        unit.heads()
            .any(|h| self.distance(h).is_some_and(|d| d < self.num_layers))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EdgeEditSet {
    pub deletions: BTreeSet<Arc>,
    pub insertions: BTreeSet<Arc>,
}

impl EdgeEditSet {
    pub fn is_empty(&self) -> bool {
        self.deletions.is_empty() && self.insertions.is_empty()
    }

    /// Edit set realising a choice of toggled units.
    pub fn from_units<'a>(units: impl IntoIterator<Item = &'a FragileUnit>) -> Self {
        let mut edits = Self::default();
        for unit in units {
            for arc in unit.arcs() {
                if unit.present {
                    edits.deletions.insert(arc);
                } else {
                    edits.insertions.insert(arc);
                }
            }
        }
        edits
    }

    pub fn arcs(&self) -> impl Iterator<Item = Arc> + '_ {
        self.deletions.iter().chain(&self.insertions).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NotFragile(Arc),
    DeletesMissingEdge(Arc),
    InsertsExistingEdge(Arc),
    AsymmetricEdit(Arc),
    GlobalBudget { used: usize, budget: usize },
    LocalBudget { node: NodeId, used: usize, budget: usize },
    Attribute { node: NodeId, dim: usize, change: f64, budget: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NotFragile((u, v)) => write!(f, "edit of non-fragile pair ({u}, {v})"),
            Violation::DeletesMissingEdge((u, v)) => write!(f, "deletion of missing edge ({u}, {v})"),
            Violation::InsertsExistingEdge((u, v)) => write!(f, "insertion of existing edge ({u}, {v})"),
            Violation::AsymmetricEdit((u, v)) => {
                write!(f, "undirected edit ({u}, {v}) without its reverse")
            }
            Violation::GlobalBudget { used, budget } => {
                write!(f, "global budget: {used} edits > {budget}")
            }
            Violation::LocalBudget { node, used, budget } => {
                write!(f, "local budget at {node}: {used} edits > {budget}")
            }
            Violation::Attribute {
                node,
                dim,
                change,
                budget,
            } => write!(f, "attribute ({node}, {dim}) moved by {change} > {budget}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "admissible");
        }
        let parts: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        write!(f, "{}", parts.join("; "))
    }
}

/// Number of toggled units an edit set represents.
pub fn edit_count(g: &AttributedGraph, edits: &EdgeEditSet) -> usize {
    let arcs = edits.deletions.len() + edits.insertions.len();
    if g.is_directed() {
        arcs
    } else {
        arcs.div_ceil(2)
    }
}

pub fn validate_perturbation(
    g: &AttributedGraph,
    spec: &PerturbationSpec,
    edits: &EdgeEditSet,
    new_attrs: &[Vec<f64>],
) -> Result<ValidationReport> {
    if new_attrs.len() != g.num_nodes() || new_attrs.iter().any(|r| r.len() != g.attr_dim()) {
        return Err(Error::Shape(format!(
            "perturbed attributes must be {} x {}",
            g.num_nodes(),
            g.attr_dim()
        )));
    }
    let mut report = ValidationReport::default();
    for &(u, v) in &edits.deletions {
        if !spec.is_fragile(u, v) {
            report.violations.push(Violation::NotFragile((u, v)));
        } else if !g.has_arc(u, v) {
            report.violations.push(Violation::DeletesMissingEdge((u, v)));
        }
        if !g.is_directed() && !edits.deletions.contains(&(v, u)) {
            report.violations.push(Violation::AsymmetricEdit((u, v)));
        }
    }
    for &(u, v) in &edits.insertions {
        if !spec.is_fragile(u, v) {
            report.violations.push(Violation::NotFragile((u, v)));
        } else if g.has_arc(u, v) {
            report.violations.push(Violation::InsertsExistingEdge((u, v)));
        }
        if !g.is_directed() && !edits.insertions.contains(&(v, u)) {
            report.violations.push(Violation::AsymmetricEdit((u, v)));
        }
    }
    let used = edit_count(g, edits);
    if used > spec.delta() {
        report.violations.push(Violation::GlobalBudget {
            used,
            budget: spec.delta(),
        });
    }
    let mut per_node: BTreeMap<NodeId, usize> = BTreeMap::new();
    for (_, v) in edits.arcs() {
        *per_node.entry(v).or_default() += 1;
    }
    for (node, used) in per_node {
        let budget = spec.local_budget(node);
        if used > budget {
            report.violations.push(Violation::LocalBudget { node, used, budget });
        }
    }
    for (v, (old, new)) in g.attrs().iter().zip(new_attrs).enumerate() {
        for (i, (a, b)) in old.iter().zip(new).enumerate() {
            let change = (a - b).abs();
            let budget = spec.eps(v, i);
            if !(change <= budget + ATTR_TOL) {
                report.violations.push(Violation::Attribute {
                    node: v,
                    dim: i,
                    change,
                    budget,
                });
            }
        }
    }
    Ok(report)
}

pub fn apply_perturbation(
    g: &AttributedGraph,
    spec: &PerturbationSpec,
    edits: &EdgeEditSet,
    new_attrs: Vec<Vec<f64>>,
) -> Result<AttributedGraph> {
    let report = validate_perturbation(g, spec, edits, &new_attrs)?;
    if !report.is_valid() {
        return Err(Error::InadmissiblePerturbation(report.to_string()));
    }
    Ok(apply_edits_unchecked(g, edits, new_attrs))
}

/// Applies edits without checking admissibility. Used by enumerators that
/// construct admissible edits by design.
pub(crate) fn apply_edits_unchecked(
    g: &AttributedGraph,
    edits: &EdgeEditSet,
    new_attrs: Vec<Vec<f64>>,
) -> AttributedGraph {
    let mut edges = g.edges.clone();
    for arc in &edits.deletions {
        edges.remove(arc);
    }
    edges.extend(edits.insertions.iter().copied());
    let mut incoming = vec![Vec::new(); g.num_nodes];
    for &(u, v) in &edges {
        incoming[v].push(u);
    }
    AttributedGraph {
        num_nodes: g.num_nodes,
        directed: g.directed,
        edges,
        incoming,
        attrs: new_attrs,
        labels: g.labels.clone(),
    }
}
