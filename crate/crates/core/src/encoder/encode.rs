use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{
    Constraint, ConstraintGroup, Family, LinearConstraint, MilpFragment, Sense, Stage, TaggedConstraint, VarDecl,
    VarDomain, VarId, VarKind, VarRegistry,
};
use crate::bounds::{BoundsTable, Interval};
use crate::error::{Error, Result};
use crate::graph::{Arc, AttributedGraph, FragileUnit, NodeId, PerturbationSpec};
use crate::model::{Aggregation, GnnModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveMode {
    /// Some class other than the predicted one reaches its logit.
    #[default]
    Full,
    /// Only the class `(ĉ + 1) mod m` is considered.
    PairwiseNext,
}

/// Builds the fragments of one verification task.
pub struct Encoder<'a> {
    model: &'a GnnModel,
    spec: &'a PerturbationSpec,
    bounds: &'a BoundsTable,
    predicted: usize,
    units: Vec<FragileUnit>,
    unit_of_arc: BTreeMap<Arc, usize>,
    registry: VarRegistry,
}

struct Builder {
    fragment: MilpFragment,
    declared: BTreeSet<VarId>,
}

impl Builder {
    fn new(stage: Stage) -> Self {
        Self {
            fragment: MilpFragment::new(stage),
            declared: BTreeSet::new(),
        }
    }

    fn push(&mut self, constraint: Constraint, group: ConstraintGroup) {
        self.fragment.constraints.push(TaggedConstraint { constraint, group });
    }

    fn linear(&mut self, c: LinearConstraint, group: ConstraintGroup) {
        self.push(Constraint::Linear(c), group);
    }
}

impl<'a> Encoder<'a> {
    pub fn new(
        model: &'a GnnModel,
        graph: &'a AttributedGraph,
        spec: &'a PerturbationSpec,
        bounds: &'a BoundsTable,
        predicted: usize,
    ) -> Result<Self> {
        if model.num_classes() < 2 {
            return Err(Error::InvalidModel("objective needs at least two classes".into()));
        }
        if predicted >= model.num_classes() {
            return Err(Error::InvalidModel(format!("predicted class {predicted} out of range")));
        }
        let scope = bounds.scope();
        let units: Vec<FragileUnit> = spec.units(graph).into_iter().filter(|u| scope.unit_matters(u)).collect();
        let unit_of_arc = units
            .iter()
            .enumerate()
            .flat_map(|(i, u)| u.arcs().map(move |a| (a, i)))
            .collect();
        Ok(Self {
            model,
            spec,
            bounds,
            predicted,
            units,
            unit_of_arc,
            registry: VarRegistry::default(),
        })
    }

    pub fn registry(&self) -> &VarRegistry {
        &self.registry
    }

    pub fn predicted_class(&self) -> usize {
        self.predicted
    }

    /// Fragile units that can influence the target, each with its toggle.
    pub fn perturbation_vars(&mut self) -> Vec<(FragileUnit, VarId)> {
        self.units
            .clone()
            .into_iter()
            .map(|u| {
                let id = self.registry.intern(VarKind::Perturb {
                    tail: u.tail,
                    head: u.head,
                });
                (u, id)
            })
            .collect()
    }

    /// Input, layers `1..=K`, objective.
    pub fn encode_all(&mut self, mode: ObjectiveMode) -> Result<Vec<MilpFragment>> {
        let mut out = vec![self.encode_input()?];
        for k in 1..=self.model.num_layers() {
            out.push(self.encode_layer(k)?);
        }
        out.push(self.encode_objective(mode)?);
        Ok(out)
    }

    fn declare(&mut self, b: &mut Builder, kind: VarKind, domain: VarDomain, iv: Interval) -> Result<VarId> {
        if !iv.is_finite() || iv.lo > iv.hi {
            return Err(Error::MissingBounds(format!("finite box for {kind}")));
        }
        let id = self.registry.intern(kind);
        if b.declared.insert(id) {
            b.fragment.vars.push(VarDecl {
                id,
                name: kind.to_string(),
                domain,
                lo: iv.lo,
                hi: iv.hi,
            });
        }
        Ok(id)
    }

    fn binary(&mut self, b: &mut Builder, kind: VarKind) -> Result<VarId> {
        self.declare(b, kind, VarDomain::Binary, Interval::new(0.0, 1.0))
    }

    fn perturb(&mut self, b: &mut Builder, unit: usize) -> Result<VarId> {
        let u = self.units[unit];
        self.binary(
            b,
            VarKind::Perturb {
                tail: u.tail,
                head: u.head,
            },
        )
    }

    /// `h^{(k)}_{v,i}`, which is the attribute variable at `k = 0`.
    fn embedding(&mut self, b: &mut Builder, k: usize, v: NodeId, i: usize) -> Result<(VarId, Interval)> {
        let iv = self.bounds.embedding(k, v)?[i];
        let kind = if k == 0 {
            VarKind::Attr { node: v, dim: i }
        } else {
            VarKind::Embedding { layer: k, node: v, dim: i }
        };
        Ok((self.declare(b, kind, VarDomain::Continuous, iv)?, iv))
    }

    fn unit_into(&self, u: NodeId, v: NodeId) -> Result<usize> {
        self.unit_of_arc
            .get(&(u, v))
            .copied()
            .ok_or_else(|| Error::MissingBounds(format!("perturbation variable for ({u}, {v})")))
    }

    /// Attribute boxes, structural toggles and the budget constraints.
    pub fn encode_input(&mut self) -> Result<MilpFragment> {
        let mut b = Builder::new(Stage::Input);
        let scope = self.bounds.scope().clone();
        for v in scope.within(scope.num_layers) {
            for i in 0..self.model.dims()[0] {
                self.embedding(&mut b, 0, v, i)?;
            }
        }
        let toggles: Vec<VarId> = (0..self.units.len())
            .map(|i| self.perturb(&mut b, i))
            .collect::<Result<_>>()?;
        if !toggles.is_empty() {
            let terms = toggles.iter().map(|&p| (p, 1.0)).collect();
            b.linear(
                LinearConstraint::new(terms, Sense::Le, self.spec.delta() as f64),
                ConstraintGroup::new(Family::GlobalBudget, 0, scope.target, 0),
            );
        }
        let mut per_head: BTreeMap<NodeId, Vec<VarId>> = BTreeMap::new();
        for (i, unit) in self.units.iter().enumerate() {
            for h in unit.heads() {
                per_head.entry(h).or_default().push(toggles[i]);
            }
        }
        for (w, vars) in per_head {
            let budget = self.spec.local_budget(w);
            if budget < vars.len() {
                let terms = vars.into_iter().map(|p| (p, 1.0)).collect();
                b.linear(
                    LinearConstraint::new(terms, Sense::Le, budget as f64),
                    ConstraintGroup::new(Family::LocalBudget, 0, w, 0),
                );
            }
        }
        Ok(b.fragment)
    }

    /// Contributions, aggregation, linear transform and activation of layer
    /// `k` for every node in `N_{K−k}(t)`. Layer-`(k−1)` embeddings appear as
    /// frontier variables bounded by their boxes.
    pub fn encode_layer(&mut self, k: usize) -> Result<MilpFragment> {
        let num_layers = self.model.num_layers();
        if k == 0 || k > num_layers {
            return Err(Error::Shape(format!("layer {k} outside 1..={num_layers}")));
        }
        let mut b = Builder::new(Stage::Layer(k));
        let scope = self.bounds.scope().clone();
        let layer = self.model.layer(k).clone();
        let aggr = self.model.aggregation();
        for v in scope.nodes_at_layer(k) {
            let part = self.bounds.partition(v)?.clone();
            let s = self.bounds.budget(v).unwrap_or(0);
            let defines_node = scope.distance(v) == Some(num_layers - k);
            let can_be_empty = part.fixed_in.is_empty() && s >= part.fragile_in.len();
            let has_neighbors = !part.is_empty();

            let degree = if aggr == Aggregation::Mean && has_neighbors {
                self.degree_vars(&mut b, v, &part, defines_node)?
            } else {
                None
            };
            let empty = if aggr == Aggregation::Max && has_neighbors && can_be_empty {
                Some(self.empty_indicator(&mut b, v, &part, defines_node)?)
            } else {
                None
            };

            let mut msgs = Vec::with_capacity(layer.in_dim());
            for i in 0..layer.in_dim() {
                let msg_box = self.bounds.node(k, v)?.msg[i];
                let msg = self.declare(
                    &mut b,
                    VarKind::Message { layer: k, node: v, dim: i },
                    VarDomain::Continuous,
                    msg_box,
                )?;
                msgs.push(msg);
                let agg_group = ConstraintGroup::new(Family::Aggregation, k, v, i);
                if !has_neighbors {
                    b.linear(LinearConstraint::fix(msg, 0.0), agg_group);
                    continue;
                }

                let mut sources = Vec::with_capacity(part.len());
                for &u in &part.fixed_in {
                    sources.push((u, None, self.embedding(&mut b, k - 1, u, i)?));
                }
                for &u in &part.fragile_in {
                    let unit = self.unit_into(u, v)?;
                    sources.push((u, Some((unit, true)), self.embedding(&mut b, k - 1, u, i)?));
                }
                for &u in &part.fragile_absent {
                    let unit = self.unit_into(u, v)?;
                    sources.push((u, Some((unit, false)), self.embedding(&mut b, k - 1, u, i)?));
                }
                sources.sort_by_key(|s| s.0);

                // Value a contribution takes when its arc is absent. Max needs
                // a value no present contributor can fall below.
                let absent = match aggr {
                    Aggregation::Max => sources.iter().map(|s| s.2 .1.lo).fold(0.0, f64::min),
                    _ => 0.0,
                };
                let contrib_group = ConstraintGroup::new(Family::Contribution, k, v, i);
                let mut contribs = Vec::with_capacity(sources.len());
                for (u, fragile, (h, h_box)) in sources {
                    let kind = VarKind::Contribution {
                        layer: k,
                        node: v,
                        dim: i,
                        from: u,
                    };
                    match fragile {
                        None => {
                            let a = self.declare(&mut b, kind, VarDomain::Continuous, h_box)?;
                            b.linear(LinearConstraint::equal(a, h), contrib_group);
                            contribs.push((a, h_box));
                        }
                        Some((unit, present)) => {
                            let a_box = h_box.hull(&Interval::point(absent));
                            let a = self.declare(&mut b, kind, VarDomain::Continuous, a_box)?;
                            let pe = self.perturb(&mut b, unit)?;
                            // Present arcs contribute when not toggled, absent
                            // arcs when toggled.
                            let active_phase = !present;
                            b.push(
                                Constraint::Indicator {
                                    binary: pe,
                                    phase: active_phase,
                                    constraint: LinearConstraint::equal(a, h),
                                },
                                contrib_group,
                            );
                            b.push(
                                Constraint::Indicator {
                                    binary: pe,
                                    phase: !active_phase,
                                    constraint: LinearConstraint::fix(a, absent),
                                },
                                contrib_group,
                            );
                            contribs.push((a, a_box));
                        }
                    }
                }

                match aggr {
                    Aggregation::Sum => {
                        let mut terms = vec![(msg, 1.0)];
                        terms.extend(contribs.iter().map(|&(a, _)| (a, -1.0)));
                        b.linear(LinearConstraint::new(terms, Sense::Eq, 0.0), agg_group);
                    }
                    Aggregation::Max => {
                        let args: Vec<VarId> = contribs.iter().map(|c| c.0).collect();
                        match empty {
                            Some(e) if absent < 0.0 => {
                                let lo = contribs.iter().map(|c| c.1.lo).fold(f64::NEG_INFINITY, f64::max);
                                let hi = contribs.iter().map(|c| c.1.hi).fold(f64::NEG_INFINITY, f64::max);
                                let raw = self.declare(
                                    &mut b,
                                    VarKind::MaxValue { layer: k, node: v, dim: i },
                                    VarDomain::Continuous,
                                    Interval::new(lo, hi),
                                )?;
                                b.push(
                                    Constraint::MaxOf {
                                        target: raw,
                                        args,
                                        include_zero: false,
                                    },
                                    agg_group,
                                );
                                // msg = raw − absent·empty: all contributions sit at
                                // `absent` exactly when the neighbourhood is empty.
                                b.linear(
                                    LinearConstraint::new(vec![(msg, 1.0), (raw, -1.0), (e, absent)], Sense::Eq, 0.0),
                                    agg_group,
                                );
                            }
                            _ => b.push(
                                Constraint::MaxOf {
                                    target: msg,
                                    args,
                                    include_zero: false,
                                },
                                agg_group,
                            ),
                        }
                    }
                    Aggregation::Mean => {
                        let terms: Vec<VarId> = contribs.iter().map(|c| c.0).collect();
                        match &degree {
                            Some((deg, choices)) => b.push(
                                Constraint::Product {
                                    degree: *deg,
                                    message: msg,
                                    terms,
                                    choices: choices.clone(),
                                },
                                agg_group,
                            ),
                            None => {
                                let d = part.fixed_in.len() + part.fragile_in.len();
                                if d == 0 {
                                    b.linear(LinearConstraint::fix(msg, 0.0), agg_group);
                                } else {
                                    let mut row = vec![(msg, d as f64)];
                                    row.extend(terms.iter().map(|&a| (a, -1.0)));
                                    b.linear(LinearConstraint::new(row, Sense::Eq, 0.0), agg_group);
                                }
                            }
                        }
                    }
                }
            }

            let own: Vec<VarId> = (0..layer.in_dim())
                .map(|j| self.embedding(&mut b, k - 1, v, j).map(|x| x.0))
                .collect::<Result<_>>()?;
            let node_bounds = self.bounds.node(k, v)?.clone();
            for i in 0..layer.out_dim() {
                let y = self.declare(
                    &mut b,
                    VarKind::PreActivation { layer: k, node: v, dim: i },
                    VarDomain::Continuous,
                    node_bounds.pre_activation[i],
                )?;
                let mut terms = vec![(y, 1.0)];
                for j in 0..layer.in_dim() {
                    let w1 = layer.w_self.get(i, j);
                    let w2 = layer.w_neigh.get(i, j);
                    if w1 != 0.0 {
                        terms.push((own[j], -w1));
                    }
                    if w2 != 0.0 {
                        terms.push((msgs[j], -w2));
                    }
                }
                b.linear(
                    LinearConstraint::new(terms, Sense::Eq, layer.bias_at(i)),
                    ConstraintGroup::new(Family::LinearTransform, k, v, i),
                );
                if k == num_layers {
                    continue;
                }
                let h = self.declare(
                    &mut b,
                    VarKind::Embedding { layer: k, node: v, dim: i },
                    VarDomain::Continuous,
                    node_bounds.embedding[i],
                )?;
                let y_box = node_bounds.pre_activation[i];
                let group = ConstraintGroup::new(Family::Activation, k, v, i);
                if y_box.hi <= 0.0 {
                    b.linear(LinearConstraint::fix(h, 0.0), group);
                } else if y_box.lo >= 0.0 {
                    b.linear(LinearConstraint::equal(h, y), group);
                } else {
                    b.push(
                        Constraint::MaxOf {
                            target: h,
                            args: vec![y],
                            include_zero: true,
                        },
                        group,
                    );
                }
            }
        }
        Ok(b.fragment)
    }

    /// Degree variable and its value selectors when the incoming degree of
    /// `v` can vary; `None` for a fixed degree.
    fn degree_vars(
        &mut self,
        b: &mut Builder,
        v: NodeId,
        part: &crate::graph::NeighborPartition,
        define: bool,
    ) -> Result<Option<(VarId, Vec<(usize, VarId)>)>> {
        let deg_box = self.bounds.degree(v)?;
        if deg_box.width() == 0.0 {
            return Ok(None);
        }
        let deg = self.declare(b, VarKind::Degree { node: v }, VarDomain::Continuous, deg_box)?;
        let (lo, hi) = (deg_box.lo as usize, deg_box.hi as usize);
        let mut choices = Vec::with_capacity(hi - lo + 1);
        for d in lo..=hi {
            choices.push((d, self.binary(b, VarKind::DegreeIndicator { node: v, degree: d })?));
        }
        if define {
            let base = (part.fixed_in.len() + part.fragile_in.len()) as f64;
            let mut terms = vec![(deg, 1.0)];
            for &u in &part.fragile_in {
                terms.push((self.perturb(b, self.unit_into(u, v)?)?, 1.0));
            }
            for &u in &part.fragile_absent {
                terms.push((self.perturb(b, self.unit_into(u, v)?)?, -1.0));
            }
            b.linear(
                LinearConstraint::new(terms, Sense::Eq, base),
                ConstraintGroup::new(Family::Degree, 0, v, 0),
            );
            let aux = ConstraintGroup::new(Family::Auxiliary, 0, v, 0);
            b.linear(
                LinearConstraint::new(choices.iter().map(|&(_, c)| (c, 1.0)).collect(), Sense::Eq, 1.0),
                aux,
            );
            for &(d, c) in &choices {
                b.push(
                    Constraint::Indicator {
                        binary: c,
                        phase: true,
                        constraint: LinearConstraint::fix(deg, d as f64),
                    },
                    aux,
                );
            }
        }
        Ok(Some((deg, choices)))
    }

    /// Binary that is 1 exactly when no contributor of `v` is present.
    fn empty_indicator(
        &mut self,
        b: &mut Builder,
        v: NodeId,
        part: &crate::graph::NeighborPartition,
        define: bool,
    ) -> Result<VarId> {
        let e = self.binary(b, VarKind::EmptyIndicator { node: v })?;
        if define {
            let aux = ConstraintGroup::new(Family::Auxiliary, 0, v, 0);
            // present(u) = 1 − pe for existing arcs, pe for absent ones.
            let mut cover = vec![(e, 1.0)];
            for &u in &part.fragile_in {
                let pe = self.perturb(b, self.unit_into(u, v)?)?;
                b.linear(LinearConstraint::new(vec![(e, 1.0), (pe, -1.0)], Sense::Le, 0.0), aux);
                cover.push((pe, -1.0));
            }
            for &u in &part.fragile_absent {
                let pe = self.perturb(b, self.unit_into(u, v)?)?;
                b.linear(LinearConstraint::new(vec![(e, 1.0), (pe, 1.0)], Sense::Le, 1.0), aux);
                cover.push((pe, 1.0));
            }
            b.linear(
                LinearConstraint::new(cover, Sense::Ge, 1.0 - part.fragile_in.len() as f64),
                aux,
            );
        }
        Ok(e)
    }

    pub fn encode_objective(&mut self, mode: ObjectiveMode) -> Result<MilpFragment> {
        let mut b = Builder::new(Stage::Objective);
        let num_layers = self.model.num_layers();
        let m = self.model.num_classes();
        let t = self.bounds.scope().target;
        let c_hat = self.predicted;
        let logits = &self.bounds.node(num_layers, t)?.pre_activation.clone();
        let logit = |enc: &mut Self, b: &mut Builder, c: usize| {
            enc.declare(
                b,
                VarKind::PreActivation {
                    layer: num_layers,
                    node: t,
                    dim: c,
                },
                VarDomain::Continuous,
                logits[c],
            )
        };
        let group = ConstraintGroup::new(Family::Objective, num_layers, t, 0);
        let y_hat = logit(self, &mut b, c_hat)?;
        let rivals: Vec<usize> = match mode {
            ObjectiveMode::PairwiseNext => vec![(c_hat + 1) % m],
            ObjectiveMode::Full => (0..m).filter(|&c| c != c_hat).collect(),
        };
        if let [rival] = rivals[..] {
            let y = logit(self, &mut b, rival)?;
            b.linear(LinearConstraint::new(vec![(y, 1.0), (y_hat, -1.0)], Sense::Ge, 0.0), group);
        } else {
            let mut pick = Vec::with_capacity(rivals.len());
            for &c in &rivals {
                let y = logit(self, &mut b, c)?;
                let ind = self.binary(&mut b, VarKind::ObjectiveIndicator { class: c })?;
                pick.push((ind, 1.0));
                b.push(
                    Constraint::Indicator {
                        binary: ind,
                        phase: true,
                        constraint: LinearConstraint::new(vec![(y, 1.0), (y_hat, -1.0)], Sense::Ge, 0.0),
                    },
                    group,
                );
            }
            b.linear(LinearConstraint::new(pick, Sense::Eq, 1.0), group);
        }
        Ok(b.fragment)
    }
}
