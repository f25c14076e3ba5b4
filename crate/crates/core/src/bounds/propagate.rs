use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{aggregation_bounds, linear_bounds, relu_bounds, AggregationBoundProblem, Interval};
use crate::error::{Error, Result};
use crate::graph::{partition_incoming, AttributedGraph, NeighborPartition, NodeId, PerturbationSpec, Scope};
use crate::model::GnnModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundMethod {
    #[default]
    Tightened,
    Plain,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PropagationOptions {
    pub method: BoundMethod,
    /// Widening applied to every pre-activation interval.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeBounds {
    pub msg: Vec<Interval>,
    pub pre_activation: Vec<Interval>,
    pub embedding: Vec<Interval>,
}

/// Interval boxes for one verification task.
#[derive(Debug, Clone)]
pub struct BoundsTable {
    scope: Scope,
    attrs: BTreeMap<NodeId, Vec<Interval>>,
    layers: Vec<BTreeMap<NodeId, NodeBounds>>,
    degree: BTreeMap<NodeId, Interval>,
    budget: BTreeMap<NodeId, usize>,
    partitions: BTreeMap<NodeId, NeighborPartition>,
}

impl BoundsTable {
    pub fn scope(&self) -> &Scope {
        &self.scope
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn attr(&self, v: NodeId) -> Result<&[Interval]> {
        self.attrs
            .get(&v)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingBounds(format!("attributes of node {v}")))
    }

    /// Embedding boxes `h^{(k)}_v`; `k = 0` gives the attribute boxes.
    pub fn embedding(&self, k: usize, v: NodeId) -> Result<&[Interval]> {
        if k == 0 {
            return self.attr(v);
        }
        Ok(&self.node(k, v)?.embedding)
    }

    pub fn node(&self, k: usize, v: NodeId) -> Result<&NodeBounds> {
        self.layers
            .get(k.wrapping_sub(1))
            .and_then(|l| l.get(&v))
            .ok_or_else(|| Error::MissingBounds(format!("layer {k} of node {v}")))
    }

    pub fn layer(&self, k: usize) -> &BTreeMap<NodeId, NodeBounds> {
        &self.layers[k - 1]
    }

    /// Incoming-degree box of a node encoded at some layer.
    pub fn degree(&self, v: NodeId) -> Result<Interval> {
        self.degree
            .get(&v)
            .copied()
            .ok_or_else(|| Error::MissingBounds(format!("degree of node {v}")))
    }

    /// Edit budget `s_v` feeding the aggregation bounds of `v`.
    pub fn budget(&self, v: NodeId) -> Option<usize> {
        self.budget.get(&v).copied()
    }

    pub fn partition(&self, v: NodeId) -> Result<&NeighborPartition> {
        self.partitions
            .get(&v)
            .ok_or_else(|| Error::MissingBounds(format!("neighbourhood of node {v}")))
    }

    /// Mean and max width of the pre-activation boxes per layer.
    pub fn gap_stats(&self) -> Vec<GapStats> {
        self.layers
            .iter()
            .enumerate()
            .map(|(k, nodes)| {
                let widths: Vec<f64> = nodes
                    .values()
                    .flat_map(|nb| nb.pre_activation.iter().map(Interval::width))
                    .collect();
                GapStats {
                    layer: k + 1,
                    count: widths.len(),
                    mean_gap: if widths.is_empty() { 0.0 } else { widths.iter().sum::<f64>() / widths.len() as f64 },
                    max_gap: widths.iter().copied().fold(0.0, f64::max),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapStats {
    pub layer: usize,
    pub count: usize,
    pub mean_gap: f64,
    pub max_gap: f64,
}

pub fn propagate(model: &GnnModel, g: &AttributedGraph, spec: &PerturbationSpec, t: NodeId) -> Result<BoundsTable> {
    propagate_with(model, g, spec, t, PropagationOptions::default())
}

pub fn propagate_with(
    model: &GnnModel,
    g: &AttributedGraph,
    spec: &PerturbationSpec,
    t: NodeId,
    options: PropagationOptions,
) -> Result<BoundsTable> {
    if g.attr_dim() != model.dims()[0] {
        return Err(Error::Shape(format!(
            "graph attributes have width {}, model expects {}",
            g.attr_dim(),
            model.dims()[0]
        )));
    }
    let num_layers = model.num_layers();
    let scope = Scope::new(g, spec, t, num_layers)?;

    let attrs: BTreeMap<NodeId, Vec<Interval>> = scope
        .within(num_layers)
        .map(|v| {
            let boxes = g
                .attr(v)
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    let e = spec.eps(v, i);
                    Interval::new(x - e, x + e)
                })
                .collect();
            (v, boxes)
        })
        .collect();

    let mut partitions = BTreeMap::new();
    let mut budget = BTreeMap::new();
    let mut degree = BTreeMap::new();
    for v in scope.nodes_at_layer(1) {
        let part = partition_incoming(g, spec, v);
        let s = spec.delta().min(spec.local_budget(v)).min(part.num_fragile());
        let base = part.fixed_in.len() + part.fragile_in.len();
        degree.insert(
            v,
            Interval::new(
                (base - s.min(part.fragile_in.len())) as f64,
                (base + s.min(part.fragile_absent.len())) as f64,
            ),
        );
        budget.insert(v, s);
        partitions.insert(v, part);
    }

    let mut layers: Vec<BTreeMap<NodeId, NodeBounds>> = Vec::with_capacity(num_layers);
    for k in 1..=num_layers {
        let layer = model.layer(k);
        let prev = |u: NodeId| -> &[Interval] {
            if k == 1 {
                &attrs[&u]
            } else {
                &layers[k - 2][&u].embedding
            }
        };
        let mut nodes = BTreeMap::new();
        for v in scope.nodes_at_layer(k) {
            let part = &partitions[&v];
            let s = budget[&v];
            let msg: Vec<Interval> = (0..layer.in_dim())
                .map(|i| {
                    let pick = |us: &[NodeId]| us.iter().map(|&u| prev(u)[i]).collect::<Vec<_>>();
                    let problem = AggregationBoundProblem::new(
                        pick(&part.fixed_in),
                        pick(&part.fragile_in),
                        pick(&part.fragile_absent),
                        s,
                    );
                    aggregation_bounds(model.aggregation(), options.method, &problem)
                })
                .collect();
            let pre: Vec<Interval> = linear_bounds(layer, prev(v), &msg)?
                .into_iter()
                .map(|iv| if options.slack > 0.0 { iv.widen(options.slack) } else { iv })
                .collect();
            let embedding = if k < num_layers { pre.iter().copied().map(relu_bounds).collect() } else { pre.clone() };
            nodes.insert(
                v,
                NodeBounds {
                    msg,
                    pre_activation: pre,
                    embedding,
                },
            );
        }
        layers.push(nodes);
    }

    Ok(BoundsTable {
        scope,
        attrs,
        layers,
        degree,
        budget,
        partitions,
    })
}
