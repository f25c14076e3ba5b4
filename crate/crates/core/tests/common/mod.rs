//! Random instance generators shared by the integration tests.

#![allow(dead_code)]

use gnnverify::graph::{AttributedGraph, NodeId, PerturbationSpec};
use gnnverify::io::FragileRegime;
use gnnverify::model::{Aggregation, GnnModel, Layer, Matrix};
use rand::Rng;

pub const AGGREGATIONS: [Aggregation; 3] = [Aggregation::Sum, Aggregation::Max, Aggregation::Mean];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Every edge fragile, deletions only.
    Deletions,
    /// One sampled non-edge into each node is fragile, additions only.
    SampledAdditions,
    /// Both of the above.
    Mixed,
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub model: GnnModel,
    pub graph: AttributedGraph,
    pub spec: PerturbationSpec,
    pub target: NodeId,
}

pub struct Shape {
    pub max_nodes: usize,
    pub max_layers: usize,
    pub max_dim: usize,
    pub max_delta: usize,
    /// Cap on fragile units so that enumeration stays cheap.
    pub max_units: usize,
}

impl Default for Shape {
    fn default() -> Self {
        Self {
            max_nodes: 8,
            max_layers: 2,
            max_dim: 4,
            max_delta: 2,
            max_units: 25,
        }
    }
}

fn uniform(rng: &mut impl Rng, scale: f64) -> f64 {
    rng.gen_range(-scale..=scale)
}

pub fn random_graph(rng: &mut impl Rng, n: usize, dim: usize) -> AttributedGraph {
    let directed = rng.gen_bool(0.5);
    let p = rng.gen_range(0.15..0.45);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if u == v || (!directed && u > v) {
                continue;
            }
            if rng.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }
    let attrs = (0..n).map(|_| (0..dim).map(|_| uniform(rng, 1.0)).collect()).collect();
    AttributedGraph::new(n, directed, edges, attrs).expect("generated graph is valid")
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    let data: Vec<Vec<f64>> = (0..rows).map(|_| (0..cols).map(|_| uniform(rng, 1.0)).collect()).collect();
    Matrix::from_rows(&data).expect("rectangular")
}

pub fn random_model(rng: &mut impl Rng, d0: usize, shape: &Shape, aggr: Aggregation) -> GnnModel {
    let k = rng.gen_range(1..=shape.max_layers);
    let mut dims = vec![d0];
    for layer in 1..=k {
        let lo = if layer == k { 2 } else { 1 };
        dims.push(rng.gen_range(lo..=shape.max_dim.max(2)));
    }
    let layers = (1..=k)
        .map(|l| Layer {
            w_self: random_matrix(rng, dims[l], dims[l - 1]),
            w_neigh: random_matrix(rng, dims[l], dims[l - 1]),
            bias: rng
                .gen_bool(0.7)
                .then(|| (0..dims[l]).map(|_| uniform(rng, 0.5)).collect()),
        })
        .collect();
    GnnModel::new(dims, aggr, layers).expect("generated model is valid")
}

pub fn fragile_pairs(rng: &mut impl Rng, g: &AttributedGraph, regime: Regime) -> Vec<(usize, usize)> {
    let seed = rng.gen();
    match regime {
        Regime::Deletions => FragileRegime::AllEdges.resolve(g, seed),
        Regime::SampledAdditions => FragileRegime::AddSampled { per_node: 1 }.resolve(g, seed),
        Regime::Mixed => {
            let mut all = FragileRegime::AllEdges.resolve(g, seed);
            all.extend(FragileRegime::AddSampled { per_node: 1 }.resolve(g, seed));
            all
        }
    }
}

/// A random task. `eps` is the attribute budget of every entry.
pub fn random_instance(rng: &mut impl Rng, shape: &Shape, aggr: Aggregation, regime: Regime, eps: f64) -> Instance {
    loop {
        let n = rng.gen_range(2..=shape.max_nodes);
        let d0 = rng.gen_range(1..=shape.max_dim);
        let graph = random_graph(rng, n, d0);
        let pairs = fragile_pairs(rng, &graph, regime);
        let delta = rng.gen_range(0..=shape.max_delta);
        let mut spec = PerturbationSpec::new(&graph, pairs, delta)
            .expect("generated spec is valid")
            .with_eps_default(eps)
            .expect("finite eps");
        if spec.units(&graph).len() > shape.max_units {
            continue;
        }
        if rng.gen_bool(0.25) {
            spec = spec.with_local_default(1);
        }
        let model = random_model(rng, d0, shape, aggr);
        let target = rng.gen_range(0..n);
        return Instance {
            model,
            graph,
            spec,
            target,
        };
    }
}
