//! Message-passing GNN parameters and exact forward inference.
//!
//! Layer `k` computes `h_v = act(W1 h_v + W2 aggr({h_u : u ∈ N(v)}) + b)`,
//! with ReLU on hidden layers and the identity on the last one. Neighbour
//! multisets are always reduced in ascending node order, so results are
//! bit-stable for a given graph.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Sum,
    Max,
    Mean,
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::Sum => "sum",
            Aggregation::Max => "max",
            Aggregation::Mean => "mean",
        })
    }
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Aggregation::Sum),
            "max" => Ok(Aggregation::Max),
            "mean" => Ok(Aggregation::Mean),
            other => Err(Error::Unsupported(format!("unsupported aggregation '{other}'"))),
        }
    }
}

/// Dense row-major matrix; `get(i, j)` multiplies input `j` into output `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidModel("ragged matrix rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(w, v)| w * v).sum())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// Self transform `W1`, shape `d_k × d_{k−1}`.
    pub w_self: Matrix,
    /// Neighbour transform `W2`, shape `d_k × d_{k−1}`.
    pub w_neigh: Matrix,
    pub bias: Option<Vec<f64>>,
}

impl Layer {
    pub fn bias_at(&self, i: usize) -> f64 {
        self.bias.as_ref().map_or(0.0, |b| b[i])
    }

    pub fn out_dim(&self) -> usize {
        self.w_self.rows()
    }

    pub fn in_dim(&self) -> usize {
        self.w_self.cols()
    }

    /// Pre-activation `y = W1 h + W2 msg + b`.
    pub fn pre_activation(&self, h: &[f64], msg: &[f64]) -> Vec<f64> {
        (0..self.out_dim())
            .map(|i| {
                let mut acc = self.bias_at(i);
                for j in 0..self.in_dim() {
                    acc += self.w_self.get(i, j) * h[j] + self.w_neigh.get(i, j) * msg[j];
                }
                acc
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnnModel {
    dims: Vec<usize>,
    aggr: Aggregation,
    layers: Vec<Layer>,
}

impl GnnModel {
    pub fn new(dims: Vec<usize>, aggr: Aggregation, layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() || dims.len() != layers.len() + 1 {
            return Err(Error::InvalidModel(format!(
                "{} layers need {} dims, got {}",
                layers.len(),
                layers.len() + 1,
                dims.len()
            )));
        }
        if *dims.last().unwrap() < 2 {
            return Err(Error::InvalidModel("the output layer needs at least 2 classes".into()));
        }
        for (k, layer) in layers.iter().enumerate() {
            let (rows, cols) = (dims[k + 1], dims[k]);
            for (name, m) in [("W1", &layer.w_self), ("W2", &layer.w_neigh)] {
                if m.rows() != rows || m.cols() != cols {
                    return Err(Error::InvalidModel(format!(
                        "layer {} {name} is {}x{}, expected {rows}x{cols}",
                        k + 1,
                        m.rows(),
                        m.cols()
                    )));
                }
                if m.data.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidModel(format!("layer {} {name} has a non-finite entry", k + 1)));
                }
            }
            if let Some(b) = &layer.bias {
                if b.len() != rows || b.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidModel(format!("layer {} bias malformed", k + 1)));
                }
            }
        }
        Ok(Self { dims, aggr, layers })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn num_classes(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn aggregation(&self) -> Aggregation {
        self.aggr
    }

    /// Layer `k`, 1-based.
    pub fn layer(&self, k: usize) -> &Layer {
        &self.layers[k - 1]
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    fn check_graph(&self, g: &AttributedGraph) -> Result<()> {
        if g.attr_dim() != self.dims[0] && g.num_nodes() > 0 {
            return Err(Error::Shape(format!(
                "graph attributes have width {}, model expects {}",
                g.attr_dim(),
                self.dims[0]
            )));
        }
        Ok(())
    }
}

/// Elementwise aggregation; the empty multiset maps to the zero vector.
pub fn aggregate(aggr: Aggregation, vectors: &[&[f64]], dim: usize) -> Result<Vec<f64>> {
    if let Some(bad) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::Shape(format!(
            "aggregating a {}-vector into dimension {dim}",
            bad.len()
        )));
    }
    if vectors.is_empty() {
        return Ok(vec![0.0; dim]);
    }
    let out = (0..dim)
        .map(|i| {
            let column = vectors.iter().map(|v| v[i]);
            match aggr {
                Aggregation::Sum => column.sum(),
                Aggregation::Max => column.fold(f64::NEG_INFINITY, f64::max),
                Aggregation::Mean => column.sum::<f64>() / vectors.len() as f64,
            }
        })
        .collect();
    Ok(out)
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Logits {
    pub values: Vec<f64>,
}

impl Logits {
    /// Argmax with ties broken towards the lowest class index.
    pub fn predicted_class(&self) -> usize {
        argmax(&self.values)
    }

    /// Largest logit among classes other than `class`, with its index.
    pub fn best_rival(&self, class: usize) -> (usize, f64) {
        self.values
            .iter()
            .enumerate()
            .filter(|&(c, _)| c != class)
            .fold((usize::MAX, f64::NEG_INFINITY), |best, (c, &v)| {
                if v > best.1 {
                    (c, v)
                } else {
                    best
                }
            })
    }

    /// `max_{c ≠ class} y_c − y_class`. Non-negative means the prediction
    /// `class` is not strictly preserved.
    pub fn rival_margin(&self, class: usize) -> f64 {
        self.best_rival(class).1 - self.values[class]
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Intermediate values of one node at one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeTrace {
    pub msg: Vec<f64>,
    pub pre_activation: Vec<f64>,
    pub embedding: Vec<f64>,
}

/// Every intermediate quantity computed for a target. `layers[k-1]` holds
/// the nodes evaluated at layer `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub layers: Vec<BTreeMap<NodeId, NodeTrace>>,
    pub logits: Logits,
}

/// Forward pass evaluating only the nodes within the target's receptive
/// field: layer `k` covers `N_{K−k}(t)`.
pub fn forward_trace(model: &GnnModel, g: &AttributedGraph, t: NodeId) -> Result<ForwardTrace> {
    g.check_node(t)?;
    model.check_graph(g)?;
    let k_max = model.num_layers();
    let dist = crate::graph::hop_distances(|v| g.in_neighbors(v).to_vec(), t, k_max);
    let mut prev: BTreeMap<NodeId, Vec<f64>> = dist.keys().map(|&v| (v, g.attr(v).to_vec())).collect();
    let mut layers = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let layer = model.layer(k);
        let mut traces = BTreeMap::new();
        for (&v, &d) in &dist {
            if d > k_max - k {
                continue;
            }
            let neigh: Vec<&[f64]> = g.in_neighbors(v).iter().map(|u| prev[u].as_slice()).collect();
            let msg = aggregate(model.aggr, &neigh, layer.in_dim())?;
            let y = layer.pre_activation(&prev[&v], &msg);
            let h = if k < k_max { y.iter().map(|&x| relu(x)).collect() } else { y.clone() };
            traces.insert(
                v,
                NodeTrace {
                    msg,
                    pre_activation: y,
                    embedding: h,
                },
            );
        }
        prev = traces.iter().map(|(&v, tr)| (v, tr.embedding.clone())).collect();
        layers.push(traces);
    }
    let logits = Logits {
        values: prev[&t].clone(),
    };
    Ok(ForwardTrace { layers, logits })
}

pub fn forward(model: &GnnModel, g: &AttributedGraph, t: NodeId) -> Result<Logits> {
    Ok(forward_trace(model, g, t)?.logits)
}

pub fn predict(model: &GnnModel, g: &AttributedGraph, t: NodeId) -> Result<usize> {
    Ok(forward(model, g, t)?.predicted_class())
}

/// Final-layer outputs of every node, computed over the whole graph.
pub fn forward_all(model: &GnnModel, g: &AttributedGraph) -> Result<Vec<Vec<f64>>> {
    model.check_graph(g)?;
    let mut h: Vec<Vec<f64>> = g.attrs().to_vec();
    for k in 1..=model.num_layers() {
        let layer = model.layer(k);
        let mut next = Vec::with_capacity(g.num_nodes());
        for v in 0..g.num_nodes() {
            let neigh: Vec<&[f64]> = g.in_neighbors(v).iter().map(|&u| h[u].as_slice()).collect();
            let msg = aggregate(model.aggr, &neigh, layer.in_dim())?;
            let y = layer.pre_activation(&h[v], &msg);
            next.push(if k < model.num_layers() { y.into_iter().map(relu).collect() } else { y });
        }
        h = next;
    }
    Ok(h)
}
