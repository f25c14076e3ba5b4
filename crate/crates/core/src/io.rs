//! JSON interchange formats for graphs, perturbation specs and models.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{Arc, AttributedGraph, PerturbationSpec};
use crate::model::{Aggregation, GnnModel, Layer, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub directed: bool,
    pub num_nodes: usize,
    pub edges: Vec<[usize; 2]>,
    pub attrs: Vec<Vec<f64>>,
    /// Ground-truth classes, used to skip misclassified targets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<usize>>,
}

impl GraphFile {
    pub fn into_graph(self) -> Result<AttributedGraph> {
        let g = AttributedGraph::new(
            self.num_nodes,
            self.directed,
            self.edges.into_iter().map(|[u, v]| (u, v)),
            self.attrs,
        )?;
        match self.labels {
            Some(l) => g.with_labels(l),
            None => Ok(g),
        }
    }

    pub fn from_graph(g: &AttributedGraph) -> Self {
        Self {
            directed: g.is_directed(),
            num_nodes: g.num_nodes(),
            edges: g.edge_list().into_iter().map(|(u, v)| [u, v]).collect(),
            attrs: g.attrs().to_vec(),
            labels: g.labels().map(<[usize]>::to_vec),
        }
    }
}

/// How the fragile set is chosen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FragileRegime {
    /// Every existing edge may be deleted; nothing may be inserted.
    AllEdges,
    Explicit(Vec<Arc>),
    /// For every node, `per_node` randomly chosen non-edges into it may be
    /// inserted; existing edges stay fixed.
    AddSampled { per_node: usize },
}

impl std::str::FromStr for FragileRegime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all-edges" {
            return Ok(FragileRegime::AllEdges);
        }
        if let Some(k) = s.strip_prefix("add-sampled:") {
            let per_node = k
                .parse()
                .map_err(|_| Error::InvalidSpec(format!("bad sample count in '{s}'")))?;
            return Ok(FragileRegime::AddSampled { per_node });
        }
        Err(Error::InvalidSpec(format!(
            "unknown fragile regime '{s}', expected all-edges or add-sampled:k"
        )))
    }
}

impl FragileRegime {
    /// The fragile pairs on `g`. Sampling draws from an RNG seeded with
    /// `seed`, visiting nodes in ascending order.
    pub fn resolve(&self, g: &AttributedGraph, seed: u64) -> Vec<Arc> {
        match self {
            FragileRegime::AllEdges => g.arcs().collect(),
            FragileRegime::Explicit(pairs) => pairs.clone(),
            FragileRegime::AddSampled { per_node } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut chosen: BTreeSet<Arc> = BTreeSet::new();
                for v in 0..g.num_nodes() {
                    let candidates: Vec<usize> = (0..g.num_nodes())
                        .filter(|&u| u != v && !g.has_arc(u, v))
                        .collect();
                    for &u in candidates.choose_multiple(&mut rng, *per_node) {
                        if g.is_directed() {
                            chosen.insert((u, v));
                        } else {
                            chosen.insert((u.min(v), u.max(v)));
                        }
                    }
                }
                chosen.into_iter().collect()
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            FragileRegime::AllEdges => "all-edges".into(),
            FragileRegime::Explicit(_) => "explicit".into(),
            FragileRegime::AddSampled { per_node } => format!("add-sampled:{per_node}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FragileField {
    Regime(String),
    Pairs(Vec<[usize; 2]>),
}

impl FragileField {
    pub fn regime(&self) -> Result<FragileRegime> {
        match self {
            FragileField::Regime(s) => s.parse(),
            FragileField::Pairs(p) => Ok(FragileRegime::Explicit(p.iter().map(|&[u, v]| (u, v)).collect())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    pub fragile: FragileField,
    pub delta: usize,
    /// Local budget of nodes without an override; absent means unlimited.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_default: Option<usize>,
    /// Keys are node indices written as strings.
    #[serde(default)]
    pub local: BTreeMap<String, usize>,
    #[serde(default)]
    pub eps_default: f64,
    /// Keys are `"v,i"`.
    #[serde(default)]
    pub eps: BTreeMap<String, f64>,
    /// Seed for sampled fragile regimes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn parse_index(s: &str, what: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::InvalidSpec(format!("bad {what} key '{s}'")))
}

impl SpecFile {
    pub fn into_spec(self, g: &AttributedGraph) -> Result<PerturbationSpec> {
        let regime = self.fragile.regime()?;
        let fragile = regime.resolve(g, self.seed.unwrap_or(0));
        let mut spec = PerturbationSpec::new(g, fragile, self.delta)?;
        if let Some(d) = self.local_default {
            spec = spec.with_local_default(d);
        }
        for (k, b) in self.local {
            spec = spec.with_local(parse_index(&k, "local budget")?, b);
        }
        spec = spec.with_eps_default(self.eps_default)?;
        for (k, e) in self.eps {
            let (v, i) = k
                .split_once(',')
                .ok_or_else(|| Error::InvalidSpec(format!("attribute budget key '{k}' is not 'v,i'")))?;
            spec = spec.with_eps(parse_index(v, "attribute budget")?, parse_index(i, "attribute budget")?, e)?;
        }
        spec.validate_against(g)?;
        Ok(spec)
    }

    /// The file form of a resolved spec, listing the fragile pairs
    /// explicitly.
    pub fn from_spec(g: &AttributedGraph, spec: &PerturbationSpec) -> Self {
        let pairs = spec
            .fragile()
            .iter()
            .filter(|&&(u, v)| g.is_directed() || u < v)
            .map(|&(u, v)| [u, v])
            .collect();
        Self {
            fragile: FragileField::Pairs(pairs),
            delta: spec.delta(),
            local_default: (spec.local_default() != usize::MAX).then_some(spec.local_default()),
            local: spec.local_overrides().iter().map(|(v, b)| (v.to_string(), *b)).collect(),
            eps_default: spec.eps_default(),
            eps: spec
                .eps_overrides()
                .iter()
                .map(|((v, i), e)| (format!("{v},{i}"), *e))
                .collect(),
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerWeights {
    #[serde(rename = "W1")]
    pub w1: Vec<Vec<f64>>,
    #[serde(rename = "W2")]
    pub w2: Vec<Vec<f64>>,
    pub b: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub layers: usize,
    pub dims: Vec<usize>,
    pub aggr: String,
    pub weights: Vec<LayerWeights>,
}

impl ModelFile {
    pub fn into_model(self) -> Result<GnnModel> {
        if self.layers != self.weights.len() {
            return Err(Error::InvalidModel(format!(
                "declares {} layers but lists {} weight sets",
                self.layers,
                self.weights.len()
            )));
        }
        let aggr: Aggregation = self
            .aggr
            .parse()
            .map_err(|_| Error::InvalidModel(format!("unsupported aggregation '{}'", self.aggr)))?;
        let layers = self
            .weights
            .into_iter()
            .enumerate()
            .map(|(k, w)| {
                let matrix = |rows: &[Vec<f64>], name: &str| {
                    Matrix::from_rows(rows).map_err(|e| Error::InvalidModel(format!("layer {} {name}: {e}", k + 1)))
                };
                Ok(Layer {
                    w_self: matrix(&w.w1, "W1")?,
                    w_neigh: matrix(&w.w2, "W2")?,
                    bias: w.b,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        GnnModel::new(self.dims, aggr, layers)
    }

    pub fn from_model(model: &GnnModel) -> Self {
        Self {
            layers: model.num_layers(),
            dims: model.dims().to_vec(),
            aggr: model.aggregation().to_string(),
            weights: model
                .layers()
                .iter()
                .map(|l| LayerWeights {
                    w1: l.w_self.to_rows(),
                    w2: l.w_neigh.to_rows(),
                    b: l.bias.clone(),
                })
                .collect(),
        }
    }
}

pub fn graph_from_json(text: &str) -> Result<AttributedGraph> {
    serde_json::from_str::<GraphFile>(text)
        .map_err(|e| Error::InvalidGraph(e.to_string()))?
        .into_graph()
}

pub fn spec_from_json(text: &str, g: &AttributedGraph) -> Result<PerturbationSpec> {
    serde_json::from_str::<SpecFile>(text)
        .map_err(|e| Error::InvalidSpec(e.to_string()))?
        .into_spec(g)
}

pub fn model_from_json(text: &str) -> Result<GnnModel> {
    serde_json::from_str::<ModelFile>(text)
        .map_err(|e| Error::InvalidModel(e.to_string()))?
        .into_model()
}

pub fn graph_to_json(g: &AttributedGraph) -> String {
    serde_json::to_string_pretty(&GraphFile::from_graph(g)).expect("graph serialises")
}

pub fn spec_to_json(g: &AttributedGraph, spec: &PerturbationSpec) -> String {
    serde_json::to_string_pretty(&SpecFile::from_spec(g, spec)).expect("spec serialises")
}

pub fn model_to_json(model: &GnnModel) -> String {
    serde_json::to_string_pretty(&ModelFile::from_model(model)).expect("model serialises")
}

/// Contents of a file with its SHA-256 digest in lowercase hex.
#[derive(Debug, Clone)]
pub struct LoadedFile {
    pub text: String,
    pub sha256: String,
}

pub fn read_file(path: &Path) -> Result<LoadedFile> {
    let bytes = fs::read(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    let sha256 = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
    let text = String::from_utf8(bytes)
        .map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{} is not UTF-8", path.display())))?;
    Ok(LoadedFile { text, sha256 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graph_round_trip() {
        let text = r#"{"directed": false, "num_nodes": 3, "edges": [[0,1],[1,2]], "attrs": [[1.0],[2.0],[3.0]]}"#;
        let g = graph_from_json(text).unwrap();
        assert_eq!(g.num_arcs(), 4);
        let again = graph_from_json(&graph_to_json(&g)).unwrap();
        assert_eq!(again.edge_list(), g.edge_list());
        assert!(graph_from_json(r#"{"directed": true}"#).is_err());
    }

    #[test]
    fn spec_keys_and_regimes() {
        let g = graph_from_json(r#"{"directed": true, "num_nodes": 3, "edges": [[0,1]], "attrs": [[0.0],[0.0],[0.0]]}"#)
            .unwrap();
        let text = r#"{"fragile": "all-edges", "delta": 1, "local_default": 2, "local": {"1": 0},
                       "eps_default": 0.1, "eps": {"2,0": 0.5}}"#;
        let spec = spec_from_json(text, &g).unwrap();
        assert!(spec.is_fragile(0, 1));
        assert_eq!(spec.local_budget(1), 0);
        assert_eq!(spec.local_budget(2), 2);
        assert_eq!(spec.eps(2, 0), 0.5);
        assert_eq!(spec.eps(0, 0), 0.1);
        let round = spec_from_json(&spec_to_json(&g, &spec), &g).unwrap();
        assert_eq!(round, spec);

        let sampled = spec_from_json(r#"{"fragile": "add-sampled:1", "delta": 1, "seed": 3}"#, &g).unwrap();
        assert_eq!(sampled.fragile().len(), 3);
        assert!(sampled.fragile().iter().all(|&(u, v)| !g.has_arc(u, v)));
        assert!(spec_from_json(r#"{"fragile": "nonsense", "delta": 1}"#, &g).is_err());
        assert!(spec_from_json(r#"{"fragile": [], "delta": 1, "eps": {"7": 1.0}}"#, &g).is_err());
    }

    #[test]
    fn model_round_trip_and_errors() {
        let text = r#"{"layers": 1, "dims": [2, 2], "aggr": "mean",
            "weights": [{"W1": [[1,2],[3,4]], "W2": [[0,1],[1,0]], "b": null}]}"#;
        let m = model_from_json(text).unwrap();
        assert_eq!(m.layer(1).w_self.get(0, 1), 2.0);
        assert_eq!(model_from_json(&model_to_json(&m)).unwrap(), m);
        assert!(model_from_json(&text.replace("mean", "lstm")).is_err());
        assert!(model_from_json(&text.replace("\"layers\": 1", "\"layers\": 2")).is_err());
    }
}
