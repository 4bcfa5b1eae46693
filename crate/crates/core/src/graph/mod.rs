//! Graph data model: directed road graph with node features, edge splits,
//! and the masked weighted-adjacency construction used as encoder input.
//!
//! All types are immutable after construction and safe to share read-only
//! across parallel experiment workers.

mod csvio;
mod mask;
mod split;
mod tntp;

pub use csvio::{load_csv_graph, write_csv_graph};
pub use mask::build_masked_weights;
pub use split::{permute_ct, split_edges, EdgeSplit};
pub use tntp::{load_tntp_graph, TntpOptions, TntpWeightColumn};

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CoreError, Result};
use crate::numerics::Matrix;

/// Strategy for filling the unknown entries of the weighted adjacency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FillStrategy {
    /// Every unknown entry gets the mean of the observed training weights.
    GlobalMean,
    /// Each unknown entry gets the mean of training weights on edges
    /// incident to either of its endpoints, falling back to the global
    /// mean when no incident training edge exists.
    Neighborhood,
}

impl std::fmt::Display for FillStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FillStrategy::GlobalMean => write!(f, "global-mean"),
            FillStrategy::Neighborhood => write!(f, "neighborhood"),
        }
    }
}

impl std::str::FromStr for FillStrategy {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global-mean" | "global_mean" | "globalmean" => Ok(FillStrategy::GlobalMean),
            "neighborhood" => Ok(FillStrategy::Neighborhood),
            other => Err(CoreError::Config(format!(
                "unknown fill strategy {other:?} (expected global-mean or neighborhood)"
            ))),
        }
    }
}

/// Directed graph with node features and a (possibly partial) edge-weight
/// observation. Edges are stored sorted by `(source, target)`; edge indices
/// everywhere in this crate refer to that canonical order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Graph {
    n_nodes: usize,
    node_features: Matrix,
    edges: Vec<(usize, usize)>,
    weights: Vec<Option<f64>>,
}

impl Graph {
    /// Validate and build a graph. Edges are sorted canonically; `weights`
    /// follows the order of `edges` as passed in.
    pub fn new(
        n_nodes: usize,
        node_features: Matrix,
        edges: Vec<(usize, usize)>,
        weights: Vec<Option<f64>>,
    ) -> Result<Self> {
        if node_features.rows() != n_nodes {
            return Err(CoreError::Validation(format!(
                "feature matrix has {} rows for {} nodes",
                node_features.rows(),
                n_nodes
            )));
        }
        if weights.len() != edges.len() {
            return Err(CoreError::Validation(format!(
                "{} weights for {} edges",
                weights.len(),
                edges.len()
            )));
        }
        if !node_features.is_finite() {
            return Err(CoreError::Validation(
                "node features contain non-finite values".into(),
            ));
        }
        let mut order: Vec<usize> = (0..edges.len()).collect();
        order.sort_by_key(|&i| edges[i]);
        let sorted_edges: Vec<(usize, usize)> = order.iter().map(|&i| edges[i]).collect();
        let sorted_weights: Vec<Option<f64>> = order.iter().map(|&i| weights[i]).collect();
        for (i, &(u, v)) in sorted_edges.iter().enumerate() {
            if u >= n_nodes || v >= n_nodes {
                return Err(CoreError::Validation(format!(
                    "edge ({u}, {v}) references a node outside 0..{n_nodes}"
                )));
            }
            if i > 0 && sorted_edges[i - 1] == (u, v) {
                return Err(CoreError::Validation(format!(
                    "duplicate directed edge ({u}, {v})"
                )));
            }
            if let Some(w) = sorted_weights[i] {
                if !w.is_finite() || w < 0.0 {
                    return Err(CoreError::Validation(format!(
                        "edge ({u}, {v}) has invalid weight {w}; weights must be finite and >= 0"
                    )));
                }
            }
        }
        Ok(Self {
            n_nodes,
            node_features,
            edges: sorted_edges,
            weights: sorted_weights,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Node feature matrix, one row per node.
    pub fn node_features(&self) -> &Matrix {
        &self.node_features
    }

    /// Edges sorted by `(source, target)`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge(&self, idx: usize) -> (usize, usize) {
        self.edges[idx]
    }

    /// Observed weight of edge `idx`, if any.
    pub fn weight(&self, idx: usize) -> Option<f64> {
        self.weights[idx]
    }

    /// Observed weight or an error naming the edge (evaluation contexts
    /// where all true weights must be known).
    pub fn require_weight(&self, idx: usize) -> Result<f64> {
        self.weights[idx].ok_or_else(|| {
            let (u, v) = self.edges[idx];
            CoreError::Missing(format!("true weight for edge {idx} ({u} -> {v})"))
        })
    }

    /// Index of the directed edge `(u, v)` in canonical order.
    pub fn edge_index(&self, u: usize, v: usize) -> Option<usize> {
        self.edges.binary_search(&(u, v)).ok()
    }

    /// Out-edges of `u` as `(edge index, target)` pairs.
    pub fn out_edges(&self, u: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let start = self.edges.partition_point(|&(s, _)| s < u);
        self.edges[start..]
            .iter()
            .take_while(move |&&(s, _)| s == u)
            .enumerate()
            .map(move |(k, &(_, t))| (start + k, t))
    }

    /// Content hash of the dataset (nodes, features, edges, exact weight
    /// bits), for tying experiment outputs to an exact input.
    pub fn dataset_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.n_nodes as u64).to_le_bytes());
        hasher.update((self.node_features.cols() as u64).to_le_bytes());
        for v in self.node_features.data() {
            hasher.update(v.to_bits().to_le_bytes());
        }
        for (&(u, v), w) in self.edges.iter().zip(&self.weights) {
            hasher.update((u as u64).to_le_bytes());
            hasher.update((v as u64).to_le_bytes());
            match w {
                Some(w) => {
                    hasher.update([1u8]);
                    hasher.update(w.to_bits().to_le_bytes());
                }
                None => hasher.update([0u8, 0, 0, 0, 0, 0, 0, 0, 0]),
            }
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Load a graph from disk in the named format.
pub fn load_graph(path: &Path, format: GraphFormat) -> Result<Graph> {
    match format {
        GraphFormat::Csv => load_csv_graph(path),
        GraphFormat::Tntp(options) => load_tntp_graph(path, &options),
    }
}

/// Supported on-disk graph formats.
#[derive(Debug, Clone)]
pub enum GraphFormat {
    /// Directory holding `nodes.csv` and `edges.csv`.
    Csv,
    /// TNTP file pair: `<prefix>_net.tntp` and `<prefix>_node.tntp`.
    Tntp(TntpOptions),
}

/// n-by-n weighted adjacency with true weights at training edges, a
/// positive fill value at every other edge, and zero elsewhere. True
/// weights outside the training set never appear in `values`.
#[derive(Debug, Clone)]
pub struct MaskedWeightMatrix {
    values: Matrix,
    fill_strategy: FillStrategy,
    delta: HashMap<usize, f64>,
}

impl MaskedWeightMatrix {
    pub(crate) fn new(
        values: Matrix,
        fill_strategy: FillStrategy,
        delta: HashMap<usize, f64>,
    ) -> Self {
        Self {
            values,
            fill_strategy,
            delta,
        }
    }

    /// Dense n-by-n value matrix.
    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn fill_strategy(&self) -> FillStrategy {
        self.fill_strategy
    }

    /// Fill value assigned to a non-training edge, if `edge_idx` is one.
    pub fn delta(&self, edge_idx: usize) -> Option<f64> {
        self.delta.get(&edge_idx).copied()
    }

    pub fn n_nodes(&self) -> usize {
        self.values.rows()
    }
}
