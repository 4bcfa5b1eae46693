//! Robust and risk-sensitive shortest paths over interval edge costs.
//!
//! The worst-case cost vector takes each edge's interval upper bound
//! (clamped at zero, since traffic volume is nonnegative); the planner is a
//! label-setting search whose result coincides with the vertex optimum of
//! the flow LP on this polytope. Pure read-only over [`Graph`] and
//! [`CostVector`]; safe for parallel source/target queries.

mod dijkstra;

pub use dijkstra::shortest_path;

use serde::{Deserialize, Serialize};

use crate::conformal::IntervalSet;
use crate::error::{CoreError, Result};
use crate::graph::Graph;
use crate::numerics::Matrix;

/// How interval endpoints become scalar edge costs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RiskMode {
    /// Worst case: the interval's upper endpoint.
    UpperBound,
    /// Value-at-risk at the given miscoverage rate: the calibrated
    /// `1 - alpha/2` upper quantile, i.e. the upper endpoint of an
    /// interval set built at that alpha.
    VaR(f64),
}

/// Per-edge worst-case costs, nonnegative and finite.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostVector {
    entries: Vec<(usize, f64)>,
    /// Which method/alpha produced these costs.
    pub provenance: String,
}

impl CostVector {
    pub fn get(&self, edge: usize) -> Option<f64> {
        self.entries
            .binary_search_by_key(&edge, |&(e, _)| e)
            .ok()
            .map(|i| self.entries[i].1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().copied()
    }

    /// Costs for every edge of a graph with `n_edges` edges, erroring on
    /// any edge without a cost.
    pub fn dense(&self, n_edges: usize) -> Result<Vec<f64>> {
        let mut out = vec![f64::NAN; n_edges];
        for &(e, c) in &self.entries {
            if e >= n_edges {
                return Err(CoreError::Validation(format!(
                    "cost entry for edge {e} outside 0..{n_edges}"
                )));
            }
            out[e] = c;
        }
        if let Some(missing) = out.iter().position(|c| c.is_nan()) {
            return Err(CoreError::Missing(format!("cost for edge {missing}")));
        }
        Ok(out)
    }
}

/// Build the planning cost vector from an interval set.
///
/// `UpperBound` takes each interval's upper endpoint; `VaR(alpha)` does the
/// same after checking the set was calibrated at that alpha. Costs below
/// zero are clamped to zero. Infinite upper bounds are rejected before any
/// planning happens.
pub fn cost_vector(intervals: &IntervalSet, risk: RiskMode) -> Result<CostVector> {
    if let RiskMode::VaR(alpha) = risk {
        if (intervals.alpha - alpha).abs() > 1e-12 {
            return Err(CoreError::Config(format!(
                "VaR at alpha {alpha} requested from intervals calibrated at alpha {}",
                intervals.alpha
            )));
        }
    }
    let mut entries = Vec::with_capacity(intervals.len());
    for (e, _, hi) in intervals.iter() {
        if hi.is_infinite() {
            return Err(CoreError::DegenerateCalibration {
                method: intervals.method.label().to_string(),
                message: format!(
                    "edge {e} has an unbounded interval (alpha {}, calibration too small)",
                    intervals.alpha
                ),
            });
        }
        entries.push((e, hi.max(0.0)));
    }
    Ok(CostVector {
        entries,
        provenance: format!("{}@alpha={}", intervals.method.label(), intervals.alpha),
    })
}

/// An s-t path with its worst-case and (optionally) realized cost.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoutePlan {
    pub source: usize,
    pub target: usize,
    /// Node sequence from source to target, no repeats.
    pub nodes: Vec<usize>,
    /// Edge indices along the path.
    pub edges: Vec<usize>,
    /// Worst-case cost of each path edge, aligned with `edges`.
    pub edge_costs: Vec<f64>,
    /// Sum of `edge_costs`.
    pub worst_case_cost: f64,
    /// True cost of the chosen path, filled by the evaluator.
    pub realized_cost: Option<f64>,
    pub provenance: String,
}

impl RoutePlan {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// True cost of a planned path: the sum of observed weights over its edges.
pub fn realized_cost(g: &Graph, plan: &RoutePlan) -> Result<f64> {
    let mut total = 0.0;
    for &e in &plan.edges {
        total += g.require_weight(e)?;
    }
    Ok(total)
}

/// Node-arc incidence matrix: one column per edge with +1 at its source
/// row and -1 at its target row.
pub fn incidence_matrix(g: &Graph) -> Matrix {
    let mut b = Matrix::zeros(g.n_nodes(), g.n_edges());
    for (idx, &(u, v)) in g.edges().iter().enumerate() {
        b.set(u, idx, 1.0);
        b.set(v, idx, -1.0);
    }
    b
}
