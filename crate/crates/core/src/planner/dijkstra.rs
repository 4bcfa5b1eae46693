//! Label-setting shortest-path search with deterministic tie-breaking.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{CoreError, Result};
use crate::graph::Graph;
use crate::planner::{CostVector, RoutePlan};

#[derive(PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (dist, node); dist values are finite by construction
        other
            .dist
            .partial_cmp(&self.dist)
            .expect("finite distances")
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Cost-minimal path from `s` to `t` under nonnegative edge costs.
///
/// Among equal-cost optima the path with the lexicographically smallest
/// node sequence is returned, which keeps plans deterministic when many
/// edges share a cost.
pub fn shortest_path(g: &Graph, costs: &CostVector, s: usize, t: usize) -> Result<RoutePlan> {
    let n = g.n_nodes();
    if s >= n || t >= n {
        return Err(CoreError::Validation(format!(
            "endpoints ({s}, {t}) outside 0..{n}"
        )));
    }
    if s == t {
        return Err(CoreError::Validation(
            "source and target must differ".into(),
        ));
    }
    let dense = costs.dense(g.n_edges())?;
    for (e, &c) in dense.iter().enumerate() {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(CoreError::Validation(format!(
                "edge {e} has invalid cost {c}; planning needs finite nonnegative costs"
            )));
        }
    }

    // Label-setting pass.
    let mut dist = vec![f64::INFINITY; n];
    let mut pred: Vec<Option<(usize, usize)>> = vec![None; n]; // (node, edge)
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[s] = 0.0;
    heap.push(HeapEntry { dist: 0.0, node: s });
    while let Some(HeapEntry { dist: d, node: u }) = heap.pop() {
        if settled[u] {
            continue;
        }
        settled[u] = true;
        for (edge_idx, v) in g.out_edges(u) {
            let nd = d + dense[edge_idx];
            if nd < dist[v] {
                dist[v] = nd;
                pred[v] = Some((u, edge_idx));
                heap.push(HeapEntry { dist: nd, node: v });
            }
        }
    }
    if !dist[t].is_finite() {
        return Err(CoreError::NoPath { from: s, to: t });
    }

    // Tight-edge graph of all optimal paths, then the lexicographically
    // smallest walk through it. Falls back to the predecessor chain if a
    // zero-cost cycle strands the walk.
    let mut reaches_t = vec![false; n];
    reaches_t[t] = true;
    {
        // reverse BFS over tight edges
        let mut rev: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (idx, &(u, v)) in g.edges().iter().enumerate() {
            if dist[u].is_finite() && dist[u] + dense[idx] == dist[v] {
                rev[v].push(u);
            }
        }
        let mut stack = vec![t];
        while let Some(v) = stack.pop() {
            for &u in &rev[v] {
                if !reaches_t[u] {
                    reaches_t[u] = true;
                    stack.push(u);
                }
            }
        }
    }

    let mut nodes = vec![s];
    let mut edges = Vec::new();
    let mut visited = vec![false; n];
    visited[s] = true;
    let mut current = s;
    let mut ok = true;
    while current != t {
        let mut next: Option<(usize, usize)> = None; // (node, edge)
        for (edge_idx, v) in g.out_edges(current) {
            if visited[v] || !reaches_t[v] {
                continue;
            }
            if dist[current] + dense[edge_idx] == dist[v] {
                match next {
                    Some((best, _)) if best <= v => {}
                    _ => next = Some((v, edge_idx)),
                }
            }
        }
        match next {
            Some((v, e)) => {
                visited[v] = true;
                nodes.push(v);
                edges.push(e);
                current = v;
            }
            None => {
                ok = false;
                break;
            }
        }
    }
    if !ok {
        // predecessor chain (deterministic, but not necessarily
        // lexicographic when zero-cost cycles exist)
        nodes = vec![t];
        edges.clear();
        let mut v = t;
        while v != s {
            let (u, e) = pred[v].expect("reachable node has a predecessor");
            nodes.push(u);
            edges.push(e);
            v = u;
        }
        nodes.reverse();
        edges.reverse();
    }

    let edge_costs: Vec<f64> = edges.iter().map(|&e| dense[e]).collect();
    let worst_case_cost = edge_costs.iter().sum();
    Ok(RoutePlan {
        source: s,
        target: t,
        nodes,
        edges,
        edge_costs,
        worst_case_cost,
        realized_cost: None,
        provenance: costs.provenance.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn graph(n: usize, edges: Vec<(usize, usize)>) -> Graph {
        let weights = vec![Some(1.0); edges.len()];
        Graph::new(n, Matrix::zeros(n, 2), edges, weights).unwrap()
    }

    fn costs_of(g: &Graph, values: &[f64]) -> CostVector {
        let pred = crate::gae::EdgePrediction::new(
            values
                .iter()
                .enumerate()
                .map(|(e, &c)| (e, c, c, c))
                .collect(),
        );
        let set = crate::conformal::qr_intervals(&pred, &(0..g.n_edges()).collect::<Vec<_>>(), 0.05)
            .unwrap();
        crate::planner::cost_vector(&set, crate::planner::RiskMode::UpperBound).unwrap()
    }

    #[test]
    fn single_edge_path() {
        let g = graph(2, vec![(0, 1)]);
        let plan = shortest_path(&g, &costs_of(&g, &[3.0]), 0, 1).unwrap();
        assert_eq!(plan.nodes, vec![0, 1]);
        assert_eq!(plan.worst_case_cost, 3.0);
    }

    #[test]
    fn diamond_prefers_cheaper_branch() {
        // 0 -> 1 -> 3 costs 1 + 1, 0 -> 2 -> 3 costs 1 + 2
        let g = graph(4, vec![(0, 1), (0, 2), (1, 3), (2, 3)]);
        let plan = shortest_path(&g, &costs_of(&g, &[1.0, 1.0, 1.0, 2.0]), 0, 3).unwrap();
        assert_eq!(plan.nodes, vec![0, 1, 3]);
        assert_eq!(plan.worst_case_cost, 2.0);
    }

    #[test]
    fn equal_cost_tie_breaks_lexicographically() {
        // both branches cost 2; path through node 1 is lexicographically
        // smaller than through node 2
        let g = graph(4, vec![(0, 1), (0, 2), (1, 3), (2, 3)]);
        let plan = shortest_path(&g, &costs_of(&g, &[1.0, 1.0, 1.0, 1.0]), 0, 3).unwrap();
        assert_eq!(plan.nodes, vec![0, 1, 3]);
    }

    #[test]
    fn unreachable_target_is_no_path() {
        let g = graph(3, vec![(0, 1), (2, 1)]);
        let err = shortest_path(&g, &costs_of(&g, &[1.0, 1.0]), 0, 2).unwrap_err();
        assert!(matches!(err, CoreError::NoPath { from: 0, to: 2 }));
    }

    fn enumerate_min(g: &Graph, dense: &[f64], s: usize, t: usize) -> Option<(f64, Vec<usize>)> {
        // exhaustive simple-path search
        fn dfs(
            g: &Graph,
            dense: &[f64],
            t: usize,
            node: usize,
            cost: f64,
            nodes: &mut Vec<usize>,
            best: &mut Option<(f64, Vec<usize>)>,
        ) {
            if node == t {
                let better = match best {
                    None => true,
                    Some((bc, bn)) => {
                        cost < *bc - 1e-12
                            || ((cost - *bc).abs() <= 1e-12 && nodes < bn)
                    }
                };
                if better {
                    *best = Some((cost, nodes.clone()));
                }
                return;
            }
            for (e, v) in g.out_edges(node) {
                if nodes.contains(&v) {
                    continue;
                }
                nodes.push(v);
                dfs(g, dense, t, v, cost + dense[e], nodes, best);
                nodes.pop();
            }
        }
        let mut best = None;
        let mut nodes = vec![s];
        dfs(g, dense, t, s, 0.0, &mut nodes, &mut best);
        best
    }

    #[test]
    fn random_graphs_match_enumeration() {
        for seed in 0..60u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(4..9);
            let mut edges = Vec::new();
            for u in 0..n {
                for v in 0..n {
                    if u != v && rng.gen_bool(0.4) {
                        edges.push((u, v));
                    }
                }
            }
            if edges.is_empty() {
                continue;
            }
            let g = graph(n, edges);
            let values: Vec<f64> =
                (0..g.n_edges()).map(|_| rng.gen_range(0.0..10.0)).collect();
            let costs = costs_of(&g, &values);
            let dense = costs.dense(g.n_edges()).unwrap();
            let (s, t) = (0, n - 1);
            match (
                shortest_path(&g, &costs, s, t),
                enumerate_min(&g, &dense, s, t),
            ) {
                (Ok(plan), Some((best_cost, _))) => {
                    assert!(
                        (plan.worst_case_cost - best_cost).abs() < 1e-9,
                        "seed {seed}: {} vs {}",
                        plan.worst_case_cost,
                        best_cost
                    );
                }
                (Err(CoreError::NoPath { .. }), None) => {}
                (a, b) => panic!("seed {seed}: disagreement {a:?} vs {b:?}"),
            }
        }
    }

    #[test]
    fn off_path_cost_raise_keeps_plan() {
        let g = graph(4, vec![(0, 1), (0, 2), (1, 3), (2, 3)]);
        let base = costs_of(&g, &[1.0, 1.0, 1.0, 2.0]);
        let plan = shortest_path(&g, &base, 0, 3).unwrap();
        // raise the unused branch
        let raised = costs_of(&g, &[1.0, 5.0, 1.0, 2.0]);
        let plan2 = shortest_path(&g, &raised, 0, 3).unwrap();
        assert_eq!(plan.nodes, plan2.nodes);
    }

    #[test]
    fn on_path_cost_raise_never_lowers_cost() {
        let g = graph(4, vec![(0, 1), (0, 2), (1, 3), (2, 3)]);
        let base = costs_of(&g, &[1.0, 1.0, 1.0, 2.0]);
        let plan = shortest_path(&g, &base, 0, 3).unwrap();
        let raised = costs_of(&g, &[3.0, 1.0, 1.0, 2.0]); // edge 0 is on the plan
        let plan2 = shortest_path(&g, &raised, 0, 3).unwrap();
        assert!(plan2.worst_case_cost >= plan.worst_case_cost);
    }
}
