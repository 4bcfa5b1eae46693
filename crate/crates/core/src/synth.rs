//! Deterministic synthetic road-network generator.
//!
//! Produces benchmark graphs with the texture of a city network: nodes on
//! a jittered grid, mostly-local bidirectional road segments, and traffic
//! volumes drawn from a smooth spatial demand field with multiplicative,
//! length-dependent noise. Used for the shipped benchmark dataset and for
//! tests that need a learnable network at a controlled size.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{CoreError, Result};
use crate::graph::Graph;
use crate::numerics::Matrix;

/// Demand attractors of the synthetic city, in unit-square coordinates:
/// (x, y, amplitude).
const CENTERS: [(f64, f64, f64); 3] = [(0.32, 0.42, 12.0), (0.72, 0.6, 8.0), (0.5, 0.85, 6.0)];
const BASE_FLOW: f64 = 4.0;
const FIELD_WIDTH: f64 = 0.18;
const EXTENT: f64 = 10.0;

fn demand_field(x: f64, y: f64) -> f64 {
    let mut flow = BASE_FLOW;
    for &(cx, cy, amp) in &CENTERS {
        let dx = x / EXTENT - cx;
        let dy = y / EXTENT - cy;
        let d2 = dx * dx + dy * dy;
        flow += amp * (-d2 / (2.0 * FIELD_WIDTH * FIELD_WIDTH)).exp();
    }
    flow
}

/// Generate a strongly connected directed road network with `n_nodes`
/// nodes and exactly `n_edges` edges, all weights observed.
pub fn synth_road_network(n_nodes: usize, n_edges: usize, seed: u64) -> Result<Graph> {
    if n_nodes < 2 {
        return Err(CoreError::Config("need at least 2 nodes".into()));
    }
    let spanning = 2 * (n_nodes - 1);
    if n_edges < spanning {
        return Err(CoreError::Config(format!(
            "need at least {spanning} edges to keep {n_nodes} nodes strongly connected"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Jittered grid positions over [0, EXTENT]^2.
    let side = (n_nodes as f64).sqrt().ceil() as usize;
    let cell = EXTENT / side as f64;
    let mut pos = Vec::with_capacity(n_nodes);
    for i in 0..n_nodes {
        let col = i % side;
        let row = i / side;
        let x = (col as f64 + 0.5 + rng.gen_range(-0.35..0.35)) * cell;
        let y = (row as f64 + 0.5 + rng.gen_range(-0.35..0.35)) * cell;
        pos.push((x, y));
    }

    let dist = |a: usize, b: usize| -> f64 {
        let (ax, ay) = pos[a];
        let (bx, by) = pos[b];
        ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
    };

    // Spanning tree on nearest earlier nodes, both directions, then the
    // shortest remaining nearest-neighbor candidates until the edge budget
    // is spent.
    let mut have = std::collections::HashSet::new();
    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(n_edges);
    let push = |edges: &mut Vec<(usize, usize)>,
                    have: &mut std::collections::HashSet<(usize, usize)>,
                    u: usize,
                    v: usize| {
        if u != v && have.insert((u, v)) {
            edges.push((u, v));
            true
        } else {
            false
        }
    };
    for i in 1..n_nodes {
        let nearest = (0..i)
            .min_by(|&a, &b| dist(i, a).partial_cmp(&dist(i, b)).unwrap())
            .expect("nonempty prefix");
        push(&mut edges, &mut have, i, nearest);
        push(&mut edges, &mut have, nearest, i);
    }

    let k = 10.min(n_nodes - 1);
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for u in 0..n_nodes {
        let mut near: Vec<usize> = (0..n_nodes).filter(|&v| v != u).collect();
        near.sort_by(|&a, &b| dist(u, a).partial_cmp(&dist(u, b)).unwrap());
        for &v in near.iter().take(k) {
            if !have.contains(&(u, v)) {
                candidates.push((dist(u, v), u, v));
            }
        }
    }
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for (_, u, v) in candidates {
        if edges.len() >= n_edges {
            break;
        }
        push(&mut edges, &mut have, u, v);
    }
    // Rare fallback when the neighborhood candidates run out.
    while edges.len() < n_edges {
        let u = rng.gen_range(0..n_nodes);
        let v = rng.gen_range(0..n_nodes);
        push(&mut edges, &mut have, u, v);
    }

    // Traffic volumes: demand field at the edge midpoint, log-normal noise
    // growing with segment length.
    let max_len = edges
        .iter()
        .map(|&(u, v)| dist(u, v))
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let mut weights = Vec::with_capacity(edges.len());
    for &(u, v) in &edges {
        let (ux, uy) = pos[u];
        let (vx, vy) = pos[v];
        let flow = demand_field(0.5 * (ux + vx), 0.5 * (uy + vy));
        let sigma = 0.15 + 0.25 * (dist(u, v) / max_len);
        let noise: f64 = Normal::new(0.0, sigma)
            .expect("positive sigma")
            .sample(&mut rng);
        weights.push(Some((flow * noise.exp()).max(0.05)));
    }

    let mut features = Matrix::zeros(n_nodes, 2);
    for (i, &(x, y)) in pos.iter().enumerate() {
        features.set(i, 0, x);
        features.set(i, 1, y);
    }
    Graph::new(n_nodes, features, edges, weights)
}
