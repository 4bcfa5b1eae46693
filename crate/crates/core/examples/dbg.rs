use calroute_core::gae::{train, GaeConfig, QuantileModel};
use calroute_core::graph::{build_masked_weights, split_edges, Graph};
use calroute_core::synth::synth_road_network;

fn main() {
    let base = synth_road_network(24, 90, 13).unwrap();
    let edges = base.edges().to_vec();
    let weights = vec![Some(5.0); edges.len()];
    let g = Graph::new(24, base.node_features().clone(), edges, weights).unwrap();
    let split = split_edges(&g, (0.5, 0.2, 0.3), 4).unwrap();
    let config = GaeConfig {
        hidden_dims: vec![16, 16],
        embedding_dim: 8,
        max_epochs: 1500,
        seed: 2,
        ..Default::default()
    };
    let model = train(&g, &split, &config).unwrap();
    let h = model.history();
    println!("epochs run: {}, best epoch {}, best val {:.6}", h.epochs.len(), h.best_epoch, h.best_val_loss);
    println!("first train losses: {:?}", h.epochs.iter().take(3).map(|e| e.train_loss).collect::<Vec<_>>());
    println!("last train losses: {:?}", h.epochs.iter().rev().take(3).map(|e| e.train_loss).collect::<Vec<_>>());
    let masked = build_masked_weights(&g, &split, config.fill).unwrap();
    let pred = model.predict(&g, &masked, &split.test).unwrap();
    for (e, m, lo, hi) in pred.iter().take(8) {
        println!("edge {e}: mean {m:.4} lo {lo:.4} hi {hi:.4}");
    }
    // checkpoint debug
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    model.save(&path).unwrap();
    let loaded = QuantileModel::load(&path).unwrap();
    let mut n_diff = 0;
    for (a, b) in model.params().iter().zip(loaded.params().iter()) {
        for (x, y) in a.value.data().iter().zip(b.value.data()) {
            if x.to_bits() != y.to_bits() {
                if n_diff < 3 { println!("param {} differs: {x:?} ({:#x}) vs {y:?} ({:#x})", a.name, x.to_bits(), y.to_bits()); }
                n_diff += 1;
            }
        }
    }
    println!("total differing entries: {n_diff}");
}
