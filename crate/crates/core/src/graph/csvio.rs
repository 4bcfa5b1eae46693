//! CSV interchange format: a directory holding `nodes.csv` and `edges.csv`.
//!
//! `nodes.csv` columns: `id, x, y[, ...extra feature columns]`, ids covering
//! `0..n` in any order. `edges.csv` columns: `src, dst, weight`, with the
//! weight field left blank for unobserved edges.

use std::fs;
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::graph::Graph;
use crate::numerics::Matrix;

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> CoreError {
    CoreError::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Load a graph from `dir/nodes.csv` + `dir/edges.csv`.
pub fn load_csv_graph(dir: &Path) -> Result<Graph> {
    let nodes_path = dir.join("nodes.csv");
    let edges_path = dir.join("edges.csv");

    // nodes.csv
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(&nodes_path)
        .map_err(|e| parse_err(&nodes_path, 0, e.to_string()))?;
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2; // 1-based, after the header
        let record = record.map_err(|e| parse_err(&nodes_path, line, e.to_string()))?;
        if record.len() < 3 {
            return Err(parse_err(
                &nodes_path,
                line,
                format!("expected at least 3 columns (id, x, y), got {}", record.len()),
            ));
        }
        let id: usize = record[0]
            .parse()
            .map_err(|_| parse_err(&nodes_path, line, format!("bad node id {:?}", &record[0])))?;
        let mut feats = Vec::with_capacity(record.len() - 1);
        for field in record.iter().skip(1) {
            let v: f64 = field.parse().map_err(|_| {
                parse_err(&nodes_path, line, format!("bad feature value {field:?}"))
            })?;
            feats.push(v);
        }
        rows.push((id, feats));
    }
    if rows.is_empty() {
        return Err(parse_err(&nodes_path, 1, "no node rows"));
    }
    let n = rows.len();
    let p = rows[0].1.len();
    let mut features = Matrix::zeros(n, p);
    let mut seen = vec![false; n];
    for (id, feats) in rows {
        if id >= n {
            return Err(CoreError::Validation(format!(
                "node id {id} outside 0..{n}; ids must be contiguous"
            )));
        }
        if seen[id] {
            return Err(CoreError::Validation(format!("duplicate node id {id}")));
        }
        if feats.len() != p {
            return Err(CoreError::Validation(format!(
                "node {id} has {} feature columns, expected {p}",
                feats.len()
            )));
        }
        seen[id] = true;
        features.row_mut(id).copy_from_slice(&feats);
    }

    // edges.csv
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(&edges_path)
        .map_err(|e| parse_err(&edges_path, 0, e.to_string()))?;
    let mut edges = Vec::new();
    let mut weights = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| parse_err(&edges_path, line, e.to_string()))?;
        if record.len() < 3 {
            return Err(parse_err(
                &edges_path,
                line,
                format!("expected 3 columns (src, dst, weight), got {}", record.len()),
            ));
        }
        let src: usize = record[0]
            .parse()
            .map_err(|_| parse_err(&edges_path, line, format!("bad src {:?}", &record[0])))?;
        let dst: usize = record[1]
            .parse()
            .map_err(|_| parse_err(&edges_path, line, format!("bad dst {:?}", &record[1])))?;
        let weight = if record[2].is_empty() {
            None
        } else {
            let w: f64 = record[2].parse().map_err(|_| {
                parse_err(&edges_path, line, format!("bad weight {:?}", &record[2]))
            })?;
            if w < 0.0 {
                return Err(CoreError::Validation(format!(
                    "edge ({src}, {dst}) at {}:{line} has negative weight {w}",
                    edges_path.display()
                )));
            }
            Some(w)
        };
        edges.push((src, dst));
        weights.push(weight);
    }

    Graph::new(n, features, edges, weights)
}

/// Write a graph as `dir/nodes.csv` + `dir/edges.csv`, creating `dir`.
pub fn write_csv_graph(g: &Graph, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut nodes = csv::Writer::from_path(dir.join("nodes.csv"))?;
    let p = g.node_features().cols();
    let mut header = vec!["id".to_string(), "x".to_string(), "y".to_string()];
    for k in 2..p {
        header.push(format!("f{k}"));
    }
    nodes.write_record(&header)?;
    for i in 0..g.n_nodes() {
        let mut row = vec![i.to_string()];
        for v in g.node_features().row(i) {
            row.push(v.to_string());
        }
        nodes.write_record(&row)?;
    }
    nodes.flush()?;

    let mut edges = csv::Writer::from_path(dir.join("edges.csv"))?;
    edges.write_record(["src", "dst", "weight"])?;
    for (idx, &(u, v)) in g.edges().iter().enumerate() {
        let w = g.weight(idx).map(|w| w.to_string()).unwrap_or_default();
        edges.write_record([u.to_string(), v.to_string(), w])?;
    }
    edges.flush()?;
    Ok(())
}
