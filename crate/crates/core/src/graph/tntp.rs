//! Reader for the whitespace-separated TNTP network interchange format:
//! a `<prefix>_net.tntp` link table plus `<prefix>_node.tntp` coordinates.
//!
//! Metadata lines (`<NUMBER OF NODES> ...`) precede the link table; rows
//! are `init term capacity length free_flow_time b power speed toll type ;`.
//! Node ids are 1-based in the files and 0-based in the loaded graph.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{CoreError, Result};
use crate::graph::Graph;
use crate::numerics::Matrix;

/// Which link-table column provides the edge weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TntpWeightColumn {
    Capacity,
    Length,
    FreeFlowTime,
    /// 0-based position after the term-node column (0 = capacity).
    Index(usize),
}

impl TntpWeightColumn {
    fn offset(self) -> usize {
        match self {
            TntpWeightColumn::Capacity => 0,
            TntpWeightColumn::Length => 1,
            TntpWeightColumn::FreeFlowTime => 2,
            TntpWeightColumn::Index(k) => k,
        }
    }
}

impl std::str::FromStr for TntpWeightColumn {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "capacity" => Ok(Self::Capacity),
            "length" => Ok(Self::Length),
            "free-flow-time" | "fftime" => Ok(Self::FreeFlowTime),
            other => other
                .strip_prefix("col:")
                .and_then(|k| k.parse().ok())
                .map(Self::Index)
                .ok_or_else(|| {
                    CoreError::Config(format!(
                        "unknown weight column {other:?} (capacity, length, free-flow-time, col:K)"
                    ))
                }),
        }
    }
}

/// TNTP loading options.
#[derive(Debug, Clone)]
pub struct TntpOptions {
    pub weight_column: TntpWeightColumn,
    /// Drop zone/centroid nodes (ids below `<FIRST THRU NODE>`) and their
    /// connector links, renumbering the remaining nodes.
    pub skip_zones: bool,
}

impl Default for TntpOptions {
    fn default() -> Self {
        Self {
            weight_column: TntpWeightColumn::Capacity,
            skip_zones: false,
        }
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> CoreError {
    CoreError::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Derive `<prefix>_node.tntp` from the net-file path.
fn node_path_for(net_path: &Path) -> Result<PathBuf> {
    let name = net_path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or_default();
    let stem = name.strip_suffix("_net.tntp").ok_or_else(|| {
        CoreError::Config(format!(
            "TNTP path {} must end in _net.tntp",
            net_path.display()
        ))
    })?;
    Ok(net_path.with_file_name(format!("{stem}_node.tntp")))
}

struct NetFile {
    first_thru_node: usize, // 1-based, as declared
    links: Vec<(usize, usize, f64)>,
    declared_nodes: Option<usize>,
}

fn parse_net(path: &Path, column: TntpWeightColumn) -> Result<NetFile> {
    let text = fs::read_to_string(path)?;
    let mut first_thru_node = 1usize;
    let mut declared_nodes = None;
    let mut links = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('~') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('<') {
            let (key, value) = rest.split_once('>').ok_or_else(|| {
                parse_err(path, line_no, "unterminated metadata tag".to_string())
            })?;
            let value = value.trim();
            match key.trim().to_ascii_uppercase().as_str() {
                "FIRST THRU NODE" => {
                    first_thru_node = value.parse().map_err(|_| {
                        parse_err(path, line_no, format!("bad FIRST THRU NODE {value:?}"))
                    })?;
                }
                "NUMBER OF NODES" => {
                    declared_nodes = Some(value.parse().map_err(|_| {
                        parse_err(path, line_no, format!("bad NUMBER OF NODES {value:?}"))
                    })?);
                }
                _ => {}
            }
            continue;
        }
        let fields: Vec<&str> = line
            .split_whitespace()
            .filter(|t| *t != ";")
            .map(|t| t.trim_end_matches(';'))
            .filter(|t| !t.is_empty())
            .collect();
        if fields.is_empty() {
            continue;
        }
        // Header row (non-numeric first field) is tolerated.
        if fields[0].parse::<usize>().is_err() {
            continue;
        }
        let col = 2 + column.offset();
        if fields.len() <= col {
            return Err(parse_err(
                path,
                line_no,
                format!("link row has {} fields, weight column needs {}", fields.len(), col + 1),
            ));
        }
        let init: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad init node {:?}", fields[0])))?;
        let term: usize = fields[1]
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad term node {:?}", fields[1])))?;
        if init == 0 || term == 0 {
            return Err(parse_err(path, line_no, "TNTP node ids are 1-based"));
        }
        let weight: f64 = fields[col]
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad weight {:?}", fields[col])))?;
        if weight < 0.0 {
            return Err(CoreError::Validation(format!(
                "link {init} -> {term} at {}:{line_no} has negative weight {weight}",
                path.display()
            )));
        }
        links.push((init, term, weight));
    }
    Ok(NetFile {
        first_thru_node,
        links,
        declared_nodes,
    })
}

fn parse_nodes(path: &Path) -> Result<Vec<(usize, f64, f64)>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('~') || line.starts_with('<') {
            continue;
        }
        let fields: Vec<&str> = line
            .split_whitespace()
            .map(|t| t.trim_end_matches(';'))
            .filter(|t| !t.is_empty())
            .collect();
        if fields.is_empty() || fields[0].parse::<usize>().is_err() {
            continue; // header
        }
        if fields.len() < 3 {
            return Err(parse_err(path, line_no, "node row needs id, x, y"));
        }
        let id: usize = fields[0].parse().unwrap();
        let x: f64 = fields[1]
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad x {:?}", fields[1])))?;
        let y: f64 = fields[2]
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad y {:?}", fields[2])))?;
        out.push((id, x, y));
    }
    if out.is_empty() {
        return Err(parse_err(path, 1, "no node rows"));
    }
    Ok(out)
}

/// Load a TNTP network. `net_path` names the `_net.tntp` file; the node
/// file is found next to it.
pub fn load_tntp_graph(net_path: &Path, options: &TntpOptions) -> Result<Graph> {
    let net = parse_net(net_path, options.weight_column)?;
    let node_path = node_path_for(net_path)?;
    let nodes = parse_nodes(&node_path)?;

    let max_id = nodes.iter().map(|&(id, _, _)| id).max().unwrap_or(0);
    let declared = net.declared_nodes.unwrap_or(max_id);
    if max_id > declared {
        return Err(CoreError::Validation(format!(
            "node file has id {max_id} but the net file declares {declared} nodes"
        )));
    }

    // Keep either all nodes, or only through nodes (ids >= first thru node).
    let keep_from = if options.skip_zones {
        net.first_thru_node
    } else {
        1
    };
    let mut kept: Vec<(usize, f64, f64)> = nodes
        .into_iter()
        .filter(|&(id, _, _)| id >= keep_from)
        .collect();
    kept.sort_by_key(|&(id, _, _)| id);
    let mut remap = vec![usize::MAX; declared + 1];
    for (new_id, &(old_id, _, _)) in kept.iter().enumerate() {
        if old_id > declared {
            return Err(CoreError::Validation(format!(
                "node id {old_id} exceeds declared node count {declared}"
            )));
        }
        if remap[old_id] != usize::MAX {
            return Err(CoreError::Validation(format!("duplicate node id {old_id}")));
        }
        remap[old_id] = new_id;
    }

    let n = kept.len();
    let mut features = Matrix::zeros(n, 2);
    for (new_id, &(_, x, y)) in kept.iter().enumerate() {
        features.set(new_id, 0, x);
        features.set(new_id, 1, y);
    }

    let mut edges = Vec::new();
    let mut weights = Vec::new();
    for &(init, term, w) in &net.links {
        if init < keep_from || term < keep_from {
            continue; // connector link
        }
        if init > declared || term > declared || remap[init] == usize::MAX || remap[term] == usize::MAX
        {
            return Err(CoreError::Validation(format!(
                "link {init} -> {term} references a node missing from the node file"
            )));
        }
        edges.push((remap[init], remap[term]));
        weights.push(Some(w));
    }

    Graph::new(n, features, edges, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    const NET: &str = "\
<NUMBER OF ZONES> 2
<NUMBER OF NODES> 6
<FIRST THRU NODE> 3
<NUMBER OF LINKS> 8
<END OF METADATA>
~ Init node Term node Capacity Length Free Flow Time B Power Speed limit Toll Type ;
1\t3\t100\t1\t2\t0.15\t4\t0\t0\t1\t;
2\t4\t100\t1\t2\t0.15\t4\t0\t0\t1\t;
3\t4\t300\t2\t5\t0.15\t4\t0\t0\t1\t;
4\t3\t250\t2\t4\t0.15\t4\t0\t0\t1\t;
3\t5\t120\t1\t3\t0.15\t4\t0\t0\t1\t;
5\t6\t180\t1\t2\t0.15\t4\t0\t0\t1\t;
6\t4\t210\t3\t7\t0.15\t4\t0\t0\t1\t;
4\t6\t330\t2\t6\t0.15\t4\t0\t0\t1\t;
";

    const NODES: &str = "\
Node\tX\tY\t;
1\t0.0\t0.0\t;
2\t1.0\t0.0\t;
3\t0.0\t1.0\t;
4\t1.0\t1.0\t;
5\t0.0\t2.0\t;
6\t1.0\t2.0\t;
";

    fn write_pair(dir: &Path) -> PathBuf {
        let net = dir.join("toy_net.tntp");
        fs::write(&net, NET).unwrap();
        fs::write(dir.join("toy_node.tntp"), NODES).unwrap();
        net
    }

    #[test]
    fn loads_all_nodes_by_default() {
        let tmp = tempfile::tempdir().unwrap();
        let net = write_pair(tmp.path());
        let g = load_tntp_graph(&net, &TntpOptions::default()).unwrap();
        assert_eq!(g.n_nodes(), 6);
        assert_eq!(g.n_edges(), 8);
        // 1-based (3, 4) becomes 0-based (2, 3) with capacity 300
        let idx = g.edge_index(2, 3).unwrap();
        assert_eq!(g.weight(idx), Some(300.0));
    }

    #[test]
    fn skip_zones_drops_centroids_and_connectors() {
        let tmp = tempfile::tempdir().unwrap();
        let net = write_pair(tmp.path());
        let opts = TntpOptions {
            skip_zones: true,
            ..Default::default()
        };
        let g = load_tntp_graph(&net, &opts).unwrap();
        // zones 1, 2 dropped along with their two connector links
        assert_eq!(g.n_nodes(), 4);
        assert_eq!(g.n_edges(), 6);
        // old node 3 is new node 0; (3 -> 5) becomes (0 -> 2)
        assert!(g.edge_index(0, 2).is_some());
    }

    #[test]
    fn weight_column_is_selectable() {
        let tmp = tempfile::tempdir().unwrap();
        let net = write_pair(tmp.path());
        let opts = TntpOptions {
            weight_column: TntpWeightColumn::FreeFlowTime,
            ..Default::default()
        };
        let g = load_tntp_graph(&net, &opts).unwrap();
        let idx = g.edge_index(2, 3).unwrap();
        assert_eq!(g.weight(idx), Some(5.0));
    }

    #[test]
    fn malformed_row_names_line() {
        let tmp = tempfile::tempdir().unwrap();
        let net = tmp.path().join("bad_net.tntp");
        fs::write(&net, "<END OF METADATA>\n1 2 oops 1 1 0 0 0 0 1 ;\n").unwrap();
        fs::write(tmp.path().join("bad_node.tntp"), "1 0 0\n2 1 1\n").unwrap();
        let err = load_tntp_graph(&net, &TntpOptions::default()).unwrap_err();
        assert!(err.to_string().contains(":2"), "{err}");
    }
}
