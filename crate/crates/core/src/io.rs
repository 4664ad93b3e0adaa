//! Edge-list files and dataset directories.
//!
//! An edge-list file starts with an `N M` line (node and edge counts)
//! followed by `M` lines `u v` with `0 ≤ u < v < N`. A dataset directory holds
//! `manifest.txt` and one edge-list file per graph:
//!
//! ```text
//! name grid
//! n_max 64
//! count 2
//! graph graph_000.txt
//! graph graph_001.txt
//! ```

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{Graph, GraphDataset};

pub const MANIFEST: &str = "manifest.txt";

pub fn edge_list_to_string(graph: &Graph) -> String {
    let mut s = format!("{} {}\n", graph.num_nodes(), graph.num_edges());
    for &(u, v) in graph.edges() {
        let _ = writeln!(s, "{u} {v}");
    }
    s
}

/// Parses an edge list. Endpoints may come in either order; duplicates,
/// self-loops, out-of-range endpoints and a wrong edge count are errors.
pub fn parse_edge_list(text: &str, path: &Path) -> Result<Graph> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let number = |line: usize, field: &str, what: &str| {
        field
            .parse::<usize>()
            .map_err(|e| err(line, format!("bad {what} {field:?}: {e}")))
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    let Some((head_no, head)) = lines.next() else {
        return Err(err(0, "empty edge list".into()));
    };
    let (n, m) = match head.split_whitespace().collect::<Vec<_>>().as_slice() {
        [n, m] => (number(head_no, n, "node count")?, number(head_no, m, "edge count")?),
        _ => return Err(err(head_no, format!("expected `N M` header, got {head:?}"))),
    };
    let mut seen = BTreeSet::new();
    let mut last = head_no;
    for (line_no, line) in lines {
        last = line_no;
        let [a, b] = line.split_whitespace().collect::<Vec<_>>()[..] else {
            return Err(err(line_no, format!("expected two endpoints, got {line:?}")));
        };
        let (u, v) = (number(line_no, a, "endpoint")?, number(line_no, b, "endpoint")?);
        if u == v {
            return Err(err(line_no, format!("self-loop on {u}")));
        }
        if u >= n || v >= n {
            return Err(err(line_no, format!("edge ({u}, {v}) outside {n} nodes")));
        }
        if !seen.insert((u.min(v), u.max(v))) {
            return Err(err(line_no, format!("duplicate edge ({u}, {v})")));
        }
    }
    if seen.len() != m {
        return Err(err(last, format!("header declares {m} edges, found {}", seen.len())));
    }
    Graph::new(n, seen)
}

pub fn read_edge_list(path: &Path) -> Result<Graph> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(&text, path)
}

pub fn write_edge_list(graph: &Graph, path: &Path) -> Result<()> {
    fs::write(path, edge_list_to_string(graph)).map_err(|e| Error::io(path, e))
}

pub fn graph_file_name(index: usize) -> String {
    format!("graph_{index:03}.txt")
}

/// Writes the manifest and every graph, creating `dir` if needed.
pub fn write_dataset(dataset: &GraphDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = format!(
        "name {}\nn_max {}\ncount {}\n",
        dataset.name,
        dataset.n_max,
        dataset.len()
    );
    for (i, g) in dataset.graphs.iter().enumerate() {
        let name = graph_file_name(i);
        write_edge_list(g, &dir.join(&name))?;
        let _ = writeln!(manifest, "graph {name}");
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
}

/// Reads a dataset directory. A declared `n_max` may exceed the largest
/// graph, as it does for a split of a larger dataset.
pub fn read_dataset(dir: &Path) -> Result<GraphDataset> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let err = |line: usize, msg: String| Error::Parse {
        path: path.clone(),
        line,
        msg,
    };
    let mut name = None;
    let mut count = None;
    let mut n_max = None;
    let mut graphs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once(' ')
            .ok_or_else(|| err(i + 1, format!("expected `key value`, got {line:?}")))?;
        let num = |v: &str| {
            v.parse::<usize>()
                .map_err(|e| err(i + 1, format!("bad number {v:?}: {e}")))
        };
        match key {
            "name" => name = Some(value.to_string()),
            "n_max" => n_max = Some(num(value)?),
            "count" => count = Some(num(value)?),
            "graph" => {
                if value.contains('/') || value.contains('\\') || value.starts_with('.') {
                    return Err(err(i + 1, format!("graph file {value:?} must be a plain name")));
                }
                graphs.push(read_edge_list(&dir.join(value))?);
            }
            _ => return Err(err(i + 1, format!("unknown key {key:?}"))),
        }
    }
    let name = name.ok_or_else(|| err(0, "missing name".into()))?;
    if let Some(c) = count {
        if c != graphs.len() {
            return Err(err(0, format!("count {c} but {} graph entries", graphs.len())));
        }
    }
    let mut ds = GraphDataset::new(name, graphs);
    if let Some(m) = n_max {
        if m < ds.n_max {
            return Err(err(0, format!("n_max {m} but largest graph has {} nodes", ds.n_max)));
        }
        ds.n_max = m;
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::grid_graph;

    #[test]
    fn edge_list_roundtrip() {
        let g = grid_graph(2, 3);
        let back = parse_edge_list(&edge_list_to_string(&g), Path::new("mem")).unwrap();
        assert_eq!(back, g);
        assert_eq!(edge_list_to_string(&Graph::path(3)), "3 2\n0 1\n1 2\n");
        let g = parse_edge_list("3 2\n0 1\n1 2\n", Path::new("mem")).unwrap();
        assert_eq!(g, Graph::path(3));
        let g = parse_edge_list("3 2\n2 0\n\n1 2", Path::new("mem")).unwrap();
        assert_eq!(g.edges(), &[(0, 2), (1, 2)]);
        assert_eq!(parse_edge_list("4 0\n", Path::new("mem")).unwrap(), Graph::empty(4));
    }

    #[test]
    fn edge_list_errors() {
        let p = Path::new("x.txt");
        for bad in [
            "",
            "nodes 3\n",
            "3\n",
            "3 1\n0 0\n",
            "3 1\n0 3\n",
            "3 2\n0 1\n1 0\n",
            "3 1\n0 1 2\n",
            "3 2\n0 1\n",
            "3 1\n0 1\n1 2\n",
            "3 x\n",
        ] {
            assert!(parse_edge_list(bad, p).is_err(), "{bad:?}");
        }
        match parse_edge_list("3 2\n0 1\n1 0\n", p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dataset_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = GraphDataset::new("grid", vec![grid_graph(2, 2), grid_graph(3, 2), Graph::empty(1)]);
        write_dataset(&ds, dir.path()).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back.graphs, ds.graphs);
        assert_eq!((back.name.as_str(), back.n_max), ("grid", 6));
        let part = ds.subset(&[0]);
        write_dataset(&part, dir.path()).unwrap();
        assert_eq!(read_dataset(dir.path()).unwrap(), part);
        fs::write(dir.path().join(MANIFEST), "name g\nn_max 3\ngraph graph_000.txt\n").unwrap();
        assert!(read_dataset(dir.path()).is_err());
        fs::write(dir.path().join(MANIFEST), "name g\ngraph ../x.txt\n").unwrap();
        assert!(read_dataset(dir.path()).is_err());
        assert!(read_dataset(&dir.path().join("missing")).is_err());
    }
}
