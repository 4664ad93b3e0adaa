//! Canonical node orderings and k-core decomposition.
//!
//! Every ordering breaks ties by degree (descending) and then node index
//! (ascending), so results never depend on edge iteration order.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::{to_ordered_rows, Graph, OrderedRows, Ordering};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OrderingKind {
    Default,
    DegreeDescent,
    Bfs,
    Dfs,
    KCore,
}

impl OrderingKind {
    pub const ALL: [OrderingKind; 5] = [
        OrderingKind::Default,
        OrderingKind::DegreeDescent,
        OrderingKind::Bfs,
        OrderingKind::Dfs,
        OrderingKind::KCore,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OrderingKind::Default => "default",
            OrderingKind::DegreeDescent => "deg",
            OrderingKind::Bfs => "bfs",
            OrderingKind::Dfs => "dfs",
            OrderingKind::KCore => "kcore",
        }
    }

    pub fn order(self, graph: &Graph) -> Ordering {
        match self {
            OrderingKind::Default => default_order(graph),
            OrderingKind::DegreeDescent => degree_descent_order(graph),
            OrderingKind::Bfs => bfs_order(graph),
            OrderingKind::Dfs => dfs_order(graph),
            OrderingKind::KCore => kcore_order(graph),
        }
    }
}

impl fmt::Display for OrderingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OrderingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OrderingKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown ordering kind {s:?}")))
    }
}

/// Parses a comma-separated list such as `"dfs,bfs,kcore"`.
pub fn parse_kinds(list: &str) -> Result<Vec<OrderingKind>> {
    let kinds = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<Result<Vec<_>>>()?;
    if kinds.is_empty() {
        return Err(Error::Config("ordering family must not be empty".into()));
    }
    Ok(kinds)
}

pub fn default_order(graph: &Graph) -> Ordering {
    Ordering::identity(graph.num_nodes())
}

fn by_degree_desc(graph: &Graph, nodes: &mut [usize]) {
    nodes.sort_by_key(|&v| (std::cmp::Reverse(graph.degree(v)), v));
}

pub fn degree_descent_order(graph: &Graph) -> Ordering {
    let mut nodes: Vec<usize> = (0..graph.num_nodes()).collect();
    by_degree_desc(graph, &mut nodes);
    Ordering::new(nodes).expect("sorted node list is a permutation")
}

/// Neighbor lists sorted by the global tie-break rule.
fn ranked_neighbors(graph: &Graph) -> Vec<Vec<usize>> {
    (0..graph.num_nodes())
        .map(|v| {
            let mut nb = graph.neighbors(v).to_vec();
            by_degree_desc(graph, &mut nb);
            nb
        })
        .collect()
}

/// Roots in visiting priority: the highest-degree unvisited node comes first.
fn root_priority(graph: &Graph) -> Vec<usize> {
    degree_descent_order(graph).perm().to_vec()
}

pub fn bfs_order(graph: &Graph) -> Ordering {
    let nbrs = ranked_neighbors(graph);
    let mut seen = vec![false; graph.num_nodes()];
    let mut out = Vec::with_capacity(graph.num_nodes());
    for root in root_priority(graph) {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            out.push(u);
            for &w in &nbrs[u] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    Ordering::new(out).expect("traversal visits every node once")
}

pub fn dfs_order(graph: &Graph) -> Ordering {
    let nbrs = ranked_neighbors(graph);
    let mut seen = vec![false; graph.num_nodes()];
    let mut out = Vec::with_capacity(graph.num_nodes());
    for root in root_priority(graph) {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        out.push(root);
        // (node, next neighbor position)
        let mut stack = vec![(root, 0usize)];
        while let Some(top) = stack.last_mut() {
            let (u, pos) = *top;
            if pos == nbrs[u].len() {
                stack.pop();
                continue;
            }
            top.1 += 1;
            let w = nbrs[u][pos];
            if !seen[w] {
                seen[w] = true;
                out.push(w);
                stack.push((w, 0));
            }
        }
    }
    Ordering::new(out).expect("traversal visits every node once")
}

/// Core number of every node by bucket-based minimum-degree peeling,
/// O(|V| + |E|).
pub fn core_numbers(graph: &Graph) -> Vec<usize> {
    let n = graph.num_nodes();
    if n == 0 {
        return Vec::new();
    }
    let mut deg = graph.degrees();
    let max_deg = *deg.iter().max().unwrap_or(&0);

    // Nodes sorted by degree via counting sort; `bin[d]` is the first slot of degree d.
    let mut bin = vec![0usize; max_deg + 1];
    for &d in &deg {
        bin[d] += 1;
    }
    let mut start = 0;
    for b in bin.iter_mut() {
        let count = *b;
        *b = start;
        start += count;
    }
    let mut order = vec![0usize; n];
    let mut pos = vec![0usize; n];
    {
        let mut next = bin.clone();
        for v in 0..n {
            pos[v] = next[deg[v]];
            order[pos[v]] = v;
            next[deg[v]] += 1;
        }
    }

    for i in 0..n {
        let v = order[i];
        for &u in graph.neighbors(v) {
            if deg[u] > deg[v] {
                let du = deg[u];
                let pu = pos[u];
                let pw = bin[du];
                let w = order[pw];
                if u != w {
                    order.swap(pu, pw);
                    pos[u] = pw;
                    pos[w] = pu;
                }
                bin[du] += 1;
                deg[u] -= 1;
            }
        }
    }
    deg
}

/// Nodes grouped by core number (largest first), each group ranked by
/// degree descending.
pub fn kcore_order(graph: &Graph) -> Ordering {
    let cores = core_numbers(graph);
    let mut nodes: Vec<usize> = (0..graph.num_nodes()).collect();
    nodes.sort_by_key(|&v| (std::cmp::Reverse(cores[v]), std::cmp::Reverse(graph.degree(v)), v));
    Ordering::new(nodes).expect("sorted node list is a permutation")
}

/// A set of orderings of one graph whose induced adjacency matrices are
/// pairwise distinct.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderingFamily {
    members: Vec<(OrderingKind, Ordering)>,
}

impl OrderingFamily {
    pub fn members(&self) -> &[(OrderingKind, Ordering)] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn kinds(&self) -> Vec<OrderingKind> {
        self.members.iter().map(|(k, _)| *k).collect()
    }

    /// Padded rows for every member.
    pub fn rows(&self, graph: &Graph, n_max: usize) -> Result<Vec<OrderedRows>> {
        self.members
            .iter()
            .map(|(_, o)| to_ordered_rows(graph, o, n_max))
            .collect()
    }
}

/// Computes each requested ordering and keeps only the first ordering that
/// yields any given adjacency matrix.
pub fn build_family(graph: &Graph, kinds: &[OrderingKind]) -> Result<OrderingFamily> {
    if kinds.is_empty() {
        return Err(Error::Config("ordering family must not be empty".into()));
    }
    let n = graph.num_nodes();
    let mut members: Vec<(OrderingKind, Ordering)> = Vec::new();
    let mut seen_rows: Vec<OrderedRows> = Vec::new();
    for &kind in kinds {
        let ordering = kind.order(graph);
        let rows = to_ordered_rows(graph, &ordering, n)?;
        if seen_rows.iter().any(|r| r.rows() == rows.rows()) {
            continue;
        }
        seen_rows.push(rows);
        members.push((kind, ordering));
    }
    Ok(OrderingFamily { members })
}
