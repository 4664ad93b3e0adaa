use crate::graph::Graph;

/// A tree whose remainder, after stripping all leaves twice, is a path or
/// empty.
pub fn is_lobster(graph: &Graph) -> bool {
    let n = graph.num_nodes();
    if n == 0 || graph.num_edges() + 1 != n || !graph.is_connected() {
        return false;
    }
    let mut alive = vec![true; n];
    let mut deg = graph.degrees();
    for _ in 0..2 {
        let leaves: Vec<usize> = (0..n).filter(|&v| alive[v] && deg[v] <= 1).collect();
        for &v in &leaves {
            alive[v] = false;
        }
        for &v in &leaves {
            for &u in graph.neighbors(v) {
                if alive[u] {
                    deg[u] -= 1;
                }
            }
        }
    }
    // a subtree with every degree at most 2 is a path
    (0..n).filter(|&v| alive[v]).all(|v| deg[v] <= 2)
}

/// Fraction of graphs that are lobsters.
pub fn lobster_accuracy(graphs: &[Graph]) -> f64 {
    if graphs.is_empty() {
        return 0.0;
    }
    graphs.iter().filter(|g| is_lobster(g)).count() as f64 / graphs.len() as f64
}
