//! Node orbits of the six connected 4-node graphlets, numbered 4 to 14.
//!
//! | graphlet | orbits |
//! |---|---|
//! | path | 4 end, 5 middle |
//! | star | 6 leaf, 7 centre |
//! | cycle | 8 |
//! | paw (triangle with pendant) | 9 pendant, 10 triangle degree 2, 11 triangle degree 3 |
//! | diamond | 12 degree 2, 13 degree 3 |
//! | clique | 14 |

use crate::graph::Graph;

pub const FIRST_ORBIT: usize = 4;
pub const NUM_ORBITS: usize = 11;

/// Per-node counts, `counts[v][o − 4]` for orbit `o`.
pub type OrbitCounts = Vec<[u64; NUM_ORBITS]>;

struct Bitset {
    words: usize,
    bits: Vec<u64>,
}

impl Bitset {
    fn adjacency(graph: &Graph) -> Self {
        let n = graph.num_nodes();
        let words = n.div_ceil(64).max(1);
        let mut bits = vec![0u64; n * words];
        for &(u, v) in graph.edges() {
            bits[u * words + v / 64] |= 1 << (v % 64);
            bits[v * words + u / 64] |= 1 << (u % 64);
        }
        Self { words, bits }
    }

    fn has(&self, u: usize, v: usize) -> bool {
        self.bits[u * self.words + v / 64] >> (v % 64) & 1 == 1
    }
}

/// Orbit of each member of a connected 4-node induced subgraph, from the
/// induced degrees and edge count.
fn classify(deg: [usize; 4], edges: usize) -> [usize; 4] {
    let max = *deg.iter().max().unwrap_or(&0);
    deg.map(|d| match (edges, max) {
        (3, 2) => [0, 4, 5][d],
        (3, 3) => [0, 6, 0, 7][d],
        (4, 2) => 8,
        (4, 3) => [0, 9, 10, 11][d],
        (5, _) => [0, 0, 12, 13][d],
        _ => 14,
    })
}

/// Visits every connected induced 4-node subgraph once by extending a seed
/// vertex with its exclusive neighbourhood (ESU enumeration).
fn for_each_connected_quad(graph: &Graph, adj: &Bitset, mut f: impl FnMut([usize; 4])) {
    fn extend(
        graph: &Graph,
        adj: &Bitset,
        root: usize,
        sub: &mut Vec<usize>,
        mut ext: Vec<usize>,
        f: &mut impl FnMut([usize; 4]),
    ) {
        if sub.len() == 4 {
            f([sub[0], sub[1], sub[2], sub[3]]);
            return;
        }
        while let Some(w) = ext.pop() {
            let mut next = ext.clone();
            for &u in graph.neighbors(w) {
                if u > root && !sub.contains(&u) && u != w && !next.contains(&u) && !sub.iter().any(|&s| adj.has(s, u))
                {
                    next.push(u);
                }
            }
            sub.push(w);
            extend(graph, adj, root, sub, next, f);
            sub.pop();
        }
    }
    for v in 0..graph.num_nodes() {
        let ext: Vec<usize> = graph.neighbors(v).iter().copied().filter(|&u| u > v).collect();
        let mut sub = vec![v];
        extend(graph, adj, v, &mut sub, ext, &mut f);
    }
}

pub fn orbit_counts_4(graph: &Graph) -> OrbitCounts {
    let adj = Bitset::adjacency(graph);
    let mut counts = vec![[0u64; NUM_ORBITS]; graph.num_nodes()];
    for_each_connected_quad(graph, &adj, |q| {
        let mut deg = [0usize; 4];
        let mut edges = 0;
        for a in 0..4 {
            for b in a + 1..4 {
                if adj.has(q[a], q[b]) {
                    deg[a] += 1;
                    deg[b] += 1;
                    edges += 1;
                }
            }
        }
        for (v, o) in q.iter().zip(classify(deg, edges)) {
            counts[*v][o - FIRST_ORBIT] += 1;
        }
    });
    counts
}

/// Mean orbit-count vector over nodes.
pub fn orbit_feature(graph: &Graph) -> Vec<f64> {
    let counts = orbit_counts_4(graph);
    let n = counts.len().max(1) as f64;
    (0..NUM_ORBITS)
        .map(|o| counts.iter().map(|c| c[o] as f64).sum::<f64>() / n)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Labelled templates `(edges, orbit of vertex 0..4)`; a 4-set is matched
    /// by trying all 24 relabelings against every template.
    const TEMPLATES: [(&[(usize, usize)], [usize; 4]); 6] = [
        (&[(0, 1), (1, 2), (2, 3)], [4, 5, 5, 4]),
        (&[(0, 1), (0, 2), (0, 3)], [7, 6, 6, 6]),
        (&[(0, 1), (1, 2), (2, 3), (3, 0)], [8, 8, 8, 8]),
        (&[(0, 1), (1, 2), (0, 2), (2, 3)], [10, 10, 11, 9]),
        (&[(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)], [13, 12, 13, 12]),
        (&[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)], [14, 14, 14, 14]),
    ];

    fn permutations() -> Vec<[usize; 4]> {
        let mut out = Vec::new();
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    for d in 0..4 {
                        let p = [a, b, c, d];
                        if (0..4).all(|i| p.contains(&i)) {
                            out.push(p);
                        }
                    }
                }
            }
        }
        out
    }

    fn oracle(graph: &Graph) -> OrbitCounts {
        let n = graph.num_nodes();
        let perms = permutations();
        let mut counts = vec![[0u64; NUM_ORBITS]; n];
        for a in 0..n {
            for b in a + 1..n {
                for c in b + 1..n {
                    for d in c + 1..n {
                        let q = [a, b, c, d];
                        let mut m = [[false; 4]; 4];
                        for i in 0..4 {
                            for j in 0..4 {
                                m[i][j] = i != j && graph.has_edge(q[i], q[j]);
                            }
                        }
                        'templates: for (edges, orbits) in TEMPLATES {
                            for p in &perms {
                                // template vertex t sits at subset slot p[t]
                                let mut t = [[false; 4]; 4];
                                for &(x, y) in edges {
                                    t[p[x]][p[y]] = true;
                                    t[p[y]][p[x]] = true;
                                }
                                if t == m {
                                    for tv in 0..4 {
                                        counts[q[p[tv]]][orbits[tv] - FIRST_ORBIT] += 1;
                                    }
                                    break 'templates;
                                }
                            }
                        }
                    }
                }
            }
        }
        counts
    }

    fn orbit(c: &[u64; NUM_ORBITS], o: usize) -> u64 {
        c[o - FIRST_ORBIT]
    }

    #[test]
    fn small_graph_examples() {
        for c in orbit_counts_4(&Graph::complete(4)) {
            assert_eq!(orbit(&c, 14), 1);
            assert_eq!(c.iter().sum::<u64>(), 1);
        }
        for c in orbit_counts_4(&Graph::cycle(4)) {
            assert_eq!(orbit(&c, 8), 1);
            assert_eq!(c.iter().sum::<u64>(), 1);
        }
        let p = orbit_counts_4(&Graph::path(4));
        assert_eq!(
            [orbit(&p[0], 4), orbit(&p[3], 4), orbit(&p[1], 5), orbit(&p[2], 5)],
            [1; 4]
        );
        assert!(p.iter().all(|c| c.iter().sum::<u64>() == 1));
        let s = orbit_counts_4(&Graph::star(4, 1));
        assert_eq!(orbit(&s[1], 7), 1);
        assert_eq!(orbit(&s[0], 6), 1);
        let paw = orbit_counts_4(&Graph::new(4, [(0, 1), (1, 2), (0, 2), (2, 3)]).unwrap());
        assert_eq!([orbit(&paw[3], 9), orbit(&paw[0], 10), orbit(&paw[2], 11)], [1, 1, 1]);
        let diamond = orbit_counts_4(&Graph::new(4, [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)]).unwrap());
        assert_eq!([orbit(&diamond[1], 12), orbit(&diamond[0], 13)], [1, 1]);
        assert!(orbit_counts_4(&Graph::new(4, [(0, 1), (1, 2), (0, 2)]).unwrap())
            .iter()
            .all(|c| c.iter().all(|&x| x == 0)));
    }

    #[test]
    fn grid_and_empty() {
        let counts = orbit_counts_4(&crate::graph::grid_graph(3, 3));
        assert_eq!(counts, oracle(&crate::graph::grid_graph(3, 3)));
        assert!(orbit_counts_4(&Graph::empty(0)).is_empty());
        assert_eq!(orbit_feature(&Graph::complete(4))[14 - FIRST_ORBIT], 1.0);
    }

    fn random_graph() -> impl Strategy<Value = Graph> {
        (1usize..=12, 0.0f64..1.0, any::<u64>()).prop_map(|(n, p, seed)| {
            use rand::SeedableRng;
            crate::graph::erdos_renyi(n, p, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]

        #[test]
        fn matches_brute_force_oracle(g in random_graph()) {
            prop_assert_eq!(orbit_counts_4(&g), oracle(&g));
        }

        #[test]
        fn orbit_totals_match_graphlet_counts(g in random_graph()) {
            let counts = orbit_counts_4(&g);
            let total = |o: usize| counts.iter().map(|c| c[o - FIRST_ORBIT]).sum::<u64>();
            // members per orbit in one graphlet occurrence
            for (orbits, sizes) in [
                (&[4, 5][..], &[2, 2][..]),
                (&[6, 7], &[3, 1]),
                (&[8], &[4]),
                (&[9, 10, 11], &[1, 2, 1]),
                (&[12, 13], &[2, 2]),
                (&[14], &[4]),
            ] {
                let occ = total(orbits[0]) / sizes[0];
                for (&o, &s) in orbits.iter().zip(sizes) {
                    prop_assert_eq!(total(o), s * occ);
                }
            }
        }
    }
}
