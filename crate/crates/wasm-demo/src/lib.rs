//! Three browser operations over the core crate. Each takes plain numbers
//! and returns a JSON string; the `wasm_bindgen` exports only convert
//! errors.

use gran_core::graph::{erdos_renyi, grid_graph, random_lobster, Graph};
use gran_core::metrics::{
    clustering_coefficients, degree_histogram, is_lobster, normalized_laplacian_eigenvalues, orbit_feature,
};
use gran_core::model::{sample_graph_with, strided_steps, train, GranConfig, SampleOptions, TrainOptions};
use gran_core::orderings::{build_family, core_numbers, OrderingKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

pub const MAX_NODES: usize = 60;
pub const MAX_TRAIN_STEPS: usize = 400;
const DEMO_N_MAX: usize = 16;

/// `grid` picks the most square lattice with `size` nodes or fewer;
/// `lobster` resamples until the size is within 25% of `size`; `er` uses
/// edge probability `3 / size`.
pub fn make_graph(kind: &str, size: usize, seed: u64) -> Result<Graph, String> {
    if size == 0 || size > MAX_NODES {
        return Err(format!("size must lie in 1..={MAX_NODES}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        "grid" => {
            let rows = (1..=size).filter(|r| r * r <= size).max().unwrap_or(1);
            Ok(grid_graph(rows, size / rows))
        }
        "lobster" => {
            let (lo, hi) = (size - size / 4, size + size / 4);
            for _ in 0..10_000 {
                let g = random_lobster((size / 4).max(1), 0.7, 0.5, &mut rng);
                if (lo..=hi.min(MAX_NODES)).contains(&g.num_nodes()) {
                    return Ok(g);
                }
            }
            Err(format!("no lobster near {size} nodes"))
        }
        "er" => Ok(erdos_renyi(size, (3.0 / size as f64).min(1.0), &mut rng)),
        _ => Err(format!("unknown graph kind {kind:?}")),
    }
}

fn edges_json(g: &Graph) -> Value {
    json!(g.edges().iter().map(|&(u, v)| [u, v]).collect::<Vec<_>>())
}

/// A graph and its adjacency under each ordering kind. `rows[i]` is the
/// lower-triangular row of the node placed at position `i`, as 0/1 text.
pub fn graph_orderings(kind: &str, size: usize, seed: u64) -> Result<String, String> {
    let g = make_graph(kind, size, seed)?;
    let family = build_family(&g, &OrderingKind::ALL).map_err(|e| e.to_string())?;
    let views: Vec<Value> = OrderingKind::ALL
        .iter()
        .map(|&k| {
            let order = k.order(&g);
            let perm = order.perm();
            let rows: Vec<String> = (0..perm.len())
                .map(|i| {
                    (0..i)
                        .map(|j| if g.has_edge(perm[i], perm[j]) { '1' } else { '0' })
                        .collect()
                })
                .collect();
            json!({ "kind": k.name(), "order": perm, "rows": rows })
        })
        .collect();
    Ok(json!({
        "nodes": g.num_nodes(),
        "edges": edges_json(&g),
        "orderings": views,
        "distinct_orderings": family.len(),
    })
    .to_string())
}

/// Degree histogram, clustering, orbit means, core numbers and the
/// normalized Laplacian spectrum of one graph.
pub fn graph_statistics(kind: &str, size: usize, seed: u64) -> Result<String, String> {
    let g = make_graph(kind, size, seed)?;
    let max_deg = g.degrees().into_iter().max().unwrap_or(0);
    let eig = normalized_laplacian_eigenvalues(&g).map_err(|e| e.to_string())?;
    let clustering = clustering_coefficients(&g);
    let mean_clustering = clustering.iter().sum::<f64>() / clustering.len().max(1) as f64;
    Ok(json!({
        "nodes": g.num_nodes(),
        "edges": edges_json(&g),
        "degree_histogram": degree_histogram(&g, max_deg + 1).mass,
        "clustering": clustering,
        "mean_clustering": mean_clustering,
        "orbit_means": orbit_feature(&g),
        "core_numbers": core_numbers(&g),
        "eigenvalues": eig,
        "connected": g.is_connected(),
        "lobster": is_lobster(&g),
    })
    .to_string())
}

/// Trains a small model on a handful of grids with block size `block`,
/// then samples one `nodes`-node graph with stride `stride`.
pub fn train_and_sample(block: usize, stride: usize, nodes: usize, steps: usize, seed: u64) -> Result<String, String> {
    if steps > MAX_TRAIN_STEPS {
        return Err(format!("at most {MAX_TRAIN_STEPS} training steps"));
    }
    let config = GranConfig {
        block_size: block,
        hidden: 16,
        rounds: 2,
        mixtures: 4,
        n_max: DEMO_N_MAX,
        tie_rounds: false,
        count_all_block_rows: false,
    };
    config.validate().map_err(|e| e.to_string())?;
    if stride == 0 || stride > block {
        return Err(format!("stride must lie in 1..={block}"));
    }
    if nodes == 0 || nodes > DEMO_N_MAX {
        return Err(format!("nodes must lie in 1..={DEMO_N_MAX}"));
    }
    let data = vec![
        grid_graph(2, 3),
        grid_graph(3, 3),
        grid_graph(3, 4),
        grid_graph(4, 4),
        grid_graph(2, 6),
    ];
    let opts = TrainOptions {
        lr: 1e-2,
        steps,
        batch_size: 2,
        val_every: steps.max(1),
        seed,
        orderings: vec![OrderingKind::Bfs],
        record_wall_time: false,
    };
    let out = train(&data, &[], &config, &opts).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampled = sample_graph_with(&out.state.params, &config, &SampleOptions::new(stride, nodes), &mut rng)
        .map_err(|e| e.to_string())?;
    Ok(json!({
        "nodes": sampled.graph.num_nodes(),
        "edges": edges_json(&sampled.graph),
        "invocations": sampled.invocations,
        "expected_invocations": strided_steps(nodes, block, stride),
        "losses": out.log.iter().map(|r| r.train_loss).collect::<Vec<_>>(),
    })
    .to_string())
}

#[wasm_bindgen(js_name = graphOrderings)]
pub fn graph_orderings_js(kind: &str, size: usize, seed: u32) -> Result<String, JsError> {
    graph_orderings(kind, size, seed.into()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = graphStatistics)]
pub fn graph_statistics_js(kind: &str, size: usize, seed: u32) -> Result<String, JsError> {
    graph_statistics(kind, size, seed.into()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = trainAndSample)]
pub fn train_and_sample_js(
    block: usize,
    stride: usize,
    nodes: usize,
    steps: usize,
    seed: u32,
) -> Result<String, JsError> {
    train_and_sample(block, stride, nodes, steps, seed.into()).map_err(|e| JsError::new(&e))
}
