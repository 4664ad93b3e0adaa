use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use super::block::StepBatch;
use super::config::GranConfig;
use super::params::GranParams;
use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::graph::Graph;

/// How edges are drawn from a block distribution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EdgeDecoding {
    /// Draw a component from `α`, then each edge from `Bernoulli(θ_k)`.
    #[default]
    Sample,
    /// Keep an edge when its marginal `Σ_k α_k θ_k` exceeds one half.
    Threshold,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleOptions {
    pub stride: usize,
    pub n_target: usize,
    pub decoding: EdgeDecoding,
    pub largest_component: bool,
}

impl SampleOptions {
    pub fn new(stride: usize, n_target: usize) -> Self {
        Self {
            stride,
            n_target,
            decoding: EdgeDecoding::Sample,
            largest_component: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleOutcome {
    pub graph: Graph,
    /// Forward passes of the model.
    pub invocations: usize,
}

/// Number of model invocations strided generation needs for `n` nodes.
pub fn strided_steps(n: usize, block: usize, stride: usize) -> usize {
    if n <= block {
        1
    } else {
        1 + (n - block).div_ceil(stride)
    }
}

pub fn sample_graph<R: Rng + ?Sized>(
    params: &GranParams,
    config: &GranConfig,
    stride: usize,
    n_target: usize,
    rng: &mut R,
) -> Result<SampleOutcome> {
    sample_graph_with(params, config, &SampleOptions::new(stride, n_target), rng)
}

pub fn sample_graph_with<R: Rng + ?Sized>(
    params: &GranParams,
    config: &GranConfig,
    opts: &SampleOptions,
    rng: &mut R,
) -> Result<SampleOutcome> {
    let b = config.block_size;
    let (s, n) = (opts.stride, opts.n_target);
    if s == 0 || s > b {
        return Err(Error::Config(format!("stride {s} must lie in 1..={b}")));
    }
    if n == 0 || n > config.n_max {
        return Err(Error::Config(format!(
            "target size {n} must lie in 1..={}",
            config.n_max
        )));
    }
    let mut rows: Vec<Vec<u8>> = Vec::with_capacity(n);
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut invocations = 0;
    while rows.len() < n {
        let existing = rows.len();
        let len = b.min(n - existing);
        let keep = if existing + len == n { len } else { s };

        let mut batch = StepBatch::new(b);
        batch.push_block(&edges, existing, len, &[])?;
        let mut tape = Tape::new();
        let pv = params.bind(&mut tape, false);
        let table: Vec<f64> = rows.iter().flatten().map(|&x| f64::from(x)).collect();
        let table = tape.constant(Tensor::matrix(existing, config.n_max, table)?);
        let dist = batch.distribution(&mut tape, &pv, config, table)?;
        invocations += 1;

        let k = match opts.decoding {
            EdgeDecoding::Sample => {
                let w = WeightedIndex::new(&dist.alpha)
                    .map_err(|e| Error::NonFinite(format!("mixture weights {:?}: {e}", dist.alpha)))?;
                Some(w.sample(rng))
            }
            EdgeDecoding::Threshold => None,
        };
        // candidate pairs are ordered row by row: row `existing + p` starts
        // after Σ_{q<p} (existing + q) pairs
        let mut c = 0;
        for p in 0..keep {
            let i = existing + p;
            let mut row = vec![0u8; config.n_max];
            for (j, cell) in row.iter_mut().enumerate().take(i) {
                let th = dist.theta.row_slice(c + j);
                let edge = match k {
                    Some(k) => rng.gen::<f64>() < th[k],
                    None => dist.alpha.iter().zip(th).map(|(a, t)| a * t).sum::<f64>() > 0.5,
                };
                if edge {
                    *cell = 1;
                    edges.push((j, i));
                }
            }
            c += i;
            rows.push(row);
        }
    }
    let mut graph = Graph::new(n, edges)?;
    if opts.largest_component {
        graph = graph.largest_component();
    }
    Ok(SampleOutcome { graph, invocations })
}

/// Uniform draw from the multiset of training graph sizes.
pub fn sample_size<R: Rng + ?Sized>(train: &[Graph], rng: &mut R) -> Result<usize> {
    if train.is_empty() {
        return Err(Error::Config("cannot draw a size from an empty split".into()));
    }
    Ok(train[rng.gen_range(0..train.len())].num_nodes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(b: usize, n_max: usize) -> GranConfig {
        GranConfig {
            block_size: b,
            hidden: 4,
            rounds: 1,
            mixtures: 2,
            n_max,
            tie_rounds: false,
            count_all_block_rows: false,
        }
    }

    #[test]
    fn invocation_counts() {
        let c = cfg(1, 5);
        let p = GranParams::init(&c, &mut ChaCha8Rng::seed_from_u64(0));
        let out = sample_graph(&p, &c, 1, 3, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(out.invocations, 3);
        assert_eq!(out.graph.num_nodes(), 3);

        let c = cfg(4, 12);
        let p = GranParams::init(&c, &mut ChaCha8Rng::seed_from_u64(0));
        let out = sample_graph(&p, &c, 2, 10, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(out.invocations, 4);
        assert_eq!(out.graph.num_nodes(), 10);
        assert_eq!(strided_steps(10, 4, 2), 4);
        assert_eq!(strided_steps(3, 4, 2), 1);
        assert_eq!(strided_steps(11, 4, 2), 5);
    }

    #[test]
    fn saturated_theta_gives_complete_graph() {
        let c = cfg(2, 8);
        let mut p = GranParams::zeros(&c);
        p.theta.layers[2].bias.data_mut().fill(100.0);
        let out = sample_graph(&p, &c, 1, 6, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(out.graph, Graph::complete(6));
        let mut opts = SampleOptions::new(2, 7);
        opts.decoding = EdgeDecoding::Threshold;
        let out = sample_graph_with(&p, &c, &opts, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(out.graph, Graph::complete(7));
    }

    #[test]
    fn bad_stride_or_size() {
        let c = cfg(2, 8);
        let p = GranParams::zeros(&c);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_graph(&p, &c, 3, 4, &mut rng).is_err());
        assert!(sample_graph(&p, &c, 0, 4, &mut rng).is_err());
        assert!(sample_graph(&p, &c, 1, 9, &mut rng).is_err());
        assert!(sample_graph(&p, &c, 1, 0, &mut rng).is_err());
    }

    #[test]
    fn deterministic_under_seed() {
        let c = cfg(2, 10);
        let p = GranParams::init(&c, &mut ChaCha8Rng::seed_from_u64(4));
        let a = sample_graph(&p, &c, 1, 9, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_graph(&p, &c, 1, 9, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn size_draws() {
        let one = vec![Graph::empty(9)];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!((0..20).all(|_| sample_size(&one, &mut rng).unwrap() == 9));
        let split = vec![Graph::empty(4), Graph::empty(4), Graph::empty(8)];
        let fours = (0..30_000)
            .filter(|_| sample_size(&split, &mut rng).unwrap() == 4)
            .count();
        assert!((fours as f64 / 30_000.0 - 2.0 / 3.0).abs() < 0.01);
        assert!(sample_size(&[], &mut rng).is_err());
    }
}
