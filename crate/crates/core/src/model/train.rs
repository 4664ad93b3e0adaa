use std::time::Instant;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::GranConfig;
use super::objective::{loss_and_grad, ordering_log_probs};
use super::params::GranParams;
use crate::autodiff::{log_sum_exp, AdamState};
use crate::error::{Error, Result};
use crate::graph::{Graph, OrderedRows};
use crate::orderings::{build_family, OrderingKind};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOptions {
    pub lr: f64,
    /// Optimizer steps to run in total, counting steps already taken.
    pub steps: usize,
    pub batch_size: usize,
    /// Validate every this many steps and after the last one.
    pub val_every: usize,
    pub seed: u64,
    pub orderings: Vec<OrderingKind>,
    /// Adds elapsed seconds to each log record; logs then differ run to run.
    pub record_wall_time: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            steps: 1000,
            batch_size: 8,
            val_every: 50,
            seed: 0,
            orderings: OrderingKind::ALL.to_vec(),
            record_wall_time: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainRecord {
    pub step: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub wall_time: Option<f64>,
}

impl TrainRecord {
    pub fn to_line(&self) -> String {
        let mut s = format!("step={} train_loss={:.12e}", self.step, self.train_loss);
        if let Some(v) = self.val_loss {
            s.push_str(&format!(" val_loss={v:.12e}"));
        }
        if let Some(w) = self.wall_time {
            s.push_str(&format!(" wall_time={w:.3}"));
        }
        s
    }
}

/// Everything needed to continue a run.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub params: GranParams,
    pub adam: AdamState,
    /// Optimizer steps taken so far.
    pub step: usize,
    pub best_params: GranParams,
    pub best_val: f64,
    pub best_step: usize,
}

impl TrainState {
    pub fn new(config: &GranConfig, opts: &TrainOptions) -> Result<Self> {
        config.validate()?;
        let params = GranParams::init(config, &mut ChaCha8Rng::seed_from_u64(opts.seed));
        let adam = AdamState::new(opts.lr, &params.sizes());
        Ok(Self {
            best_params: params.clone(),
            params,
            adam,
            step: 0,
            best_val: f64::INFINITY,
            best_step: 0,
        })
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub log: Vec<TrainRecord>,
}

/// Ordering-family rows for every graph.
pub fn prepare_rows(graphs: &[Graph], kinds: &[OrderingKind], n_max: usize) -> Result<Vec<Vec<OrderedRows>>> {
    graphs.iter().map(|g| build_family(g, kinds)?.rows(g, n_max)).collect()
}

/// Mean family loss over `rows`.
pub fn mean_family_loss(rows: &[Vec<OrderedRows>], params: &GranParams, config: &GranConfig) -> Result<f64> {
    let losses = map_graphs(rows, |r| Ok(-log_sum_exp(&ordering_log_probs(r, params, config)?)))?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

#[cfg(feature = "parallel")]
fn map_graphs<T: Send>(rows: &[Vec<OrderedRows>], f: impl Fn(&[OrderedRows]) -> Result<T> + Sync) -> Result<Vec<T>> {
    use rayon::prelude::*;
    rows.par_iter().map(|r| f(r)).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_graphs<T: Send>(rows: &[Vec<OrderedRows>], f: impl Fn(&[OrderedRows]) -> Result<T> + Sync) -> Result<Vec<T>> {
    rows.iter().map(|r| f(r)).collect()
}

/// Trains from a fresh initialization.
pub fn train(train: &[Graph], val: &[Graph], config: &GranConfig, opts: &TrainOptions) -> Result<TrainOutcome> {
    let state = TrainState::new(config, opts)?;
    train_from(state, train, val, config, opts, |_, _| Ok(()))
}

/// Runs optimizer steps until `opts.steps`, calling `on_record` after each.
/// Batches depend only on the seed and the step index, so a resumed run
/// retraces the uninterrupted one.
pub fn train_from(
    mut state: TrainState,
    train: &[Graph],
    val: &[Graph],
    config: &GranConfig,
    opts: &TrainOptions,
    mut on_record: impl FnMut(&TrainRecord, &TrainState) -> Result<()>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    if opts.batch_size == 0 || opts.val_every == 0 {
        return Err(Error::Config(
            "batch size and validation interval must be positive".into(),
        ));
    }
    let train_rows = prepare_rows(train, &opts.orderings, config.n_max)?;
    let val_rows = prepare_rows(val, &opts.orderings, config.n_max)?;
    state.adam.lr = opts.lr;
    let start = opts.record_wall_time.then(Instant::now);
    let mut log = Vec::new();
    while state.step < opts.steps {
        let step = state.step;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(step as u64 + 1);
        let picks = index::sample(&mut rng, train_rows.len(), opts.batch_size.min(train_rows.len())).into_vec();
        let batch: Vec<Vec<OrderedRows>> = picks.iter().map(|&i| train_rows[i].clone()).collect();
        let params = &state.params;
        let results = map_graphs(&batch, |r| loss_and_grad(r, params, config))?;

        let scale = 1.0 / results.len() as f64;
        let mut loss = 0.0;
        let mut grads: Vec<Vec<f64>> = params.sizes().into_iter().map(|n| vec![0.0; n]).collect();
        for (&gi, (l, g)) in picks.iter().zip(&results) {
            if !l.is_finite() {
                return Err(Error::NonFinite(format!(
                    "step {step}: loss {l} on training graph {gi} ({} nodes)",
                    train[gi].num_nodes()
                )));
            }
            loss += l * scale;
            for (acc, part) in grads.iter_mut().zip(g) {
                for (a, &x) in acc.iter_mut().zip(part) {
                    *a += x * scale;
                }
            }
        }
        if let Some(bad) = grads.iter().flatten().find(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("step {step}: gradient entry {bad}")));
        }
        state.adam.step(&mut state.params.leaves_mut(), &grads)?;
        state.step += 1;

        let val_loss = if state.step.is_multiple_of(opts.val_every) || state.step == opts.steps {
            let v = if val_rows.is_empty() {
                mean_family_loss(&train_rows, &state.params, config)?
            } else {
                mean_family_loss(&val_rows, &state.params, config)?
            };
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("step {}: validation loss {v}", state.step)));
            }
            if v < state.best_val {
                state.best_val = v;
                state.best_step = state.step;
                state.best_params = state.params.clone();
            }
            Some(v)
        } else {
            None
        };
        let record = TrainRecord {
            step: state.step,
            train_loss: loss,
            val_loss,
            wall_time: start.map(|t| t.elapsed().as_secs_f64()),
        };
        on_record(&record, &state)?;
        log.push(record);
    }
    Ok(TrainOutcome { state, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::grid_graph;

    fn small() -> GranConfig {
        GranConfig {
            block_size: 1,
            hidden: 6,
            rounds: 1,
            mixtures: 2,
            n_max: 6,
            tie_rounds: false,
            count_all_block_rows: false,
        }
    }

    fn opts(steps: usize, lr: f64) -> TrainOptions {
        TrainOptions {
            lr,
            steps,
            batch_size: 2,
            val_every: 2,
            seed: 11,
            orderings: vec![OrderingKind::Default, OrderingKind::Bfs],
            record_wall_time: false,
        }
    }

    fn data() -> Vec<Graph> {
        vec![grid_graph(2, 2), grid_graph(2, 3), Graph::path(5)]
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let c = small();
        let o = opts(5, 0.0);
        let init = TrainState::new(&c, &o).unwrap().params;
        let out = train(&data(), &[], &c, &o).unwrap();
        assert_eq!(out.state.params, init);
        assert_eq!(out.log.len(), 5);
    }

    #[test]
    fn same_seed_same_log() {
        let c = small();
        let o = opts(4, 1e-2);
        let a = train(&data(), &data()[..1], &c, &o).unwrap();
        let b = train(&data(), &data()[..1], &c, &o).unwrap();
        let lines = |l: &[TrainRecord]| l.iter().map(TrainRecord::to_line).collect::<Vec<_>>();
        assert_eq!(lines(&a.log), lines(&b.log));
        assert_eq!(a.state.params, b.state.params);
    }

    #[test]
    fn resume_matches_uninterrupted() {
        let c = small();
        let full = train(&data(), &[], &c, &opts(6, 1e-2)).unwrap();
        let half = train(&data(), &[], &c, &opts(3, 1e-2)).unwrap();
        let rest = train_from(half.state, &data(), &[], &c, &opts(6, 1e-2), |_, _| Ok(())).unwrap();
        assert_eq!(rest.state.params, full.state.params);
        assert_eq!(rest.log, full.log[3..]);
    }

    #[test]
    fn best_snapshot_tracks_validation() {
        let c = small();
        let out = train(&data(), &data()[2..], &c, &opts(6, 1e-2)).unwrap();
        let vals: Vec<(usize, f64)> = out.log.iter().filter_map(|r| r.val_loss.map(|v| (r.step, v))).collect();
        let (step, best) = vals
            .iter()
            .copied()
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        assert_eq!(out.state.best_step, step);
        assert_eq!(out.state.best_val, best);
        let rows = prepare_rows(&data()[2..], &opts(1, 0.0).orderings, 6).unwrap();
        assert_eq!(mean_family_loss(&rows, &out.state.best_params, &c).unwrap(), best);
    }

    #[test]
    fn rejects_oversized_graph_and_empty_split() {
        let c = small();
        assert!(train(&[Graph::path(7)], &[], &c, &opts(1, 1e-3)).is_err());
        assert!(train(&[], &[], &c, &opts(1, 1e-3)).is_err());
    }
}
