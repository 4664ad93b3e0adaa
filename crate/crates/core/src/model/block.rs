//! One generation step: the augmented graph around a block of new rows, the
//! attentive GNN over it, and the mixture-of-Bernoulli output.
//!
//! Training packs every step of an ordering into one disjoint union
//! ([`StepBatch`]) so a single tape covers the whole graph.

use std::sync::Arc;

use super::config::{GranConfig, THETA_CLAMP};
use super::params::{GranParamsOf, RoundParams};
use crate::autodiff::{log_sum_exp, softmax, Index, Mlp, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::OrderedRows;

/// Geometry of one generation step.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockContext {
    /// Step index.
    pub t: usize,
    /// Nodes generated before this step; they are `0..existing`.
    pub existing: usize,
    /// The new nodes, `existing..existing + len`.
    pub block_nodes: Vec<usize>,
    /// `(i, j)` with `i` a block node and `j < i`.
    pub candidate_pairs: Vec<(usize, usize)>,
    /// `[existing + len, B]`: zero rows for existing nodes, one-hot block
    /// position for the new ones.
    pub mask: Tensor,
}

/// Mixture weights and per-pair edge probabilities for one block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockDistribution {
    pub alpha: Vec<f64>,
    /// `[pairs, K]`.
    pub theta: Tensor,
}

/// Union of the real edges among existing nodes and the augmented edges
/// (every pair involving a block node). Edges come back as `(u, v)`, `u < v`.
pub fn build_augmented_graph(
    existing_edges: &[(usize, usize)],
    existing_count: usize,
    block_len: usize,
    mask_width: usize,
) -> Result<(Vec<(usize, usize)>, BlockContext)> {
    if block_len == 0 || block_len > mask_width {
        return Err(Error::Config(format!(
            "block of {block_len} rows with mask width {mask_width}"
        )));
    }
    let total = existing_count + block_len;
    let mut edges = Vec::with_capacity(existing_edges.len() + block_len * existing_count + block_len * block_len / 2);
    for &(u, v) in existing_edges {
        let (u, v) = (u.min(v), u.max(v));
        if u == v || v >= existing_count {
            return Err(Error::InvalidGraph(format!(
                "edge ({u}, {v}) is not among the {existing_count} existing nodes"
            )));
        }
        edges.push((u, v));
    }
    let mut candidate_pairs = Vec::new();
    for i in existing_count..total {
        for j in 0..i {
            edges.push((j, i));
            candidate_pairs.push((i, j));
        }
    }
    let mut mask = Tensor::zeros(&[total, mask_width]);
    for p in 0..block_len {
        mask.data_mut()[(existing_count + p) * mask_width + p] = 1.0;
    }
    let ctx = BlockContext {
        t: 0,
        existing: existing_count,
        block_nodes: (existing_count..total).collect(),
        candidate_pairs,
        mask,
    };
    Ok((edges, ctx))
}

/// Padded rows of the first `existing` nodes as an `[existing, n_max]` matrix.
pub(crate) fn rows_table(rows: &OrderedRows, existing: usize) -> Tensor {
    let n_max = rows.n_max();
    let mut data = Vec::with_capacity(existing * n_max);
    for row in &rows.rows()[..existing] {
        data.extend(row.iter().map(|&x| f64::from(x)));
    }
    Tensor::matrix(existing, n_max, data).expect("row table shape")
}

/// `W·L_i + b` for the first `existing` rows, zero for `block_len` new nodes.
pub fn init_node_embeddings(
    tape: &mut Tape,
    params: &GranParamsOf<Var>,
    rows: &OrderedRows,
    existing: usize,
    block_len: usize,
) -> Result<Var> {
    let fan_in = tape.shape(params.embed.weight)[0];
    if rows.n_max() != fan_in {
        return Err(Error::shape(
            "init_node_embeddings",
            format!("rows padded to {}, embedding expects {fan_in}", rows.n_max()),
        ));
    }
    if existing > rows.num_rows() {
        return Err(Error::shape(
            "init_node_embeddings",
            format!("{existing} existing nodes but only {} rows", rows.num_rows()),
        ));
    }
    let table = tape.constant(rows_table(rows, existing));
    let index: Vec<Option<usize>> = (0..existing).map(Some).chain((0..block_len).map(|_| None)).collect();
    embed_nodes(tape, params, table, &index)
}

/// Rows of `table` embedded linearly; `None` entries become zero rows.
fn embed_nodes(tape: &mut Tape, params: &GranParamsOf<Var>, table: Var, index: &[Option<usize>]) -> Result<Var> {
    let h = tape.shape(params.embed.weight)[1];
    let n_rows = tape.shape(table)[0];
    if n_rows == 0 {
        return Ok(tape.constant(Tensor::zeros(&[index.len(), h])));
    }
    let e = params.embed.forward(tape, table)?;
    let zero = tape.constant(Tensor::zeros(&[1, h]));
    let e = tape.concat(&[e, zero], 0)?;
    let idx: Index = index.iter().map(|i| i.unwrap_or(n_rows)).collect();
    tape.gather(e, &idx)
}

/// `mlp(x_a − x_b)` for each index pair, with the first (linear) layer
/// applied per node before the difference.
fn pairwise_mlp(tape: &mut Tape, mlp: &Mlp<Var>, feats: Var, a: &Index, b: &Index) -> Result<Var> {
    let first = &mlp.layers[0];
    let proj = tape.matmul(feats, first.weight)?;
    let pa = tape.gather(proj, a)?;
    let pb = tape.gather(proj, b)?;
    let d = tape.sub(pa, pb)?;
    let mut h = tape.add(d, first.bias)?;
    for layer in &mlp.layers[1..] {
        h = tape.relu(h);
        h = layer.forward(tape, h)?;
    }
    Ok(h)
}

fn directed(edges: &[(usize, usize)]) -> (Index, Index) {
    let mut recv = Vec::with_capacity(2 * edges.len());
    let mut send = Vec::with_capacity(2 * edges.len());
    for &(u, v) in edges {
        recv.push(u);
        send.push(v);
        recv.push(v);
        send.push(u);
    }
    (recv.into(), send.into())
}

fn round_on_pairs(
    tape: &mut Tape,
    round: &RoundParams<Var>,
    h: Var,
    mask: Var,
    recv: &Index,
    send: &Index,
) -> Result<Var> {
    let (n, width) = tape.value(h).dims2("message_passing_round")?;
    let agg = if recv.is_empty() {
        tape.constant(Tensor::zeros(&[n, width]))
    } else {
        let m = pairwise_mlp(tape, &round.msg, h, recv, send)?;
        let hx = tape.concat(&[h, mask], 1)?;
        let a = pairwise_mlp(tape, &round.att, hx, recv, send)?;
        let a = tape.sigmoid(a);
        let am = tape.mul(m, a)?;
        tape.segment_sum(am, recv, n)?
    };
    round.gru.forward(tape, h, agg)
}

/// One round over the undirected `edges`; every node aggregates attention
/// weighted messages from its whole neighbourhood, then updates by GRU.
pub fn message_passing_round(
    tape: &mut Tape,
    round: &RoundParams<Var>,
    h: Var,
    edges: &[(usize, usize)],
    mask: Var,
) -> Result<Var> {
    let (n, _) = tape.value(h).dims2("message_passing_round")?;
    let (mr, _) = tape.value(mask).dims2("message_passing_round")?;
    if mr != n {
        return Err(Error::shape(
            "message_passing_round",
            format!("{n} node states, {mr} mask rows"),
        ));
    }
    if let Some(&(u, v)) = edges.iter().find(|&&(u, v)| u >= n || v >= n) {
        return Err(Error::shape(
            "message_passing_round",
            format!("edge ({u}, {v}) with {n} nodes"),
        ));
    }
    let (recv, send) = directed(edges);
    round_on_pairs(tape, round, h, mask, &recv, &send)
}

fn pair_index(pairs: &[(usize, usize)]) -> (Index, Index) {
    (pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1).collect())
}

/// Mixture weights (sum-pooled over candidate pairs, then softmax) and
/// per-pair Bernoulli parameters.
pub fn output_distribution(
    tape: &mut Tape,
    params: &GranParamsOf<Var>,
    h: Var,
    ctx: &BlockContext,
) -> Result<BlockDistribution> {
    let k = tape.shape(params.alpha.layers[2].weight)[1];
    if ctx.candidate_pairs.is_empty() {
        return Ok(BlockDistribution {
            alpha: vec![1.0 / k as f64; k],
            theta: Tensor::zeros(&[0, k]),
        });
    }
    let (a, b) = pair_index(&ctx.candidate_pairs);
    let logits = pairwise_mlp(tape, &params.alpha, h, &a, &b)?;
    let pooled = tape.segment_sum(logits, &zeros_index(a.len()), 1)?;
    let alpha = softmax(tape.value(pooled).data());
    let z = pairwise_mlp(tape, &params.theta, h, &a, &b)?;
    let theta = tape.sigmoid(z);
    let mut theta = tape.value(theta).clone().with_grad(false);
    for x in theta.data_mut() {
        *x = x.clamp(THETA_CLAMP, 1.0 - THETA_CLAMP);
    }
    Ok(BlockDistribution { alpha, theta })
}

fn zeros_index(n: usize) -> Index {
    vec![0usize; n].into()
}

/// `log Σ_k α_k Π_pairs θ^y (1−θ)^(1−y)`.
pub fn block_log_prob(dist: &BlockDistribution, observed: &[bool]) -> Result<f64> {
    let (pairs, k) = dist.theta.dims2("block_log_prob")?;
    if observed.len() != pairs {
        return Err(Error::shape(
            "block_log_prob",
            format!("{} observations for {pairs} candidate pairs", observed.len()),
        ));
    }
    if dist.alpha.len() != k {
        return Err(Error::shape(
            "block_log_prob",
            format!("{} weights for {k} components", dist.alpha.len()),
        ));
    }
    let terms: Vec<f64> = (0..k)
        .map(|c| {
            let ll: f64 = observed
                .iter()
                .enumerate()
                .map(|(p, &y)| {
                    let th = dist.theta.get2(p, c);
                    if y {
                        th.ln()
                    } else {
                        (1.0 - th).ln()
                    }
                })
                .sum();
            dist.alpha[c].ln() + ll
        })
        .collect();
    Ok(log_sum_exp(&terms))
}

/// Many blocks packed as a disjoint union of augmented graphs.
#[derive(Clone, Debug, Default)]
pub struct StepBatch {
    width: usize,
    /// Source row in the embedding table, `None` for block nodes.
    embed: Vec<Option<usize>>,
    mask: Vec<f64>,
    recv: Vec<usize>,
    send: Vec<usize>,
    cand_i: Vec<usize>,
    cand_j: Vec<usize>,
    cand_block: Vec<usize>,
    obs_i: Vec<usize>,
    obs_j: Vec<usize>,
    obs_block: Vec<usize>,
    obs_y: Vec<f64>,
    num_blocks: usize,
}

/// Frozen index lists for the forward pass.
struct BatchIndex {
    recv: Index,
    send: Index,
    cand_i: Index,
    cand_j: Index,
    cand_block: Index,
    obs_i: Index,
    obs_j: Index,
    obs_block: Index,
}

impl StepBatch {
    pub fn new(mask_width: usize) -> Self {
        Self {
            width: mask_width,
            ..Self::default()
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.embed.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.num_blocks
    }

    pub fn num_directed_pairs(&self) -> usize {
        self.recv.len()
    }

    /// Appends one block. `existing_edges` live on `0..existing`; existing
    /// node `v` embeds row `v` of the table. `observed` lists `(row, labels)`
    /// for the block rows that are scored, with one label per `j < row`.
    pub fn push_block(
        &mut self,
        existing_edges: &[(usize, usize)],
        existing: usize,
        block_len: usize,
        observed: &[(usize, Vec<bool>)],
    ) -> Result<usize> {
        let (edges, ctx) = build_augmented_graph(existing_edges, existing, block_len, self.width)?;
        let base = self.num_nodes();
        let block = self.num_blocks;
        self.num_blocks += 1;
        self.embed.extend((0..existing).map(Some));
        self.embed.extend((0..block_len).map(|_| None));
        self.mask.extend_from_slice(ctx.mask.data());
        for (u, v) in edges {
            self.recv.push(base + u);
            self.send.push(base + v);
            self.recv.push(base + v);
            self.send.push(base + u);
        }
        for &(i, j) in &ctx.candidate_pairs {
            self.cand_i.push(base + i);
            self.cand_j.push(base + j);
            self.cand_block.push(block);
        }
        for (row, labels) in observed {
            if *row < existing || *row >= existing + block_len || labels.len() != *row {
                return Err(Error::shape(
                    "push_block",
                    format!(
                        "row {row} with {} labels in block {existing}..{}",
                        labels.len(),
                        existing + block_len
                    ),
                ));
            }
            for (j, &y) in labels.iter().enumerate() {
                self.obs_i.push(base + row);
                self.obs_j.push(base + j);
                self.obs_block.push(block);
                self.obs_y.push(if y { 1.0 } else { 0.0 });
            }
        }
        Ok(block)
    }

    fn index(&self) -> BatchIndex {
        let arc = |v: &Vec<usize>| -> Index { Arc::from(v.as_slice()) };
        BatchIndex {
            recv: arc(&self.recv),
            send: arc(&self.send),
            cand_i: arc(&self.cand_i),
            cand_j: arc(&self.cand_j),
            cand_block: arc(&self.cand_block),
            obs_i: arc(&self.obs_i),
            obs_j: arc(&self.obs_j),
            obs_block: arc(&self.obs_block),
        }
    }

    /// Final node states after all rounds.
    fn node_states(
        &self,
        tape: &mut Tape,
        params: &GranParamsOf<Var>,
        config: &GranConfig,
        table: Var,
        idx: &BatchIndex,
    ) -> Result<Var> {
        let n = self.num_nodes();
        let mut h = embed_nodes(tape, params, table, &self.embed)?;
        let mask = tape.constant(Tensor::matrix(n, self.width, self.mask.clone())?);
        for r in 0..config.rounds {
            h = round_on_pairs(tape, params.round(r), h, mask, &idx.recv, &idx.send)?;
        }
        Ok(h)
    }

    /// `[blocks, K]` log mixture weights.
    fn log_alpha(&self, tape: &mut Tape, params: &GranParamsOf<Var>, h: Var, idx: &BatchIndex) -> Result<Var> {
        let logits = pairwise_mlp(tape, &params.alpha, h, &idx.cand_i, &idx.cand_j)?;
        let pooled = tape.segment_sum(logits, &idx.cand_block, self.num_blocks)?;
        let lse = tape.log_sum_exp(pooled, 1)?;
        tape.sub(pooled, lse)
    }

    /// Sum over blocks of the log-probability of the observed rows, as `[1, 1]`.
    pub fn log_prob(
        &self,
        tape: &mut Tape,
        params: &GranParamsOf<Var>,
        config: &GranConfig,
        table: Var,
    ) -> Result<Var> {
        if self.obs_y.is_empty() {
            return Ok(tape.constant(Tensor::zeros(&[1, 1])));
        }
        let idx = self.index();
        let h = self.node_states(tape, params, config, table, &idx)?;
        let log_alpha = self.log_alpha(tape, params, h, &idx)?;
        let z = pairwise_mlp(tape, &params.theta, h, &idx.obs_i, &idx.obs_j)?;
        let p1 = tape.sigmoid(z);
        let p1 = tape.clamp(p1, THETA_CLAMP, 1.0 - THETA_CLAMP);
        let log_p1 = tape.log(p1);
        let nz = tape.scale(z, -1.0);
        let p0 = tape.sigmoid(nz);
        let p0 = tape.clamp(p0, THETA_CLAMP, 1.0 - THETA_CLAMP);
        let log_p0 = tape.log(p0);
        let o = self.obs_y.len();
        let y = tape.constant(Tensor::matrix(o, 1, self.obs_y.clone())?);
        let ybar = tape.constant(Tensor::matrix(o, 1, self.obs_y.iter().map(|y| 1.0 - y).collect())?);
        let a = tape.mul(log_p1, y)?;
        let b = tape.mul(log_p0, ybar)?;
        let ll = tape.add(a, b)?;
        let per_block = tape.segment_sum(ll, &idx.obs_block, self.num_blocks)?;
        let joint = tape.add(per_block, log_alpha)?;
        let lp = tape.log_sum_exp(joint, 1)?;
        tape.segment_sum(lp, &zeros_index(self.num_blocks), 1)
    }

    /// Mixture weights and `θ` over every candidate pair, for a batch of one
    /// block evaluated without gradients.
    pub fn distribution(
        &self,
        tape: &mut Tape,
        params: &GranParamsOf<Var>,
        config: &GranConfig,
        table: Var,
    ) -> Result<BlockDistribution> {
        if self.num_blocks != 1 {
            return Err(Error::shape(
                "distribution",
                format!("{} blocks in the batch", self.num_blocks),
            ));
        }
        let k = config.mixtures;
        if self.cand_i.is_empty() {
            return Ok(BlockDistribution {
                alpha: vec![1.0 / k as f64; k],
                theta: Tensor::zeros(&[0, k]),
            });
        }
        let idx = self.index();
        let h = self.node_states(tape, params, config, table, &idx)?;
        let log_alpha = self.log_alpha(tape, params, h, &idx)?;
        let alpha = tape.value(log_alpha).data().iter().map(|x| x.exp()).collect();
        let z = pairwise_mlp(tape, &params.theta, h, &idx.cand_i, &idx.cand_j)?;
        let theta = tape.sigmoid(z);
        Ok(BlockDistribution {
            alpha,
            theta: tape.value(theta).clone().with_grad(false),
        })
    }
}

/// Every stride-1 training step of one ordering, skipping steps that score
/// no pair.
pub fn teacher_forced_batch(rows: &OrderedRows, config: &GranConfig) -> Result<StepBatch> {
    let n = rows.num_rows();
    let b = config.block_size;
    let mut by_row: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (i, row) in rows.rows().iter().enumerate() {
        for j in 0..i {
            if row[j] != 0 {
                by_row[i].push((j, i));
            }
        }
    }
    let labels = |i: usize| -> Vec<bool> { rows.rows()[i][..i].iter().map(|&x| x != 0).collect() };
    let mut batch = StepBatch::new(b);
    let mut existing_edges: Vec<(usize, usize)> = Vec::new();
    for t in 0..n {
        let len = b.min(n - t);
        let scored: Vec<usize> = if config.count_all_block_rows {
            (t..t + len).collect()
        } else {
            vec![t]
        };
        let observed: Vec<(usize, Vec<bool>)> = scored.into_iter().filter(|&i| i > 0).map(|i| (i, labels(i))).collect();
        if !observed.is_empty() {
            batch.push_block(&existing_edges, t, len, &observed)?;
        }
        existing_edges.extend_from_slice(&by_row[t]);
    }
    Ok(batch)
}

/// `log p(G, π)` for one ordering on `tape`, as `[1, 1]`.
pub fn graph_log_prob_var(
    tape: &mut Tape,
    params: &GranParamsOf<Var>,
    rows: &OrderedRows,
    config: &GranConfig,
) -> Result<Var> {
    if rows.n_max() != config.n_max {
        return Err(Error::shape(
            "graph_log_prob",
            format!("rows padded to {}, model built for {}", rows.n_max(), config.n_max),
        ));
    }
    let batch = teacher_forced_batch(rows, config)?;
    let table = tape.constant(rows_table(rows, rows.num_rows()));
    batch.log_prob(tape, params, config, table)
}
