use super::block::graph_log_prob_var;
use super::config::GranConfig;
use super::params::GranParams;
use crate::autodiff::{log_sum_exp, softmax, Tape};
use crate::error::{Error, Result};
use crate::graph::{Graph, OrderedRows};
use crate::orderings::OrderingFamily;

/// `log p(G, π)` under teacher forcing with training stride 1.
pub fn graph_log_prob(rows: &OrderedRows, params: &GranParams, config: &GranConfig) -> Result<f64> {
    let mut tape = Tape::new();
    let pv = params.bind(&mut tape, false);
    let lp = graph_log_prob_var(&mut tape, &pv, rows, config)?;
    Ok(tape.value(lp).data()[0])
}

fn family_rows(graph: &Graph, family: &OrderingFamily, config: &GranConfig) -> Result<Vec<OrderedRows>> {
    if family.is_empty() {
        return Err(Error::InvalidOrdering("empty ordering family".into()));
    }
    family.rows(graph, config.n_max)
}

/// Per-ordering log-joints `ℓ_π`, in family order.
pub fn ordering_log_probs(rows: &[OrderedRows], params: &GranParams, config: &GranConfig) -> Result<Vec<f64>> {
    rows.iter().map(|r| graph_log_prob(r, params, config)).collect()
}

/// `−log Σ_π exp ℓ_π` over the family.
pub fn family_loss(graph: &Graph, family: &OrderingFamily, params: &GranParams, config: &GranConfig) -> Result<f64> {
    let rows = family_rows(graph, family, config)?;
    Ok(-log_sum_exp(&ordering_log_probs(&rows, params, config)?))
}

/// `q*(π) ∝ exp ℓ_π` over the family.
pub fn posterior_over_orderings(
    graph: &Graph,
    family: &OrderingFamily,
    params: &GranParams,
    config: &GranConfig,
) -> Result<Vec<f64>> {
    let rows = family_rows(graph, family, config)?;
    Ok(softmax(&ordering_log_probs(&rows, params, config)?))
}

/// Family loss and its gradient, one vector per parameter leaf in visit
/// order, from precomputed ordering rows.
pub fn loss_and_grad(rows: &[OrderedRows], params: &GranParams, config: &GranConfig) -> Result<(f64, Vec<Vec<f64>>)> {
    if rows.is_empty() {
        return Err(Error::InvalidOrdering("empty ordering family".into()));
    }
    let mut tape = Tape::new();
    let pv = params.bind(&mut tape, true);
    let terms = rows
        .iter()
        .map(|r| graph_log_prob_var(&mut tape, &pv, r, config))
        .collect::<Result<Vec<_>>>()?;
    let joint = tape.concat(&terms, 1)?;
    let lse = tape.log_sum_exp(joint, 1)?;
    let total = tape.sum(lse);
    let loss = tape.scale(total, -1.0);
    let value = tape.value(loss).item();
    let grads = tape.backward(loss)?;
    let out = pv
        .leaves()
        .into_iter()
        .map(|&v| {
            grads
                .get(v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; tape.value(v).numel()])
        })
        .collect();
    Ok((value, out))
}
