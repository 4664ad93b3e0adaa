use super::config::GranConfig;
use super::params::GranParams;
use super::train::TrainState;
use crate::autodiff::{AdamState, Checkpoint, Tensor};
use crate::error::{Error, Result};

const MODEL_PREFIX: &str = "model.";

/// Config under `model.*` meta keys, weights under `param.*`.
pub fn model_checkpoint(config: &GranConfig, params: &GranParams) -> Checkpoint {
    Checkpoint {
        meta: config
            .to_pairs()
            .into_iter()
            .map(|(k, v)| (format!("{MODEL_PREFIX}{k}"), v))
            .collect(),
        tensors: params
            .named()
            .into_iter()
            .map(|(n, t)| (format!("param.{n}"), t))
            .collect(),
    }
}

pub fn load_model(ck: &Checkpoint) -> Result<(GranConfig, GranParams)> {
    let pairs: Vec<(String, String)> = ck
        .meta
        .iter()
        .filter_map(|(k, v)| k.strip_prefix(MODEL_PREFIX).map(|k| (k.to_string(), v.clone())))
        .collect();
    let config = GranConfig::from_pairs(&pairs)?;
    let params = GranParams::from_checkpoint(&config, ck)?;
    Ok((config, params))
}

/// Current weights plus optimizer moments and run bookkeeping.
pub fn state_checkpoint(config: &GranConfig, state: &TrainState) -> Checkpoint {
    let mut ck = model_checkpoint(config, &state.params);
    let a = &state.adam;
    ck.meta.extend([
        ("train.step".to_string(), state.step.to_string()),
        ("train.best_step".to_string(), state.best_step.to_string()),
        ("train.best_val".to_string(), format!("{:e}", state.best_val)),
        ("adam.t".to_string(), a.t.to_string()),
        ("adam.lr".to_string(), format!("{:e}", a.lr)),
    ]);
    for (i, (m, v)) in a.m.iter().zip(&a.v).enumerate() {
        ck.tensors.push((format!("adam.m.{i}"), Tensor::row(m.clone())));
        ck.tensors.push((format!("adam.v.{i}"), Tensor::row(v.clone())));
    }
    ck
}

/// Rebuilds a run from a state checkpoint and the best-weights checkpoint.
pub fn load_state(last: &Checkpoint, best: &Checkpoint) -> Result<(GranConfig, TrainState)> {
    let (config, params) = load_model(last)?;
    let (best_config, best_params) = load_model(best)?;
    if best_config != config {
        return Err(Error::Config("best and last checkpoints disagree on the model".into()));
    }
    let meta = |k: &str| -> Result<&str> {
        last.meta_value(k)
            .ok_or_else(|| Error::Config(format!("checkpoint has no {k} entry")))
    };
    let bad = |k: &str| Error::Config(format!("checkpoint entry {k} is malformed"));
    let step: usize = meta("train.step")?.parse().map_err(|_| bad("train.step"))?;
    let best_step: usize = meta("train.best_step")?.parse().map_err(|_| bad("train.best_step"))?;
    let best_val: f64 = meta("train.best_val")?.parse().map_err(|_| bad("train.best_val"))?;
    let lr: f64 = meta("adam.lr")?.parse().map_err(|_| bad("adam.lr"))?;
    let mut adam = AdamState::new(lr, &params.sizes());
    adam.t = meta("adam.t")?.parse().map_err(|_| bad("adam.t"))?;
    for i in 0..adam.m.len() {
        for (name, slot) in [("m", &mut adam.m[i]), ("v", &mut adam.v[i])] {
            let key = format!("adam.{name}.{i}");
            let t = last
                .tensor(&key)
                .ok_or_else(|| Error::Config(format!("checkpoint has no {key}")))?;
            if t.numel() != slot.len() {
                return Err(bad(&key));
            }
            slot.copy_from_slice(t.data());
        }
    }
    Ok((
        config,
        TrainState {
            params,
            adam,
            step,
            best_params,
            best_val,
            best_step,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::grid_graph;
    use crate::model::train::{train, TrainOptions};
    use crate::orderings::OrderingKind;
    use std::path::Path;

    #[test]
    fn state_roundtrip() {
        let mut c = GranConfig::desk(4);
        c.hidden = 3;
        c.rounds = 1;
        c.mixtures = 2;
        let o = TrainOptions {
            lr: 1e-2,
            steps: 2,
            batch_size: 1,
            val_every: 1,
            seed: 3,
            orderings: vec![OrderingKind::Default],
            record_wall_time: false,
        };
        let out = train(&[grid_graph(2, 2)], &[], &c, &o).unwrap();
        let last = state_checkpoint(&c, &out.state);
        let best = model_checkpoint(&c, &out.state.best_params);
        let last = Checkpoint::from_bytes(&last.to_bytes(), Path::new("mem")).unwrap();
        let (c2, s) = load_state(&last, &best).unwrap();
        assert_eq!(c2, c);
        assert_eq!(s.params, out.state.params);
        assert_eq!(s.adam, out.state.adam);
        assert_eq!(s.best_params, out.state.best_params);
        assert_eq!(
            (s.step, s.best_step, s.best_val),
            (2, out.state.best_step, out.state.best_val)
        );
        let (_, p) = load_model(&best).unwrap();
        assert_eq!(p, out.state.best_params);
    }

    #[test]
    fn wrong_shapes_are_rejected() {
        let c = GranConfig::desk(4);
        let mut ck = model_checkpoint(&c, &GranParams::zeros(&c));
        ck.tensors[0].1 = Tensor::row(vec![0.0; 3]);
        assert!(load_model(&ck).is_err());
        ck.meta.retain(|(k, _)| k != "model.hidden");
        assert!(load_model(&ck).is_err());
    }
}
