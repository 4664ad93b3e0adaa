use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use gran_core::autodiff::Checkpoint;
use gran_core::graph::{
    er_dataset, er_mle_fit, erdos_renyi, grid_dataset, lobster_dataset, split_dataset, Graph, GraphDataset,
};
use gran_core::io::{graph_file_name, read_dataset, write_dataset};
use gran_core::metrics::evaluate as evaluate_metrics;
use gran_core::model::{
    load_model, load_state, model_checkpoint, sample_graph_with, sample_size, state_checkpoint, train_from, GranParams,
    TrainRecord, TrainState,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::UsageError;

pub const BEST: &str = "best.ckpt";
pub const LAST: &str = "last.ckpt";
pub const TRAIN_LOG: &str = "train_log.txt";
pub const INVOCATIONS: &str = "invocations.txt";
pub const REPORT: &str = "report.txt";
pub const ER_FIT: &str = "er_fit.txt";

fn read(dir: &Path) -> Result<GraphDataset> {
    read_dataset(dir).with_context(|| format!("cannot read dataset {}", dir.display()))
}

fn write(ds: &GraphDataset, dir: &Path) -> Result<()> {
    write_dataset(ds, dir).with_context(|| format!("cannot write dataset {}", dir.display()))
}

fn summary(ds: &GraphDataset) -> String {
    let nodes: Vec<usize> = ds.graphs.iter().map(Graph::num_nodes).collect();
    let edges: Vec<usize> = ds.graphs.iter().map(Graph::num_edges).collect();
    let mean = edges.iter().sum::<usize>() as f64 / edges.len().max(1) as f64;
    format!(
        "{}: {} graphs, nodes {}..={}, edges min {} mean {:.2} max {}",
        ds.name,
        ds.len(),
        nodes.iter().min().unwrap_or(&0),
        nodes.iter().max().unwrap_or(&0),
        edges.iter().min().unwrap_or(&0),
        mean,
        edges.iter().max().unwrap_or(&0),
    )
}

/// Writes to a sibling temp file and renames, so a crash leaves the old file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("cannot write {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("cannot write {}", path.display()))
}

pub fn gen_data(cfg: &RunConfig, out: &Path) -> Result<()> {
    let (count, lo, hi, seed) = (
        cfg.dataset_count,
        cfg.dataset_min_nodes,
        cfg.dataset_max_nodes,
        cfg.dataset_seed,
    );
    let ds = match cfg.dataset_kind.as_str() {
        "grid" => grid_dataset(count, lo, hi, seed)?,
        "lobster" => lobster_dataset(
            count,
            cfg.lobster_backbone,
            cfg.lobster_p1,
            cfg.lobster_p2,
            lo,
            hi,
            seed,
        )?,
        _ => er_dataset(count, lo, hi, cfg.er_p, seed)?,
    };
    write(&ds, out)?;
    cfg.write_copy(out)?;
    println!("{}", summary(&ds));
    Ok(())
}

fn write_checkpoints(cfg: &RunConfig, state: &TrainState, out: &Path) -> Result<()> {
    let model = cfg.model();
    write_atomic(&out.join(LAST), &state_checkpoint(&model, state).to_bytes())?;
    write_atomic(
        &out.join(BEST),
        &model_checkpoint(&model, &state.best_params).to_bytes(),
    )
}

/// Log lines for steps up to `step`; later lines belong to work the
/// checkpoint does not include.
fn log_prefix(text: &str, step: usize) -> String {
    let mut kept = String::new();
    for line in text.lines() {
        let n = line
            .strip_prefix("step=")
            .and_then(|r| r.split_whitespace().next())
            .and_then(|n| n.parse::<usize>().ok());
        if matches!(n, Some(n) if n <= step) {
            kept.push_str(line);
            kept.push('\n');
        }
    }
    kept
}

pub fn train(cfg: &RunConfig, data: &Path, out: &Path, resume: bool) -> Result<()> {
    let ds = read(data)?;
    if ds.n_max > cfg.n_max {
        return Err(UsageError::new(format!(
            "dataset {} has a {}-node graph but n_max is {}",
            data.display(),
            ds.n_max,
            cfg.n_max
        ))
        .into());
    }
    let model = cfg.model();
    let opts = cfg.train_options()?;
    let state = if resume {
        let last = Checkpoint::read(&out.join(LAST))?;
        let best = Checkpoint::read(&out.join(BEST))?;
        let (saved, state) = load_state(&last, &best)?;
        if saved != model {
            return Err(UsageError::new("checkpoint model settings differ from the config").into());
        }
        state
    } else {
        TrainState::new(&model, &opts)?
    };

    let split = split_dataset(ds.len(), cfg.split_seed);
    let parts = [
        ("train", &split.train),
        ("validation", &split.validation),
        ("test", &split.test),
    ];
    for (name, idx) in parts {
        let mut part = ds.subset(idx);
        part.name = format!("{}-{name}", ds.name);
        write(&part, &out.join("splits").join(name))?;
    }
    cfg.write_copy(out)?;
    let train_graphs = ds.subset(&split.train).graphs;
    let val_graphs = ds.subset(&split.validation).graphs;

    let log_path = out.join(TRAIN_LOG);
    let prefix = if resume {
        log_prefix(&fs::read_to_string(&log_path).unwrap_or_default(), state.step)
    } else {
        String::new()
    };
    fs::write(&log_path, prefix).with_context(|| format!("cannot write {}", log_path.display()))?;
    let mut log = OpenOptions::new()
        .append(true)
        .open(&log_path)
        .with_context(|| format!("cannot open {}", log_path.display()))?;

    let outcome = train_from(
        state,
        &train_graphs,
        &val_graphs,
        &model,
        &opts,
        |rec: &TrainRecord, st| {
            writeln!(log, "{}", rec.to_line()).map_err(|e| gran_core::Error::io(&log_path, e))?;
            if rec.val_loss.is_some() {
                write_checkpoints(cfg, st, out).map_err(|e| gran_core::Error::Domain(format!("{e:#}")))?;
            }
            Ok(())
        },
    );
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(log, "aborted: {e}");
            return Err(e.into());
        }
    };
    write_checkpoints(cfg, &outcome.state, out)?;
    let st = &outcome.state;
    println!(
        "trained to step {}; best validation loss {:.6} at step {}",
        st.step, st.best_val, st.best_step
    );
    Ok(())
}

/// Loads a model checkpoint and copies its model settings into `cfg`.
pub fn load_checkpoint(cfg: &mut RunConfig, path: &Path) -> Result<GranParams> {
    let ck = Checkpoint::read(path)?;
    let (m, params) = load_model(&ck)?;
    cfg.block_size = m.block_size;
    cfg.hidden = m.hidden;
    cfg.rounds = m.rounds;
    cfg.mixtures = m.mixtures;
    cfg.n_max = m.n_max;
    cfg.tie_rounds = m.tie_rounds;
    cfg.count_all_block_rows = m.count_all_block_rows;
    Ok(params)
}

fn sizes(cfg: &RunConfig, sizes_from: Option<&Path>, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if cfg.sample_nodes > 0 {
        return Ok(vec![cfg.sample_nodes; cfg.sample_count]);
    }
    let dir = sizes_from.ok_or_else(|| UsageError::new("give --sizes-from or a fixed --nodes"))?;
    let ds = read(dir)?;
    if ds.n_max > cfg.n_max {
        return Err(UsageError::new(format!(
            "{} has a {}-node graph but the model emits at most {}",
            dir.display(),
            ds.n_max,
            cfg.n_max
        ))
        .into());
    }
    (0..cfg.sample_count)
        .map(|_| Ok(sample_size(&ds.graphs, rng)?))
        .collect()
}

pub fn sample(cfg: &RunConfig, params: &GranParams, sizes_from: Option<&Path>, out: &Path) -> Result<()> {
    let model = cfg.model();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.sample_seed);
    let sizes = sizes(cfg, sizes_from, &mut rng)?;
    let mut graphs = Vec::with_capacity(sizes.len());
    let mut report = String::new();
    let mut total = 0;
    for (i, &n) in sizes.iter().enumerate() {
        let o = sample_graph_with(params, &model, &cfg.sample_options(n), &mut rng)?;
        total += o.invocations;
        let _ = writeln!(
            report,
            "{} nodes {} edges {} invocations {}",
            graph_file_name(i),
            o.graph.num_nodes(),
            o.graph.num_edges(),
            o.invocations
        );
        graphs.push(o.graph);
    }
    report.insert_str(
        0,
        &format!("stride {}\nblock_size {}\ntotal {total}\n", cfg.stride, cfg.block_size),
    );
    let ds = GraphDataset::new("generated", graphs);
    write(&ds, out)?;
    fs::write(out.join(INVOCATIONS), report)?;
    cfg.write_copy(out)?;
    println!("{}", summary(&ds));
    println!("model invocations: {total}");
    Ok(())
}

pub fn evaluate(cfg: &RunConfig, generated: &Path, reference: &Path, out: &Path) -> Result<()> {
    let g = read(generated)?;
    let r = read(reference)?;
    if g.len() != r.len() {
        eprintln!(
            "note: {} generated graphs against {} reference graphs",
            g.len(),
            r.len()
        );
    }
    let report = evaluate_metrics(&g.graphs, &r.graphs, &cfg.metric_config())?;
    let text = report.to_text();
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    fs::write(out.join(REPORT), &text)?;
    cfg.write_copy(out)?;
    print!("{text}");
    Ok(())
}

pub fn baseline_er(cfg: &RunConfig, train: &Path, out: &Path) -> Result<()> {
    let ds = read(train)?;
    let p = er_mle_fit(&ds.graphs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.sample_seed);
    let mut graphs = Vec::with_capacity(cfg.sample_count);
    for _ in 0..cfg.sample_count {
        let n = sample_size(&ds.graphs, &mut rng)?;
        graphs.push(erdos_renyi(n, p, &mut rng));
    }
    let gen = GraphDataset::new("er-baseline", graphs);
    write(&gen, out)?;
    fs::write(out.join(ER_FIT), format!("p {p:.17e}\n"))?;
    cfg.write_copy(out)?;
    println!("edge probability {p:.6}");
    println!("{}", summary(&gen));
    Ok(())
}
