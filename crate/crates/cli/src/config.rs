use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use gran_core::metrics::MetricConfig;
use gran_core::model::{EdgeDecoding, GranConfig, SampleOptions, TrainOptions};
use gran_core::orderings::{parse_kinds, OrderingKind};
use serde::{Deserialize, Serialize};

use crate::UsageError;

pub const CONFIG_COPY: &str = "config.toml";

/// Fully resolved run settings. One of these determines a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: String,

    pub dataset_kind: String,
    pub dataset_count: usize,
    pub dataset_min_nodes: usize,
    pub dataset_max_nodes: usize,
    pub dataset_seed: u64,
    pub lobster_backbone: usize,
    pub lobster_p1: f64,
    pub lobster_p2: f64,
    pub er_p: f64,

    pub block_size: usize,
    pub hidden: usize,
    pub rounds: usize,
    pub mixtures: usize,
    pub n_max: usize,
    pub tie_rounds: bool,
    pub count_all_block_rows: bool,

    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub val_every: usize,
    pub train_seed: u64,
    pub split_seed: u64,
    pub orderings: Vec<String>,
    pub record_wall_time: bool,

    pub stride: usize,
    pub sample_count: usize,
    pub sample_seed: u64,
    /// Fixed size for every sample; 0 draws sizes from the training set.
    pub sample_nodes: usize,
    pub threshold_decoding: bool,
    pub largest_component: bool,

    pub sigma: f64,
    pub clustering_bins: usize,
    pub spectrum_bins: usize,
    pub lobster: bool,
}

/// The same keys as [`RunConfig`], all optional, as read from a file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    profile: Option<String>,
    dataset_kind: Option<String>,
    dataset_count: Option<usize>,
    dataset_min_nodes: Option<usize>,
    dataset_max_nodes: Option<usize>,
    dataset_seed: Option<u64>,
    lobster_backbone: Option<usize>,
    lobster_p1: Option<f64>,
    lobster_p2: Option<f64>,
    er_p: Option<f64>,
    block_size: Option<usize>,
    hidden: Option<usize>,
    rounds: Option<usize>,
    mixtures: Option<usize>,
    n_max: Option<usize>,
    tie_rounds: Option<bool>,
    count_all_block_rows: Option<bool>,
    steps: Option<usize>,
    batch_size: Option<usize>,
    lr: Option<f64>,
    val_every: Option<usize>,
    train_seed: Option<u64>,
    split_seed: Option<u64>,
    orderings: Option<Vec<String>>,
    record_wall_time: Option<bool>,
    stride: Option<usize>,
    sample_count: Option<usize>,
    sample_seed: Option<u64>,
    sample_nodes: Option<usize>,
    threshold_decoding: Option<bool>,
    largest_component: Option<bool>,
    sigma: Option<f64>,
    clustering_bins: Option<usize>,
    spectrum_bins: Option<usize>,
    lobster: Option<bool>,
}

macro_rules! overlay {
    ($dst:expr, $src:expr, $($field:ident),* $(,)?) => {
        $(if let Some(v) = $src.$field { $dst.$field = v; })*
    };
}

impl RunConfig {
    /// Small grids and a small model; trains in minutes on one core.
    pub fn desk() -> Self {
        let m = GranConfig::desk(64);
        Self {
            profile: "desk".into(),
            dataset_kind: "grid".into(),
            dataset_count: 60,
            dataset_min_nodes: 9,
            dataset_max_nodes: 64,
            dataset_seed: 1,
            lobster_backbone: 80,
            lobster_p1: 0.7,
            lobster_p2: 0.7,
            er_p: 0.1,
            block_size: m.block_size,
            hidden: m.hidden,
            rounds: m.rounds,
            mixtures: m.mixtures,
            n_max: m.n_max,
            tie_rounds: m.tie_rounds,
            count_all_block_rows: m.count_all_block_rows,
            steps: 800,
            batch_size: 4,
            lr: 1e-3,
            val_every: 50,
            train_seed: 1,
            split_seed: 1,
            orderings: OrderingKind::ALL.iter().map(|k| k.name().to_string()).collect(),
            record_wall_time: false,
            stride: 1,
            sample_count: 20,
            sample_seed: 5,
            sample_nodes: 0,
            threshold_decoding: false,
            largest_component: false,
            sigma: 1.0,
            clustering_bins: 100,
            spectrum_bins: 200,
            lobster: false,
        }
    }

    /// 100 grids of 100 to 400 nodes with the full-size model.
    pub fn paper_grid() -> Self {
        let m = GranConfig::paper_grid(400);
        Self {
            profile: "paper-grid".into(),
            dataset_count: 100,
            dataset_min_nodes: 100,
            dataset_max_nodes: 400,
            block_size: m.block_size,
            hidden: m.hidden,
            rounds: m.rounds,
            mixtures: m.mixtures,
            n_max: m.n_max,
            tie_rounds: m.tie_rounds,
            count_all_block_rows: m.count_all_block_rows,
            lr: 1e-4,
            steps: 100_000,
            batch_size: 8,
            sample_count: 20,
            ..Self::desk()
        }
    }

    pub fn profile(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper-grid" => Ok(Self::paper_grid()),
            _ => Err(UsageError::new(format!("unknown profile {name:?}; expected \"desk\" or \"paper-grid\"")).into()),
        }
    }

    /// Profile defaults, then the keys set in `text`.
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| UsageError::new(format!("{origin}: {e}")))?;
        let mut c = Self::profile(file.profile.as_deref().unwrap_or("desk"))?;
        overlay!(
            c,
            file,
            dataset_kind,
            dataset_count,
            dataset_min_nodes,
            dataset_max_nodes,
            dataset_seed,
            lobster_backbone,
            lobster_p1,
            lobster_p2,
            er_p,
            block_size,
            hidden,
            rounds,
            mixtures,
            n_max,
            tie_rounds,
            count_all_block_rows,
            steps,
            batch_size,
            lr,
            val_every,
            train_seed,
            split_seed,
            orderings,
            record_wall_time,
            stride,
            sample_count,
            sample_seed,
            sample_nodes,
            threshold_decoding,
            largest_component,
            sigma,
            clustering_bins,
            spectrum_bins,
            lobster,
        );
        Ok(c)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::desk()),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| UsageError::new(format!("cannot read config {}: {e}", p.display())))?;
                Self::from_toml(&text, &p.display().to_string())
            }
        }
    }

    pub fn model(&self) -> GranConfig {
        GranConfig {
            block_size: self.block_size,
            hidden: self.hidden,
            rounds: self.rounds,
            mixtures: self.mixtures,
            n_max: self.n_max,
            tie_rounds: self.tie_rounds,
            count_all_block_rows: self.count_all_block_rows,
        }
    }

    pub fn ordering_kinds(&self) -> Result<Vec<OrderingKind>> {
        Ok(parse_kinds(&self.orderings.join(","))?)
    }

    pub fn train_options(&self) -> Result<TrainOptions> {
        Ok(TrainOptions {
            lr: self.lr,
            steps: self.steps,
            batch_size: self.batch_size,
            val_every: self.val_every,
            seed: self.train_seed,
            orderings: self.ordering_kinds()?,
            record_wall_time: self.record_wall_time,
        })
    }

    pub fn sample_options(&self, n_target: usize) -> SampleOptions {
        SampleOptions {
            stride: self.stride,
            n_target,
            decoding: if self.threshold_decoding {
                EdgeDecoding::Threshold
            } else {
                EdgeDecoding::Sample
            },
            largest_component: self.largest_component,
        }
    }

    pub fn metric_config(&self) -> MetricConfig {
        MetricConfig {
            sigma: self.sigma,
            clustering_bins: self.clustering_bins,
            spectrum_bins: self.spectrum_bins,
            lobster: self.lobster,
        }
    }

    /// Checks every field; runs before any file is written.
    pub fn validate(&self) -> Result<()> {
        let usage = |msg: String| -> Result<()> { Err(UsageError::new(msg).into()) };
        if let Err(e) = self.model().validate() {
            return usage(e.to_string());
        }
        if !["grid", "lobster", "er"].contains(&self.dataset_kind.as_str()) {
            return usage(format!(
                "unknown dataset_kind {:?}; expected grid, lobster or er",
                self.dataset_kind
            ));
        }
        if self.dataset_min_nodes == 0 || self.dataset_min_nodes > self.dataset_max_nodes {
            return usage(format!(
                "dataset size band [{}, {}] is empty",
                self.dataset_min_nodes, self.dataset_max_nodes
            ));
        }
        for (name, p) in [
            ("lobster_p1", self.lobster_p1),
            ("lobster_p2", self.lobster_p2),
            ("er_p", self.er_p),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return usage(format!("{name} = {p} is not a probability"));
            }
        }
        if self.lobster_p1 >= 1.0 || self.lobster_p2 >= 1.0 {
            return usage("lobster_p1 and lobster_p2 must be below 1".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return usage(format!("learning rate {} must be finite and non-negative", self.lr));
        }
        if self.batch_size == 0 || self.val_every == 0 {
            return usage("batch_size and val_every must be positive".into());
        }
        if self.orderings.is_empty() {
            return usage("orderings must name at least one ordering kind".into());
        }
        if let Err(e) = self.ordering_kinds() {
            return usage(e.to_string());
        }
        if self.stride == 0 || self.stride > self.block_size {
            return usage(format!("stride {} must lie in 1..={}", self.stride, self.block_size));
        }
        if self.sample_nodes > self.n_max {
            return usage(format!(
                "sample_nodes {} exceeds n_max {}",
                self.sample_nodes, self.n_max
            ));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return usage(format!("sigma {} must be positive", self.sigma));
        }
        if self.clustering_bins == 0 || self.spectrum_bins == 0 {
            return usage("histogram bin counts must be positive".into());
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Writes the resolved config into `dir`, creating it.
    pub fn write_copy(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let path = dir.join(CONFIG_COPY);
        fs::write(&path, self.to_toml()).with_context(|| format!("cannot write {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_keys_override_profile() {
        let c = RunConfig::from_toml("profile = \"paper-grid\"\nhidden = 16\norderings = [\"bfs\"]\n", "t").unwrap();
        assert_eq!((c.hidden, c.rounds, c.mixtures, c.lr), (16, 7, 20, 1e-4));
        assert_eq!(c.orderings, vec!["bfs"]);
        assert_eq!(RunConfig::from_toml("", "t").unwrap(), RunConfig::desk());
    }

    #[test]
    fn resolved_copy_roundtrips() {
        let c = RunConfig::paper_grid();
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(RunConfig::from_toml(&c.to_toml(), "t").unwrap(), c);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(RunConfig::from_toml("hiden = 3\n", "t").is_err());
        assert!(RunConfig::from_toml("profile = \"huge\"\n", "t").is_err());
        for text in [
            "stride = 2\n",
            "mixtures = 0\n",
            "lr = -1e-3\n",
            "orderings = [\"zigzag\"]\n",
            "orderings = []\n",
            "dataset_kind = \"tree\"\n",
            "dataset_min_nodes = 10\ndataset_max_nodes = 5\n",
            "er_p = 1.5\n",
        ] {
            let c = RunConfig::from_toml(text, "t").unwrap();
            let err = c.validate().unwrap_err();
            assert!(err.downcast_ref::<UsageError>().is_some(), "{text}: {err}");
        }
        assert!(RunConfig::desk().validate().is_ok());
        assert!(RunConfig::paper_grid().validate().is_ok());
    }
}
