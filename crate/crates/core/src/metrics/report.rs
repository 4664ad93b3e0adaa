use std::fmt::Write;

use super::lobster::lobster_accuracy;
use super::orbits::orbit_feature;
use super::stats::{clustering_histogram, degree_histogram, laplacian_spectrum_histogram, mmd_rbf_vectors, mmd_tv};
use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Clone, Debug, PartialEq)]
pub struct MetricConfig {
    /// Kernel bandwidth for every MMD.
    pub sigma: f64,
    pub clustering_bins: usize,
    pub spectrum_bins: usize,
    /// Also report the lobster accuracy of the generated set.
    pub lobster: bool,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            clustering_bins: 100,
            spectrum_bins: 200,
            lobster: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub degree_mmd: f64,
    pub clustering_mmd: f64,
    pub orbit_mmd: f64,
    pub spectral_mmd: f64,
    pub lobster_accuracy: Option<f64>,
}

const KEYS: [&str; 5] = [
    "degree_mmd",
    "clustering_mmd",
    "orbit_mmd",
    "spectral_mmd",
    "lobster_accuracy",
];

impl MetricReport {
    /// One `key value` pair per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in KEYS.iter().zip([
            Some(self.degree_mmd),
            Some(self.clustering_mmd),
            Some(self.orbit_mmd),
            Some(self.spectral_mmd),
            self.lobster_accuracy,
        ]) {
            if let Some(v) = v {
                let _ = writeln!(s, "{k} {v:.12e}");
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut vals: [Option<f64>; 5] = [None; 5];
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = || Error::Config(format!("report line {}: {line:?}", i + 1));
            let (k, v) = line.split_once(' ').ok_or_else(bad)?;
            let slot = KEYS.iter().position(|&x| x == k).ok_or_else(bad)?;
            vals[slot] = Some(v.trim().parse().map_err(|_| bad())?);
        }
        let need = |i: usize| vals[i].ok_or_else(|| Error::Config(format!("report lacks {}", KEYS[i])));
        Ok(Self {
            degree_mmd: need(0)?,
            clustering_mmd: need(1)?,
            orbit_mmd: need(2)?,
            spectral_mmd: need(3)?,
            lobster_accuracy: vals[4],
        })
    }
}

/// All four MMDs between `generated` and `reference` on shared binning.
pub fn evaluate(generated: &[Graph], reference: &[Graph], config: &MetricConfig) -> Result<MetricReport> {
    if generated.is_empty() || reference.is_empty() {
        return Err(Error::Domain(
            "evaluation needs nonempty generated and reference sets".into(),
        ));
    }
    let all = || generated.iter().chain(reference);
    let max_deg = all().flat_map(|g| g.degrees()).max().unwrap_or(0);
    let deg = |gs: &[Graph]| gs.iter().map(|g| degree_histogram(g, max_deg + 1)).collect::<Vec<_>>();
    let clus = |gs: &[Graph]| {
        gs.iter()
            .map(|g| clustering_histogram(g, config.clustering_bins))
            .collect::<Vec<_>>()
    };
    let spec = |gs: &[Graph]| {
        gs.iter()
            .map(|g| laplacian_spectrum_histogram(g, config.spectrum_bins))
            .collect::<Result<Vec<_>>>()
    };
    let orb = |gs: &[Graph]| gs.iter().map(orbit_feature).collect::<Vec<_>>();
    let s = config.sigma;
    Ok(MetricReport {
        degree_mmd: mmd_tv(&deg(generated), &deg(reference), s)?,
        clustering_mmd: mmd_tv(&clus(generated), &clus(reference), s)?,
        orbit_mmd: mmd_rbf_vectors(&orb(generated), &orb(reference), s)?,
        spectral_mmd: mmd_tv(&spec(generated)?, &spec(reference)?, s)?,
        lobster_accuracy: config.lobster.then(|| lobster_accuracy(generated)),
    })
}
