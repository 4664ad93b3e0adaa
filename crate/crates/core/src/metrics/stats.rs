use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Normalized counts over consecutive bins.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub mass: Vec<f64>,
}

impl Histogram {
    /// `bins` equal-width bins over `[lo, hi]`; values outside are clamped
    /// into the end bins.
    pub fn from_values(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let width = (hi - lo) / bins as f64;
        let bin_edges = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut mass = vec![0.0; bins];
        for &v in values {
            let b = ((v - lo) / width).floor();
            let b = if b.is_nan() {
                0
            } else {
                (b.max(0.0) as usize).min(bins - 1)
            };
            mass[b] += 1.0;
        }
        let total = values.len() as f64;
        if total > 0.0 {
            for m in &mut mass {
                *m /= total;
            }
        }
        Self { bin_edges, mass }
    }

    pub fn num_bins(&self) -> usize {
        self.mass.len()
    }
}

/// Degree histogram with integer bins `[d, d+1)` for `d < max_degree_bins`.
/// Degrees past the last bin land in it.
pub fn degree_histogram(graph: &Graph, max_degree_bins: usize) -> Histogram {
    let bins = max_degree_bins.max(1);
    let degrees: Vec<f64> = graph.degrees().into_iter().map(|d| d as f64).collect();
    Histogram::from_values(&degrees, 0.0, bins as f64, bins)
}

/// Local clustering coefficient of every node; zero below degree 2.
pub fn clustering_coefficients(graph: &Graph) -> Vec<f64> {
    let n = graph.num_nodes();
    let mut mark = vec![false; n];
    (0..n)
        .map(|v| {
            let nb = graph.neighbors(v);
            let d = nb.len();
            if d < 2 {
                return 0.0;
            }
            for &u in nb {
                mark[u] = true;
            }
            let mut links = 0usize;
            for &u in nb {
                links += graph.neighbors(u).iter().filter(|&&w| mark[w]).count();
            }
            for &u in nb {
                mark[u] = false;
            }
            // each triangle edge seen from both ends
            links as f64 / (d * (d - 1)) as f64
        })
        .collect()
}

pub fn clustering_histogram(graph: &Graph, bins: usize) -> Histogram {
    Histogram::from_values(&clustering_coefficients(graph), 0.0, 1.0, bins)
}

/// Eigenvalues of `I − D^{−1/2} A D^{−1/2}` in ascending order. Isolated
/// nodes get a zero row and column.
pub fn normalized_laplacian_eigenvalues(graph: &Graph) -> Result<Vec<f64>> {
    let n = graph.num_nodes();
    if n == 0 {
        return Ok(Vec::new());
    }
    let inv_sqrt: Vec<f64> = graph
        .degrees()
        .into_iter()
        .map(|d| if d == 0 { 0.0 } else { 1.0 / (d as f64).sqrt() })
        .collect();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for v in 0..n {
        if graph.degree(v) > 0 {
            l[(v, v)] = 1.0;
        }
    }
    for &(u, v) in graph.edges() {
        let w = -inv_sqrt[u] * inv_sqrt[v];
        l[(u, v)] = w;
        l[(v, u)] = w;
    }
    let eig = SymmetricEigen::try_new(l, f64::EPSILON, 10_000).ok_or_else(|| Error::Eigen {
        graph: format!("{n} nodes, {} edges", graph.num_edges()),
        msg: "no convergence within 10000 sweeps".into(),
    })?;
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

pub fn laplacian_spectrum_histogram(graph: &Graph, bins: usize) -> Result<Histogram> {
    Ok(Histogram::from_values(
        &normalized_laplacian_eigenvalues(graph)?,
        0.0,
        2.0,
        bins,
    ))
}

fn same_bins(p: &Histogram, q: &Histogram) -> Result<()> {
    if p.bin_edges != q.bin_edges || p.mass.len() != q.mass.len() {
        return Err(Error::Domain(format!(
            "histograms with different binning ({} and {} bins)",
            p.num_bins(),
            q.num_bins()
        )));
    }
    Ok(())
}

/// Half the L1 distance between two histograms on the same bins.
pub fn tv_distance(p: &Histogram, q: &Histogram) -> Result<f64> {
    same_bins(p, q)?;
    Ok(0.5 * p.mass.iter().zip(&q.mass).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

fn mmd_from_kernel(a: usize, b: usize, k: impl Fn(bool, usize, bool, usize) -> Result<f64>) -> Result<f64> {
    let mean = |xa: bool, na: usize, xb: bool, nb: usize| -> Result<f64> {
        let mut s = 0.0;
        for i in 0..na {
            for j in 0..nb {
                s += k(xa, i, xb, j)?;
            }
        }
        Ok(s / (na * nb) as f64)
    };
    let v = mean(false, a, false, a)? + mean(true, b, true, b)? - 2.0 * mean(false, a, true, b)?;
    Ok(if v < 0.0 && v > -1e-12 { 0.0 } else { v })
}

/// Squared MMD with kernel `exp(−TV(p, q)² / 2σ²)`.
pub fn mmd_tv(set_a: &[Histogram], set_b: &[Histogram], sigma: f64) -> Result<f64> {
    if set_a.is_empty() || set_b.is_empty() {
        return Err(Error::Domain("MMD needs two nonempty sets".into()));
    }
    let pick = |second: bool, i: usize| if second { &set_b[i] } else { &set_a[i] };
    mmd_from_kernel(set_a.len(), set_b.len(), |xa, i, xb, j| {
        let d = tv_distance(pick(xa, i), pick(xb, j))?;
        Ok((-d * d / (2.0 * sigma * sigma)).exp())
    })
}

/// Squared MMD with a Gaussian kernel on Euclidean distance.
pub fn mmd_rbf_vectors(set_a: &[Vec<f64>], set_b: &[Vec<f64>], sigma: f64) -> Result<f64> {
    if set_a.is_empty() || set_b.is_empty() {
        return Err(Error::Domain("MMD needs two nonempty sets".into()));
    }
    let dim = set_a[0].len();
    if set_a.iter().chain(set_b).any(|v| v.len() != dim) {
        return Err(Error::Domain("vectors of different dimension".into()));
    }
    let pick = |second: bool, i: usize| if second { &set_b[i] } else { &set_a[i] };
    mmd_from_kernel(set_a.len(), set_b.len(), |xa, i, xb, j| {
        let d2: f64 = pick(xa, i)
            .iter()
            .zip(pick(xb, j))
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        Ok((-d2 / (2.0 * sigma * sigma)).exp())
    })
}
