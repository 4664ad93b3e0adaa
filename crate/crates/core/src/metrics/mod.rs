//! Graph statistics and the distances used to compare graph sets.

mod lobster;
mod orbits;
mod report;
mod stats;

pub use lobster::{is_lobster, lobster_accuracy};
pub use orbits::{orbit_counts_4, orbit_feature, OrbitCounts, FIRST_ORBIT, NUM_ORBITS};
pub use report::{evaluate, MetricConfig, MetricReport};
pub use stats::{
    clustering_coefficients, clustering_histogram, degree_histogram, laplacian_spectrum_histogram, mmd_rbf_vectors,
    mmd_tv, normalized_laplacian_eigenvalues, tv_distance, Histogram,
};
