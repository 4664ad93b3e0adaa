//! Graph recurrent attention networks: block-wise autoregressive graph
//! generation conditioned by an attentive GNN, with mixture-of-Bernoulli
//! edge outputs and training over a family of canonical node orderings.

pub mod autodiff;
pub mod error;
pub mod graph;
pub mod io;
pub mod metrics;
pub mod model;
pub mod orderings;

pub use error::{Error, Result};
