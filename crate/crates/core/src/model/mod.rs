//! The generative model: parameters, the per-block forward pass, the
//! ordering-family objective, training and strided sampling.

mod block;
mod config;
mod objective;
mod params;
mod persist;
mod sample;
mod train;

pub use block::{
    block_log_prob, build_augmented_graph, graph_log_prob_var, init_node_embeddings, message_passing_round,
    output_distribution, teacher_forced_batch, BlockContext, BlockDistribution, StepBatch,
};
pub use config::{GranConfig, THETA_CLAMP, TRAIN_STRIDE};
pub use objective::{family_loss, graph_log_prob, loss_and_grad, ordering_log_probs, posterior_over_orderings};
pub use params::{GranParams, GranParamsOf, RoundParams};
pub use persist::{load_model, load_state, model_checkpoint, state_checkpoint};
pub use sample::{
    sample_graph, sample_graph_with, sample_size, strided_steps, EdgeDecoding, SampleOptions, SampleOutcome,
};
pub use train::{
    mean_family_loss, prepare_rows, train, train_from, TrainOptions, TrainOutcome, TrainRecord, TrainState,
};
