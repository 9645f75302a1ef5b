//! Fine-tuning a small message-passing network with graph-topology
//! regularization on a synthetic transfer task.

mod data;
mod mpnn;
mod train;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::graph::GraphTopology;

pub use data::{make_synthetic_transfer, random_connected_graph, CLASS_SEPARATION, EXTRA_EDGE_PROB, FEATURE_NOISE};
pub use mpnn::{mean_aggregator, Forward, ToyMpnn};
pub use train::{
    cross_entropy, evaluate, gradcheck_instance, gradient_check, gtot_finetune, layer_embeddings, pretrain, regularizer_terms, run_demo,
    DemoConfig, DemoOutcome, DEMO_EPSILON, EpochRecord, Evaluation, History, RegularizerTerms, TrainConfig, FD_STEP,
    GRADCHECK_FLOOR, GRADCHECK_MAX_ITER, GRADCHECK_TAU,
};

/// Attributed graph with a class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyGraphSample {
    pub topology: GraphTopology,
    pub node_features: Array2<f64>,
    pub label: usize,
}
