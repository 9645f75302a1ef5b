//! Masked optimal transport.
//!
//! Transport plans restricted to the support of a binary mask, solved with a
//! log-domain Sinkhorn scheme, plus the Gromov-Wasserstein variant, graph
//! regularizers built from adjacency masks, exact references for testing and
//! a small fine-tuning demonstration on a message-passing network.

pub mod cost;
pub mod error;
pub mod feasibility;
pub mod finetune;
pub mod graph;
pub mod gromov;
pub mod gtot;
pub mod lse;
pub mod oracle;
pub mod sinkhorn;
pub mod types;

pub use cost::{cosine_cost, normalize_cost};
pub use error::{Error, Result};
pub use feasibility::transport_deficit;
pub use graph::{build_mask, GraphTopology, MaskSpec};
pub use gromov::{gw_objective, pseudo_cost, solve_mgwd, GwLossDecomposition, MgwdSolution};
pub use gtot::{
    combined_objective, generalization_bound, gtot_regularizer, mgwd_regularizer, smooth_value, BoundParams,
    RegularizerValue,
};
pub use lse::masked_logsumexp;
pub use oracle::{exact_mwd, ExactSolution};
pub use sinkhorn::{
    dual_objective, mwd_gradient_wrt_cost, solve_mwd, solve_mwd_vanilla, solve_mwd_warm, DualPotentials, MwdSolution,
};
pub use types::{
    validate_feasibility_inputs, CostMatrix, MaskMatrix, ProbVec, SolveReport, SolverConfig, TransportPlan,
};
