//! Smooth local losses, LIBSVM ingestion and sharding.

mod data;
mod loss;
mod synthetic;

pub use data::{parse_libsvm, parse_libsvm_str, partition, AgentShard, Dataset, SparseVector};
pub use loss::{
    gram_top_eigenvalue, sigmoid, softplus, LipschitzMode, LossKind, SmoothLoss, SmoothTerm,
    POWER_MAX_ITERS, POWER_REL_TOL,
};
pub use synthetic::{synthetic_dataset, SyntheticConfig, SyntheticData};
