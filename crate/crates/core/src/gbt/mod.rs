//! Second-order gradient tree boosting with a regularized objective, exact
//! greedy split enumeration, and missing-value default directions.

mod loss;
mod train;
mod tree;

pub use loss::{grad_hess, loss_value, sigmoid, GradientPair, LossKind};
pub use train::{train, train_with_trace, Ensemble, TrainConfig, TrainTrace};
pub use tree::{
    find_best_split, grow_tree, leaf_weight, split_gain, NodeStats, SplitCandidate, TreeNode,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GbtError {
    #[error("cannot train on an empty matrix")]
    EmptyMatrix,
    #[error("matrix has {rows} rows but {labels} labels were given")]
    LabelMismatch { rows: usize, labels: usize },
    #[error("row has {got} features, ensemble expects {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("degenerate node: sum of hessians plus lambda is zero")]
    DegenerateNode,
    #[error("labels must be finite{0}")]
    BadLabels(&'static str),
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
