//! Two-task graph contrastive learning for multi-label link prediction on
//! user-item bipartite graphs.

pub mod aggregation;
pub mod config;
pub mod contrastive;
pub mod encoders;
pub mod error;
pub mod graph;
pub mod link_prediction;
pub mod model;
pub mod report;
pub mod rng;
pub mod subtask;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
