use thiserror::Error;

use crate::attribution::AttributionError;
use crate::compute::TensorError;
use crate::config::ConfigError;
use crate::features::{EmbeddingError, FeatureError};
use crate::gat::GatError;
use crate::graph::GraphError;
use crate::graphlime::GraphLimeError;
use crate::report::ReportError;
use crate::synth::SynthError;
use crate::train::TrainError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Any failure surfaced by the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Model(#[from] GatError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Explain(#[from] GraphLimeError),
    #[error(transparent)]
    Attribution(#[from] AttributionError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Graph(_) => "graph",
            Error::Embedding(_) => "embedding",
            Error::Feature(_) => "feature",
            Error::Tensor(_) => "tensor",
            Error::Model(_) => "model",
            Error::Train(_) => "train",
            Error::Explain(_) => "explain",
            Error::Attribution(_) => "attribution",
            Error::Synth(_) => "synth",
            Error::Config(_) => "config",
            Error::Report(_) => "report",
            Error::UnknownNode(_) => "unknown_node",
            Error::Json(_) => "json",
            Error::Io(_) => "io",
        }
    }
}
