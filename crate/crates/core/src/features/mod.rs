//! Per-node model inputs: the three engagement counts (shallow metadata) and
//! the text embedding, both token-level and pooled.

mod embeddings;
mod hashed;

pub use embeddings::{
    load_embeddings, pool_tokens, read_embeddings, write_embeddings, write_embeddings_to,
    EmbeddingError, EmbeddingRecord, EmbeddingTable, TokenEmbedding, MAGIC, POOLING_TOLERANCE,
};
pub use hashed::{fnv1a64, HashedEncoder};

use std::collections::HashMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compute::Tensor;
use crate::graph::{HeteroGraph, InteractionGraph, Split, TweetRecord};

/// Standard deviations below this are replaced by it when z-scoring.
pub const STD_FLOOR: f64 = 1e-8;

/// Shallow feature order.
pub const SHALLOW_NAMES: [&str; 3] = ["replies", "quotes", "retweets"];

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("z-score transform requested without training statistics")]
    MissingStats,
    #[error("no embedding for node {0} and no fallback encoder")]
    MissingEmbedding(String),
    #[error("no shallow features for node {0}")]
    MissingShallow(String),
    #[error("no text record for node {0}")]
    MissingText(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShallowTransform {
    Raw,
    #[default]
    Log1pZscore,
}

impl FromStr for ShallowTransform {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw" => Ok(ShallowTransform::Raw),
            "log1p_zscore" => Ok(ShallowTransform::Log1pZscore),
            other => Err(format!("unknown shallow transform {other:?}")),
        }
    }
}

/// Per-dimension mean and population standard deviation of `ln(1 + count)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShallowStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl ShallowStats {
    pub fn identity() -> Self {
        Self {
            mean: [0.0; 3],
            std: [1.0; 3],
        }
    }

    pub fn fit<'a>(records: impl IntoIterator<Item = &'a TweetRecord>) -> Self {
        let rows: Vec<[f64; 3]> = records.into_iter().map(|r| log_counts(r)).collect();
        if rows.is_empty() {
            return Self::identity();
        }
        let n = rows.len() as f64;
        let mut mean = [0.0; 3];
        let mut std = [0.0; 3];
        for d in 0..3 {
            mean[d] = rows.iter().map(|r| r[d]).sum::<f64>() / n;
            std[d] = (rows.iter().map(|r| (r[d] - mean[d]).powi(2)).sum::<f64>() / n).sqrt();
        }
        Self { mean, std }
    }
}

fn raw_counts(r: &TweetRecord) -> [f64; 3] {
    [r.reply_count as f64, r.quote_count as f64, r.retweet_count as f64]
}

fn log_counts(r: &TweetRecord) -> [f64; 3] {
    raw_counts(r).map(f64::ln_1p)
}

/// `(replies, quotes, retweets)` after the chosen transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShallowVector {
    pub values: [f64; 3],
}

pub fn encode_shallow(
    record: &TweetRecord,
    transform: ShallowTransform,
    stats: Option<&ShallowStats>,
) -> Result<ShallowVector, FeatureError> {
    let values = match transform {
        ShallowTransform::Raw => raw_counts(record),
        ShallowTransform::Log1pZscore => {
            let stats = stats.ok_or(FeatureError::MissingStats)?;
            let logs = log_counts(record);
            std::array::from_fn(|d| (logs[d] - stats.mean[d]) / stats.std[d].max(STD_FLOOR))
        }
    };
    Ok(ShallowVector { values })
}

/// Encodes every node of `graph`, fitting z-score statistics on the
/// training-split nodes only.
pub fn encode_graph_shallow(
    graph: &InteractionGraph,
    hetero: &HeteroGraph,
    transform: ShallowTransform,
) -> Result<(HashMap<String, ShallowVector>, Option<ShallowStats>), FeatureError> {
    let record = |id: &str| {
        hetero
            .get(id)
            .and_then(|n| n.tweet())
            .ok_or_else(|| FeatureError::MissingText(id.to_string()))
    };
    let stats = match transform {
        ShallowTransform::Raw => None,
        ShallowTransform::Log1pZscore => {
            let train = graph
                .node_ids()
                .iter()
                .zip(graph.splits())
                .filter(|(_, s)| **s == Split::Train)
                .map(|(id, _)| record(id))
                .collect::<Result<Vec<_>, _>>()?;
            Some(ShallowStats::fit(train))
        }
    };
    let mut out = HashMap::with_capacity(graph.node_count());
    for id in graph.node_ids() {
        out.insert(id.clone(), encode_shallow(record(id)?, transform, stats.as_ref())?);
    }
    Ok((out, stats))
}

/// Token strings and their embedding matrix (`tokens × dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct NodeTokens {
    pub texts: Vec<String>,
    pub matrix: Tensor,
}

/// Model inputs aligned to interaction-graph node order.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    /// `n × 3`.
    pub shallow: Tensor,
    /// `n × dim`.
    pub text_pooled: Tensor,
    pub text_tokens: Vec<Option<NodeTokens>>,
    /// `n × 6` fused vectors, filled from a trained model.
    pub multimodal: Option<Tensor>,
}

impl FeatureSet {
    pub fn node_count(&self) -> usize {
        self.shallow.rows()
    }

    pub fn text_dim(&self) -> usize {
        self.text_pooled.cols()
    }
}

/// Builds the feature matrices for `graph`.
///
/// Nodes with token-level embeddings get the exact `f64` mean of their token
/// vectors as pooled text, so the pooled vector and the token path agree.
/// Nodes without an embedding record use `fallback` on their text.
pub fn assemble_features(
    graph: &InteractionGraph,
    hetero: &HeteroGraph,
    shallow: &HashMap<String, ShallowVector>,
    embeddings: Option<&EmbeddingTable>,
    fallback: Option<&HashedEncoder>,
) -> Result<FeatureSet, FeatureError> {
    let dim = match (embeddings, fallback) {
        (Some(t), Some(f)) if t.dim != f.dim => {
            return Err(EmbeddingError::DimensionMismatch {
                expected: t.dim,
                got: f.dim,
            }
            .into())
        }
        (Some(t), _) => t.dim,
        (None, Some(f)) => f.dim,
        (None, None) => {
            return match graph.node_ids().first() {
                Some(id) => Err(FeatureError::MissingEmbedding(id.clone())),
                None => Ok(FeatureSet {
                    shallow: Tensor::zeros(&[0, 3]),
                    text_pooled: Tensor::zeros(&[0, 0]),
                    text_tokens: Vec::new(),
                    multimodal: None,
                }),
            }
        }
    };

    let n = graph.node_count();
    let mut shallow_data = Vec::with_capacity(n * 3);
    let mut pooled_data = Vec::with_capacity(n * dim);
    let mut tokens = Vec::with_capacity(n);

    for id in graph.node_ids() {
        let sv = shallow
            .get(id)
            .ok_or_else(|| FeatureError::MissingShallow(id.clone()))?;
        shallow_data.extend_from_slice(&sv.values);

        let (pooled, node_tokens) = if let Some(rec) = embeddings.and_then(|t| t.get(id)) {
            if rec.tokens.is_empty() {
                (rec.pooled.iter().map(|&v| f64::from(v)).collect(), None)
            } else {
                let rows: Vec<Vec<f64>> = rec
                    .tokens
                    .iter()
                    .map(|t| t.vector.iter().map(|&v| f64::from(v)).collect())
                    .collect();
                let pooled = pool_tokens(&rows)?;
                let texts = rec.tokens.iter().map(|t| t.text.clone()).collect();
                let matrix = Tensor::from_rows(&rows).expect("validated dims");
                (pooled, Some(NodeTokens { texts, matrix }))
            }
        } else if let Some(enc) = fallback {
            let text = hetero
                .get(id)
                .and_then(|n| n.tweet())
                .map(|t| t.text.as_str())
                .ok_or_else(|| FeatureError::MissingText(id.clone()))?;
            let toks = enc.encode_tokens(text);
            if toks.is_empty() {
                (vec![0.0; dim], None)
            } else {
                let rows: Vec<Vec<f64>> = toks.iter().map(|(_, v)| v.clone()).collect();
                let pooled = pool_tokens(&rows)?;
                let texts = toks.into_iter().map(|(t, _)| t).collect();
                let matrix = Tensor::from_rows(&rows).expect("fixed dims");
                (pooled, Some(NodeTokens { texts, matrix }))
            }
        } else {
            return Err(FeatureError::MissingEmbedding(id.clone()));
        };
        pooled_data.extend_from_slice(&pooled);
        tokens.push(node_tokens);
    }

    Ok(FeatureSet {
        shallow: Tensor::matrix(n, 3, shallow_data).expect("3 per node"),
        text_pooled: Tensor::matrix(n, dim, pooled_data).expect("dim per node"),
        text_tokens: tokens,
        multimodal: None,
    })
}
