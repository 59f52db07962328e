//! Integrated-gradients word importance for one node's prediction.
//!
//! The path runs from the all-zero token matrix to the node's own token
//! embeddings. Gradients flow through mean pooling, the text projection and
//! both attention layers while every other node's inputs stay fixed.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compute::{Tape, Tensor, TensorError};
use crate::features::FeatureSet;
use crate::gat::{predict, GatError, GatModel};
use crate::graph::{InteractionGraph, Label};

pub const DEFAULT_STEPS: usize = 50;

#[derive(Debug, Error)]
pub enum AttributionError {
    #[error("node {0} has no token embeddings")]
    NoTokenEmbeddings(String),
    #[error("{tokens} tokens but {rows} attribution rows")]
    LengthMismatch { tokens: usize, rows: usize },
    #[error("integration needs at least one step")]
    ZeroSteps,
    #[error("node index {index} out of range for {len} nodes")]
    NodeOutOfRange { index: usize, len: usize },
    #[error(transparent)]
    Gat(#[from] GatError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Raw integrated-gradients output for one node.
#[derive(Debug, Clone, PartialEq)]
pub struct IgResult {
    /// Same shape as the token matrix.
    pub attributions: Tensor,
    /// Class whose probability is being explained, fixed at the input.
    pub predicted: Label,
    /// `F(x)`.
    pub output: f64,
    /// `F(x′)` at the zero baseline.
    pub baseline_output: f64,
    pub steps: usize,
}

impl IgResult {
    /// `|Σ attributions − (F(x) − F(x′))|`.
    pub fn completeness_gap(&self) -> f64 {
        completeness_gap(&self.attributions, self.output, self.baseline_output)
    }
}

pub fn completeness_gap(attributions: &Tensor, output: f64, baseline_output: f64) -> f64 {
    let total: f64 = attributions.data().iter().sum();
    (total - (output - baseline_output)).abs()
}

/// Evaluates `F` and `∂F/∂tokens` with the node's tokens replaced by `tokens`.
struct PathEvaluator<'a> {
    model: &'a GatModel,
    graph: &'a InteractionGraph,
    shallow: Tensor,
    /// Pooled text with the target row zeroed.
    pooled_rest: Tensor,
    node: usize,
}

impl PathEvaluator<'_> {
    fn eval(&self, tokens: Tensor, class: Option<Label>) -> Result<(f64, Tensor, Label), AttributionError> {
        let mut tape = Tape::new();
        let params = self.model.bind(&mut tape, false);
        let shallow = tape.constant(self.shallow.clone());
        let rest = tape.constant(self.pooled_rest.clone());
        let tok = tape.param(tokens);
        let mean = tape.mean_rows(tok)?;
        let placed = tape.scatter_add_rows(mean, Arc::from([self.node]), self.graph.node_count())?;
        let pooled = tape.add(rest, placed)?;
        let pass = self
            .model
            .forward_on_tape(&mut tape, &params, self.graph.edge_index(), shallow, pooled)?;
        let p_node = tape.gather_rows(pass.probs, Arc::from([self.node]))?;
        let p = tape.value(p_node).item();
        let class = class.unwrap_or_else(|| predict(&[p], 0.5)[0]);
        let f = match class {
            Label::Misinformation => p_node,
            Label::Factual => tape.affine(p_node, -1.0, 1.0),
        };
        let value = tape.value(f).item();
        let grad = tape.backward(f)?.wrt(tok);
        Ok((value, grad, class))
    }
}

/// Right-Riemann integrated gradients from the zero baseline:
/// `IG = x · (1/m) Σ_{k=1..m} ∂F((k/m)·x)/∂x`, where `F` is the probability
/// of the class the model predicts for `node`.
pub fn integrated_gradients(
    model: &GatModel,
    graph: &InteractionGraph,
    features: &FeatureSet,
    node: usize,
    steps: usize,
) -> Result<IgResult, AttributionError> {
    if steps == 0 {
        return Err(AttributionError::ZeroSteps);
    }
    if node >= graph.node_count() {
        return Err(AttributionError::NodeOutOfRange {
            index: node,
            len: graph.node_count(),
        });
    }
    let tokens = features
        .text_tokens
        .get(node)
        .and_then(Option::as_ref)
        .ok_or_else(|| AttributionError::NoTokenEmbeddings(graph.node_id(node).to_string()))?;
    model.check_features(features)?;

    let mut pooled_rest = features.text_pooled.clone();
    pooled_rest.row_mut(node).iter_mut().for_each(|v| *v = 0.0);
    let evaluator = PathEvaluator {
        model,
        graph,
        shallow: features.shallow.clone(),
        pooled_rest,
        node,
    };

    let x = &tokens.matrix;
    let (output, _, predicted) = evaluator.eval(x.clone(), None)?;
    let (baseline_output, _, _) = evaluator.eval(Tensor::zeros(x.shape()), Some(predicted))?;

    let mut avg = Tensor::zeros(x.shape());
    for k in 1..=steps {
        let alpha = k as f64 / steps as f64;
        let (_, grad, _) = evaluator.eval(x.map(|v| v * alpha), Some(predicted))?;
        avg.add_assign(&grad);
    }
    let inv = 1.0 / steps as f64;
    let attributions = x.zip_map(&avg, |xi, gi| xi * gi * inv);
    Ok(IgResult {
        attributions,
        predicted,
        output,
        baseline_output,
        steps,
    })
}

/// Per-token scores for one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenAttribution {
    pub node_id: String,
    pub tokens: Vec<String>,
    /// Sum of a token's attributions over embedding dimensions; positive
    /// values support the predicted class.
    pub scores: Vec<f64>,
    /// `scores` divided by the largest absolute score.
    pub normalized: Vec<f64>,
    pub steps: usize,
    pub completeness_gap: f64,
}

impl TokenAttribution {
    /// Record for a node without any tokens.
    pub fn empty(node_id: impl Into<String>, steps: usize) -> Self {
        Self {
            node_id: node_id.into(),
            tokens: Vec::new(),
            scores: Vec::new(),
            normalized: Vec::new(),
            steps,
            completeness_gap: 0.0,
        }
    }
}

/// Token scores (row sums) and their max-abs normalization; all-zero scores
/// stay zero.
pub fn word_importance(
    attributions: &Tensor,
    tokens: &[String],
) -> Result<(Vec<f64>, Vec<f64>), AttributionError> {
    let rows = if attributions.len() == 0 { 0 } else { attributions.rows() };
    if rows != tokens.len() {
        return Err(AttributionError::LengthMismatch {
            tokens: tokens.len(),
            rows,
        });
    }
    let scores: Vec<f64> = (0..rows).map(|r| attributions.row(r).iter().sum()).collect();
    let max = scores.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let normalized = if max > 0.0 {
        scores.iter().map(|s| s / max).collect()
    } else {
        vec![0.0; scores.len()]
    };
    Ok((scores, normalized))
}

/// Integrated gradients plus word importance for `node`.
pub fn attribute_node(
    model: &GatModel,
    graph: &InteractionGraph,
    features: &FeatureSet,
    node: usize,
    steps: usize,
) -> Result<TokenAttribution, AttributionError> {
    let ig = integrated_gradients(model, graph, features, node, steps)?;
    let texts = &features.text_tokens[node].as_ref().expect("checked by integrated_gradients").texts;
    let (scores, normalized) = word_importance(&ig.attributions, texts)?;
    Ok(TokenAttribution {
        node_id: graph.node_id(node).to_string(),
        tokens: texts.clone(),
        scores,
        normalized,
        steps,
        completeness_gap: ig.completeness_gap(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("w{i}")).collect()
    }

    #[test]
    fn single_token_normalizes_to_one() {
        let a = Tensor::matrix(1, 3, vec![0.5, 1.0, 0.5]).unwrap();
        let (scores, norm) = word_importance(&a, &toks(1)).unwrap();
        assert_eq!(scores, vec![2.0]);
        assert_eq!(norm, vec![1.0]);
    }

    #[test]
    fn zero_attributions_stay_zero() {
        let a = Tensor::zeros(&[3, 4]);
        let (_, norm) = word_importance(&a, &toks(3)).unwrap();
        assert_eq!(norm, vec![0.0; 3]);
    }

    #[test]
    fn mixed_sign_normalization() {
        let a = Tensor::matrix(3, 2, vec![0.25, 0.75, -1.5, -0.5, 0.5, 0.0]).unwrap();
        let (scores, norm) = word_importance(&a, &toks(3)).unwrap();
        assert_eq!(scores, vec![1.0, -2.0, 0.5]);
        assert_eq!(norm, vec![0.5, -1.0, 0.25]);
    }

    #[test]
    fn length_mismatch() {
        let a = Tensor::zeros(&[2, 2]);
        assert!(matches!(
            word_importance(&a, &toks(3)),
            Err(AttributionError::LengthMismatch { tokens: 3, rows: 2 })
        ));
    }

    #[test]
    fn gap_formula() {
        let a = Tensor::vector(vec![0.1, 0.2]);
        assert!((completeness_gap(&a, 0.9, 0.5) - 0.1).abs() < 1e-15);
    }
}
