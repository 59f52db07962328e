//! Full-batch Adam training, F1 evaluation, and the multi-seed mode ablation.

use std::fmt::Write as _;
use std::sync::Arc;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compute::{Tape, Tensor, TensorError};
use crate::features::FeatureSet;
use crate::gat::{init_model, predict, GatError, GatModel, Mode};
use crate::graph::{InteractionGraph, Label, Split};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no labeled nodes in the training split")]
    EmptyTrainSplit,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("no examples to score")]
    EmptyInput,
    #[error("{predictions} predictions for {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error(transparent)]
    Gat(#[from] GatError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub mode: Mode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.005,
            epochs: 800,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            mode: Mode::Multimodal,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(TrainError::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(TrainError::InvalidConfig("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    /// Number of steps taken so far.
    pub t: u64,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let m: Vec<Tensor> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            v: m.clone(),
            m,
            t: 0,
        }
    }
}

/// One bias-corrected Adam update, elementwise:
/// `θ ← θ − lr · m̂ / (√v̂ + ε)`.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    config: &TrainConfig,
) -> Result<(), TrainError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(TensorError::ShapeMismatch {
            op: "adam_step",
            left: vec![params.len()],
            right: vec![grads.len(), state.m.len()],
        }
        .into());
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "adam_step",
                left: p.shape().to_vec(),
                right: g.shape().to_vec(),
            }
            .into());
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        let g = grads[i].data();
        let m = state.m[i].data_mut();
        for (mj, gj) in m.iter_mut().zip(g) {
            *mj = b1 * *mj + (1.0 - b1) * gj;
        }
        let v = state.v[i].data_mut();
        for (vj, gj) in v.iter_mut().zip(g) {
            *vj = b2 * *vj + (1.0 - b2) * gj * gj;
        }
        let (m, v) = (state.m[i].data(), state.v[i].data());
        for ((pj, mj), vj) in p.data_mut().iter_mut().zip(m).zip(v) {
            let m_hat = mj / c1;
            let v_hat = vj / c2;
            *pj -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Validation F1 from the same forward pass as the loss; absent when the
    /// validation split has no labels.
    pub val_f1: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }
}

/// Training target: 1 for misinformation, the positive class.
fn target(label: Label) -> f64 {
    match label {
        Label::Misinformation => 1.0,
        Label::Factual => 0.0,
    }
}

/// Trains a fresh model for `config.epochs` full-batch Adam steps on the
/// labeled training nodes of `graph`.
pub fn train(
    graph: &InteractionGraph,
    features: &FeatureSet,
    config: &TrainConfig,
) -> Result<(GatModel, TrainHistory), TrainError> {
    let model = init_model(config.mode, features.text_dim(), config.seed);
    train_from(model, graph, features, config)
}

/// Like [`train`] but starting from the given parameters.
pub fn train_from(
    mut model: GatModel,
    graph: &InteractionGraph,
    features: &FeatureSet,
    config: &TrainConfig,
) -> Result<(GatModel, TrainHistory), TrainError> {
    config.validate()?;
    model.check_features(features)?;
    let labels = graph.labels();
    let splits = graph.splits();
    let train_mask: Arc<[bool]> = (0..graph.node_count())
        .map(|i| splits[i] == Split::Train && labels[i].is_some())
        .collect();
    if !train_mask.iter().any(|&m| m) {
        return Err(TrainError::EmptyTrainSplit);
    }
    let targets: Arc<[f64]> = labels.iter().map(|l| l.map_or(0.0, target)).collect();
    let val_nodes = graph.labeled_in(Split::Val);
    let val_labels: Vec<Label> = val_nodes.iter().map(|&i| labels[i].expect("labeled")).collect();

    let pooled_input = if model.mode.uses_text() {
        features.text_pooled.clone()
    } else {
        Tensor::zeros(&[features.node_count(), 0])
    };

    let mut state = AdamState::new(model.parameters());
    let mut history = TrainHistory::default();
    for epoch in 1..=config.epochs {
        let mut tape = Tape::new();
        let params = model.bind(&mut tape, true);
        let shallow = tape.constant(features.shallow.clone());
        let pooled = tape.constant(pooled_input.clone());
        let pass = model.forward_on_tape(&mut tape, &params, graph.edge_index(), shallow, pooled)?;
        let loss = tape.bce_loss(pass.probs, Arc::clone(&targets), Arc::clone(&train_mask))?;
        let grads = tape.backward(loss)?;
        let grads: Vec<Tensor> = params.all().iter().map(|&v| grads.wrt(v)).collect();

        let val_f1 = if val_nodes.is_empty() {
            None
        } else {
            let probs = tape.value(pass.probs).data();
            let p: Vec<f64> = val_nodes.iter().map(|&i| probs[i]).collect();
            Some(f1_score(&predict(&p, 0.5), &val_labels, Label::Misinformation)?.f1)
        };
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: tape.value(loss).item(),
            val_f1,
        });

        adam_step(&mut model.parameters_mut(), &grads, &mut state, config)?;
    }
    Ok((model, history))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub macro_f1: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn class_scores(predictions: &[Label], labels: &[Label], positive: Label) -> (f64, f64, f64) {
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p == positive, l == positive) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fn_ += 1.0,
            (false, false) => {}
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    (precision, recall, ratio(2.0 * precision * recall, precision + recall))
}

/// Precision, recall and F1 for `positive`, plus the mean F1 of both classes.
/// Empty denominators give 0.
pub fn f1_score(predictions: &[Label], labels: &[Label], positive: Label) -> Result<F1Scores, TrainError> {
    if predictions.len() != labels.len() {
        return Err(TrainError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    if predictions.is_empty() {
        return Err(TrainError::EmptyInput);
    }
    let (precision, recall, f1) = class_scores(predictions, labels, positive);
    let (_, _, other) = class_scores(predictions, labels, positive.other());
    Ok(F1Scores {
        precision,
        recall,
        f1,
        macro_f1: (f1 + other) / 2.0,
    })
}

/// Scores the model on the labeled nodes of `split`.
pub fn evaluate(
    model: &GatModel,
    graph: &InteractionGraph,
    features: &FeatureSet,
    split: Split,
) -> Result<F1Scores, TrainError> {
    let probs = model.forward(graph, features)?;
    let nodes = graph.labeled_in(split);
    let p: Vec<f64> = nodes.iter().map(|&i| probs[i]).collect();
    let labels: Vec<Label> = nodes.iter().map(|&i| graph.labels()[i].expect("labeled")).collect();
    f1_score(&predict(&p, 0.5), &labels, Label::Misinformation)
}

/// Per-mode aggregate over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub seeds: Vec<u64>,
    pub f1: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; 0 when only one run exists.
    pub std: f64,
    pub macro_f1: Vec<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub single_run: bool,
}

impl ModeSummary {
    pub fn from_runs(seeds: Vec<u64>, f1: Vec<f64>, macro_f1: Vec<f64>) -> Self {
        let n = f1.len();
        let mean = if n == 0 { 0.0 } else { f1.iter().sum::<f64>() / n as f64 };
        let std = if n < 2 {
            0.0
        } else {
            (f1.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self {
            seeds,
            f1,
            mean,
            std,
            macro_f1,
            single_run: n == 1,
        }
    }
}

/// Ablation results keyed by mode (`graph`, `text`, `multi`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RunReport {
    pub modes: IndexMap<Mode, ModeSummary>,
}

pub fn mode_title(mode: Mode) -> &'static str {
    match mode {
        Mode::GraphOnly => "Graph-based features only",
        Mode::TextOnly => "Text-based features only",
        Mode::Multimodal => "Multimodal features",
    }
}

/// `mean ± std` with four decimals.
pub fn format_score(summary: &ModeSummary) -> String {
    format!("{:.4} ± {:.4}", summary.mean, summary.std)
}

impl RunReport {
    pub fn get(&self, mode: Mode) -> Option<&ModeSummary> {
        self.modes.get(&mode)
    }

    /// Aligned two-column table: feature set, then F1 mean ± std.
    pub fn to_table(&self) -> String {
        let width = self
            .modes
            .keys()
            .map(|&m| mode_title(m).len())
            .chain(["Features".len()])
            .max()
            .unwrap_or(0);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  F1-score", "Features");
        for (&mode, summary) in &self.modes {
            let _ = writeln!(out, "{:<width$}  {}", mode_title(mode), format_score(summary));
        }
        out
    }
}

/// Trains every `(mode, seed)` pair on the same data and aggregates test F1.
/// Runs execute in parallel; results are independent of scheduling.
pub fn run_ablation(
    graph: &InteractionGraph,
    features: &FeatureSet,
    modes: &[Mode],
    seeds: &[u64],
    base: &TrainConfig,
) -> Result<RunReport, TrainError> {
    let jobs: Vec<(Mode, u64)> = modes
        .iter()
        .flat_map(|&m| seeds.iter().map(move |&s| (m, s)))
        .collect();
    let scores = jobs
        .par_iter()
        .map(|&(mode, seed)| {
            let config = TrainConfig { mode, seed, ..*base };
            let (model, _) = train(graph, features, &config)?;
            evaluate(&model, graph, features, Split::Test)
        })
        .collect::<Result<Vec<F1Scores>, TrainError>>()?;

    let mut report = RunReport::default();
    for (m, &mode) in modes.iter().enumerate() {
        let runs = &scores[m * seeds.len()..(m + 1) * seeds.len()];
        report.modes.insert(
            mode,
            ModeSummary::from_runs(
                seeds.to_vec(),
                runs.iter().map(|s| s.f1).collect(),
                runs.iter().map(|s| s.macro_f1).collect(),
            ),
        );
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Factual as F, Misinformation as M};

    #[test]
    fn adam_zero_gradient_is_identity() {
        let mut p = Tensor::vector(vec![1.0, -2.0, 0.5]);
        let before = p.clone();
        let mut state = AdamState::new([&p]);
        let g = Tensor::zeros(&[3]);
        adam_step(&mut [&mut p], &[g], &mut state, &TrainConfig::default()).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn adam_first_step() {
        let mut p = Tensor::scalar(0.0);
        let mut state = AdamState::new([&p]);
        adam_step(&mut [&mut p], &[Tensor::scalar(1.0)], &mut state, &TrainConfig::default()).unwrap();
        assert!((p.item() + 0.005 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn adam_descends_quadratic() {
        let mut p = Tensor::scalar(1.0);
        let mut state = AdamState::new([&p]);
        for _ in 0..100 {
            let g = Tensor::scalar(2.0 * p.item());
            adam_step(&mut [&mut p], &[g], &mut state, &TrainConfig::default()).unwrap();
        }
        assert!(p.item().abs() < 1.0);
    }

    #[test]
    fn adam_rejects_shape_mismatch() {
        let mut p = Tensor::vector(vec![1.0, 2.0]);
        let mut state = AdamState::new([&p]);
        let err = adam_step(&mut [&mut p], &[Tensor::zeros(&[3])], &mut state, &TrainConfig::default());
        assert!(matches!(err, Err(TrainError::Tensor(TensorError::ShapeMismatch { .. }))));
    }

    #[test]
    fn f1_hand_counted() {
        // TP=2, FP=1, FN=1, TN=1
        let preds = [M, M, M, F, F];
        let labels = [M, M, F, M, F];
        let s = f1_score(&preds, &labels, M).unwrap();
        assert!((s.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-15);
        // factual class: TP=1, FP=1, FN=1 → F1 1/2
        assert!((s.macro_f1 - (2.0 / 3.0 + 0.5) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn f1_perfect_and_all_wrong() {
        let labels = [M, F, M, F];
        assert_eq!(f1_score(&labels, &labels, M).unwrap().f1, 1.0);
        assert_eq!(f1_score(&labels, &labels, M).unwrap().macro_f1, 1.0);
        let wrong: Vec<Label> = labels.iter().map(|l| l.other()).collect();
        assert_eq!(f1_score(&wrong, &labels, M).unwrap().f1, 0.0);
    }

    #[test]
    fn f1_errors() {
        assert!(matches!(f1_score(&[], &[], M), Err(TrainError::EmptyInput)));
        assert!(matches!(f1_score(&[M], &[], M), Err(TrainError::LengthMismatch { .. })));
    }

    #[test]
    fn single_run_summary() {
        let s = ModeSummary::from_runs(vec![0], vec![0.8], vec![0.7]);
        assert_eq!(s.std, 0.0);
        assert!(s.single_run);
        let s = ModeSummary::from_runs(vec![0, 1], vec![0.5, 0.7], vec![0.0, 0.0]);
        assert!((s.std - 0.02f64.sqrt()).abs() < 1e-15);
        assert!(!s.single_run);
    }

    #[test]
    fn table_formats_published_row() {
        let mut report = RunReport::default();
        let mut s = ModeSummary::from_runs(vec![0], vec![0.9444], vec![0.9]);
        s.std = 0.0052;
        report.modes.insert(Mode::Multimodal, s);
        assert!(report.to_table().contains("Multimodal features  0.9444 ± 0.0052"));
        let json = serde_json::to_value(&report).unwrap();
        assert!(json["multi"]["f1"].is_array());
    }
}
