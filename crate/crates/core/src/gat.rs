//! Two-layer single-head graph attention classifier over fused inputs.
//!
//! Text embeddings are mapped to three dimensions by a trainable linear
//! projection, concatenated with the three engagement features, and passed
//! through `GAT(6→16) → ELU → GAT(16→1) → sigmoid`. The output is the
//! probability of misinformation.

use std::io::{Read, Write};
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compute::{Tape, Tensor, TensorError, Var};
use crate::features::FeatureSet;
use crate::graph::{EdgeIndex, InteractionGraph, Label};

pub const HIDDEN_DIM: usize = 16;
pub const PROJECTED_TEXT_DIM: usize = 3;
pub const SHALLOW_DIM: usize = 3;
pub const LEAKY_SLOPE: f64 = 0.2;

const CHECKPOINT_MAGIC: &[u8; 5] = b"MMCK1";
const CHECKPOINT_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum GatError {
    #[error("node {0} has no self-loop")]
    MissingSelfLoop(usize),
    #[error("features do not fit {mode} mode: {reason}")]
    ModeFeatureMismatch { mode: Mode, reason: String },
    #[error("invalid checkpoint: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which inputs reach the attention layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "graph")]
    GraphOnly,
    #[serde(rename = "text")]
    TextOnly,
    #[serde(rename = "multi")]
    Multimodal,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::GraphOnly, Mode::TextOnly, Mode::Multimodal];

    pub fn key(self) -> &'static str {
        match self {
            Mode::GraphOnly => "graph",
            Mode::TextOnly => "text",
            Mode::Multimodal => "multi",
        }
    }

    pub fn input_dim(self) -> usize {
        match self {
            Mode::GraphOnly => SHALLOW_DIM,
            Mode::TextOnly => PROJECTED_TEXT_DIM,
            Mode::Multimodal => SHALLOW_DIM + PROJECTED_TEXT_DIM,
        }
    }

    pub fn uses_text(self) -> bool {
        self != Mode::GraphOnly
    }

    pub fn uses_shallow(self) -> bool {
        self != Mode::TextOnly
    }

    fn code(self) -> u8 {
        self as u8
    }

    fn from_code(code: u8) -> Option<Self> {
        Mode::ALL.get(code as usize).copied()
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "graph" | "graphonly" | "graph_only" => Ok(Mode::GraphOnly),
            "text" | "textonly" | "text_only" => Ok(Mode::TextOnly),
            "multi" | "multimodal" => Ok(Mode::Multimodal),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Activation {
    #[default]
    Elu,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum OutputActivation {
    #[default]
    Sigmoid,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatLayerParams {
    /// `in × out`.
    pub weight: Tensor,
    /// `out × 1`, applied to the sending node.
    pub att_src: Tensor,
    /// `out × 1`, applied to the receiving node.
    pub att_dst: Tensor,
}

impl GatLayerParams {
    fn glorot(rng: &mut ChaCha8Rng, in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: glorot(rng, in_dim, out_dim),
            att_src: glorot(rng, out_dim, 1),
            att_dst: glorot(rng, out_dim, 1),
        }
    }

    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[in_dim, out_dim]),
            att_src: Tensor::zeros(&[out_dim, 1]),
            att_dst: Tensor::zeros(&[out_dim, 1]),
        }
    }
}

/// `±√(6 / (fan_in + fan_out))`.
pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let limit = glorot_limit(fan_in, fan_out);
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-limit..=limit))
        .collect();
    Tensor::matrix(fan_in, fan_out, data).expect("sized")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatModel {
    pub mode: Mode,
    pub text_dim: usize,
    /// `text_dim × 3`.
    pub text_projection: Tensor,
    /// Length 3.
    pub text_bias: Tensor,
    pub layer1: GatLayerParams,
    pub layer2: GatLayerParams,
    pub hidden_activation: Activation,
    pub output_activation: OutputActivation,
}

/// Parameter handles on a tape, in [`GatModel::parameters`] order.
#[derive(Debug, Clone, Copy)]
pub struct ParamVars {
    pub text_projection: Var,
    pub text_bias: Var,
    pub layer1: LayerVars,
    pub layer2: LayerVars,
}

impl ParamVars {
    pub fn all(&self) -> [Var; 8] {
        [
            self.text_projection,
            self.text_bias,
            self.layer1.weight,
            self.layer1.att_src,
            self.layer1.att_dst,
            self.layer2.weight,
            self.layer2.att_src,
            self.layer2.att_dst,
        ]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerVars {
    pub weight: Var,
    pub att_src: Var,
    pub att_dst: Var,
}

/// Tape handles produced by one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardPass {
    /// `n × 1` output (misinformation probability under the default head).
    pub probs: Var,
    /// Layer-1 input matrix.
    pub fused: Var,
    /// Attention coefficients per layer, aligned with the edge index order.
    pub attention: [Var; 2],
}

pub const PARAMETER_NAMES: [&str; 8] = [
    "text_projection",
    "text_bias",
    "layer1.weight",
    "layer1.att_src",
    "layer1.att_dst",
    "layer2.weight",
    "layer2.att_src",
    "layer2.att_dst",
];

/// Glorot-uniform weights and zero biases, fully determined by `seed`.
pub fn init_model(mode: Mode, text_dim: usize, seed: u64) -> GatModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GatModel {
        mode,
        text_dim,
        text_projection: glorot(&mut rng, text_dim, PROJECTED_TEXT_DIM),
        text_bias: Tensor::zeros(&[PROJECTED_TEXT_DIM]),
        layer1: GatLayerParams::glorot(&mut rng, mode.input_dim(), HIDDEN_DIM),
        layer2: GatLayerParams::glorot(&mut rng, HIDDEN_DIM, 1),
        hidden_activation: Activation::Elu,
        output_activation: OutputActivation::Sigmoid,
    }
}

/// Projects text, concatenates per `mode`, and records it on the tape.
pub fn project_and_fuse(
    tape: &mut Tape,
    mode: Mode,
    params: &ParamVars,
    shallow: Var,
    pooled: Var,
) -> Result<Var, TensorError> {
    match mode {
        Mode::GraphOnly => Ok(shallow),
        Mode::TextOnly => project_text(tape, params, pooled),
        Mode::Multimodal => {
            let text = project_text(tape, params, pooled)?;
            tape.concat_cols(&[shallow, text])
        }
    }
}

fn project_text(tape: &mut Tape, params: &ParamVars, pooled: Var) -> Result<Var, TensorError> {
    let projected = tape.matmul(pooled, params.text_projection)?;
    tape.add_row_bias(projected, params.text_bias)
}

/// One attention layer. Each node attends over its incoming edges, self-loop
/// included: `e = LeakyReLU(a_src·Wh_src + a_dst·Wh_dst)`, `α = softmax` per
/// receiving node, `h' = act(Σ α·Wh_src)`. Returns the output and `α`.
pub fn gat_layer_forward(
    tape: &mut Tape,
    layer: &LayerVars,
    edges: &EdgeIndex,
    h: Var,
    activation: Activation,
) -> Result<(Var, Var), GatError> {
    if let Some(node) = edges.missing_self_loop() {
        return Err(GatError::MissingSelfLoop(node));
    }
    let n = edges.num_nodes;
    let hw = tape.matmul(h, layer.weight)?;
    let score_src = tape.matmul(hw, layer.att_src)?;
    let score_dst = tape.matmul(hw, layer.att_dst)?;
    let from_src = tape.gather_rows(score_src, Arc::clone(&edges.sources))?;
    let from_dst = tape.gather_rows(score_dst, Arc::clone(&edges.targets))?;
    let logits = tape.add(from_src, from_dst)?;
    let logits = tape.leaky_relu(logits, LEAKY_SLOPE);
    let alpha = tape.segment_softmax(logits, Arc::clone(&edges.targets))?;
    let messages = tape.gather_rows(hw, Arc::clone(&edges.sources))?;
    let weighted = tape.scale_rows(messages, alpha)?;
    let out = tape.scatter_add_rows(weighted, Arc::clone(&edges.targets), n)?;
    let out = match activation {
        Activation::Elu => tape.elu(out),
        Activation::Identity => out,
    };
    Ok((out, alpha))
}

impl GatModel {
    /// Zero weights everywhere; every output is exactly 0.5.
    pub fn zeros(mode: Mode, text_dim: usize) -> Self {
        GatModel {
            mode,
            text_dim,
            text_projection: Tensor::zeros(&[text_dim, PROJECTED_TEXT_DIM]),
            text_bias: Tensor::zeros(&[PROJECTED_TEXT_DIM]),
            layer1: GatLayerParams::zeros(mode.input_dim(), HIDDEN_DIM),
            layer2: GatLayerParams::zeros(HIDDEN_DIM, 1),
            hidden_activation: Activation::Elu,
            output_activation: OutputActivation::Sigmoid,
        }
    }

    pub fn parameters(&self) -> [&Tensor; 8] {
        [
            &self.text_projection,
            &self.text_bias,
            &self.layer1.weight,
            &self.layer1.att_src,
            &self.layer1.att_dst,
            &self.layer2.weight,
            &self.layer2.att_src,
            &self.layer2.att_dst,
        ]
    }

    pub fn parameters_mut(&mut self) -> [&mut Tensor; 8] {
        [
            &mut self.text_projection,
            &mut self.text_bias,
            &mut self.layer1.weight,
            &mut self.layer1.att_src,
            &mut self.layer1.att_dst,
            &mut self.layer2.weight,
            &mut self.layer2.att_src,
            &mut self.layer2.att_dst,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.parameters().iter().all(|t| t.is_finite())
    }

    /// Records parameters as trainable leaves, or as constants when frozen.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> ParamVars {
        let mut leaf = |t: &Tensor| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        let text_projection = leaf(&self.text_projection);
        let text_bias = leaf(&self.text_bias);
        let mut layer = |l: &GatLayerParams| LayerVars {
            weight: leaf(&l.weight),
            att_src: leaf(&l.att_src),
            att_dst: leaf(&l.att_dst),
        };
        let layer1 = layer(&self.layer1);
        let layer2 = layer(&self.layer2);
        ParamVars {
            text_projection,
            text_bias,
            layer1,
            layer2,
        }
    }

    pub fn check_features(&self, features: &FeatureSet) -> Result<(), GatError> {
        let mismatch = |reason: String| GatError::ModeFeatureMismatch {
            mode: self.mode,
            reason,
        };
        if features.shallow.cols() != SHALLOW_DIM && self.mode.uses_shallow() {
            return Err(mismatch(format!(
                "expected {SHALLOW_DIM} shallow columns, got {}",
                features.shallow.cols()
            )));
        }
        if self.mode.uses_text() && features.text_dim() != self.text_dim {
            return Err(mismatch(format!(
                "expected text dim {}, got {}",
                self.text_dim,
                features.text_dim()
            )));
        }
        if self.layer1.weight.rows() != self.mode.input_dim() {
            return Err(mismatch(format!(
                "layer 1 takes {} inputs, mode needs {}",
                self.layer1.weight.rows(),
                self.mode.input_dim()
            )));
        }
        Ok(())
    }

    /// Full pipeline on the tape given shallow (`n × 3`) and pooled text
    /// (`n × dim`) inputs.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        params: &ParamVars,
        edges: &EdgeIndex,
        shallow: Var,
        pooled: Var,
    ) -> Result<ForwardPass, GatError> {
        let fused = project_and_fuse(tape, self.mode, params, shallow, pooled)?;
        let (hidden, alpha1) =
            gat_layer_forward(tape, &params.layer1, edges, fused, self.hidden_activation)?;
        let (logit, alpha2) =
            gat_layer_forward(tape, &params.layer2, edges, hidden, Activation::Identity)?;
        let probs = match self.output_activation {
            OutputActivation::Sigmoid => tape.sigmoid(logit),
            OutputActivation::Identity => logit,
        };
        Ok(ForwardPass {
            probs,
            fused,
            attention: [alpha1, alpha2],
        })
    }

    fn run(&self, graph: &InteractionGraph, features: &FeatureSet) -> Result<(Tape, ForwardPass), GatError> {
        self.check_features(features)?;
        let mut tape = Tape::new();
        let params = self.bind(&mut tape, false);
        let shallow = tape.constant(features.shallow.clone());
        let pooled = if self.mode.uses_text() {
            tape.constant(features.text_pooled.clone())
        } else {
            // never read in graph-only mode
            tape.constant(Tensor::zeros(&[features.node_count(), 0]))
        };
        let pass = self.forward_on_tape(&mut tape, &params, graph.edge_index(), shallow, pooled)?;
        Ok((tape, pass))
    }

    /// Per-node probability of misinformation.
    pub fn forward(&self, graph: &InteractionGraph, features: &FeatureSet) -> Result<Vec<f64>, GatError> {
        let (tape, pass) = self.run(graph, features)?;
        Ok(tape.value(pass.probs).data().to_vec())
    }

    /// Attention coefficients of both layers in edge index order.
    pub fn attention(
        &self,
        graph: &InteractionGraph,
        features: &FeatureSet,
    ) -> Result<[Vec<f64>; 2], GatError> {
        let (tape, pass) = self.run(graph, features)?;
        Ok(pass.attention.map(|a| tape.value(a).data().to_vec()))
    }

    /// `n × 6` matrix `[shallow ‖ projected text]` under the current projection,
    /// whatever the mode.
    pub fn multimodal_features(&self, features: &FeatureSet) -> Result<Tensor, GatError> {
        if features.text_dim() != self.text_dim {
            return Err(GatError::ModeFeatureMismatch {
                mode: self.mode,
                reason: format!("expected text dim {}, got {}", self.text_dim, features.text_dim()),
            });
        }
        let mut projected = features.text_pooled.matmul(&self.text_projection)?;
        for r in 0..projected.rows() {
            for (v, b) in projected.row_mut(r).iter_mut().zip(self.text_bias.data()) {
                *v += b;
            }
        }
        let rows: Vec<Vec<f64>> = (0..features.node_count())
            .map(|r| {
                let mut row = features.shallow.row(r).to_vec();
                row.extend_from_slice(projected.row(r));
                row
            })
            .collect();
        Ok(Tensor::from_rows(&rows)?)
    }

    /// Stores [`GatModel::multimodal_features`] into `features.multimodal`.
    pub fn populate_multimodal(&self, features: &mut FeatureSet) -> Result<(), GatError> {
        features.multimodal = Some(self.multimodal_features(features)?);
        Ok(())
    }
}

/// `p > threshold` → misinformation, otherwise factual (ties go to factual).
pub fn predict(probabilities: &[f64], threshold: f64) -> Vec<Label> {
    probabilities
        .iter()
        .map(|&p| {
            if p > threshold {
                Label::Misinformation
            } else {
                Label::Factual
            }
        })
        .collect()
}

fn put_u8<W: Write>(w: &mut W, v: u8) -> std::io::Result<()> {
    w.write_all(&[v])
}

/// Binary checkpoint: magic, version, mode and activation codes, then a
/// table of named tensors with their shapes and little-endian `f64` data.
pub fn write_checkpoint<W: Write>(model: &GatModel, mut w: W) -> Result<(), GatError> {
    w.write_all(CHECKPOINT_MAGIC)?;
    put_u8(&mut w, CHECKPOINT_VERSION)?;
    put_u8(&mut w, model.mode.code())?;
    put_u8(&mut w, model.hidden_activation as u8)?;
    put_u8(&mut w, model.output_activation as u8)?;
    w.write_all(&(model.text_dim as u32).to_le_bytes())?;
    w.write_all(&(PARAMETER_NAMES.len() as u32).to_le_bytes())?;
    for (name, t) in PARAMETER_NAMES.iter().zip(model.parameters()) {
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        put_u8(&mut w, t.shape().len() as u8)?;
        for &d in t.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn take<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N], GatError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| GatError::BadCheckpoint(format!("truncated: {e}")))?;
    Ok(buf)
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<GatModel, GatError> {
    let bad = |m: &str| GatError::BadCheckpoint(m.to_string());
    if &take::<5, _>(&mut r)? != CHECKPOINT_MAGIC {
        return Err(bad("wrong magic"));
    }
    let [version] = take::<1, _>(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(bad("unsupported version"));
    }
    let [mode, hidden, output] = take::<3, _>(&mut r)?;
    let mode = Mode::from_code(mode).ok_or_else(|| bad("unknown mode"))?;
    let hidden_activation = match hidden {
        0 => Activation::Elu,
        1 => Activation::Identity,
        _ => return Err(bad("unknown hidden activation")),
    };
    let output_activation = match output {
        0 => OutputActivation::Sigmoid,
        1 => OutputActivation::Identity,
        _ => return Err(bad("unknown output activation")),
    };
    let text_dim = u32::from_le_bytes(take(&mut r)?) as usize;
    let count = u32::from_le_bytes(take(&mut r)?) as usize;
    if count != PARAMETER_NAMES.len() {
        return Err(bad("unexpected parameter count"));
    }

    let mut model = GatModel::zeros(mode, text_dim);
    model.hidden_activation = hidden_activation;
    model.output_activation = output_activation;
    for (expected, slot) in PARAMETER_NAMES.iter().zip(model.parameters_mut()) {
        let len = u16::from_le_bytes(take(&mut r)?) as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(|_| bad("truncated name"))?;
        if name != expected.as_bytes() {
            return Err(bad("parameter table out of order"));
        }
        let [ndim] = take::<1, _>(&mut r)?;
        let mut shape = Vec::with_capacity(ndim as usize);
        for _ in 0..ndim {
            shape.push(u32::from_le_bytes(take(&mut r)?) as usize);
        }
        if shape != slot.shape() {
            return Err(GatError::BadCheckpoint(format!(
                "{expected}: shape {shape:?}, expected {:?}",
                slot.shape()
            )));
        }
        for v in slot.data_mut() {
            *v = f64::from_le_bytes(take(&mut r)?);
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seed_deterministic() {
        let a = init_model(Mode::Multimodal, 8, 3);
        let b = init_model(Mode::Multimodal, 8, 3);
        assert_eq!(a, b);
        assert_ne!(init_model(Mode::Multimodal, 8, 0), init_model(Mode::Multimodal, 8, 1));
    }

    #[test]
    fn init_within_glorot_bounds() {
        for seed in 0..10 {
            let m = init_model(Mode::Multimodal, 20, seed);
            let checks = [
                (&m.text_projection, glorot_limit(20, 3)),
                (&m.layer1.weight, glorot_limit(6, 16)),
                (&m.layer1.att_src, glorot_limit(16, 1)),
                (&m.layer2.weight, glorot_limit(16, 1)),
                (&m.layer2.att_dst, glorot_limit(1, 1)),
            ];
            for (t, limit) in checks {
                assert!(t.data().iter().all(|v| v.abs() <= limit));
            }
            assert!(m.text_bias.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn mode_input_dims() {
        assert_eq!(init_model(Mode::GraphOnly, 5, 0).layer1.weight.shape(), &[3, 16]);
        assert_eq!(init_model(Mode::TextOnly, 5, 0).layer1.weight.shape(), &[3, 16]);
        assert_eq!(init_model(Mode::Multimodal, 5, 0).layer1.weight.shape(), &[6, 16]);
        assert_eq!(init_model(Mode::Multimodal, 5, 0).layer2.weight.shape(), &[16, 1]);
    }

    #[test]
    fn predict_threshold_rule() {
        assert_eq!(
            predict(&[0.9, 0.1, 0.5], 0.5),
            vec![Label::Misinformation, Label::Factual, Label::Factual]
        );
    }

    #[test]
    fn checkpoint_roundtrip_is_bitwise() {
        let mut m = init_model(Mode::TextOnly, 7, 11);
        m.text_bias.data_mut()[1] = -0.1234567890123;
        let mut buf = Vec::new();
        write_checkpoint(&m, &mut buf).unwrap();
        let back = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        for (a, b) in m.parameters().iter().zip(back.parameters()) {
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn checkpoint_rejects_garbage() {
        assert!(read_checkpoint(&b"MMCK2"[..]).is_err());
        let mut buf = Vec::new();
        write_checkpoint(&init_model(Mode::GraphOnly, 4, 0), &mut buf).unwrap();
        buf.truncate(buf.len() - 1);
        assert!(matches!(read_checkpoint(buf.as_slice()), Err(GatError::BadCheckpoint(_))));
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("graph".parse::<Mode>(), Ok(Mode::GraphOnly));
        assert_eq!("Multimodal".parse::<Mode>(), Ok(Mode::Multimodal));
        assert!("audio".parse::<Mode>().is_err());
    }
}
