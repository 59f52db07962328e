//! Local feature importance for one node's prediction via nonnegative HSIC
//! Lasso over the node's k-hop neighborhood.
//!
//! Each of the six fused input features gets a Gaussian kernel over the
//! neighborhood; the model's output probabilities get another. After
//! centering and normalization the output kernel is regressed on the feature
//! kernels with a nonnegative Lasso. Large coefficients mark features whose
//! dependence structure matches the model's output.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compute::Tensor;
use crate::features::{FeatureSet, STD_FLOOR};
use crate::gat::{predict, GatError, GatModel};
use crate::graph::{k_hop_neighborhood, GraphError, InteractionGraph, Label};

/// Fused feature order.
pub const FEATURE_NAMES: [&str; 6] = ["replies", "quotes", "retweets", "text_1", "text_2", "text_3"];

/// Grouped feature order; the three text dimensions collapse into `text`.
pub const GROUP_NAMES: [&str; 4] = ["replies", "quotes", "retweets", "text"];

/// Centered kernels with a Frobenius norm below this are treated as constant.
pub const DEGENERATE_NORM: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GraphLimeError {
    #[error("neighborhood has {n} nodes, need at least {min_samples}")]
    NeighborhoodTooSmall { n: usize, min_samples: usize },
    #[error("kernel bandwidth must be positive, got {0}")]
    NonpositiveSigma(f64),
    #[error("regularization must be nonnegative, got {0}")]
    NegativeRho(f64),
    #[error("kernel shapes differ: {0:?} vs {1:?}")]
    ShapeMismatch(Vec<usize>, Vec<usize>),
    #[error(transparent)]
    Gat(#[from] GatError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphLimeConfig {
    pub hops: usize,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub rho: f64,
    pub min_samples: usize,
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for GraphLimeConfig {
    fn default() -> Self {
        Self {
            hops: 2,
            sigma_x: 1.0,
            sigma_y: 1.0,
            rho: 0.1,
            min_samples: 5,
            tolerance: 1e-10,
            max_sweeps: 10_000,
        }
    }
}

/// Neighborhood design matrix and model outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationSample {
    /// Node indices in ascending order; row `r` of `x` belongs to `nodes[r]`.
    pub nodes: Vec<usize>,
    /// `n × 6`, columns standardized.
    pub x: Tensor,
    /// Model probabilities, unstandardized.
    pub y: Vec<f64>,
}

/// Subtracts column means and divides by the population standard deviation
/// (floored at [`STD_FLOOR`]).
pub fn standardize_columns(x: &Tensor) -> Tensor {
    let (rows, cols) = (x.rows(), x.cols());
    let mut out = x.clone();
    if rows == 0 {
        return out;
    }
    for c in 0..cols {
        let column: Vec<f64> = (0..rows).map(|r| x.row(r)[c]).collect();
        let z = standardize(&column);
        for (r, v) in z.into_iter().enumerate() {
            out.row_mut(r)[c] = v;
        }
    }
    out
}

fn standardize(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let std = std.max(STD_FLOOR);
    values.iter().map(|v| (v - mean) / std).collect()
}

/// Gathers the frozen fused features and model outputs of every node within
/// `hops` of `node`.
pub fn collect_neighborhood(
    model: &GatModel,
    graph: &InteractionGraph,
    features: &FeatureSet,
    node: usize,
    hops: usize,
    min_samples: usize,
) -> Result<ExplanationSample, GraphLimeError> {
    let probs = model.forward(graph, features)?;
    let fused = match &features.multimodal {
        Some(m) => m.clone(),
        None => model.multimodal_features(features)?,
    };
    sample_from(graph, &fused, &probs, node, hops, min_samples)
}

fn sample_from(
    graph: &InteractionGraph,
    fused: &Tensor,
    probs: &[f64],
    node: usize,
    hops: usize,
    min_samples: usize,
) -> Result<ExplanationSample, GraphLimeError> {
    let nodes: Vec<usize> = k_hop_neighborhood(graph, node, hops)?.into_iter().collect();
    if nodes.len() < min_samples {
        return Err(GraphLimeError::NeighborhoodTooSmall {
            n: nodes.len(),
            min_samples,
        });
    }
    let rows: Vec<Vec<f64>> = nodes.iter().map(|&i| fused.row(i).to_vec()).collect();
    let x = Tensor::from_rows(&rows).map_err(GatError::from)?;
    Ok(ExplanationSample {
        x: standardize_columns(&x),
        y: nodes.iter().map(|&i| probs[i]).collect(),
        nodes,
    })
}

/// `K[j,k] = exp(−(x_j − x_k)² / 2σ²)`.
pub fn gaussian_kernel_matrix(column: &[f64], sigma: f64) -> Result<Tensor, GraphLimeError> {
    if !(sigma > 0.0) {
        return Err(GraphLimeError::NonpositiveSigma(sigma));
    }
    let n = column.len();
    let scale = 1.0 / (2.0 * sigma * sigma);
    let mut k = Tensor::zeros(&[n, n]);
    for j in 0..n {
        k.row_mut(j)[j] = 1.0;
        for l in j + 1..n {
            let v = (-(column[j] - column[l]).powi(2) * scale).exp();
            k.row_mut(j)[l] = v;
            k.row_mut(l)[j] = v;
        }
    }
    Ok(k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CenteredKernel {
    pub matrix: Tensor,
    /// Set when centering left (numerically) nothing; `matrix` is then zero.
    pub constant: bool,
}

/// `HKH / ‖HKH‖_F` with `H = I − 11ᵀ/n`.
pub fn center_normalize(k: &Tensor) -> CenteredKernel {
    let n = k.rows();
    let mut c = k.clone();
    if n == 0 {
        return CenteredKernel {
            matrix: c,
            constant: true,
        };
    }
    let inv = 1.0 / n as f64;
    let row_means: Vec<f64> = (0..n).map(|r| k.row(r).iter().sum::<f64>() * inv).collect();
    let col_means: Vec<f64> = (0..n).map(|j| (0..n).map(|r| k.row(r)[j]).sum::<f64>() * inv).collect();
    let grand = row_means.iter().sum::<f64>() * inv;
    for r in 0..n {
        for (j, v) in c.row_mut(r).iter_mut().enumerate() {
            *v = *v - row_means[r] - col_means[j] + grand;
        }
    }
    let norm = c.data().iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < DEGENERATE_NORM {
        return CenteredKernel {
            matrix: Tensor::zeros(&[n, n]),
            constant: true,
        };
    }
    c.data_mut().iter_mut().for_each(|v| *v /= norm);
    CenteredKernel {
        matrix: c,
        constant: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoSolution {
    pub beta: Vec<f64>,
    /// Objective before the first sweep, then after each sweep.
    pub objective_history: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// `½‖vec(L) − Σ β_d vec(K_d)‖² + ρ‖β‖₁`.
pub fn lasso_objective(kernels: &[Tensor], output: &Tensor, beta: &[f64], rho: f64) -> f64 {
    let mut residual = output.data().to_vec();
    for (k, &b) in kernels.iter().zip(beta) {
        for (r, v) in residual.iter_mut().zip(k.data()) {
            *r -= b * v;
        }
    }
    0.5 * residual.iter().map(|r| r * r).sum::<f64>() + rho * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Nonnegative Lasso by cyclic coordinate descent. Each coordinate takes its
/// exact minimizer `β_d ← max(0, (c_d − ρ)/a_d)` with `a_d = ‖K_d‖²` and
/// `c_d = K_dᵀ(r + β_d K_d)`. Stops when no coordinate moves by `tolerance`
/// or after `max_sweeps`; the latter leaves `converged` false.
///
/// Inner products are formed once, so each sweep costs `O(d²)`.
pub fn hsic_lasso_solve(
    kernels: &[Tensor],
    output: &Tensor,
    rho: f64,
    tolerance: f64,
    max_sweeps: usize,
) -> Result<LassoSolution, GraphLimeError> {
    if !(rho >= 0.0) {
        return Err(GraphLimeError::NegativeRho(rho));
    }
    if let Some(k) = kernels.iter().find(|k| k.shape() != output.shape()) {
        return Err(GraphLimeError::ShapeMismatch(k.shape().to_vec(), output.shape().to_vec()));
    }
    let d = kernels.len();
    let gram: Vec<Vec<f64>> = kernels
        .iter()
        .map(|a| kernels.iter().map(|b| dot(a, b)).collect())
        .collect();
    let target: Vec<f64> = kernels.iter().map(|k| dot(k, output)).collect();
    let base = 0.5 * dot(output, output);
    let objective = |beta: &[f64]| {
        let mut quad = 0.0;
        for i in 0..d {
            for j in 0..d {
                quad += beta[i] * gram[i][j] * beta[j];
            }
        }
        let lin: f64 = (0..d).map(|i| target[i] * beta[i]).sum();
        base - lin + 0.5 * quad + rho * beta.iter().sum::<f64>()
    };

    let mut beta = vec![0.0; d];
    let mut history = vec![objective(&beta)];
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for i in 0..d {
            let a = gram[i][i];
            let updated = if a > 0.0 {
                let cross: f64 = (0..d).filter(|&j| j != i).map(|j| gram[i][j] * beta[j]).sum();
                ((target[i] - cross - rho) / a).max(0.0)
            } else {
                0.0
            };
            max_change = max_change.max((updated - beta[i]).abs());
            beta[i] = updated;
        }
        history.push(objective(&beta));
        if max_change < tolerance {
            converged = true;
            break;
        }
    }
    Ok(LassoSolution {
        beta,
        objective_history: history,
        sweeps,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupedImportance {
    pub replies: f64,
    pub quotes: f64,
    pub retweets: f64,
    pub text: f64,
}

impl GroupedImportance {
    pub fn from_beta(beta: &[f64; 6]) -> Self {
        Self {
            replies: beta[0],
            quotes: beta[1],
            retweets: beta[2],
            text: beta[3] + beta[4] + beta[5],
        }
    }

    pub fn values(&self) -> [f64; 4] {
        [self.replies, self.quotes, self.retweets, self.text]
    }

    /// Group names by descending score; ties keep the fixed group order.
    pub fn ranking(&self) -> Vec<String> {
        let values = self.values();
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        order.into_iter().map(|i| GROUP_NAMES[i].to_string()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExplanationFlag {
    ConstantFeature { feature: String },
    ConstantOutput,
    DidNotConverge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub node_id: String,
    pub label: Label,
    /// Model probability of misinformation.
    pub probability: f64,
    pub beta: [f64; 6],
    pub grouped: GroupedImportance,
    pub ranking: Vec<String>,
    pub flags: Vec<ExplanationFlag>,
    pub hops: usize,
    pub sample_size: usize,
}

impl Explanation {
    pub fn top_feature(&self) -> &str {
        &self.ranking[0]
    }
}

/// Kernels, centering and the Lasso fit for an already collected sample.
pub fn explain_sample(
    sample: &ExplanationSample,
    config: &GraphLimeConfig,
) -> Result<(LassoSolution, Vec<ExplanationFlag>), GraphLimeError> {
    let mut flags = Vec::new();
    let mut kernels = Vec::with_capacity(sample.x.cols());
    for c in 0..sample.x.cols() {
        let column: Vec<f64> = (0..sample.x.rows()).map(|r| sample.x.row(r)[c]).collect();
        let centered = center_normalize(&gaussian_kernel_matrix(&column, config.sigma_x)?);
        if centered.constant {
            flags.push(ExplanationFlag::ConstantFeature {
                feature: FEATURE_NAMES.get(c).copied().unwrap_or("feature").to_string(),
            });
        }
        kernels.push(centered.matrix);
    }
    let y = standardize(&sample.y);
    let output = center_normalize(&gaussian_kernel_matrix(&y, config.sigma_y)?);
    if output.constant {
        flags.push(ExplanationFlag::ConstantOutput);
    }
    let solution = hsic_lasso_solve(
        &kernels,
        &output.matrix,
        config.rho,
        config.tolerance,
        config.max_sweeps,
    )?;
    if !solution.converged {
        flags.push(ExplanationFlag::DidNotConverge);
    }
    Ok((solution, flags))
}

/// Explains `node` over its `config.hops` neighborhood.
pub fn explain_node(
    model: &GatModel,
    graph: &InteractionGraph,
    features: &FeatureSet,
    node: usize,
    config: &GraphLimeConfig,
) -> Result<Explanation, GraphLimeError> {
    let probs = model.forward(graph, features)?;
    let fused = match &features.multimodal {
        Some(m) => m.clone(),
        None => model.multimodal_features(features)?,
    };
    let sample = sample_from(graph, &fused, &probs, node, config.hops, config.min_samples)?;
    let (solution, flags) = explain_sample(&sample, config)?;
    let beta: [f64; 6] = std::array::from_fn(|i| solution.beta.get(i).copied().unwrap_or(0.0));
    let grouped = GroupedImportance::from_beta(&beta);
    Ok(Explanation {
        node_id: graph.node_id(node).to_string(),
        label: predict(&[probs[node]], 0.5)[0],
        probability: probs[node],
        beta,
        ranking: grouped.ranking(),
        grouped,
        flags,
        hops: config.hops,
        sample_size: sample.nodes.len(),
    })
}

/// [`explain_node`], widening the neighborhood one hop at a time (up to
/// `max_hops`) while it is too small.
pub fn explain_node_expanding(
    model: &GatModel,
    graph: &InteractionGraph,
    features: &FeatureSet,
    node: usize,
    config: &GraphLimeConfig,
    max_hops: usize,
) -> Result<Explanation, GraphLimeError> {
    let mut config = *config;
    loop {
        match explain_node(model, graph, features, node, &config) {
            Err(GraphLimeError::NeighborhoodTooSmall { .. }) if config.hops < max_hops => {
                config.hops += 1;
            }
            other => return other,
        }
    }
}
