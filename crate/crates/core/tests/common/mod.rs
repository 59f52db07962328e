//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use modex::compute::Tensor;
use modex::features::{FeatureSet, NodeTokens};
use modex::graph::{EdgeProvenance, InteractionGraph, Label, NodeKind, Split};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| scale * Distribution::<f64>::sample(&StandardNormal, rng))
        .collect::<Vec<f64>>();
    Tensor::matrix(rows, cols, data).expect("sized")
}

/// Erdős–Rényi style graph with each undirected pair linked with probability
/// `p`. Labels alternate; even nodes train, odd nodes test.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> InteractionGraph {
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(p) {
                edges.push((a, b, EdgeProvenance::CoUser));
                edges.push((b, a, EdgeProvenance::CoUser));
            }
        }
    }
    graph_from_edges(n, &edges)
}

pub fn graph_from_edges(n: usize, edges: &[(usize, usize, EdgeProvenance)]) -> InteractionGraph {
    let ids = (0..n).map(|i| format!("t{i:04}")).collect();
    let labels = (0..n)
        .map(|i| Some(if i % 2 == 0 { Label::Misinformation } else { Label::Factual }))
        .collect();
    let splits = (0..n).map(|i| if i % 2 == 0 { Split::Train } else { Split::Test }).collect();
    InteractionGraph::from_edges(ids, vec![NodeKind::Tweet; n], edges, labels, splits).expect("valid edges")
}

/// Random shallow features and token matrices whose mean is the pooled row.
pub fn random_features(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> FeatureSet {
    let shallow = normal_tensor(rng, n, 3, 1.0);
    let mut pooled = Vec::with_capacity(n * dim);
    let mut tokens = Vec::with_capacity(n);
    for _ in 0..n {
        let count = rng.random_range(1..=4);
        let matrix = normal_tensor(rng, count, dim, 0.5);
        for c in 0..dim {
            pooled.push((0..count).map(|r| matrix.row(r)[c]).sum::<f64>() / count as f64);
        }
        tokens.push(Some(NodeTokens {
            texts: (0..count).map(|i| format!("w{i}")).collect(),
            matrix,
        }));
    }
    FeatureSet {
        shallow,
        text_pooled: Tensor::matrix(n, dim, pooled).expect("sized"),
        text_tokens: tokens,
        multimodal: None,
    }
}
