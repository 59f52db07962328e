//! Model outputs against straight-line reimplementations.

mod common;

use common::{random_features, random_graph, rng};
use modex::attribution::integrated_gradients;
use modex::compute::{elu, sigmoid, Tensor};
use modex::gat::{init_model, GatLayerParams, GatModel, Mode};
use modex::graph::InteractionGraph;

/// Dense `n × n` adjacency, `adj[t][s]` meaning `s` sends to `t`.
fn adjacency(graph: &InteractionGraph) -> Vec<Vec<bool>> {
    let n = graph.node_count();
    let mut adj = vec![vec![false; n]; n];
    let idx = graph.edge_index();
    for (&s, &t) in idx.sources.iter().zip(idx.targets.iter()) {
        adj[t][s] = true;
    }
    adj
}

fn matmul(a: &[Vec<f64>], w: &Tensor) -> Vec<Vec<f64>> {
    let (k, m) = (w.rows(), w.cols());
    a.iter()
        .map(|row| (0..m).map(|j| (0..k).map(|p| row[p] * w.row(p)[j]).sum()).collect())
        .collect()
}

/// One layer by explicit loops; returns the output and `alpha[t][s]`.
fn dense_layer(
    adj: &[Vec<bool>],
    h: &[Vec<f64>],
    layer: &GatLayerParams,
    act: fn(f64) -> f64,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = adj.len();
    let hw = matmul(h, &layer.weight);
    let dot = |row: &[f64], a: &Tensor| row.iter().zip(a.data()).map(|(x, y)| x * y).sum::<f64>();
    let src: Vec<f64> = hw.iter().map(|r| dot(r, &layer.att_src)).collect();
    let dst: Vec<f64> = hw.iter().map(|r| dot(r, &layer.att_dst)).collect();
    let mut alpha = vec![vec![0.0; n]; n];
    let mut out = vec![vec![0.0; hw[0].len()]; n];
    for t in 0..n {
        let e: Vec<(usize, f64)> = (0..n)
            .filter(|&s| adj[t][s])
            .map(|s| {
                let z = src[s] + dst[t];
                (s, if z > 0.0 { z } else { 0.2 * z })
            })
            .collect();
        let max = e.iter().fold(f64::NEG_INFINITY, |m, (_, v)| m.max(*v));
        let total: f64 = e.iter().map(|(_, v)| (v - max).exp()).sum();
        for &(s, v) in &e {
            alpha[t][s] = (v - max).exp() / total;
            for (o, x) in out[t].iter_mut().zip(&hw[s]) {
                *o += alpha[t][s] * x;
            }
        }
        out[t].iter_mut().for_each(|v| *v = act(*v));
    }
    (out, alpha)
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

fn dense_forward(model: &GatModel, graph: &InteractionGraph, shallow: &Tensor, pooled: &Tensor) -> Vec<f64> {
    let adj = adjacency(graph);
    let text: Vec<Vec<f64>> = matmul(&rows(pooled), &model.text_projection)
        .into_iter()
        .map(|r| r.iter().zip(model.text_bias.data()).map(|(x, b)| x + b).collect())
        .collect();
    let fused: Vec<Vec<f64>> = match model.mode {
        Mode::GraphOnly => rows(shallow),
        Mode::TextOnly => text,
        Mode::Multimodal => rows(shallow).into_iter().zip(text).map(|(a, b)| [a, b].concat()).collect(),
    };
    let (hidden, _) = dense_layer(&adj, &fused, &model.layer1, elu);
    let (logit, _) = dense_layer(&adj, &hidden, &model.layer2, |x| x);
    logit.iter().map(|r| sigmoid(r[0])).collect()
}

fn perturbed_model(mode: Mode, dim: usize, seed: u64) -> GatModel {
    let mut model = init_model(mode, dim, seed);
    let mut r = rng(seed + 77);
    model.text_bias = Tensor::vector(common::normal_tensor(&mut r, 1, 3, 0.3).into_data());
    for layer in [&mut model.layer1, &mut model.layer2] {
        let out = layer.att_src.rows();
        layer.att_src = common::normal_tensor(&mut r, out, 1, 0.8);
        layer.att_dst = common::normal_tensor(&mut r, out, 1, 0.8);
    }
    model
}

#[test]
fn forward_matches_straight_line_oracle() {
    for seed in 0..10u64 {
        for mode in Mode::ALL {
            let mut r = rng(seed);
            let graph = random_graph(&mut r, 12, 0.25);
            let features = random_features(&mut r, 12, 5);
            let model = perturbed_model(mode, 5, seed);
            let got = model.forward(&graph, &features).unwrap();
            let want = dense_forward(&model, &graph, &features.shallow, &features.text_pooled);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() <= 1e-12, "seed {seed} {mode}: {g} vs {w}");
            }
        }
    }
}

#[test]
fn attention_matches_dense_oracle() {
    for seed in 0..10u64 {
        let mut r = rng(500 + seed);
        let graph = random_graph(&mut r, 15, 0.2);
        let features = random_features(&mut r, 15, 4);
        let model = perturbed_model(Mode::Multimodal, 4, seed);
        let [a1, a2] = model.attention(&graph, &features).unwrap();

        let adj = adjacency(&graph);
        let fused = rows(&model.multimodal_features(&features).unwrap());
        let (hidden, dense1) = dense_layer(&adj, &fused, &model.layer1, elu);
        let (_, dense2) = dense_layer(&adj, &hidden, &model.layer2, |x| x);
        let idx = graph.edge_index();
        for (k, (&s, &t)) in idx.sources.iter().zip(idx.targets.iter()).enumerate() {
            assert!((a1[k] - dense1[t][s]).abs() <= 1e-12);
            assert!((a2[k] - dense2[t][s]).abs() <= 1e-12);
        }
    }
}

#[test]
fn integrated_gradients_converge_in_steps() {
    let mut r = rng(42);
    let graph = random_graph(&mut r, 9, 0.3);
    let features = random_features(&mut r, 9, 6);
    let model = perturbed_model(Mode::Multimodal, 6, 42);
    for node in [0, 4] {
        let coarse = integrated_gradients(&model, &graph, &features, node, 50).unwrap();
        let fine = integrated_gradients(&model, &graph, &features, node, 5000).unwrap();
        for (a, b) in coarse.attributions.data().iter().zip(fine.attributions.data()) {
            assert!((a - b).abs() <= 1e-3, "{a} vs {b}");
        }
        assert!(fine.completeness_gap() <= coarse.completeness_gap() + 1e-9);
    }
}

#[test]
fn graph_only_mode_has_no_text_parameters_in_play() {
    let mut r = rng(3);
    let graph = random_graph(&mut r, 6, 0.5);
    let features = random_features(&mut r, 6, 4);
    let mut model = perturbed_model(Mode::GraphOnly, 4, 3);
    let before = model.forward(&graph, &features).unwrap();
    model.text_projection = model.text_projection.map(|v| v + 10.0);
    assert_eq!(before, model.forward(&graph, &features).unwrap());
}
