//! Property tests over randomly generated graphs, features and instances.

mod common;

use common::{graph_from_edges, normal_tensor, random_features, rng};
use modex::compute::Tensor;
use modex::features::FeatureSet;
use modex::gat::{init_model, Mode};
use modex::graph::{k_hop_neighborhood, EdgeProvenance, Label};
use modex::graphlime::{center_normalize, gaussian_kernel_matrix, hsic_lasso_solve};
use modex::train::f1_score;
use proptest::prelude::*;

fn edge_list() -> impl Strategy<Value = (usize, Vec<(usize, usize, EdgeProvenance)>)> {
    (2usize..14).prop_flat_map(|n| {
        let pair = (0..n, 0..n).prop_map(|(a, b)| (a, b, EdgeProvenance::CoUser));
        (Just(n), prop::collection::vec(pair, 0..3 * n))
    })
}

fn label() -> impl Strategy<Value = Label> {
    prop_oneof![Just(Label::Misinformation), Just(Label::Factual)]
}

fn lasso_instance(seed: u64, n: usize) -> (Vec<Tensor>, Tensor) {
    let mut r = rng(seed);
    let x = normal_tensor(&mut r, n, 6, 1.0);
    let y: Vec<f64> = (0..n).map(|i| x.row(i)[1] - 0.5 * x.row(i)[4] + 0.2 * x.row(i)[0]).collect();
    let kernels = (0..6)
        .map(|c| {
            let col: Vec<f64> = (0..n).map(|i| x.row(i)[c]).collect();
            center_normalize(&gaussian_kernel_matrix(&col, 1.0).unwrap()).matrix
        })
        .collect();
    (kernels, center_normalize(&gaussian_kernel_matrix(&y, 1.0).unwrap()).matrix)
}

fn permute_rows(t: &Tensor, perm: &[usize]) -> Tensor {
    let mut rows = vec![Vec::new(); t.rows()];
    for (i, &p) in perm.iter().enumerate() {
        rows[p] = t.row(i).to_vec();
    }
    Tensor::from_rows(&rows).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn f1_ignores_order(pairs in prop::collection::vec((label(), label()), 1..40), seed in any::<u64>()) {
        let (preds, labels): (Vec<Label>, Vec<Label>) = pairs.iter().copied().unzip();
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        let mut r = rng(seed);
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut r);
        let p2: Vec<Label> = order.iter().map(|&i| preds[i]).collect();
        let l2: Vec<Label> = order.iter().map(|&i| labels[i]).collect();
        let a = f1_score(&preds, &labels, Label::Misinformation).unwrap();
        let b = f1_score(&p2, &l2, Label::Misinformation).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!((0.0..=1.0).contains(&a.f1));
    }

    #[test]
    fn k_hop_neighborhoods_grow_with_k((n, edges) in edge_list(), node in 0usize..14) {
        let graph = graph_from_edges(n, &edges);
        let node = node % n;
        let mut previous = k_hop_neighborhood(&graph, node, 0).unwrap();
        prop_assert_eq!(previous.len(), 1);
        for k in 1..5 {
            let current = k_hop_neighborhood(&graph, node, k).unwrap();
            prop_assert!(previous.is_subset(&current));
            previous = current;
        }
    }

    #[test]
    fn attention_rows_sum_to_one((n, edges) in edge_list(), seed in 0u64..1000) {
        let graph = graph_from_edges(n, &edges);
        let features = random_features(&mut rng(seed), n, 3);
        let model = init_model(Mode::Multimodal, 3, seed);
        for alpha in model.attention(&graph, &features).unwrap() {
            let mut sums = vec![0.0; n];
            for (a, &t) in alpha.iter().zip(graph.edge_index().targets.iter()) {
                prop_assert!(*a >= 0.0);
                sums[t] += a;
            }
            for s in sums {
                prop_assert!((s - 1.0).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn lasso_coefficients_are_nonnegative(seed in any::<u64>(), n in 3usize..11, rho in 0.0f64..0.5) {
        let (kernels, output) = lasso_instance(seed, n);
        let solution = hsic_lasso_solve(&kernels, &output, rho, 1e-10, 10_000).unwrap();
        prop_assert!(solution.beta.iter().all(|b| *b >= 0.0));
        for w in solution.objective_history.windows(2) {
            prop_assert!(w[1] <= w[0] + 4.0 * f64::EPSILON * w[0].abs().max(1.0));
        }
    }

    #[test]
    fn larger_rho_never_grows_l1_norm(seed in any::<u64>(), n in 3usize..11, a in 0.0f64..0.3, b in 0.0f64..0.3) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (kernels, output) = lasso_instance(seed, n);
        let norm = |rho: f64| -> f64 {
            hsic_lasso_solve(&kernels, &output, rho, 1e-12, 100_000).unwrap().beta.iter().sum()
        };
        prop_assert!(norm(hi) <= norm(lo) + 1e-8);
    }

    #[test]
    fn relabeling_nodes_permutes_outputs((n, edges) in edge_list(), seed in 0u64..1000) {
        let mut r = rng(seed);
        let features = random_features(&mut r, n, 4);
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut r);

        let graph = graph_from_edges(n, &edges);
        let moved: Vec<_> = edges.iter().map(|&(s, t, p)| (perm[s], perm[t], p)).collect();
        let permuted_graph = graph_from_edges(n, &moved);
        let mut tokens = vec![None; n];
        for (i, &p) in perm.iter().enumerate() {
            tokens[p] = features.text_tokens[i].clone();
        }
        let permuted = FeatureSet {
            shallow: permute_rows(&features.shallow, &perm),
            text_pooled: permute_rows(&features.text_pooled, &perm),
            text_tokens: tokens,
            multimodal: None,
        };
        for mode in Mode::ALL {
            let model = init_model(mode, 4, seed);
            let before = model.forward(&graph, &features).unwrap();
            let after = model.forward(&permuted_graph, &permuted).unwrap();
            for i in 0..n {
                prop_assert!((before[i] - after[perm[i]]).abs() <= 1e-12);
            }
        }
    }
}
