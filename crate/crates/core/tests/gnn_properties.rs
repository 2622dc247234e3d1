mod common;

use common::*;
use interception_cert::estimator::{estimate, BaseClassifier, EstimateConfig, SmoothedGnn};
use interception_cert::gnn::{load_votes, write_votes, GnnModel, VoteTable};
use interception_cert::graph::Graph;
use interception_cert::smoothing::{sample, GraphView, SmoothingProbs};
use ndarray::{Array1, Array2};
use rand::Rng;

fn random_model(r: &mut rand_chacha::ChaCha8Rng, d: usize, skip: bool) -> GnnModel<f64> {
    let mut m = GnnModel::init(d, 6, 3, skip, r);
    m.token = Array1::from_shape_fn(d, |_| r.gen_range(-1.0..1.0));
    m
}

#[test]
fn permutation_equivariance() {
    let mut r = rng(21);
    for _ in 0..20 {
        let n = r.gen_range(3..=10);
        let (directed, skip) = (r.gen_bool(0.3), r.gen_bool(0.5));
        let g = random_graph(&mut r, n, 0.3, 4, directed);
        let model = random_model(&mut r, 4, skip);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, r.gen_range(0..=i));
        }
        let edges: Vec<_> = g.edges().iter().map(|&(s, d)| (perm[s], perm[d])).collect();
        let mut x = Array2::zeros((n, 4));
        for i in 0..n {
            x.row_mut(perm[i]).assign(&g.features().row(i));
        }
        let h = Graph::new(n, edges, x, None, true).unwrap();
        let a = model.forward_all(&GraphView::clean(&g)).unwrap();
        let b = model.forward_all(&GraphView::clean(&h)).unwrap();
        for i in 0..n {
            for c in 0..3 {
                assert!((a[[i, c]] - b[[perm[i], c]]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn intercepted_nodes_cannot_change_the_prediction() {
    let mut r = rng(33);
    for _ in 0..15 {
        let n = r.gen_range(3..=8);
        let directed = r.gen_bool(0.3);
        let g = random_graph(&mut r, n, 0.35, 3, directed);
        let skip = r.gen_bool(0.5);
        let model = random_model(&mut r, 3, skip);
        let token = model.token.to_vec();
        let probs = SmoothingProbs::new(r.gen_range(0.0..1.0), r.gen_range(0.0..1.0)).unwrap();
        for i in 0..40 {
            let s = sample(&g, &probs, 5, i);
            let view = GraphView::clean(&g).with_kept(&s.kept).with_ablation(&s.ablated, &token);
            let base = model.forward_all(&view).unwrap();
            for w in 0..n {
                let mut x = g.features().clone();
                x.row_mut(w).mapv_inplace(|_| r.gen_range(-5.0..5.0));
                let h = g.clone().with_features(x).unwrap();
                let hv = GraphView::clean(&h).with_kept(&s.kept).with_ablation(&s.ablated, &token);
                let out = model.forward_all(&hv).unwrap();
                for v in 0..n {
                    // The skip path reads the target's own clean features.
                    if skip && v == w {
                        continue;
                    }
                    if intercepted(&g, &s.kept, &s.ablated, w, v, 2) {
                        assert_eq!(base.row(v), out.row(v));
                    }
                }
            }
        }
    }
}

#[test]
fn vote_round_trip_preserves_tallies() {
    let mut r = rng(4);
    let g = random_graph(&mut r, 12, 0.3, 3, false);
    let model = random_model(&mut r, 3, false);
    let clf = SmoothedGnn::new(&model, &g, SmoothingProbs::new(0.3, 0.5).unwrap(), 17);
    let nodes: Vec<usize> = (0..12).collect();
    let mut table = VoteTable::new();
    for s in 0..60 {
        for (v, c) in clf.predict(s, &nodes).unwrap().into_iter().enumerate() {
            table.insert(v, s, c.unwrap()).unwrap();
        }
    }
    let path = std::env::temp_dir().join(format!("gnn-votes-{}.csv", std::process::id()));
    write_votes(&path, &table).unwrap();
    let back = load_votes(&path).unwrap();
    let cfg = EstimateConfig { n0: 20, n1: 40, alpha: 0.05 };
    for v in nodes {
        assert_eq!(back.tally(v), table.tally(v));
        let a = estimate(&clf, v, &cfg).unwrap();
        let mut b = estimate(&back, v, &cfg).unwrap();
        // The vote table only knows the classes it has seen.
        b.counts.resize(a.counts.len(), 0);
        b.selection.resize(a.selection.len(), 0);
        assert_eq!(a.counts, b.counts);
        assert_eq!(a.y_star, b.y_star);
    }
}

#[test]
fn single_precision_model_runs() {
    let mut r = rng(2);
    let g: Graph<f32> = Graph::new(
        4,
        [(0, 1), (1, 2), (2, 3)],
        Array2::from_shape_fn((4, 2), |_| r.gen_range(-1.0f32..1.0)),
        None,
        false,
    )
    .unwrap();
    let m = GnnModel::<f32>::init(2, 4, 2, false, &mut r);
    assert_eq!(m.predict_all(&GraphView::clean(&g)).unwrap().len(), 4);
}
