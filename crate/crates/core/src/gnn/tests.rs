use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::ingest::SplitMasks;
use crate::numcore::{grad_check_params, matmul, NumError, SparseMatrix, Tape, Tensor};
use crate::simgraph::{Metric, SimilarityGraph, Threshold};

type Graph = SimilarityGraph<f64>;

fn threshold() -> Threshold {
    Threshold::user(Metric::Cosine, 0.5).unwrap()
}

fn random_graph(n: usize, dim: usize, p: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features: Vec<f64> = (0..n * dim).map(|_| rng.random_range(0.05..1.0)).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((i, j, rng.random_range(0.5..1.0)));
            }
        }
    }
    Graph::from_edges(features, dim, &edges, Metric::Cosine, threshold()).unwrap()
}

fn features_of(g: &Graph) -> Tensor {
    Tensor::from_vec(g.node_count(), g.dim(), g.features().to_vec()).unwrap()
}

fn layer(kind: LayerKind, in_dim: usize, out_dim: usize, activation: Activation) -> LayerSpec {
    LayerSpec {
        kind,
        in_dim,
        out_dim,
        activation,
    }
}

fn run_layer(spec: &LayerSpec, g: &Graph, params: &[Tensor]) -> Tensor {
    let ctx = GraphContext::new(g, EdgeWeighting::Affinity).unwrap();
    let mut tape = Tape::new();
    let x = tape.leaf(features_of(g));
    let vars: Vec<_> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let out = layer_forward(&mut tape, &ctx, spec, x, &vars).unwrap();
    tape.value(out).clone()
}

fn all_layer_kinds(in_dim: usize) -> Vec<LayerSpec> {
    vec![
        layer(LayerKind::Gcn, in_dim, 5, Activation::Relu),
        layer(LayerKind::GatV2 { heads: 2, concat: true }, in_dim, 6, Activation::Relu),
        layer(
            LayerKind::GatV2 {
                heads: 3,
                concat: false,
            },
            in_dim,
            4,
            Activation::Identity,
        ),
        layer(
            LayerKind::Sage {
                aggregator: Aggregator::Max,
            },
            in_dim,
            5,
            Activation::Relu,
        ),
        layer(
            LayerKind::Sage {
                aggregator: Aggregator::Mean,
            },
            in_dim,
            5,
            Activation::Relu,
        ),
    ]
}

fn assert_close(a: &Tensor, b: &Tensor, tol: f64) {
    assert_eq!(a.shape(), b.shape());
    for (x, y) in a.data().iter().zip(b.data()) {
        assert!((x - y).abs() <= tol, "{x} vs {y}");
    }
}

#[test]
fn presets_match_the_published_architectures() {
    let [gcn_cm, gcn_euc, gat, sage] = preset_architectures();
    for spec in [&gcn_cm, &gcn_euc, &gat, &sage] {
        spec.validate().unwrap();
        assert_eq!((spec.in_dim(), spec.out_dim()), (16, 4));
        let acts: Vec<_> = spec.layers.iter().map(|l| l.activation).collect();
        assert_eq!(acts.last(), Some(&Activation::Identity));
        assert!(acts[..acts.len() - 1].iter().all(|a| *a == Activation::Relu));
    }
    let widths = |s: &ModelSpec| s.layers.iter().map(|l| l.out_dim).collect::<Vec<_>>();
    assert_eq!(widths(&gcn_cm), [64, 64, 64, 64, 4]);
    assert_eq!(widths(&gcn_euc), [32, 32, 32, 4]);
    assert_eq!(gcn_euc.layers.len(), 4);
    assert_eq!(widths(&sage), [64, 32, 16, 8, 4]);
    let aggs: Vec<_> = sage
        .layers
        .iter()
        .map(|l| match l.kind {
            LayerKind::Sage { aggregator } => aggregator,
            _ => panic!("non-SAGE layer"),
        })
        .collect();
    use Aggregator::{Max, Mean};
    assert_eq!(aggs, [Max, Max, Mean, Max, Max]);
    assert_eq!(gat.layers.len(), 2);
    assert!(gat
        .layers
        .iter()
        .all(|l| matches!(l.kind, LayerKind::GatV2 { heads: 4, .. })));
    assert_eq!(gat.layers[0].head_width(), Some(8));
}

#[test]
fn epoch_defaults_follow_the_metric_pairing() {
    assert_eq!(Preset::GcnCosMan.default_epochs(Metric::Euclidean), 200);
    assert_eq!(Preset::GcnEuc.default_epochs(Metric::Euclidean), 200);
    assert_eq!(Preset::Gat.default_epochs(Metric::Euclidean), 200);
    assert_eq!(Preset::Sage.default_epochs(Metric::Euclidean), 300);
    for p in Preset::ALL {
        assert_eq!(p.default_epochs(Metric::Cosine), 300);
        assert_eq!(p.default_epochs(Metric::Manhattan), 300);
    }
    let cfg = TrainConfig::default();
    assert_eq!(cfg.resolve_epochs(&Preset::GcnEuc.spec(), Metric::Euclidean), 200);
    let cfg = TrainConfig {
        epochs: Some(7),
        ..Default::default()
    };
    assert_eq!(cfg.resolve_epochs(&Preset::GcnEuc.spec(), Metric::Euclidean), 7);
}

#[test]
fn spec_validation_rejects_broken_chains() {
    let bad = ModelSpec::custom(vec![
        layer(LayerKind::Gcn, 4, 8, Activation::Relu),
        layer(LayerKind::Gcn, 6, 2, Activation::Identity),
    ]);
    assert!(bad.validate().is_err());
    let bad = ModelSpec::custom(vec![layer(
        LayerKind::GatV2 { heads: 3, concat: true },
        4,
        8,
        Activation::Relu,
    )]);
    assert!(bad.validate().is_err());
    let bad = ModelSpec::custom(vec![layer(
        LayerKind::GatV2 {
            heads: 0,
            concat: false,
        },
        4,
        8,
        Activation::Relu,
    )]);
    assert!(bad.validate().is_err());
}

#[test]
fn gcn_isolated_node_is_identity() {
    let g = Graph::from_edges(vec![0.3, -1.2, 2.0], 3, &[], Metric::Cosine, threshold()).unwrap();
    let spec = layer(LayerKind::Gcn, 3, 3, Activation::Identity);
    let out = run_layer(&spec, &g, &[Tensor::identity(3), Tensor::zeros(1, 3)]);
    assert_eq!(out.data(), g.features());
}

#[test]
fn gcn_two_nodes_average() {
    let g = Graph::from_edges(
        vec![1.0, 2.0, 5.0, -4.0],
        2,
        &[(0, 1, 1.0)],
        Metric::Cosine,
        threshold(),
    )
    .unwrap();
    let spec = layer(LayerKind::Gcn, 2, 2, Activation::Identity);
    let out = run_layer(&spec, &g, &[Tensor::identity(2), Tensor::zeros(1, 2)]);
    assert_close(
        &out,
        &Tensor::from_rows(&[vec![3.0, -1.0], vec![3.0, -1.0]]).unwrap(),
        1e-15,
    );
}

fn dense_gcn_oracle(g: &Graph, weighting: EdgeWeighting) -> Tensor {
    let n = g.node_count();
    let mut a = Tensor::identity(n);
    for i in 0..n {
        let (ids, ws) = g.neighbors(i);
        for (&j, &w) in ids.iter().zip(ws) {
            let w = match (weighting, g.metric()) {
                (EdgeWeighting::Unweighted, _) => 1.0,
                (_, Metric::Cosine) => w,
                _ => 1.0 / (1.0 + w),
            };
            a.set(i, j as usize, w);
        }
    }
    let deg: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum()).collect();
    let mut norm = Tensor::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            norm.set(i, j, a.get(i, j) / (deg[i].sqrt() * deg[j].sqrt()));
        }
    }
    norm
}

#[test]
fn gcn_sparse_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..5 {
        let g = random_graph(20, 6, 0.3, seed);
        let spec = layer(LayerKind::Gcn, 6, 4, Activation::Relu);
        let params = init_params::<f64>(&[spec], seed);
        let mut params = params;
        params[1]
            .data_mut()
            .iter_mut()
            .for_each(|b| *b = rng.random_range(-0.5..0.5));
        let out = run_layer(&spec, &g, &params);
        let hw = matmul(&features_of(&g), &params[0]).unwrap();
        let mut dense = matmul(&dense_gcn_oracle(&g, EdgeWeighting::Affinity), &hw).unwrap();
        for r in 0..dense.rows() {
            for c in 0..dense.cols() {
                let v = dense.get(r, c) + params[1].get(0, c);
                dense.set(r, c, v.max(0.0));
            }
        }
        assert_close(&out, &dense, 1e-12);
    }
}

#[test]
fn distance_graphs_use_affinity_weights() {
    let features = random_graph(8, 3, 0.0, 1).features().to_vec();
    let m = crate::ingest::FeatureMatrix::new(3, features, vec![crate::ingest::TriageLevel::Red; 8]).unwrap();
    let t = crate::simgraph::mean_pairwise(&m, Metric::Euclidean).unwrap();
    let g = crate::simgraph::build_graph(&m, Metric::Euclidean, t).unwrap();
    for w in [EdgeWeighting::Affinity, EdgeWeighting::Unweighted] {
        let ctx = GraphContext::new(&g, w).unwrap();
        assert_close(&ctx.gcn_operator().to_dense(), &dense_gcn_oracle(&g, w), 1e-15);
    }
}

fn attention(spec: &LayerSpec, g: &Graph, params: &[Tensor]) -> Tensor {
    let ctx = GraphContext::new(g, EdgeWeighting::Affinity).unwrap();
    let mut tape = Tape::new();
    let x = tape.leaf(features_of(g));
    let vars: Vec<_> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let (_, alpha) = gatv2_forward_with_attention(&mut tape, &ctx, spec, x, &vars).unwrap();
    tape.value(alpha).clone()
}

#[test]
fn gat_self_loop_only_has_unit_attention() {
    let g = Graph::from_edges(vec![0.4, 0.9], 2, &[], Metric::Cosine, threshold()).unwrap();
    let spec = layer(LayerKind::GatV2 { heads: 4, concat: true }, 2, 8, Activation::Identity);
    let alpha = attention(&spec, &g, &init_params(&[spec], 1));
    assert_eq!(alpha.shape(), (1, 4));
    assert!(alpha.data().iter().all(|&a| a == 1.0));
}

#[test]
fn gat_symmetric_twins_attend_uniformly() {
    let g = Graph::from_edges(vec![0.4, 0.9, 0.4, 0.9], 2, &[(0, 1, 1.0)], Metric::Cosine, threshold()).unwrap();
    let spec = layer(
        LayerKind::GatV2 {
            heads: 2,
            concat: false,
        },
        2,
        3,
        Activation::Identity,
    );
    let alpha = attention(&spec, &g, &init_params(&[spec], 2));
    assert_eq!(alpha.shape(), (4, 2));
    assert!(alpha.data().iter().all(|&a| (a - 0.5).abs() < 1e-15));
}

#[test]
fn gat_attention_sums_to_one_per_neighbourhood() {
    let g = random_graph(15, 4, 0.3, 9);
    let spec = layer(LayerKind::GatV2 { heads: 3, concat: true }, 4, 6, Activation::Relu);
    let alpha = attention(&spec, &g, &init_params(&[spec], 3));
    let mut sums = vec![0.0; g.node_count() * 3];
    let mut e = 0;
    for i in 0..g.node_count() {
        for _ in 0..=g.degree(i) {
            for h in 0..3 {
                sums[i * 3 + h] += alpha.get(e, h);
            }
            e += 1;
        }
    }
    assert_eq!(e, alpha.rows());
    assert!(sums.iter().all(|s| (s - 1.0).abs() < 1e-12));
}

#[test]
fn sage_isolated_node_uses_the_self_path_only() {
    let g = Graph::from_edges(vec![0.3, 0.7, 0.2], 3, &[], Metric::Cosine, threshold()).unwrap();
    for aggregator in [Aggregator::Max, Aggregator::Mean] {
        let spec = layer(LayerKind::Sage { aggregator }, 3, 2, Activation::Relu);
        let params = init_params::<f64>(&[spec], 4);
        let out = run_layer(&spec, &g, &params);
        let w_self = &params[params.len() - 2];
        let expect = matmul(&features_of(&g), w_self).unwrap().map(|v| v.max(0.0));
        assert_eq!(out, expect);
    }
}

#[test]
fn sage_mean_with_one_neighbour_is_that_neighbour() {
    let g = Graph::from_edges(vec![0.3, 0.7, 0.2, 0.9], 2, &[(0, 1, 0.9)], Metric::Cosine, threshold()).unwrap();
    let ctx = GraphContext::new(&g, EdgeWeighting::Affinity).unwrap();
    let mut tape = Tape::new();
    let x = tape.leaf(features_of(&g));
    let agg = sage_aggregate(&mut tape, &ctx, Aggregator::Mean, x, &[]).unwrap();
    assert_eq!(tape.value(agg).row(0), &[0.2, 0.9]);
    assert_eq!(tape.value(agg).row(1), &[0.3, 0.7]);
}

#[test]
fn sage_max_pool_matches_brute_force() {
    for seed in 0..10 {
        let g = random_graph(10, 4, 0.35, seed);
        let spec = layer(
            LayerKind::Sage {
                aggregator: Aggregator::Max,
            },
            4,
            3,
            Activation::Relu,
        );
        let mut params = init_params::<f64>(&[spec], seed);
        params[1] = Tensor::filled(1, 4, 0.1);
        let ctx = GraphContext::new(&g, EdgeWeighting::Affinity).unwrap();
        let mut tape = Tape::new();
        let x = tape.leaf(features_of(&g));
        let vars: Vec<_> = params.iter().map(|p| tape.leaf(p.clone())).collect();
        let agg = sage_aggregate(&mut tape, &ctx, Aggregator::Max, x, &vars).unwrap();
        let agg = tape.value(agg);

        let pooled = matmul(&features_of(&g), &params[0]).unwrap();
        for i in 0..g.node_count() {
            let (ids, _) = g.neighbors(i);
            for c in 0..4 {
                let expect = ids
                    .iter()
                    .map(|&j| (pooled.get(j as usize, c) + 0.1).max(0.0))
                    .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
                    .unwrap_or(0.0);
                assert_eq!(agg.get(i, c), expect, "node {i} coord {c}");
            }
        }
    }
}

fn permuted(g: &Graph, perm: &[usize]) -> Graph {
    // new id of old node i is perm[i]
    let n = g.node_count();
    let d = g.dim();
    let mut features = vec![0.0; n * d];
    for i in 0..n {
        features[perm[i] * d..(perm[i] + 1) * d].copy_from_slice(g.feature_row(i));
    }
    let mut edges = Vec::new();
    for i in 0..n {
        let (ids, ws) = g.neighbors(i);
        for (&j, &w) in ids.iter().zip(ws) {
            if (j as usize) > i {
                edges.push((perm[i], perm[j as usize], w));
            }
        }
    }
    Graph::from_edges(features, d, &edges, g.metric(), g.threshold()).unwrap()
}

#[test]
fn every_layer_is_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..3 {
        let g = random_graph(14, 5, 0.3, seed);
        let mut perm: Vec<usize> = (0..14).collect();
        perm.shuffle(&mut rng);
        let pg = permuted(&g, &perm);
        for spec in all_layer_kinds(5) {
            let params = init_params::<f64>(&[spec], seed);
            let out = run_layer(&spec, &g, &params);
            let pout = run_layer(&spec, &pg, &params);
            for i in 0..14 {
                for (a, b) in out.row(i).iter().zip(pout.row(perm[i])) {
                    assert!((a - b).abs() < 1e-12, "{spec:?}");
                }
            }
        }
    }
}

/// Random parameters with positive biases so ReLU units sit away from zero;
/// max-pool biases are larger so pooled entries are rarely clamped to tied
/// zeros.
fn check_params(layers: &[LayerSpec], seed: u64) -> Vec<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb1a5);
    let mut params = init_params::<f64>(layers, seed);
    let mut at = 0;
    for l in layers {
        let k = param_shapes(l).len();
        for (i, p) in params[at..at + k].iter_mut().enumerate() {
            if p.rows() == 1 {
                let pool = matches!(
                    l.kind,
                    LayerKind::Sage {
                        aggregator: Aggregator::Max
                    }
                ) && i == 1;
                let range = if pool { 2.0..3.0 } else { 0.05..0.3 };
                p.data_mut()
                    .iter_mut()
                    .for_each(|b| *b = rng.random_range(range.clone()));
            }
        }
        at += k;
    }
    params
}

/// Max relative error of the full model gradient on a 12-node graph,
/// resampling until no ReLU or max input lies within 1e-4 of its kink.
fn model_grad_error(spec: &ModelSpec) -> f64 {
    for seed in 0..500 {
        let g = random_graph(12, spec.in_dim(), 0.3, seed);
        let labels: Vec<usize> = (0..12).map(|i| (i * 7 + seed as usize) % spec.out_dim()).collect();
        let rows: Vec<usize> = (0..12).collect();
        let ctx = GraphContext::new(&g, EdgeWeighting::Affinity).unwrap();
        let x = features_of(&g);
        let params = check_params(&spec.layers, seed);
        let loss = |tape: &mut Tape, vars: &[crate::numcore::Var]| {
            let xv = tape.leaf(x.clone());
            let logits = forward_vars(spec, tape, &ctx, xv, vars).map_err(|e| match e {
                GnnError::Num(n) => n,
                other => NumError::Shape(other.to_string()),
            })?;
            tape.cross_entropy(logits, &labels, &rows)
        };
        let mut probe = Tape::new();
        let vars: Vec<_> = params.iter().map(|p| probe.leaf(p.clone())).collect();
        loss(&mut probe, &vars).unwrap();
        if probe.kink_margin().is_some_and(|m| m < 1e-4) {
            continue;
        }
        return grad_check_params(loss, &params, 1e-5).unwrap().max_relative_error;
    }
    panic!("no kink-free sample found");
}

#[test]
fn every_layer_passes_grad_check() {
    for spec in all_layer_kinds(4) {
        let head = layer(LayerKind::Gcn, spec.out_dim, 3, Activation::Identity);
        let err = model_grad_error(&ModelSpec::custom(vec![spec, head]));
        assert!(err < 1e-4, "{spec:?}: {err}");
    }
}

#[test]
fn every_preset_passes_grad_check() {
    for preset in Preset::ALL {
        let err = model_grad_error(&preset.spec());
        assert!(err < 1e-4, "{preset}: {err}");
    }
}

/// Two Gaussian blobs with edges only inside each blob.
pub(crate) fn two_clusters(per: usize, dim: usize, seed: u64) -> (Graph, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 2 * per;
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i / per;
        for d in 0..dim {
            let centre = if (d % 2 == 0) == (c == 0) { 0.8 } else { 0.2 };
            features.push(centre + rng.random_range(-0.08..0.08));
        }
        labels.push(c);
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if i / per == j / per && rng.random::<f64>() < 0.3 {
                edges.push((i, j, 0.9));
            }
        }
    }
    let g = Graph::from_edges(features, dim, &edges, Metric::Cosine, threshold()).unwrap();
    (g, labels)
}

#[test]
fn presets_separate_two_clusters() {
    let (g, labels) = two_clusters(20, 16, 1);
    let masks = SplitMasks {
        train: (0..40).collect(),
        ..Default::default()
    };
    for preset in Preset::ALL {
        let cfg = TrainConfig {
            epochs: Some(200),
            seed: 3,
            ..Default::default()
        };
        let out = train(&preset.spec(), &g, &labels, &masks, &cfg).unwrap();
        let first = out
            .report
            .history
            .iter()
            .position(|r| r.train_accuracy >= 0.95)
            .unwrap_or_else(|| panic!("{preset} never reached 95%"));
        assert!(first < 200);
        let losses = out.report.losses();
        for w in losses.windows(20).step_by(20) {
            assert!(w[19] <= w[0] + 1e-12, "{preset}: loss rose across a 20-epoch window");
        }
        let again = train(&preset.spec(), &g, &labels, &masks, &cfg).unwrap();
        assert_eq!(again.report, out.report);
    }
}

#[test]
fn non_finite_loss_aborts_with_diagnostics() {
    let (g, labels) = two_clusters(5, 4, 2);
    let masks = SplitMasks {
        train: (0..10).collect(),
        ..Default::default()
    };
    let spec = ModelSpec::custom(vec![layer(LayerKind::Gcn, 4, 2, Activation::Identity)]);
    let mut cfg = TrainConfig {
        epochs: Some(50),
        ..Default::default()
    };
    cfg.adam.lr = 1e308;
    let err = train(&spec, &g, &labels, &masks, &cfg).unwrap_err();
    assert!(
        matches!(err, GnnError::NonFiniteLoss { lr, .. } if lr == 1e308),
        "{err:?}"
    );
}

#[test]
fn sparse_operand_is_symmetric() {
    let g = random_graph(12, 3, 0.4, 8);
    let ctx = GraphContext::new(&g, EdgeWeighting::Affinity).unwrap();
    let a: &SparseMatrix = ctx.gcn_operator();
    assert_eq!(a.to_dense(), a.transpose().to_dense());
}

mod bundles {
    use super::*;
    use crate::binio::FormatError;
    use crate::ingest::synthetic::{generate, SyntheticConfig};
    use crate::ingest::{
        clean, impute_smoking_unknown, preprocess, PatientRecord, PreprocessConfig, Preprocessed, RowOrigin,
    };
    use crate::numcore::softmax_rows;

    // Cleaned records line up with the original rows, which come first.
    fn fixture(seed: u64) -> (Preprocessed, Vec<PatientRecord>) {
        let raw = generate(&SyntheticConfig {
            rows: 118,
            seed,
            label_noise: 0.0,
            ..Default::default()
        });
        let (records, _) = impute_smoking_unknown(clean(raw.clone()).records).unwrap();
        let prep = preprocess(
            raw,
            &PreprocessConfig {
                seed,
                ..Default::default()
            },
        )
        .unwrap();
        let originals = prep
            .matrix
            .origin()
            .iter()
            .filter(|&&o| o == RowOrigin::Original)
            .count();
        assert_eq!(originals, records.len());
        (prep, records)
    }

    fn fit(prep: &Preprocessed, spec: &ModelSpec, metric: Metric) -> ModelBundle {
        let cfg = TrainConfig {
            epochs: Some(15),
            seed: 4,
            ..Default::default()
        };
        ModelBundle::fit(prep, metric, None, spec, &cfg, "0123456789abcdef".into()).unwrap()
    }

    fn small_specs() -> Vec<ModelSpec> {
        let mean = Aggregator::Mean;
        let gat = LayerKind::GatV2 { heads: 2, concat: true };
        vec![
            ModelSpec::custom(vec![
                layer(LayerKind::Gcn, 16, 8, Activation::Relu),
                layer(LayerKind::Gcn, 8, 4, Activation::Identity),
            ]),
            ModelSpec::custom(vec![
                layer(gat, 16, 8, Activation::Relu),
                layer(
                    LayerKind::GatV2 {
                        heads: 1,
                        concat: false,
                    },
                    8,
                    4,
                    Activation::Identity,
                ),
            ]),
            ModelSpec::custom(vec![
                layer(LayerKind::Sage { aggregator: mean }, 16, 8, Activation::Relu),
                layer(LayerKind::Sage { aggregator: mean }, 8, 4, Activation::Identity),
            ]),
            ModelSpec::custom(vec![layer(
                LayerKind::Sage {
                    aggregator: Aggregator::Max,
                },
                16,
                4,
                Activation::Identity,
            )]),
        ]
    }

    #[test]
    fn bundle_round_trips_byte_for_byte() {
        let (prep, _) = fixture(2);
        let bundle = fit(&prep, &Preset::Sage.spec(), Metric::Euclidean);
        let bytes = bundle.to_bytes();
        let back = ModelBundle::from_bytes(&bytes).unwrap();
        assert_eq!(back, bundle);
        assert_eq!(back.to_bytes(), bytes);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.tgb");
        bundle.save(&path).unwrap();
        assert_eq!(ModelBundle::load(&path).unwrap(), bundle);
    }

    #[test]
    fn corrupted_bundles_are_rejected() {
        let (prep, _) = fixture(2);
        let bytes = fit(&prep, &small_specs()[0], Metric::Cosine).to_bytes();

        let mut flipped = bytes.clone();
        flipped[bytes.len() / 2] ^= 0x40;
        assert!(matches!(
            ModelBundle::from_bytes(&flipped),
            Err(GnnError::Format(FormatError::Checksum { .. }))
        ));
        assert!(ModelBundle::from_bytes(&bytes[..bytes.len() - 9]).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(ModelBundle::from_bytes(&magic).is_err());
    }

    #[test]
    fn verdict_matches_a_forward_pass_on_the_extended_graph() {
        let (prep, records) = fixture(5);
        for spec in small_specs() {
            let bundle = fit(&prep, &spec, Metric::Cosine);
            let patient = &records[7];
            let verdict = bundle.predict_inductive(patient, &InductiveOptions::default()).unwrap();

            let row = bundle
                .scaler
                .scale_row(&bundle.encoder.encode_row(patient).unwrap())
                .unwrap();
            let mut features = bundle.graph.features().to_vec();
            features.extend_from_slice(&row.values);
            let rebuilt = Graph::build(
                features,
                bundle.graph.dim(),
                bundle.graph.metric(),
                bundle.graph.threshold(),
            )
            .unwrap();
            let ctx = GraphContext::new(&rebuilt, bundle.train_config.edge_weighting).unwrap();
            let probs = softmax_rows(&bundle.model().unwrap().logits(&ctx, &features_of(&rebuilt)).unwrap());
            let last = rebuilt.node_count() - 1;
            assert_eq!(&verdict.scores[..], probs.row(last));
            assert_eq!(verdict.level.code(), probs.argmax_rows()[last]);
            assert!((verdict.scores.iter().sum::<f64>() - 1.0).abs() < 1e-12);

            // the twin of node 7 is its closest neighbour
            assert_eq!(verdict.neighbors[0].node, 7);
            assert!(verdict.neighbors.len() <= 5);
            assert!(verdict.neighbors.windows(2).all(|w| w[0].weight >= w[1].weight));
            assert_eq!(
                bundle.predict_inductive(patient, &InductiveOptions::default()).unwrap(),
                verdict
            );
        }
    }

    #[test]
    fn twins_keep_their_class_on_confident_nodes() {
        let (prep, records) = fixture(5);
        for spec in &small_specs()[..3] {
            let bundle = fit(&prep, spec, Metric::Cosine);
            let pred = bundle.transductive_predictions().unwrap();
            let ctx = GraphContext::new(&bundle.graph, bundle.train_config.edge_weighting).unwrap();
            let probs = softmax_rows(
                &bundle
                    .model()
                    .unwrap()
                    .logits(&ctx, &features_of(&bundle.graph))
                    .unwrap(),
            );
            for (i, r) in records.iter().enumerate().step_by(10) {
                let mut row = probs.row(i).to_vec();
                row.sort_by(|a, b| b.total_cmp(a));
                let verdict = bundle.predict_inductive(r, &InductiveOptions::default()).unwrap();
                let deviation = (0..4)
                    .map(|c| (verdict.scores[c] - probs.get(i, c)).abs())
                    .fold(0.0, f64::max);
                // the twin edge shifts scores by at most this much, so a wider
                // margin cannot flip the class
                if row[0] - row[1] > 2.0 * deviation {
                    assert_eq!(verdict.level.code(), pred[i], "node {i}");
                }
            }
        }
    }

    #[test]
    fn out_of_range_patients_clamp_or_fail() {
        let (prep, records) = fixture(5);
        let bundle = fit(&prep, &small_specs()[2], Metric::Cosine);
        let mut patient = records[0].clone();
        patient.age = 140.0;
        let strict = InductiveOptions {
            allow_clamp: false,
            ..Default::default()
        };
        match bundle.predict_inductive(&patient, &strict) {
            Err(GnnError::OutOfRange { features }) => assert_eq!(features, ["age"]),
            other => panic!("expected OutOfRange, got {other:?}"),
        }
        let verdict = bundle
            .predict_inductive(&patient, &InductiveOptions::default())
            .unwrap();
        assert_eq!(verdict.clamped, ["age"]);
    }
}
