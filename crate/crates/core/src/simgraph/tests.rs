use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::ingest::{FeatureMatrix, TriageLevel};

type Graph = SimilarityGraph<f64>;

fn random_rows(n: usize, dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n * dim).map(|_| rng.random::<f64>()).collect()
}

fn matrix(rows: Vec<f64>, dim: usize) -> FeatureMatrix {
    let n = rows.len() / dim;
    FeatureMatrix::new(dim, rows, vec![TriageLevel::Red; n]).unwrap()
}

#[test]
fn cosine_examples() {
    assert_eq!(cosine_similarity(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
    assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
    let v: f64 = cosine_similarity(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
    assert!((v - 0.974632).abs() < 1e-6);
    assert!(matches!(
        cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
        Err(GraphError::ZeroVector { .. })
    ));
}

#[test]
fn distance_examples() {
    assert_eq!(euclidean_distance(&[0.0, 0.0], &[3.0, 4.0]), 5.0);
    assert_eq!(manhattan_distance(&[0.0, 0.0], &[3.0, 4.0]), 7.0);
}

#[test]
fn triangle_inequality_on_random_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..1000 {
        let v: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..5).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        for d in [euclidean_distance::<f64>, manhattan_distance::<f64>] {
            assert!(d(&v[0], &v[2]) <= d(&v[0], &v[1]) + d(&v[1], &v[2]) + 1e-12);
        }
    }
}

proptest! {
    #[test]
    fn metric_axioms(a in prop::collection::vec(0.01f64..1.0, 6), b in prop::collection::vec(0.01f64..1.0, 6)) {
        for m in Metric::ALL {
            prop_assert_eq!(m.eval(&a, &b).unwrap(), m.eval(&b, &a).unwrap());
        }
        for m in [Metric::Euclidean, Metric::Manhattan] {
            prop_assert_eq!(m.eval(&a, &a).unwrap(), 0.0);
            prop_assert_eq!(m.eval(&a, &b).unwrap() == 0.0, a == b);
        }
        let c = Metric::Cosine.eval(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&c));
    }
}

#[test]
fn mean_pairwise_examples() {
    let t = mean_pairwise(&matrix(vec![0.3, 0.4, 0.3, 0.4], 2), Metric::Cosine).unwrap();
    assert_eq!(t.value, 1.0);
    assert_eq!(t.source, ThresholdSource::DatasetMean);
    let t = mean_pairwise(&matrix(vec![0.0, 0.0, 3.0, 4.0], 2), Metric::Euclidean).unwrap();
    assert_eq!(t.value, 5.0);
    assert_eq!(
        mean_pairwise(&matrix(vec![1.0, 1.0], 2), Metric::Euclidean),
        Err(GraphError::TooFewNodes(1))
    );
}

#[test]
fn mean_pairwise_matches_brute_force() {
    let rows = random_rows(4, 3, 1);
    let m = matrix(rows.clone(), 3);
    for metric in Metric::ALL {
        let mut sum = 0.0;
        for i in 0..4 {
            for j in i + 1..4 {
                sum += metric.eval(&rows[i * 3..i * 3 + 3], &rows[j * 3..j * 3 + 3]).unwrap();
            }
        }
        assert_eq!(mean_pairwise(&m, metric).unwrap().value, sum / 6.0);
    }
}

#[test]
fn cosine_fixture_keeps_only_the_edge_above_threshold() {
    // Unit vectors at angles whose pairwise cosines are 0.9, 0.5 and 0.2 (approximately).
    let a0 = 0.0f64;
    let a1 = 0.9f64.acos();
    let a2 = 0.5f64.acos();
    let rows = vec![a0.cos(), a0.sin(), a1.cos(), a1.sin(), a2.cos(), -a2.sin()];
    let g = build_graph(
        &matrix(rows.clone(), 2),
        Metric::Cosine,
        Threshold::user(Metric::Cosine, 0.6).unwrap(),
    )
    .unwrap();
    assert_eq!(g.edge_count(), 1);
    let (ids, ws) = g.neighbors(0);
    assert_eq!(ids, &[1]);
    assert!((ws[0] - 0.9).abs() < 1e-12);
    let c12 = cosine_similarity(&rows[2..4], &rows[4..6]).unwrap();
    assert!(c12 < 0.6);
}

#[test]
fn extreme_thresholds() {
    let m = matrix(random_rows(30, 4, 2), 4);
    let g = build_graph(&m, Metric::Cosine, Threshold::user(Metric::Cosine, 1.0).unwrap()).unwrap();
    assert_eq!((g.node_count(), g.edge_count()), (30, 0));
    let g = build_graph(
        &m,
        Metric::Euclidean,
        Threshold::user(Metric::Euclidean, f64::INFINITY).unwrap(),
    )
    .unwrap();
    assert_eq!(g.edge_count(), 30 * 29 / 2);
    assert!(Threshold::user(Metric::Manhattan, 0.0).is_err());
    assert!(Threshold::user(Metric::Cosine, f64::NAN).is_err());
}

fn check_soundness(g: &Graph) {
    assert!(g.is_symmetric());
    let tau = g.threshold().value;
    let n = g.node_count();
    for i in 0..n {
        let (ids, ws) = g.neighbors(i);
        assert!(!ids.contains(&(i as u32)));
        for j in 0..n {
            if i == j {
                continue;
            }
            let w = g.metric().eval(g.feature_row(i), g.feature_row(j)).unwrap();
            let clears = g.metric().clears(w, tau);
            match ids.binary_search(&(j as u32)) {
                Ok(k) => {
                    assert!(clears);
                    assert_eq!(ws[k], w);
                }
                Err(_) => assert!(!clears),
            }
        }
    }
}

#[test]
fn mean_threshold_graphs_are_sound() {
    let m = matrix(random_rows(80, 5, 3), 5);
    for metric in Metric::ALL {
        let t = mean_pairwise(&m, metric).unwrap();
        let g = build_graph(&m, metric, t).unwrap();
        assert!(g.edge_count() > 0);
        check_soundness(&g);
    }
}

#[test]
fn insert_equals_rebuild() {
    let rows = random_rows(101, 4, 4);
    for metric in Metric::ALL {
        let base = matrix(rows[..400].to_vec(), 4);
        let t = mean_pairwise(&base, metric).unwrap();
        let g = build_graph(&base, metric, t).unwrap();
        let (ins, id) = g.insert_node(&rows[400..]).unwrap();
        assert_eq!(id, 100);
        let full = build_graph(&matrix(rows.clone(), 4), metric, t).unwrap();
        assert_eq!(ins, full);
        // The receiver is unchanged.
        assert_eq!(g.node_count(), 100);
    }
}

#[test]
fn inserting_a_copy_links_to_the_original() {
    let rows = random_rows(20, 3, 5);
    let m = matrix(rows.clone(), 3);
    let g = build_graph(&m, Metric::Cosine, mean_pairwise(&m, Metric::Cosine).unwrap()).unwrap();
    let (ins, id) = g.insert_node(&rows[6..9]).unwrap();
    let (ids, ws) = ins.neighbors(id);
    let k = ids.binary_search(&2).unwrap();
    assert!((ws[k] - 1.0).abs() < 1e-12);
    let (orig, _) = g.neighbors(2);
    assert!(orig.iter().all(|j| ids.contains(j)));

    let t = Threshold::user(Metric::Euclidean, 0.5).unwrap();
    let g = build_graph(&m, Metric::Euclidean, t).unwrap();
    let (ins, id) = g.insert_node(&rows[0..3]).unwrap();
    let (ids, ws) = ins.neighbors(id);
    assert_eq!((ids[0], ws[0]), (0, 0.0));
}

#[test]
fn insert_rejects_bad_input() {
    let m = matrix(random_rows(5, 3, 6), 3);
    let g = build_graph(&m, Metric::Cosine, Threshold::user(Metric::Cosine, 0.5).unwrap()).unwrap();
    assert!(matches!(g.insert_node(&[1.0]), Err(GraphError::DimMismatch { .. })));
    assert!(matches!(g.insert_node(&[0.0; 3]), Err(GraphError::ZeroVector { .. })));
}

#[test]
fn zero_row_under_cosine_is_an_error() {
    let m = matrix(vec![0.0, 0.0, 1.0, 1.0], 2);
    let t = Threshold::user(Metric::Cosine, 0.5).unwrap();
    assert_eq!(
        build_graph(&m, Metric::Cosine, t),
        Err(GraphError::ZeroVector { node: Some(0) })
    );
}

#[test]
fn snapshot_round_trip() {
    let m = matrix(random_rows(40, 4, 7), 4);
    for metric in Metric::ALL {
        let g = build_graph(&m, metric, mean_pairwise(&m, metric).unwrap()).unwrap();
        let bytes = g.to_snapshot();
        let back = Graph::from_snapshot(&bytes).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_snapshot(), bytes);
        assert!(Graph::from_snapshot(&bytes[..bytes.len() - 1]).is_err());
    }
}

#[test]
fn adjacency_matches_csr() {
    let m = matrix(random_rows(10, 2, 8), 2);
    let g = build_graph(&m, Metric::Manhattan, mean_pairwise(&m, Metric::Manhattan).unwrap()).unwrap();
    let a = g.adjacency_with(|w| w);
    assert_eq!(a.nnz(), 2 * g.edge_count());
    assert_eq!(a.to_dense(), a.transpose().to_dense());
}
