use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::ingest::{FeatureMatrix, TriageLevel, CLASS_COUNT, FEATURE_COUNT};

fn level(c: usize) -> TriageLevel {
    TriageLevel::from_code(c).unwrap()
}

fn random_matrix(rows: usize, seed: u64) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * FEATURE_COUNT).map(|_| rng.random::<f64>()).collect();
    let labels = (0..rows).map(|_| level(rng.random_range(0..CLASS_COUNT))).collect();
    FeatureMatrix::new(FEATURE_COUNT, data, labels).unwrap()
}

/// Four tight blobs, one per class, each on its own axis.
fn blobs(per: usize, seed: u64) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = FeatureMatrix::with_capacity(FEATURE_COUNT, per * CLASS_COUNT);
    for c in 0..CLASS_COUNT {
        for _ in 0..per {
            let mut row: Vec<f64> = (0..FEATURE_COUNT).map(|_| rng.random_range(0.0..0.1)).collect();
            row[c] += 1.0;
            m.push_row(&row, level(c), crate::ingest::RowOrigin::Original).unwrap();
        }
    }
    m
}

fn all_rows(m: &FeatureMatrix) -> Vec<usize> {
    (0..m.rows()).collect()
}

fn brute_force(train: &FeatureMatrix, k: usize, x: &[f64]) -> TriageLevel {
    let mut d: Vec<(f64, usize)> = (0..train.rows())
        .map(|i| {
            let s: f64 = x.iter().zip(train.row(i)).map(|(a, b)| (a - b) * (a - b)).sum();
            (s.sqrt(), i)
        })
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut votes = [(0usize, 0.0f64); CLASS_COUNT];
    for &(dist, i) in &d[..k] {
        let c = train.labels()[i].code();
        votes[c].0 += 1;
        votes[c].1 += dist;
    }
    let mut best = None;
    for c in 0..CLASS_COUNT {
        let (n, s) = votes[c];
        if n == 0 {
            continue;
        }
        best = match best {
            Some((bc, bn, bs)) if bn > n || (bn == n && bs <= s) => Some((bc, bn, bs)),
            _ => Some((c, n, s)),
        };
    }
    level(best.unwrap().0)
}

#[test]
fn knn_matches_the_brute_force_oracle() {
    let train = random_matrix(300, 1);
    let queries = random_matrix(500, 2);
    for k in [1, 4, 5] {
        let model = KnnModel::fit(&train, &all_rows(&train), &KnnConfig { k }).unwrap();
        let got = model.predict_rows(&queries, &all_rows(&queries)).unwrap();
        for (q, g) in got.iter().enumerate() {
            assert_eq!(*g, brute_force(&train, k, queries.row(q)), "k = {k}, query {q}");
        }
    }
}

#[test]
fn knn_with_one_neighbour_recalls_its_training_set() {
    let train = random_matrix(200, 3);
    let model = KnnModel::fit(&train, &all_rows(&train), &KnnConfig { k: 1 }).unwrap();
    assert_eq!(model.predict_rows(&train, &all_rows(&train)).unwrap(), train.labels());
}

#[test]
fn knn_ties_go_to_the_closer_class_then_the_lower_code() {
    let features = vec![0.0, 2.0, 3.0, 10.0];
    let labels = vec![level(3), level(1), level(1), level(3)];
    let model = KnnModel::from_parts(1, features.clone(), labels.clone(), 2).unwrap();
    // rows 0 and 1 both sit at distance 1 with different labels
    assert_eq!(model.predict(&[1.0]).unwrap(), level(1));
    let model = KnnModel::from_parts(1, vec![0.0, 2.0], vec![level(2), level(0)], 2).unwrap();
    assert_eq!(model.predict(&[1.0]).unwrap(), level(0));
}

#[test]
fn knn_rejects_bad_shapes() {
    assert_eq!(
        KnnModel::<f64>::from_parts(2, vec![], vec![], 1),
        Err(BaselineError::Empty)
    );
    assert!(matches!(
        KnnModel::from_parts(1, vec![0.0], vec![level(0)], 2),
        Err(BaselineError::Config(_))
    ));
    let model = KnnModel::from_parts(1, vec![0.0], vec![level(0)], 1).unwrap();
    assert_eq!(
        model.predict(&[0.0, 1.0]),
        Err(BaselineError::Dim { expected: 1, got: 2 })
    );
}

#[test]
fn svm_separates_blobs() {
    let m = blobs(25, 4);
    let model = svm_train(&m, &all_rows(&m), &SvmConfig::default()).unwrap();
    assert_eq!(model.predict_rows(&m, &all_rows(&m)).unwrap(), m.labels());
    assert_eq!(model.weights.len(), FEATURE_COUNT);
}

#[test]
fn svm_objective_never_rises_on_blobs() {
    let m = blobs(25, 5);
    let mut model = SvmModel::zeros(FEATURE_COUNT);
    let trace = model.fit_from(&m, &all_rows(&m), &SvmConfig::default()).unwrap();
    assert_eq!(trace.len(), 201);
    for w in trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn svm_ignores_duplicates_outside_the_margin() {
    let mut m = blobs(25, 6);
    // a Red row far beyond its blob
    let mut far = vec![0.05; FEATURE_COUNT];
    far[0] = 4.0;
    m.push_row(&far, level(0), crate::ingest::RowOrigin::Original).unwrap();
    let cfg = SvmConfig {
        c: Some(0.05),
        lr: 0.1,
        epochs: 400,
        ..Default::default()
    };
    let rows = all_rows(&m);
    let trained = svm_train(&m, &rows, &cfg).unwrap();
    let short = SvmConfig { epochs: 20, ..cfg };

    let outside = rows
        .iter()
        .copied()
        .find(|&r| {
            let v = trained.decision_values(m.row(r)).unwrap();
            let own = m.labels()[r].code();
            (0..CLASS_COUNT).all(|c| if c == own { v[c] > 1.2 } else { v[c] < -1.2 })
        })
        .expect("some row sits well outside every margin");
    let mut with_dup = rows.clone();
    with_dup.push(outside);

    let mut a = trained.clone();
    a.fit_from(&m, &rows, &short).unwrap();
    let mut b = trained.clone();
    b.fit_from(&m, &with_dup, &short).unwrap();
    assert_eq!(a, b);
}

#[test]
fn svm_needs_two_classes() {
    let m = blobs(5, 7);
    assert_eq!(
        svm_train(&m, &[0, 1, 2], &SvmConfig::default()),
        Err(BaselineError::SingleClass)
    );
}

#[test]
fn bundles_round_trip() {
    use crate::ingest::synthetic::{generate, SyntheticConfig};
    use crate::ingest::{preprocess, PreprocessConfig};
    let prep = preprocess(
        generate(&SyntheticConfig {
            rows: 150,
            ..Default::default()
        }),
        &PreprocessConfig::default(),
    )
    .unwrap();
    let knn = KnnModel::fit(&prep.matrix, &prep.masks.train, &KnnConfig::default()).unwrap();
    let cfg = SvmConfig {
        epochs: 10,
        ..Default::default()
    };
    let svm = svm_train(&prep.matrix, &prep.masks.train, &cfg).unwrap();
    let models = [
        BaselineModel::Knn(knn),
        BaselineModel::Svm {
            model: svm,
            config: cfg,
        },
    ];
    let dir = tempfile::tempdir().unwrap();
    for model in models {
        let bundle = BaselineBundle {
            model,
            config_hash: "feedfacecafebeef".into(),
            encoder: prep.encoder.clone(),
            scaler: prep.scaler.clone(),
        };
        let bytes = bundle.to_bytes();
        let back = BaselineBundle::from_bytes(&bytes).unwrap();
        assert_eq!(back, bundle);
        assert_eq!(back.to_bytes(), bytes);
        let path = dir.path().join(bundle.model.name());
        bundle.save(&path).unwrap();
        assert_eq!(BaselineBundle::load(&path).unwrap(), bundle);

        let mut broken = bytes.clone();
        broken[10] ^= 1;
        assert!(BaselineBundle::from_bytes(&broken).is_err());
    }
}
