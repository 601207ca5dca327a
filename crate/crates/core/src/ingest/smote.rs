use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::{FeatureMatrix, IngestError, RowOrigin, TriageLevel, CLASS_COUNT};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoteScope {
    /// Oversample the whole dataset before splitting.
    All,
    /// Oversample training rows only, after splitting.
    TrainOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoteConfig {
    pub k: usize,
    pub scope: SmoteScope,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        Self {
            k: 5,
            scope: SmoteScope::All,
        }
    }
}

/// `x + u·(neighbor − x)`.
pub fn interpolate<T: Real>(x: &[T], neighbor: &[T], u: T) -> Vec<T> {
    x.iter().zip(neighbor).map(|(&a, &b)| a + u * (b - a)).collect()
}

fn squared_distance<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Synthetic rows that balance the classes among `rows` of `matrix`.
///
/// Each class is filled up to the count of the largest class. A synthetic row
/// interpolates between a random member of its class and one of that member's
/// `k` nearest same-class neighbours (Euclidean, index order on ties).
pub fn synthesize<T: Real>(
    matrix: &FeatureMatrix<T>,
    rows: &[usize],
    k: usize,
    seed: u64,
) -> Result<Vec<(Vec<T>, TriageLevel)>, IngestError> {
    if k == 0 {
        return Err(IngestError::InvalidValue {
            field: "smote.k".into(),
            reason: "must be at least 1".into(),
        });
    }
    let mut members: [Vec<usize>; CLASS_COUNT] = Default::default();
    for &r in rows {
        members[matrix.labels()[r].code()].push(r);
    }
    let target = members.iter().map(Vec::len).max().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (code, class) in members.iter().enumerate() {
        let level = TriageLevel::from_code(code).unwrap();
        let need = target - class.len();
        if need == 0 {
            continue;
        }
        if class.len() < 2 || k >= class.len() {
            return Err(IngestError::ClassTooSmall {
                class: level,
                count: class.len(),
                needed: (k + 1).max(2),
            });
        }
        let neighbors: Vec<Vec<usize>> = class
            .iter()
            .map(|&i| {
                let mut d: Vec<(T, usize)> = class
                    .iter()
                    .filter(|&&j| j != i)
                    .map(|&j| (squared_distance(matrix.row(i), matrix.row(j)), j))
                    .collect();
                d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
                d.truncate(k);
                d.into_iter().map(|(_, j)| j).collect()
            })
            .collect();
        for _ in 0..need {
            let base = rng.random_range(0..class.len());
            let nn = neighbors[base][rng.random_range(0..k)];
            let u = T::lit(rng.random::<f64>());
            out.push((interpolate(matrix.row(class[base]), matrix.row(nn), u), level));
        }
    }
    Ok(out)
}

/// Oversamples every minority class up to the majority count.
///
/// Original rows come first and unchanged; synthetic rows follow, flagged.
pub fn smote_oversample<T: Real>(
    matrix: &FeatureMatrix<T>,
    k: usize,
    seed: u64,
) -> Result<FeatureMatrix<T>, IngestError> {
    let all: Vec<usize> = (0..matrix.rows()).collect();
    let synthetic = synthesize(matrix, &all, k, seed)?;
    let mut out = matrix.clone();
    for (row, label) in synthetic {
        out.push_row(&row, label, RowOrigin::Synthetic)?;
    }
    Ok(out)
}
