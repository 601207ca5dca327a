use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::BaselineError;
use crate::ingest::{FeatureMatrix, TriageLevel, CLASS_COUNT};
use crate::scalar::Real;
use crate::simgraph::euclidean_distance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnnConfig {
    pub k: usize,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self { k: 5 }
    }
}

/// Stored training rows queried by Euclidean distance.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel<T: Real = f64> {
    dim: usize,
    features: Vec<T>,
    labels: Vec<TriageLevel>,
    k: usize,
}

impl<T: Real> KnnModel<T> {
    /// Stores the given `rows` of `matrix`.
    pub fn fit(matrix: &FeatureMatrix<T>, rows: &[usize], cfg: &KnnConfig) -> Result<Self, BaselineError> {
        let sub = matrix.select(rows);
        Self::from_parts(sub.cols(), sub.data().to_vec(), sub.labels().to_vec(), cfg.k)
    }

    pub fn from_parts(dim: usize, features: Vec<T>, labels: Vec<TriageLevel>, k: usize) -> Result<Self, BaselineError> {
        if labels.is_empty() {
            return Err(BaselineError::Empty);
        }
        if dim == 0 || features.len() != dim * labels.len() {
            return Err(BaselineError::Dim {
                expected: dim * labels.len(),
                got: features.len(),
            });
        }
        if k == 0 || k > labels.len() {
            return Err(BaselineError::Config(format!(
                "k = {k} with {} training rows",
                labels.len()
            )));
        }
        Ok(Self {
            dim,
            features,
            labels,
            k,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn features(&self) -> &[T] {
        &self.features
    }

    pub fn labels(&self) -> &[TriageLevel] {
        &self.labels
    }

    /// The `k` nearest training rows as `(distance, index)`, nearest first;
    /// equal distances keep the lower index first.
    pub fn neighbors(&self, x: &[T]) -> Result<Vec<(T, usize)>, BaselineError> {
        if x.len() != self.dim {
            return Err(BaselineError::Dim {
                expected: self.dim,
                got: x.len(),
            });
        }
        let mut d: Vec<(T, usize)> = self
            .features
            .chunks(self.dim)
            .enumerate()
            .map(|(i, row)| (euclidean_distance(x, row), i))
            .collect();
        let cmp = |a: &(T, usize), b: &(T, usize)| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1));
        if self.k < d.len() {
            d.select_nth_unstable_by(self.k - 1, cmp);
            d.truncate(self.k);
        }
        d.sort_by(cmp);
        Ok(d)
    }

    /// Majority label among the nearest rows; ties go to the smaller summed
    /// distance, then to the lower class code.
    pub fn predict(&self, x: &[T]) -> Result<TriageLevel, BaselineError> {
        let mut votes = [0usize; CLASS_COUNT];
        let mut dist = [T::zero(); CLASS_COUNT];
        for (d, i) in self.neighbors(x)? {
            let c = self.labels[i].code();
            votes[c] += 1;
            dist[c] += d;
        }
        let best = (0..CLASS_COUNT)
            .filter(|&c| votes[c] > 0)
            .min_by(|&a, &b| {
                votes[b]
                    .cmp(&votes[a])
                    .then(dist[a].partial_cmp(&dist[b]).unwrap())
                    .then(a.cmp(&b))
            })
            .expect("k >= 1");
        Ok(TriageLevel::from_code(best).unwrap())
    }

    pub fn predict_rows(&self, matrix: &FeatureMatrix<T>, rows: &[usize]) -> Result<Vec<TriageLevel>, BaselineError> {
        rows.par_iter().map(|&r| self.predict(matrix.row(r))).collect()
    }
}

/// Alias matching the operation name used elsewhere.
pub fn knn_predict<T: Real>(model: &KnnModel<T>, x: &[T]) -> Result<TriageLevel, BaselineError> {
    model.predict(x)
}
