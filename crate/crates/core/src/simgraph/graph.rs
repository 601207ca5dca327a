use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio::{BinReader, BinWriter, FormatError};
use crate::ingest::FeatureMatrix;
use crate::numcore::SparseMatrix;
use crate::scalar::Real;
use crate::simgraph::metric::{cosine_with_norms, norm};
use crate::simgraph::{GraphError, Metric, Orientation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSource {
    DatasetMean,
    UserSupplied,
}

impl ThresholdSource {
    pub fn name(self) -> &'static str {
        match self {
            Self::DatasetMean => "dataset_mean",
            Self::UserSupplied => "user_supplied",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub value: f64,
    pub source: ThresholdSource,
}

impl Threshold {
    /// A user-supplied threshold, validated for the metric. Distance metrics
    /// accept `+∞`, which admits every pair.
    pub fn user(metric: Metric, value: f64) -> Result<Self, GraphError> {
        let t = Self {
            value,
            source: ThresholdSource::UserSupplied,
        };
        t.validate(metric)?;
        Ok(t)
    }

    pub fn validate(&self, metric: Metric) -> Result<(), GraphError> {
        let bad = |reason| GraphError::InvalidThreshold {
            metric,
            value: self.value,
            reason,
        };
        match metric.orientation() {
            Orientation::Similarity if !self.value.is_finite() => Err(bad("must be finite")),
            Orientation::Distance if self.value.is_nan() || self.value <= 0.0 => Err(bad("must be positive")),
            _ => Ok(()),
        }
    }
}

fn check_rows<T: Real>(features: &[T], dim: usize, metric: Metric) -> Result<Vec<T>, GraphError> {
    if dim == 0 || !features.len().is_multiple_of(dim) {
        return Err(GraphError::DimMismatch {
            expected: dim,
            got: features.len(),
        });
    }
    if metric != Metric::Cosine {
        return Ok(Vec::new());
    }
    features
        .chunks(dim)
        .enumerate()
        .map(|(i, row)| {
            let n = norm(row);
            if n == T::zero() {
                Err(GraphError::ZeroVector { node: Some(i) })
            } else {
                Ok(n)
            }
        })
        .collect()
}

fn pair<T: Real>(metric: Metric, a: &[T], b: &[T], norms: &[T], i: usize, j: usize) -> T {
    match metric {
        Metric::Cosine => cosine_with_norms(a, b, norms[i], norms[j]),
        Metric::Euclidean => crate::simgraph::euclidean_distance(a, b),
        Metric::Manhattan => crate::simgraph::manhattan_distance(a, b),
    }
}

/// Mean of the metric over all unordered pairs of rows.
pub fn mean_pairwise<T: Real>(matrix: &FeatureMatrix<T>, metric: Metric) -> Result<Threshold, GraphError> {
    mean_pairwise_rows(matrix.data(), matrix.cols(), metric)
}

/// [`mean_pairwise`] over a flat row-major buffer.
pub fn mean_pairwise_rows<T: Real>(features: &[T], dim: usize, metric: Metric) -> Result<Threshold, GraphError> {
    let norms = check_rows(features, dim, metric)?;
    let n = features.len() / dim;
    if n < 2 {
        return Err(GraphError::TooFewNodes(n));
    }
    let row_sums: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let a = &features[i * dim..(i + 1) * dim];
            (i + 1..n)
                .map(|j| pair(metric, a, &features[j * dim..(j + 1) * dim], &norms, i, j).as_f64())
                .sum()
        })
        .collect();
    let pairs = (n * (n - 1) / 2) as f64;
    Ok(Threshold {
        value: row_sums.iter().sum::<f64>() / pairs,
        source: ThresholdSource::DatasetMean,
    })
}

/// Undirected weighted graph in CSR form; each node carries its feature row.
///
/// Every undirected edge is stored in both endpoint rows with the same raw
/// metric value as weight. Neighbour ids are ascending within a row.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph<T: Real = f64> {
    features: Arc<Vec<T>>,
    dim: usize,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    weights: Vec<T>,
    metric: Metric,
    threshold: Threshold,
}

/// Builds the graph over the rows of `matrix`.
pub fn build_graph<T: Real>(
    matrix: &FeatureMatrix<T>,
    metric: Metric,
    threshold: Threshold,
) -> Result<SimilarityGraph<T>, GraphError> {
    SimilarityGraph::build(matrix.data().to_vec(), matrix.cols(), metric, threshold)
}

impl<T: Real> SimilarityGraph<T> {
    /// Edge `(i, j)` for `i ≠ j` iff the metric strictly clears the threshold.
    pub fn build(features: Vec<T>, dim: usize, metric: Metric, threshold: Threshold) -> Result<Self, GraphError> {
        threshold.validate(metric)?;
        let norms = check_rows(&features, dim, metric)?;
        let n = features.len() / dim;
        if n > u32::MAX as usize {
            return Err(GraphError::Structure(format!("{n} nodes exceed u32 ids")));
        }
        let tau = T::lit(threshold.value);
        let rows: Vec<Vec<(u32, T)>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let a = &features[i * dim..(i + 1) * dim];
                (0..n)
                    .filter(|&j| j != i)
                    .filter_map(|j| {
                        let w = pair(metric, a, &features[j * dim..(j + 1) * dim], &norms, i, j);
                        metric.clears(w, tau).then_some((j as u32, w))
                    })
                    .collect()
            })
            .collect();
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let total: usize = rows.iter().map(Vec::len).sum();
        let mut neighbors = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        for row in rows {
            for (j, w) in row {
                neighbors.push(j);
                weights.push(w);
            }
            offsets.push(neighbors.len());
        }
        Ok(Self {
            features: Arc::new(features),
            dim,
            offsets,
            neighbors,
            weights,
            metric,
            threshold,
        })
    }

    /// Graph with explicit symmetric edges, for fixtures and tests.
    ///
    /// `edges` lists each undirected edge once; weights are stored as given.
    pub fn from_edges(
        features: Vec<T>,
        dim: usize,
        edges: &[(usize, usize, T)],
        metric: Metric,
        threshold: Threshold,
    ) -> Result<Self, GraphError> {
        if dim == 0 || !features.len().is_multiple_of(dim) {
            return Err(GraphError::DimMismatch {
                expected: dim,
                got: features.len(),
            });
        }
        let n = features.len() / dim;
        let mut adj: Vec<Vec<(u32, T)>> = vec![Vec::new(); n];
        for &(i, j, w) in edges {
            if i == j || i >= n || j >= n {
                return Err(GraphError::Structure(format!("bad edge ({i}, {j}) for {n} nodes")));
            }
            adj[i].push((j as u32, w));
            adj[j].push((i as u32, w));
        }
        let mut offsets = vec![0];
        let (mut neighbors, mut weights) = (Vec::new(), Vec::new());
        for mut row in adj {
            row.sort_by_key(|e| e.0);
            if row.windows(2).any(|p| p[0].0 == p[1].0) {
                return Err(GraphError::Structure("duplicate edge".into()));
            }
            for (j, w) in row {
                neighbors.push(j);
                weights.push(w);
            }
            offsets.push(neighbors.len());
        }
        Ok(Self {
            features: Arc::new(features),
            dim,
            offsets,
            neighbors,
            weights,
            metric,
            threshold,
        })
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Undirected edge count.
    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn threshold(&self) -> Threshold {
        self.threshold
    }

    pub fn features(&self) -> &[T] {
        &self.features
    }

    pub fn feature_row(&self, i: usize) -> &[T] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn neighbor_ids(&self) -> &[u32] {
        &self.neighbors
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn neighbors(&self, i: usize) -> (&[u32], &[T]) {
        let (s, e) = (self.offsets[i], self.offsets[i + 1]);
        (&self.neighbors[s..e], &self.weights[s..e])
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    /// Adjacency as a sparse matrix with `f(weight)` as entries.
    pub fn adjacency_with(&self, f: impl Fn(T) -> T) -> SparseMatrix<T> {
        let n = self.node_count();
        SparseMatrix::from_csr(
            n,
            n,
            self.offsets.clone(),
            self.neighbors.iter().map(|&j| j as usize).collect(),
            self.weights.iter().map(|&w| f(w)).collect(),
        )
        .expect("graph CSR is valid by construction")
    }

    /// Whether the stored adjacency equals its transpose, weights included.
    pub fn is_symmetric(&self) -> bool {
        (0..self.node_count()).all(|i| {
            let (ids, ws) = self.neighbors(i);
            ids.iter().zip(ws).all(|(&j, &w)| {
                let (back, bw) = self.neighbors(j as usize);
                back.binary_search(&(i as u32)).is_ok_and(|k| bw[k] == w)
            })
        })
    }

    /// Appends a node whose edges follow the same metric and threshold rule.
    ///
    /// Existing edges are untouched; the new node's id is the old node count.
    /// The receiver is not modified.
    pub fn insert_node(&self, features: &[T]) -> Result<(Self, usize), GraphError> {
        if features.len() != self.dim {
            return Err(GraphError::DimMismatch {
                expected: self.dim,
                got: features.len(),
            });
        }
        let n = self.node_count();
        let metric = self.metric;
        let new_norm = if metric == Metric::Cosine {
            let v = norm(features);
            if v == T::zero() {
                return Err(GraphError::ZeroVector { node: Some(n) });
            }
            v
        } else {
            T::zero()
        };
        let tau = T::lit(self.threshold.value);
        let links: Vec<Option<T>> = (0..n)
            .into_par_iter()
            .map(|j| {
                let b = self.feature_row(j);
                let w = match metric {
                    Metric::Cosine => cosine_with_norms(features, b, new_norm, norm(b)),
                    _ => pair(metric, features, b, &[], 0, 0),
                };
                metric.clears(w, tau).then_some(w)
            })
            .collect();

        let added = links.iter().flatten().count();
        let mut offsets = Vec::with_capacity(n + 2);
        let mut neighbors = Vec::with_capacity(self.neighbors.len() + 2 * added);
        let mut weights = Vec::with_capacity(neighbors.capacity());
        offsets.push(0);
        for (i, link) in links.iter().enumerate() {
            let (ids, ws) = self.neighbors(i);
            neighbors.extend_from_slice(ids);
            weights.extend_from_slice(ws);
            if let Some(w) = link {
                neighbors.push(n as u32);
                weights.push(*w);
            }
            offsets.push(neighbors.len());
        }
        for (j, link) in links.iter().enumerate() {
            if let Some(w) = link {
                neighbors.push(j as u32);
                weights.push(*w);
            }
        }
        offsets.push(neighbors.len());

        let mut feats = Vec::with_capacity(self.features.len() + self.dim);
        feats.extend_from_slice(&self.features);
        feats.extend_from_slice(features);
        Ok((
            Self {
                features: Arc::new(feats),
                dim: self.dim,
                offsets,
                neighbors,
                weights,
                metric,
                threshold: self.threshold,
            },
            n,
        ))
    }

    pub fn cast<U: Real>(&self) -> SimilarityGraph<U> {
        SimilarityGraph {
            features: Arc::new(self.features.iter().map(|v| U::lit(v.as_f64())).collect()),
            dim: self.dim,
            offsets: self.offsets.clone(),
            neighbors: self.neighbors.clone(),
            weights: self.weights.iter().map(|v| U::lit(v.as_f64())).collect(),
            metric: self.metric,
            threshold: self.threshold,
        }
    }
}

const SNAPSHOT_VERSION: u32 = 1;

impl<T: Real> SimilarityGraph<T> {
    /// Little-endian snapshot: header, CSR offsets, neighbour ids, weights
    /// and node features.
    pub fn to_snapshot(&self) -> Vec<u8> {
        let mut w = BinWriter::new();
        w.u32(SNAPSHOT_VERSION);
        w.u64(self.node_count() as u64);
        w.u64(self.edge_count() as u64);
        w.u8(self.metric.tag());
        w.f64(self.threshold.value);
        w.u8(match self.threshold.source {
            ThresholdSource::DatasetMean => 0,
            ThresholdSource::UserSupplied => 1,
        });
        w.u64(self.dim as u64);
        for &o in &self.offsets {
            w.u64(o as u64);
        }
        for &j in &self.neighbors {
            w.u32(j);
        }
        for &x in &self.weights {
            w.f64(x.as_f64());
        }
        for &x in self.features.iter() {
            w.f64(x.as_f64());
        }
        w.into_bytes()
    }

    pub fn from_snapshot(bytes: &[u8]) -> Result<Self, GraphError> {
        let mut r = BinReader::new(bytes);
        let version = r.u32("graph version")?;
        if version != SNAPSHOT_VERSION {
            return Err(FormatError::Version {
                found: version,
                supported: SNAPSHOT_VERSION,
            }
            .into());
        }
        let malformed = |m: &str| {
            GraphError::Format(FormatError::Malformed {
                what: "graph snapshot",
                detail: m.to_string(),
            })
        };
        let n = r.u64("node count")? as usize;
        let e = r.u64("edge count")? as usize;
        let metric = Metric::from_tag(r.u8("metric tag")?).ok_or_else(|| malformed("unknown metric tag"))?;
        let value = r.f64("threshold")?;
        let source = match r.u8("threshold source")? {
            0 => ThresholdSource::DatasetMean,
            1 => ThresholdSource::UserSupplied,
            _ => return Err(malformed("unknown threshold source")),
        };
        let dim = r.u64("dimension")? as usize;
        // Bound allocations by what the buffer can hold.
        let need = (n + 1)
            .checked_mul(8)
            .and_then(|a| e.checked_mul(2 * 12).map(|b| a + b))
            .and_then(|a| n.checked_mul(dim).and_then(|c| c.checked_mul(8)).map(|c| a + c));
        if need != Some(r.remaining()) {
            return Err(malformed("snapshot length does not match header"));
        }
        let mut offsets = Vec::with_capacity(n + 1);
        for _ in 0..=n {
            offsets.push(r.u64("offset")? as usize);
        }
        let mut neighbors = Vec::with_capacity(2 * e);
        for _ in 0..2 * e {
            neighbors.push(r.u32("neighbor id")?);
        }
        let mut weights = Vec::with_capacity(2 * e);
        for _ in 0..2 * e {
            weights.push(T::lit(r.f64("weight")?));
        }
        let mut features = Vec::with_capacity(n * dim);
        for _ in 0..n * dim {
            features.push(T::lit(r.f64("feature")?));
        }
        let valid_offsets =
            offsets.first() == Some(&0) && offsets.last() == Some(&(2 * e)) && offsets.windows(2).all(|p| p[0] <= p[1]);
        if !valid_offsets {
            return Err(malformed("bad CSR offsets"));
        }
        for i in 0..n {
            let row = &neighbors[offsets[i]..offsets[i + 1]];
            let sorted = row.windows(2).all(|p| p[0] < p[1]);
            if !sorted || row.iter().any(|&j| j as usize >= n || j as usize == i) {
                return Err(malformed("bad neighbour list"));
            }
        }
        let g = Self {
            features: Arc::new(features),
            dim,
            offsets,
            neighbors,
            weights,
            metric,
            threshold: Threshold { value, source },
        };
        if !g.is_symmetric() {
            return Err(malformed("asymmetric adjacency"));
        }
        Ok(g)
    }
}
