use serde::{Deserialize, Serialize};

use crate::baselines::BaselineError;
use crate::ingest::{FeatureMatrix, TriageLevel, CLASS_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmConfig {
    pub lr: f64,
    pub epochs: usize,
    /// L2 strength `λ` in `λ/2·‖w‖² + C·Σ hinge`.
    pub lambda: f64,
    /// Hinge weight; unset means `1/n`.
    pub c: Option<f64>,
    /// Step size at epoch `t` is `lr / (1 + decay·t)`.
    pub decay: f64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            epochs: 200,
            lambda: 1e-3,
            c: None,
            decay: 0.01,
        }
    }
}

/// One-vs-rest linear separators, one per triage level.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub weights: Vec<[f64; CLASS_COUNT]>,
    pub bias: [f64; CLASS_COUNT],
}

/// Training rows as borrowed slices with ±1 targets per class.
struct Data<'a> {
    rows: Vec<&'a [f64]>,
    labels: Vec<TriageLevel>,
}

fn sign(label: TriageLevel, class: usize) -> f64 {
    if label.code() == class {
        1.0
    } else {
        -1.0
    }
}

impl SvmModel {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![[0.0; CLASS_COUNT]; dim],
            bias: [0.0; CLASS_COUNT],
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn decision_values(&self, x: &[f64]) -> Result<[f64; CLASS_COUNT], BaselineError> {
        if x.len() != self.dim() {
            return Err(BaselineError::Dim {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let mut out = self.bias;
        for (xi, w) in x.iter().zip(&self.weights) {
            for c in 0..CLASS_COUNT {
                out[c] += xi * w[c];
            }
        }
        Ok(out)
    }

    /// Class with the largest decision value, lower code on ties.
    pub fn predict(&self, x: &[f64]) -> Result<TriageLevel, BaselineError> {
        let v = self.decision_values(x)?;
        let mut best = 0;
        for c in 1..CLASS_COUNT {
            if v[c] > v[best] {
                best = c;
            }
        }
        Ok(TriageLevel::from_code(best).unwrap())
    }

    pub fn predict_rows(&self, matrix: &FeatureMatrix, rows: &[usize]) -> Result<Vec<TriageLevel>, BaselineError> {
        rows.iter().map(|&r| self.predict(matrix.row(r))).collect()
    }

    fn objective_on(&self, data: &Data, cfg: &SvmConfig) -> [f64; CLASS_COUNT] {
        let c_weight = cfg.c.unwrap_or(1.0 / data.rows.len() as f64);
        let mut out = [0.0; CLASS_COUNT];
        for (c, o) in out.iter_mut().enumerate() {
            let norm2: f64 = self.weights.iter().map(|w| w[c] * w[c]).sum();
            let hinge: f64 = data
                .rows
                .iter()
                .zip(&data.labels)
                .map(|(x, &l)| {
                    let f = self.bias[c] + x.iter().zip(&self.weights).map(|(xi, w)| xi * w[c]).sum::<f64>();
                    (1.0 - sign(l, c) * f).max(0.0)
                })
                .sum();
            *o = 0.5 * cfg.lambda * norm2 + c_weight * hinge;
        }
        out
    }

    /// Regularised hinge objective of each separator on `rows`.
    pub fn objective(&self, matrix: &FeatureMatrix, rows: &[usize], cfg: &SvmConfig) -> [f64; CLASS_COUNT] {
        self.objective_on(&data(matrix, rows), cfg)
    }

    /// Continues full-batch subgradient descent from the current weights;
    /// returns the summed objective before every epoch and after the last.
    pub fn fit_from(
        &mut self,
        matrix: &FeatureMatrix,
        rows: &[usize],
        cfg: &SvmConfig,
    ) -> Result<Vec<f64>, BaselineError> {
        let data = data(matrix, rows);
        if data.rows.is_empty() {
            return Err(BaselineError::Empty);
        }
        if matrix.cols() != self.dim() {
            return Err(BaselineError::Dim {
                expected: self.dim(),
                got: matrix.cols(),
            });
        }
        let c_weight = cfg.c.unwrap_or(1.0 / data.rows.len() as f64);
        let mut trace = Vec::with_capacity(cfg.epochs + 1);
        for t in 0..cfg.epochs {
            trace.push(self.objective_on(&data, cfg).iter().sum());
            let eta = cfg.lr / (1.0 + cfg.decay * t as f64);
            let mut gw: Vec<[f64; CLASS_COUNT]> = self.weights.iter().map(|w| w.map(|v| cfg.lambda * v)).collect();
            let mut gb = [0.0; CLASS_COUNT];
            for (x, &l) in data.rows.iter().zip(&data.labels) {
                let f = self.decision_values(x)?;
                for c in 0..CLASS_COUNT {
                    let y = sign(l, c);
                    if y * f[c] < 1.0 {
                        for (g, xi) in gw.iter_mut().zip(x.iter()) {
                            g[c] -= c_weight * y * xi;
                        }
                        gb[c] -= c_weight * y;
                    }
                }
            }
            for (w, g) in self.weights.iter_mut().zip(&gw) {
                for c in 0..CLASS_COUNT {
                    w[c] -= eta * g[c];
                }
            }
            for c in 0..CLASS_COUNT {
                self.bias[c] -= eta * gb[c];
            }
            if self
                .bias
                .iter()
                .chain(self.weights.iter().flatten())
                .any(|v| !v.is_finite())
            {
                return Err(BaselineError::NonFinite { epoch: t });
            }
        }
        trace.push(self.objective_on(&data, cfg).iter().sum());
        Ok(trace)
    }
}

fn data<'a>(matrix: &'a FeatureMatrix, rows: &[usize]) -> Data<'a> {
    Data {
        rows: rows.iter().map(|&r| matrix.row(r)).collect(),
        labels: rows.iter().map(|&r| matrix.labels()[r]).collect(),
    }
}

/// Trains from zero weights on `rows`; needs at least two classes present.
pub fn svm_train(matrix: &FeatureMatrix, rows: &[usize], cfg: &SvmConfig) -> Result<SvmModel, BaselineError> {
    let mut present = [false; CLASS_COUNT];
    for &r in rows {
        present[matrix.labels()[r].code()] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(BaselineError::SingleClass);
    }
    let mut model = SvmModel::zeros(matrix.cols());
    model.fit_from(matrix, rows, cfg)?;
    Ok(model)
}

pub fn svm_predict(model: &SvmModel, x: &[f64]) -> Result<TriageLevel, BaselineError> {
    model.predict(x)
}
