use serde::{Deserialize, Serialize};

use crate::ingest::{FeatureMatrix, IngestError};
use crate::scalar::Real;

/// Per-column minimum and maximum of the fitting data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerState {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// One scaled row and the columns that had to be clamped into `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledRow<T: Real = f64> {
    pub values: Vec<T>,
    pub clamped: Vec<usize>,
}

pub fn fit_scaler<T: Real>(matrix: &FeatureMatrix<T>) -> Result<ScalerState, IngestError> {
    if matrix.rows() == 0 {
        return Err(IngestError::Shape("cannot fit a scaler on zero rows".into()));
    }
    let mut min = vec![f64::INFINITY; matrix.cols()];
    let mut max = vec![f64::NEG_INFINITY; matrix.cols()];
    for r in 0..matrix.rows() {
        for (c, &v) in matrix.row(r).iter().enumerate() {
            let v = v.as_f64();
            min[c] = min[c].min(v);
            max[c] = max[c].max(v);
        }
    }
    Ok(ScalerState { min, max })
}

impl ScalerState {
    pub fn cols(&self) -> usize {
        self.min.len()
    }

    /// `(x − min)/(max − min)` per column; constant columns map to 0 and
    /// out-of-range values clamp into `[0, 1]`.
    pub fn scale_row<T: Real>(&self, row: &[T]) -> Result<ScaledRow<T>, IngestError> {
        if row.len() != self.cols() {
            return Err(IngestError::Shape(format!(
                "row of {} values for a scaler fitted on {} columns",
                row.len(),
                self.cols()
            )));
        }
        let mut clamped = Vec::new();
        let values = row
            .iter()
            .enumerate()
            .map(|(c, &x)| {
                let (lo, hi) = (T::lit(self.min[c]), T::lit(self.max[c]));
                let span = hi - lo;
                let v = if span > T::zero() { (x - lo) / span } else { T::zero() };
                if v < T::zero() || v > T::one() || (span == T::zero() && x != lo) {
                    clamped.push(c);
                }
                v.max(T::zero()).min(T::one())
            })
            .collect();
        Ok(ScaledRow { values, clamped })
    }
}

/// Scales every row; returns the matrix and the number of clamped cells.
pub fn apply_scaler<T: Real>(
    matrix: &FeatureMatrix<T>,
    state: &ScalerState,
) -> Result<(FeatureMatrix<T>, usize), IngestError> {
    let mut data = Vec::with_capacity(matrix.data().len());
    let mut clamped = 0;
    for r in 0..matrix.rows() {
        let s = state.scale_row(matrix.row(r))?;
        clamped += s.clamped.len();
        data.extend(s.values);
    }
    let out = FeatureMatrix::from_parts(matrix.cols(), data, matrix.labels().to_vec(), matrix.origin().to_vec())?;
    Ok((out, clamped))
}
