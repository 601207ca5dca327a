use serde::{Deserialize, Serialize};

use crate::ingest::{IngestError, TriageLevel, CLASS_COUNT};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowOrigin {
    Original,
    Synthetic,
}

/// Row-major design matrix with aligned labels and row provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T: Real = f64> {
    cols: usize,
    data: Vec<T>,
    labels: Vec<TriageLevel>,
    origin: Vec<RowOrigin>,
}

impl<T: Real> FeatureMatrix<T> {
    pub fn with_capacity(cols: usize, rows: usize) -> Self {
        Self {
            cols,
            data: Vec::with_capacity(cols * rows),
            labels: Vec::with_capacity(rows),
            origin: Vec::with_capacity(rows),
        }
    }

    /// All rows marked [`RowOrigin::Original`].
    pub fn new(cols: usize, data: Vec<T>, labels: Vec<TriageLevel>) -> Result<Self, IngestError> {
        let origin = vec![RowOrigin::Original; labels.len()];
        Self::from_parts(cols, data, labels, origin)
    }

    pub fn from_parts(
        cols: usize,
        data: Vec<T>,
        labels: Vec<TriageLevel>,
        origin: Vec<RowOrigin>,
    ) -> Result<Self, IngestError> {
        if cols == 0 || data.len() != cols * labels.len() || origin.len() != labels.len() {
            return Err(IngestError::Shape(format!(
                "{} values, {} labels, {} origins for {cols} columns",
                data.len(),
                labels.len(),
                origin.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(IngestError::Shape(format!(
                "non-finite value at row {} column {}",
                i / cols,
                i % cols
            )));
        }
        Ok(Self {
            cols,
            data,
            labels,
            origin,
        })
    }

    pub fn push_row(&mut self, row: &[T], label: TriageLevel, origin: RowOrigin) -> Result<(), IngestError> {
        if row.len() != self.cols {
            return Err(IngestError::Shape(format!(
                "row of {} values for {} columns",
                row.len(),
                self.cols
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(IngestError::Shape("non-finite value in pushed row".into()));
        }
        self.data.extend_from_slice(row);
        self.labels.push(label);
        self.origin.push(origin);
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn labels(&self) -> &[TriageLevel] {
        &self.labels
    }

    pub fn label_codes(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l.code()).collect()
    }

    pub fn origin(&self) -> &[RowOrigin] {
        &self.origin
    }

    pub fn column(&self, c: usize) -> impl Iterator<Item = T> + '_ {
        self.data.iter().skip(c).step_by(self.cols).copied()
    }

    pub fn class_counts(&self) -> [usize; CLASS_COUNT] {
        let mut counts = [0; CLASS_COUNT];
        for l in &self.labels {
            counts[l.code()] += 1;
        }
        counts
    }

    /// New matrix holding the given rows in the given order.
    pub fn select(&self, rows: &[usize]) -> Self {
        let mut out = Self::with_capacity(self.cols, rows.len());
        for &r in rows {
            out.data.extend_from_slice(self.row(r));
            out.labels.push(self.labels[r]);
            out.origin.push(self.origin[r]);
        }
        out
    }

    pub fn cast<U: Real>(&self) -> FeatureMatrix<U> {
        FeatureMatrix {
            cols: self.cols,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
            labels: self.labels.clone(),
            origin: self.origin.clone(),
        }
    }
}
