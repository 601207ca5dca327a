use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::scalar::Real;
use crate::simgraph::GraphError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Cosine,
    Euclidean,
    Manhattan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// Higher is closer.
    Similarity,
    /// Lower is closer.
    Distance,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Cosine, Metric::Euclidean, Metric::Manhattan];

    pub fn orientation(self) -> Orientation {
        match self {
            Metric::Cosine => Orientation::Similarity,
            Metric::Euclidean | Metric::Manhattan => Orientation::Distance,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Cosine => "cosine",
            Metric::Euclidean => "euclidean",
            Metric::Manhattan => "manhattan",
        }
    }

    pub(crate) fn tag(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }

    /// Metric value between two equal-length vectors.
    pub fn eval<T: Real>(self, a: &[T], b: &[T]) -> Result<T, GraphError> {
        if a.len() != b.len() {
            return Err(GraphError::DimMismatch {
                expected: a.len(),
                got: b.len(),
            });
        }
        Ok(match self {
            Metric::Cosine => cosine_similarity(a, b)?,
            Metric::Euclidean => euclidean_distance(a, b),
            Metric::Manhattan => manhattan_distance(a, b),
        })
    }

    /// Whether `value` strictly clears `threshold` in this metric's orientation.
    pub fn clears<T: Real>(self, value: T, threshold: T) -> bool {
        match self.orientation() {
            Orientation::Similarity => value > threshold,
            Orientation::Distance => value < threshold,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cosine" | "cos" => Ok(Metric::Cosine),
            "euclidean" | "euc" | "l2" => Ok(Metric::Euclidean),
            "manhattan" | "man" | "l1" => Ok(Metric::Manhattan),
            other => Err(format!("unknown metric {other:?}")),
        }
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub(crate) fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Cosine of the angle between `a` and `b`, clamped to `[-1, 1]`.
pub fn cosine_similarity<T: Real>(a: &[T], b: &[T]) -> Result<T, GraphError> {
    let (na, nb) = (norm(a), norm(b));
    if na == T::zero() || nb == T::zero() {
        return Err(GraphError::ZeroVector { node: None });
    }
    Ok(cosine_with_norms(a, b, na, nb))
}

/// Multiplying the norms in a fixed order keeps the value bit-identical
/// under argument swap.
pub(crate) fn cosine_with_norms<T: Real>(a: &[T], b: &[T], na: T, nb: T) -> T {
    let denom = if na <= nb { na * nb } else { nb * na };
    (dot(a, b) / denom).max(-T::one()).min(T::one())
}

/// ℓ2 norm of `a − b`. Panics on length mismatch.
pub fn euclidean_distance<T: Real>(a: &[T], b: &[T]) -> T {
    assert_eq!(a.len(), b.len(), "vector length mismatch");
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>().sqrt()
}

/// ℓ1 norm of `a − b`. Panics on length mismatch.
pub fn manhattan_distance<T: Real>(a: &[T], b: &[T]) -> T {
    assert_eq!(a.len(), b.len(), "vector length mismatch");
    a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).sum()
}
