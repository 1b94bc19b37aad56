//! Order-1 Wasserstein distances between uniform-weight point clouds under
//! the Euclidean ground metric.
//!
//! Clouds with at most [`OtConfig::exact_limit`] points are solved exactly.
//! Larger clouds fall back to a seeded sliced estimate, reported through
//! [`Method::Sliced`].

mod exact;
mod sliced;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingVector;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum OtError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("empirical distribution is empty")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OtConfig {
    pub exact_limit: usize,
    pub projections: usize,
    pub seed: u64,
}

impl Default for OtConfig {
    fn default() -> Self {
        Self {
            exact_limit: 256,
            projections: 512,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Exact,
    Sliced { projections: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wasserstein {
    pub distance: f64,
    pub method: Method,
}

/// Uniform-weight point cloud; all points share one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    points: Vec<EmbeddingVector>,
}

impl EmpiricalDistribution {
    pub fn new(points: Vec<EmbeddingVector>) -> Result<Self, OtError> {
        let first = points.first().ok_or(OtError::Empty)?.dim();
        check_dims(points.iter().map(|p| p.values()), first)?;
        Ok(Self { points })
    }

    pub fn points(&self) -> &[EmbeddingVector] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    fn slices(&self) -> Vec<&[f32]> {
        self.points.iter().map(|p| p.values()).collect()
    }
}

fn check_dims<'a>(points: impl IntoIterator<Item = &'a [f32]>, dim: usize) -> Result<(), OtError> {
    for p in points {
        if p.len() != dim {
            return Err(OtError::DimMismatch {
                left: dim,
                right: p.len(),
            });
        }
    }
    Ok(())
}

pub(crate) fn euclidean(u: &[f32], v: &[f32]) -> f64 {
    u.iter()
        .zip(v)
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Euclidean distance between two vectors.
pub fn ground_distance(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, OtError> {
    if u.dim() != v.dim() {
        return Err(OtError::DimMismatch {
            left: u.dim(),
            right: v.dim(),
        });
    }
    Ok(euclidean(u.values(), v.values()))
}

/// W1 between two clouds of raw points. Callers guarantee equal dimensions
/// and non-empty inputs.
pub(crate) fn wasserstein_points(a: &[&[f32]], b: &[&[f32]], config: &OtConfig) -> Wasserstein {
    if a.len().max(b.len()) <= config.exact_limit {
        let cost: Vec<Vec<f64>> = a
            .iter()
            .map(|x| b.iter().map(|y| euclidean(x, y)).collect())
            .collect();
        Wasserstein {
            distance: exact::transport_cost(&cost),
            method: Method::Exact,
        }
    } else {
        Wasserstein {
            distance: sliced::sliced_w1(a, b, config.projections, config.seed),
            method: Method::Sliced {
                projections: config.projections,
                seed: config.seed,
            },
        }
    }
}

/// W1 between two empirical distributions.
pub fn wasserstein(
    a: &EmpiricalDistribution,
    b: &EmpiricalDistribution,
    config: &OtConfig,
) -> Result<Wasserstein, OtError> {
    if a.dim() != b.dim() {
        return Err(OtError::DimMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(wasserstein_points(&a.slices(), &b.slices(), config))
}

/// W1 from a cloud to a single point: the mean ground distance.
pub fn wasserstein_to_point(
    a: &EmpiricalDistribution,
    x: &EmbeddingVector,
) -> Result<f64, OtError> {
    if a.dim() != x.dim() {
        return Err(OtError::DimMismatch {
            left: a.dim(),
            right: x.dim(),
        });
    }
    Ok(mean_distance_to(&a.slices(), x.values()))
}

pub(crate) fn mean_distance_to(points: &[&[f32]], x: &[f32]) -> f64 {
    points.iter().map(|p| euclidean(p, x)).sum::<f64>() / points.len() as f64
}

/// Sliced W1 estimate regardless of cloud size.
pub fn sliced_wasserstein(
    a: &EmpiricalDistribution,
    b: &EmpiricalDistribution,
    projections: usize,
    seed: u64,
) -> Result<f64, OtError> {
    if a.dim() != b.dim() {
        return Err(OtError::DimMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(sliced::sliced_w1(
        &a.slices(),
        &b.slices(),
        projections,
        seed,
    ))
}
