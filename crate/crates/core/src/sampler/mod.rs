//! Source-task filtering, the two sampling objectives, and subset search.
//!
//! The source objective weights each source task by its share of the
//! selection:
//!
//! ```text
//! Σ_i (N_i / N) · (6 · W(μ_i, x_T) + ‖x_{S_i} − x_T‖)
//! ```
//!
//! where `μ_i` is the selected demonstrations of task `i` and `W(μ_i, x_T)`
//! is their mean distance to the target definition vector. The target
//! objective is `W(μ, μ_S) + W(μ, x_T)` for a candidate pool `μ` against the
//! transferred source distribution `μ_S`.

mod anneal;
mod source;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use anneal::{
    anneal_select, binomial, brute_force_select, AnnealConfig, DEFAULT_COMBINATION_CAP,
};
pub use source::{
    sample_source, select_by_rank, SampledDemo, SamplingManifest, SourceSampling, SourceTask,
};

use crate::corpus::Demonstration;
use crate::embedding::EmbeddingVector;
use crate::ot::{self, OtConfig, OtError};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SamplerError {
    #[error("cannot select {n} of {m} items")]
    InvalidSize { n: usize, m: usize },
    #[error("invalid annealing config: {0}")]
    InvalidConfig(String),
    #[error("{count} combinations exceed the cap of {cap}")]
    TooManyCombinations { count: u128, cap: u128 },
    #[error("selection is empty")]
    EmptySelection,
    #[error("selection index {index} out of range for pool of {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("no source task has a definition vector for `{0}`")]
    UnknownTask(String),
    #[error("source pool is empty after filtering")]
    EmptyPool,
    #[error(transparent)]
    Ot(#[from] OtError),
}

/// A chosen set of pool indices and its objective value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Sorted, distinct.
    pub indices: Vec<usize>,
    pub objective: f64,
    pub evaluations: usize,
    pub iterations: usize,
}

/// A function of a subset of `0..m`.
pub trait SubsetObjective {
    fn evaluate(&self, indices: &[usize]) -> f64;

    /// Value of `current` with `removed` replaced by `added`, when it can be
    /// derived from `current_value` without a full evaluation.
    fn evaluate_swap(
        &self,
        _current: &[usize],
        _current_value: f64,
        _removed: &[usize],
        _added: &[usize],
    ) -> Option<f64> {
        None
    }
}

impl<F: Fn(&[usize]) -> f64> SubsetObjective for F {
    fn evaluate(&self, indices: &[usize]) -> f64 {
        self(indices)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolItem {
    pub demo: Demonstration,
    pub vector: EmbeddingVector,
    pub task: String,
}

/// Candidate source demonstrations with the definition vectors of their
/// tasks and of the target task.
#[derive(Debug, Clone, PartialEq)]
pub struct Pool {
    items: Vec<PoolItem>,
    target_def: EmbeddingVector,
    task_defs: BTreeMap<String, EmbeddingVector>,
}

impl Pool {
    pub fn new(
        items: Vec<PoolItem>,
        target_def: EmbeddingVector,
        task_defs: BTreeMap<String, EmbeddingVector>,
    ) -> Result<Self, SamplerError> {
        let dim = target_def.dim();
        let dims = items
            .iter()
            .map(|i| i.vector.dim())
            .chain(task_defs.values().map(|v| v.dim()));
        for d in dims {
            if d != dim {
                return Err(OtError::DimMismatch {
                    left: dim,
                    right: d,
                }
                .into());
            }
        }
        if let Some(item) = items.iter().find(|i| !task_defs.contains_key(&i.task)) {
            return Err(SamplerError::UnknownTask(item.task.clone()));
        }
        Ok(Self {
            items,
            target_def,
            task_defs,
        })
    }

    pub fn items(&self) -> &[PoolItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn target_def(&self) -> &EmbeddingVector {
        &self.target_def
    }

    pub fn task_defs(&self) -> &BTreeMap<String, EmbeddingVector> {
        &self.task_defs
    }
}

fn check_selection(indices: &[usize], len: usize) -> Result<(), SamplerError> {
    if indices.is_empty() {
        return Err(SamplerError::EmptySelection);
    }
    if let Some(&index) = indices.iter().find(|&&i| i >= len) {
        return Err(SamplerError::IndexOutOfRange { index, len });
    }
    Ok(())
}

/// The source objective with per-item terms precomputed.
///
/// Each selected item of task `i` contributes `6 · d(x_j, x_T) + d(x_{S_i}, x_T)`
/// to a running sum, so the weighted per-task form equals the sum over the
/// selection divided by `N`, and a swap updates it in `O(swaps)`.
pub struct SourceObjective {
    item_distance: Vec<f64>,
    task_distance: Vec<f64>,
    item_task: Vec<usize>,
}

impl SourceObjective {
    pub fn new(pool: &Pool) -> Self {
        let target = pool.target_def.values();
        let task_ids: Vec<&String> = pool.task_defs.keys().collect();
        let task_distance = pool
            .task_defs
            .values()
            .map(|v| ot::euclidean(v.values(), target))
            .collect();
        let item_task = pool
            .items
            .iter()
            .map(|i| {
                task_ids
                    .binary_search(&&i.task)
                    .expect("validated in Pool::new")
            })
            .collect();
        let item_distance = pool
            .items
            .iter()
            .map(|i| ot::euclidean(i.vector.values(), target))
            .collect();
        Self {
            item_distance,
            task_distance,
            item_task,
        }
    }

    fn item_term(&self, j: usize) -> f64 {
        6.0 * self.item_distance[j] + self.task_distance[self.item_task[j]]
    }
}

impl SubsetObjective for SourceObjective {
    fn evaluate(&self, indices: &[usize]) -> f64 {
        // (count, Σ d(x_j, x_T)) per task, combined as in the weighted form.
        let mut per_task: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
        for &j in indices {
            let e = per_task.entry(self.item_task[j]).or_default();
            e.0 += 1;
            e.1 += self.item_distance[j];
        }
        let n = indices.len() as f64;
        per_task
            .iter()
            .map(|(&t, &(count, sum))| {
                let dirac = sum / count as f64;
                (count as f64 / n) * (6.0 * dirac + self.task_distance[t])
            })
            .sum()
    }

    fn evaluate_swap(
        &self,
        current: &[usize],
        current_value: f64,
        removed: &[usize],
        added: &[usize],
    ) -> Option<f64> {
        let n = current.len() as f64;
        let delta: f64 = added.iter().map(|&j| self.item_term(j)).sum::<f64>()
            - removed.iter().map(|&j| self.item_term(j)).sum::<f64>();
        Some(current_value + delta / n)
    }
}

/// Source objective of `selection` over `pool`.
pub fn source_objective(selection: &[usize], pool: &Pool) -> Result<f64, SamplerError> {
    check_selection(selection, pool.len())?;
    Ok(SourceObjective::new(pool).evaluate(selection))
}

/// The target objective over a fixed candidate set.
pub struct TargetObjective<'a> {
    candidates: Vec<&'a [f32]>,
    source: Vec<&'a [f32]>,
    target_def: &'a [f32],
    config: OtConfig,
}

impl<'a> TargetObjective<'a> {
    pub fn new(
        candidates: &'a [EmbeddingVector],
        source: &'a ot::EmpiricalDistribution,
        target_def: &'a EmbeddingVector,
        config: OtConfig,
    ) -> Result<Self, SamplerError> {
        let dim = target_def.dim();
        for d in candidates
            .iter()
            .map(|c| c.dim())
            .chain(std::iter::once(source.dim()))
        {
            if d != dim {
                return Err(OtError::DimMismatch {
                    left: dim,
                    right: d,
                }
                .into());
            }
        }
        Ok(Self {
            candidates: candidates.iter().map(|c| c.values()).collect(),
            source: source.points().iter().map(|p| p.values()).collect(),
            target_def: target_def.values(),
            config,
        })
    }
}

impl SubsetObjective for TargetObjective<'_> {
    fn evaluate(&self, indices: &[usize]) -> f64 {
        let chosen: Vec<&[f32]> = indices.iter().map(|&i| self.candidates[i]).collect();
        ot::wasserstein_points(&chosen, &self.source, &self.config).distance
            + ot::mean_distance_to(&chosen, self.target_def)
    }
}

/// Target objective of `selection` over `candidates`.
pub fn target_objective(
    selection: &[usize],
    candidates: &[EmbeddingVector],
    source: &ot::EmpiricalDistribution,
    target_def: &EmbeddingVector,
    config: &OtConfig,
) -> Result<f64, SamplerError> {
    check_selection(selection, candidates.len())?;
    Ok(TargetObjective::new(candidates, source, target_def, *config)?.evaluate(selection))
}

/// Source tasks ordered by definition distance to the target, nearest first;
/// ties go to the lexicographically smaller id.
pub fn rank_source_tasks(
    task_defs: &BTreeMap<String, EmbeddingVector>,
    target_def: &EmbeddingVector,
) -> Result<Vec<(String, f64)>, SamplerError> {
    let mut ranked = task_defs
        .iter()
        .map(|(id, v)| Ok((id.clone(), ot::ground_distance(v, target_def)?)))
        .collect::<Result<Vec<_>, OtError>>()?;
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    Ok(ranked)
}

pub fn filter_top_k(ranked: &[(String, f64)], k: usize) -> Vec<String> {
    ranked.iter().take(k).map(|(id, _)| id.clone()).collect()
}
