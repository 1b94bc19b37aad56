//! Final pool selection over verified candidates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Demonstration;
use crate::embedding::EmbeddingVector;
use crate::ot::{EmpiricalDistribution, OtConfig};
use crate::sampler::{anneal_select, AnnealConfig, SamplerError, SubsetObjective, TargetObjective};

#[derive(Debug, Error)]
pub enum TargetSampleError {
    #[error("no qualified demonstrations for `{0}`; transfer more source demonstrations")]
    EmptyPool(String),
    #[error("{candidates} candidates but {vectors} vectors")]
    LengthMismatch { candidates: usize, vectors: usize },
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TargetSampling {
    pub n: usize,
    pub anneal: AnnealConfig,
    pub ot: OtConfig,
    /// Return the whole qualified pool without optimization.
    pub skip: bool,
}

impl Default for TargetSampling {
    fn default() -> Self {
        Self {
            n: 512,
            anneal: AnnealConfig::default(),
            ot: OtConfig::default(),
            skip: false,
        }
    }
}

/// The final demonstrations for one target task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemonstrationPool {
    pub target_task: String,
    pub demos: Vec<Demonstration>,
    /// Indices into the qualified pool, ascending.
    pub indices: Vec<usize>,
    pub objective: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub qualified: usize,
    pub unverified: bool,
    /// Hash of the sampling manifest the pool descends from.
    pub provenance: String,
}

/// Selects up to `params.n` of the qualified demonstrations, minimizing the
/// target objective against the sampled source distribution.
#[allow(clippy::too_many_arguments)]
pub fn sample_target(
    target_task: &str,
    qualified: &[Demonstration],
    vectors: &[EmbeddingVector],
    source: &EmpiricalDistribution,
    target_def: &EmbeddingVector,
    params: &TargetSampling,
    unverified: bool,
    provenance: &str,
) -> Result<DemonstrationPool, TargetSampleError> {
    if qualified.is_empty() {
        return Err(TargetSampleError::EmptyPool(target_task.to_string()));
    }
    if qualified.len() != vectors.len() {
        return Err(TargetSampleError::LengthMismatch {
            candidates: qualified.len(),
            vectors: vectors.len(),
        });
    }
    let objective = TargetObjective::new(vectors, source, target_def, params.ot)?;
    let m = qualified.len();
    let selection = if params.skip || m <= params.n {
        if !params.skip {
            tracing::warn!(
                target = target_task,
                pool = m,
                requested = params.n,
                "qualified pool is not larger than the requested size; keeping all"
            );
        }
        let all: Vec<usize> = (0..m).collect();
        crate::sampler::Selection {
            objective: objective.evaluate(&all),
            indices: all,
            evaluations: 1,
            iterations: 0,
        }
    } else {
        anneal_select(m, params.n, &objective, &params.anneal)?
    };
    Ok(DemonstrationPool {
        target_task: target_task.to_string(),
        demos: selection
            .indices
            .iter()
            .map(|&i| qualified[i].clone())
            .collect(),
        indices: selection.indices,
        objective: selection.objective,
        evaluations: selection.evaluations,
        iterations: selection.iterations,
        qualified: m,
        unverified,
        provenance: provenance.to_string(),
    })
}
