use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    anneal_select, filter_top_k, rank_source_tasks, AnnealConfig, Pool, PoolItem, SamplerError,
    Selection, SourceObjective, SubsetObjective,
};
use crate::corpus::Demonstration;
use crate::embedding::EmbeddingVector;

/// An embedded source task.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceTask {
    pub id: String,
    pub definition: EmbeddingVector,
    pub demos: Vec<(Demonstration, EmbeddingVector)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceSampling {
    pub k_tasks: usize,
    pub n_demos: usize,
    /// Seeded uniform subset instead of annealing.
    pub random_source: bool,
    /// Restrict the pool to the task at this 1-based similarity rank.
    pub only_rank: Option<usize>,
    pub anneal: AnnealConfig,
}

impl Default for SourceSampling {
    fn default() -> Self {
        Self {
            k_tasks: 16,
            n_demos: 128,
            random_source: false,
            only_rank: None,
            anneal: AnnealConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledDemo {
    pub pool_index: usize,
    pub task: String,
    pub demo: Demonstration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingManifest {
    pub target_task: String,
    pub strategy: String,
    /// Filtered source tasks with their definition distances.
    pub source_tasks: Vec<(String, f64)>,
    pub pool_size: usize,
    pub requested: usize,
    pub selected: Vec<SampledDemo>,
    pub task_counts: BTreeMap<String, usize>,
    pub objective: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub config: SourceSampling,
}

/// The `r`-th most similar task (1-based).
pub fn select_by_rank(ranked: &[(String, f64)], rank: usize) -> Result<String, SamplerError> {
    if rank == 0 || rank > ranked.len() {
        return Err(SamplerError::InvalidSize {
            n: rank,
            m: ranked.len(),
        });
    }
    Ok(ranked[rank - 1].0.clone())
}

/// Rank → filter → pool → select. Returns the manifest and the vectors of
/// the selected demonstrations in manifest order.
pub fn sample_source(
    tasks: &[SourceTask],
    target_task: &str,
    target_def: &EmbeddingVector,
    params: &SourceSampling,
) -> Result<(SamplingManifest, Vec<EmbeddingVector>), SamplerError> {
    let task_defs: BTreeMap<String, EmbeddingVector> = tasks
        .iter()
        .map(|t| (t.id.clone(), t.definition.clone()))
        .collect();
    if task_defs.is_empty() {
        return Err(SamplerError::EmptyPool);
    }
    let ranked = rank_source_tasks(&task_defs, target_def)?;
    let chosen: Vec<String> = match params.only_rank {
        Some(r) => vec![select_by_rank(&ranked, r)?],
        None => filter_top_k(&ranked, params.k_tasks),
    };
    let source_tasks: Vec<(String, f64)> = ranked
        .iter()
        .filter(|(id, _)| chosen.contains(id))
        .cloned()
        .collect();

    let mut items = Vec::new();
    let mut defs = BTreeMap::new();
    for id in &chosen {
        let task = tasks
            .iter()
            .find(|t| &t.id == id)
            .expect("ranked from tasks");
        defs.insert(id.clone(), task.definition.clone());
        items.extend(task.demos.iter().map(|(d, v)| PoolItem {
            demo: d.clone(),
            vector: v.clone(),
            task: id.clone(),
        }));
    }
    if items.is_empty() {
        return Err(SamplerError::EmptyPool);
    }
    let pool = Pool::new(items, target_def.clone(), defs)?;
    let m = pool.len();
    let n = if params.n_demos > m {
        tracing::warn!(
            requested = params.n_demos,
            pool = m,
            "source pool smaller than requested sample; taking all"
        );
        m
    } else {
        params.n_demos
    };
    if n == 0 {
        return Err(SamplerError::InvalidSize { n, m });
    }

    let objective = SourceObjective::new(&pool);
    let (selection, strategy) = if params.random_source {
        let mut rng = ChaCha8Rng::seed_from_u64(params.anneal.seed);
        let mut indices = rand::seq::index::sample(&mut rng, m, n).into_vec();
        indices.sort_unstable();
        let value = objective.evaluate(&indices);
        (
            Selection {
                indices,
                objective: value,
                evaluations: 1,
                iterations: 0,
            },
            "random",
        )
    } else {
        (anneal_select(m, n, &objective, &params.anneal)?, "anneal")
    };

    let mut task_counts = BTreeMap::new();
    let mut selected = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n);
    for &i in &selection.indices {
        let item = &pool.items()[i];
        *task_counts.entry(item.task.clone()).or_insert(0) += 1;
        selected.push(SampledDemo {
            pool_index: i,
            task: item.task.clone(),
            demo: item.demo.clone(),
        });
        vectors.push(item.vector.clone());
    }

    Ok((
        SamplingManifest {
            target_task: target_task.to_string(),
            strategy: strategy.to_string(),
            source_tasks,
            pool_size: m,
            requested: params.n_demos,
            selected,
            task_counts,
            objective: selection.objective,
            evaluations: selection.evaluations,
            iterations: selection.iterations,
            config: *params,
        },
        vectors,
    ))
}
