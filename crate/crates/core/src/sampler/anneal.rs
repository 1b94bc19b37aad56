//! Simulated-annealing subset selection and its exhaustive oracle.

use itertools::Itertools;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{SamplerError, Selection, SubsetObjective};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnealConfig {
    pub initial_temp: f64,
    pub cooling_rate: f64,
    pub min_temp: f64,
    /// Consecutive iterations without a new best before a large step.
    pub stall_threshold: usize,
    pub small_step_swaps: usize,
    /// `None` means `max(1, ⌈n/4⌉)`.
    pub large_step_swaps: Option<usize>,
    pub seed: u64,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self {
            initial_temp: 1.0,
            cooling_rate: 0.99,
            min_temp: 1e-4,
            stall_threshold: 100,
            small_step_swaps: 1,
            large_step_swaps: None,
            seed: 0,
        }
    }
}

impl AnnealConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        let ok = self.cooling_rate > 0.0
            && self.cooling_rate < 1.0
            && self.min_temp > 0.0
            && self.min_temp < self.initial_temp
            && self.stall_threshold >= 1
            && self.small_step_swaps >= 1
            && self.large_step_swaps.is_none_or(|s| s >= 1);
        if ok {
            Ok(())
        } else {
            Err(SamplerError::InvalidConfig(format!("{self:?}")))
        }
    }

    /// Number of cooling steps until the temperature drops below `min_temp`.
    pub fn planned_iterations(&self) -> usize {
        ((self.min_temp / self.initial_temp).ln() / self.cooling_rate.ln()).ceil() as usize
    }

    pub fn large_swaps(&self, n: usize) -> usize {
        self.large_step_swaps
            .unwrap_or_else(|| n.div_ceil(4).max(1))
    }
}

/// Minimizes `objective` over `n`-subsets of `0..m`.
///
/// Starts from a seeded random subset. Each iteration swaps
/// `small_step_swaps` selected items for unselected ones, or
/// `large_swaps(n)` after `stall_threshold` iterations without a new best.
/// A worse candidate is accepted with probability `exp(-Δ/T)`. The
/// temperature is multiplied by `cooling_rate` every iteration and the search
/// stops once it falls below `min_temp`.
pub fn anneal_select<O: SubsetObjective + ?Sized>(
    m: usize,
    n: usize,
    objective: &O,
    config: &AnnealConfig,
) -> Result<Selection, SamplerError> {
    config.validate()?;
    if n == 0 || n > m {
        return Err(SamplerError::InvalidSize { n, m });
    }
    if n == m {
        let all: Vec<usize> = (0..m).collect();
        let value = objective.evaluate(&all);
        return Ok(Selection {
            indices: all,
            objective: value,
            evaluations: 1,
            iterations: 0,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut current = sample(&mut rng, m, n).into_vec();
    let mut selected = vec![false; m];
    for &i in &current {
        selected[i] = true;
    }
    let mut outside: Vec<usize> = (0..m).filter(|&i| !selected[i]).collect();

    let mut current_value = objective.evaluate(&current);
    let mut best = current.clone();
    let mut best_value = current_value;
    let mut evaluations = 1usize;
    let mut iterations = 0usize;
    let mut stall = 0usize;
    let large = config.large_swaps(n);
    let mut temp = config.initial_temp;

    while temp >= config.min_temp {
        let swaps = if stall >= config.stall_threshold {
            stall = 0;
            large
        } else {
            config.small_step_swaps
        }
        .min(n)
        .min(m - n);

        let pos_in = sample(&mut rng, n, swaps).into_vec();
        let pos_out = sample(&mut rng, m - n, swaps).into_vec();
        let removed: Vec<usize> = pos_in.iter().map(|&p| current[p]).collect();
        let added: Vec<usize> = pos_out.iter().map(|&p| outside[p]).collect();
        let mut candidate = current.clone();
        for (&p, &a) in pos_in.iter().zip(&added) {
            candidate[p] = a;
        }
        let candidate_value = objective
            .evaluate_swap(&current, current_value, &removed, &added)
            .unwrap_or_else(|| objective.evaluate(&candidate));
        evaluations += 1;

        let delta = candidate_value - current_value;
        let accept = delta <= 0.0 || rng.gen::<f64>() < (-delta / temp).exp();
        if accept {
            current = candidate;
            for (&p, &r) in pos_out.iter().zip(&removed) {
                outside[p] = r;
            }
            current_value = candidate_value;
        }
        if current_value < best_value {
            best.clone_from(&current);
            best_value = current_value;
            stall = 0;
        } else {
            stall += 1;
        }

        temp *= config.cooling_rate;
        iterations += 1;
    }

    best.sort_unstable();
    Ok(Selection {
        indices: best,
        objective: best_value,
        evaluations,
        iterations,
    })
}

/// Binomial coefficient, saturating at `u128::MAX`.
pub fn binomial(m: usize, n: usize) -> u128 {
    if n > m {
        return 0;
    }
    let n = n.min(m - n);
    let mut acc: u128 = 1;
    for i in 0..n {
        acc = match acc.checked_mul((m - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

pub const DEFAULT_COMBINATION_CAP: u128 = 200_000;

/// Global minimum over every `n`-subset of `0..m`; ties go to the
/// lexicographically smallest index list.
pub fn brute_force_select<O: SubsetObjective + ?Sized>(
    m: usize,
    n: usize,
    objective: &O,
    cap: u128,
) -> Result<Selection, SamplerError> {
    if n == 0 || n > m {
        return Err(SamplerError::InvalidSize { n, m });
    }
    let count = binomial(m, n);
    if count > cap {
        return Err(SamplerError::TooManyCombinations { count, cap });
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut evaluations = 0usize;
    for subset in (0..m).combinations(n) {
        let value = objective.evaluate(&subset);
        evaluations += 1;
        if best.as_ref().is_none_or(|(_, b)| value < *b) {
            best = Some((subset, value));
        }
    }
    let (indices, objective) = best.expect("at least one subset");
    Ok(Selection {
        indices,
        objective,
        evaluations,
        iterations: 0,
    })
}
