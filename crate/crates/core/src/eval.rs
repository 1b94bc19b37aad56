//! Scoring: exact match and token-level Rouge-L, per-category aggregation,
//! and the runtime cost model.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{category_of, Category, CategoryMap};
use crate::inference::{tokenize, InferenceRecord};
use crate::transfer::PassStats;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("no reference answers")]
    NoReferences,
    #[error("cost model field `{0}` must be finite and non-negative")]
    InvalidCost(&'static str),
}

/// Lowercase, trim, and collapse whitespace runs to one space.
pub fn normalize(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// 1 if the normalized prediction equals any normalized reference.
pub fn exact_match(pred: &str, refs: &[String]) -> Result<f64, EvalError> {
    if refs.is_empty() {
        return Err(EvalError::NoReferences);
    }
    let p = normalize(pred);
    Ok(if refs.iter().any(|r| normalize(r) == p) {
        1.0
    } else {
        0.0
    })
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// Token-level LCS F1.
pub fn rouge_l(pred: &str, reference: &str) -> f64 {
    let (p, r) = (tokenize(pred), tokenize(reference));
    if p.is_empty() || r.is_empty() {
        return 0.0;
    }
    let l = lcs_len(&p, &r);
    if l == 0 {
        return 0.0;
    }
    let precision = l as f64 / p.len() as f64;
    let recall = l as f64 / r.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Best Rouge-L over the references.
pub fn rouge_l_multi(pred: &str, refs: &[String]) -> Result<f64, EvalError> {
    if refs.is_empty() {
        return Err(EvalError::NoReferences);
    }
    Ok(refs.iter().map(|r| rouge_l(pred, r)).fold(0.0, f64::max))
}

/// Mean Rouge-L and EM (both ×100) over `n` instances.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub rouge: f64,
    pub em: f64,
    pub n: usize,
}

#[derive(Debug, Default)]
struct Sums {
    rouge: f64,
    em: f64,
    n: usize,
}

impl Sums {
    fn add(&mut self, rouge: f64, em: f64) {
        self.rouge += rouge;
        self.em += em;
        self.n += 1;
    }

    fn absorb(&mut self, other: &Sums) {
        self.rouge += other.rouge;
        self.em += other.em;
        self.n += other.n;
    }

    fn score(&self) -> Score {
        if self.n == 0 {
            return Score::default();
        }
        Score {
            rouge: 100.0 * self.rouge / self.n as f64,
            em: 100.0 * self.em / self.n as f64,
            n: self.n,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub per_task: BTreeMap<String, Score>,
    pub per_category: BTreeMap<String, Score>,
    pub overall: Score,
    #[serde(default)]
    pub pass_rates: Option<BTreeMap<String, PassStats>>,
    pub format_miss_rate: f64,
    /// Records without references, excluded from scoring.
    pub unscored: usize,
}

/// Instance-weighted means per task, per category and overall.
pub fn aggregate(records: &[InferenceRecord], map: &CategoryMap) -> ScoreReport {
    let mut tasks: BTreeMap<String, Sums> = BTreeMap::new();
    let mut misses = 0usize;
    let mut unscored = 0usize;
    for r in records {
        let pred = &r.parsed_answer;
        match (
            rouge_l_multi(pred, &r.references),
            exact_match(pred, &r.references),
        ) {
            (Ok(rouge), Ok(em)) => tasks.entry(r.task.clone()).or_default().add(rouge, em),
            _ => {
                unscored += 1;
                continue;
            }
        }
        misses += usize::from(r.format_miss);
    }
    let mut cats: BTreeMap<String, Sums> = BTreeMap::new();
    let mut all = Sums::default();
    for (task, sums) in &tasks {
        cats.entry(category_of(task, map)).or_default().absorb(sums);
        all.absorb(sums);
    }
    ScoreReport {
        per_task: tasks.iter().map(|(k, s)| (k.clone(), s.score())).collect(),
        per_category: cats.iter().map(|(k, s)| (k.clone(), s.score())).collect(),
        overall: all.score(),
        pass_rates: None,
        format_miss_rate: if all.n == 0 {
            0.0
        } else {
            misses as f64 / all.n as f64
        },
        unscored,
    }
}

fn category_columns(report: &ScoreReport) -> Vec<String> {
    let mut cols: Vec<String> = Category::ALL
        .iter()
        .map(|c| c.as_str().to_string())
        .filter(|c| report.per_category.contains_key(c))
        .collect();
    for k in report.per_category.keys() {
        if !cols.contains(k) {
            cols.push(k.clone());
        }
    }
    cols
}

impl ScoreReport {
    /// Aligned text table: one Rouge-L column per category, then overall EM
    /// and Rouge-L, all to one decimal.
    pub fn render_table(&self, label: &str) -> String {
        let cols = category_columns(self);
        let mut headers: Vec<String> = vec!["Method".into()];
        headers.extend(cols.iter().cloned());
        headers.push("EM".into());
        headers.push("Rouge-L".into());
        let mut row = vec![label.to_string()];
        row.extend(
            cols.iter()
                .map(|c| format!("{:.1}", self.per_category[c].rouge)),
        );
        row.push(format!("{:.1}", self.overall.em));
        row.push(format!("{:.1}", self.overall.rouge));
        let widths: Vec<usize> = headers
            .iter()
            .zip(&row)
            .map(|(h, r)| h.len().max(r.len()))
            .collect();
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| {
                    if i == 0 {
                        format!("{c:<w$}")
                    } else {
                        format!("{c:>w$}")
                    }
                })
                .collect::<Vec<_>>()
                .join("  ")
        };
        let mut out = String::new();
        let _ = writeln!(out, "{}", line(&headers));
        let _ = writeln!(out, "{}", line(&row));
        if let Some(rates) = &self.pass_rates {
            let _ = writeln!(out);
            let _ = write!(out, "{}", render_pass_rates(rates));
        }
        let _ = writeln!(
            out,
            "\nformat misses: {:.1}%",
            100.0 * self.format_miss_rate
        );
        out
    }
}

/// `category  rate` lines, with an overall row.
pub fn render_pass_rates(rates: &BTreeMap<String, PassStats>) -> String {
    let mut overall = PassStats::default();
    let width = rates
        .keys()
        .map(String::len)
        .max()
        .unwrap_or(0)
        .max("Overall".len());
    let mut out = String::from("Verification pass rate\n");
    for (cat, s) in rates {
        overall.merge(s);
        let _ = writeln!(out, "{cat:<width$}  {}", s.render());
    }
    let _ = writeln!(out, "{:<width$}  {}", "Overall", overall.render());
    out
}

/// Item counts and per-item costs of one run: `n_source` source
/// demonstrations considered by the sampler, `n_source_sampled` transferred,
/// `n_target_sampled` considered by the target sampler, `c_theta` the cost of
/// one objective term and `c_model` of one model call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub n_source: u64,
    pub n_source_sampled: u64,
    pub n_target_sampled: u64,
    pub c_theta: f64,
    pub c_model: f64,
}

impl CostModel {
    pub fn validate(&self) -> Result<(), EvalError> {
        for (name, v) in [("c_theta", self.c_theta), ("c_model", self.c_model)] {
            if !v.is_finite() || v < 0.0 {
                return Err(EvalError::InvalidCost(name));
            }
        }
        Ok(())
    }

    /// The four additive terms: source sampling, transfer, verification,
    /// target sampling.
    pub fn terms(&self) -> [(&'static str, f64); 4] {
        let (ns, nss, nts) = (
            self.n_source as f64,
            self.n_source_sampled as f64,
            self.n_target_sampled as f64,
        );
        [
            ("source sampling", self.c_theta * ns * nss),
            ("transfer", self.c_model * nss),
            ("verification", self.c_model * nss),
            ("target sampling", self.c_theta * nss * nts),
        ]
    }
}

/// `(raw, adjusted)`: the sum of the four terms, and the same total
/// factored by the number of transferred demonstrations.
pub fn estimate_cost(m: &CostModel) -> Result<(f64, f64), EvalError> {
    m.validate()?;
    let raw: f64 = m.terms().iter().map(|t| t.1).sum();
    let (ns, nss, nts) = (
        m.n_source as f64,
        m.n_source_sampled as f64,
        m.n_target_sampled as f64,
    );
    let adjusted = (m.c_theta * ns + 2.0 * m.c_model) * nss + m.c_theta * nss * nts;
    Ok((raw, adjusted))
}
