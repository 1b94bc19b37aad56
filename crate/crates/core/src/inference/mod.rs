//! Few-shot inference: BM25 demonstration retrieval per question, prompt
//! rendering and answer parsing.

mod bm25;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chat::ChatClient;
use crate::corpus::{Demonstration, Instance, TaskRecord};
use crate::transfer::{demo_block, DELIMITER};

pub use crate::transfer::parse_inference_output;
pub use bm25::{tokenize, Bm25Index};

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error(
        "inference: only {succeeded} of {attempted} questions succeeded (threshold {threshold})"
    )]
    BelowThreshold {
        succeeded: usize,
        attempted: usize,
        threshold: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    pub shots: usize,
    pub max_instances: usize,
    pub temperature: f64,
    pub max_tokens: u32,
    pub success_threshold: f64,
    /// Place the most similar demonstration last, nearest the question.
    pub most_similar_last: bool,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            shots: 3,
            max_instances: 100,
            temperature: 0.0,
            max_tokens: 512,
            success_threshold: 0.9,
            most_similar_last: true,
        }
    }
}

/// Top `k` demonstrations of `index` for `question`, best first.
pub fn top_k_demos(index: &Bm25Index, question: &str, k: usize) -> Vec<usize> {
    if index.is_empty() {
        tracing::warn!("empty demonstration pool; no demonstrations selected");
        return Vec::new();
    }
    index.top_k(question, k)
}

/// Renders the inference prompt. With no demonstrations the demonstration
/// section is omitted entirely.
pub fn render_inference_prompt(
    definition: &str,
    demos: &[&Demonstration],
    question: &str,
) -> String {
    let mut out = String::new();
    out.push_str(definition);
    out.push('\n');
    if !demos.is_empty() {
        out.push_str("Here are some demonstrations of the task:");
        out.push_str(DELIMITER);
        for d in demos {
            out.push_str(&demo_block(
                &d.question,
                d.rationale.as_deref().unwrap_or(""),
                &d.answer,
            ));
            out.push_str(DELIMITER);
        }
    }
    out.push_str(
        "Based on the above demonstrations, please generate a response to the following question.\n\
Your output format should be as follows:\n\
Reason:\n\
<Explanation of the answer>\n\
Answer:\n\
<Your answer>\n\
Think it step by step.\n\
\n\
Input:\n",
    );
    out.push_str(question);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceRecord {
    pub task: String,
    pub instance_id: String,
    pub question: String,
    /// [`Demonstration::reference`] of each demo, in prompt order.
    pub selected: Vec<String>,
    pub raw_output: String,
    pub parsed_reason: String,
    pub parsed_answer: String,
    pub references: Vec<String>,
    pub format_miss: bool,
    #[serde(default)]
    pub error: Option<String>,
}

/// Answers up to `max_instances` questions of `target` using demonstrations
/// retrieved from `pool`. Records are in question order.
pub fn run_inference(
    client: &ChatClient,
    target: &TaskRecord,
    pool: &[Demonstration],
    questions: &[Instance],
    cfg: &InferenceConfig,
) -> Result<Vec<InferenceRecord>, InferenceError> {
    let questions = &questions[..questions.len().min(cfg.max_instances)];
    let texts: Vec<&str> = pool.iter().map(|d| d.question.as_str()).collect();
    let index = Bm25Index::new(&texts);
    let mut selections = Vec::with_capacity(questions.len());
    let mut requests = Vec::with_capacity(questions.len());
    for q in questions {
        let mut chosen = if pool.is_empty() {
            Vec::new()
        } else {
            index.top_k(&q.input, cfg.shots)
        };
        if cfg.most_similar_last {
            chosen.reverse();
        }
        let demos: Vec<&Demonstration> = chosen.iter().map(|&i| &pool[i]).collect();
        let prompt = render_inference_prompt(&target.definition, &demos, &q.input);
        requests.push(client.request(prompt, cfg.temperature, cfg.max_tokens));
        selections.push(demos.iter().map(|d| d.reference()).collect::<Vec<_>>());
    }
    let results = client.complete_all(&requests);
    let records: Vec<InferenceRecord> = questions
        .iter()
        .zip(selections)
        .zip(results)
        .map(|((q, selected), result)| {
            let mut rec = InferenceRecord {
                task: target.id.clone(),
                instance_id: q.id.clone(),
                question: q.input.clone(),
                selected,
                raw_output: String::new(),
                parsed_reason: String::new(),
                parsed_answer: String::new(),
                references: q.output.clone(),
                format_miss: false,
                error: None,
            };
            match result {
                Ok(raw) => {
                    let (reason, answer, miss) = parse_inference_output(&raw);
                    rec.parsed_reason = reason;
                    rec.parsed_answer = answer;
                    rec.format_miss = miss;
                    rec.raw_output = raw;
                }
                Err(e) => rec.error = Some(e.to_string()),
            }
            rec
        })
        .collect();
    let ok = records.iter().filter(|r| r.error.is_none()).count();
    if !records.is_empty() && (ok as f64) < cfg.success_threshold * records.len() as f64 {
        return Err(InferenceError::BelowThreshold {
            succeeded: ok,
            attempted: records.len(),
            threshold: cfg.success_threshold,
        });
    }
    Ok(records)
}
