//! Rewriting sampled source demonstrations into the target task, and the
//! verification gate that filters the rewritten candidates.

mod parse;
mod prompts;
mod stage;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Demonstration;

pub use parse::{
    parse_inference_output, parse_transfer_output, parse_verdict, Judgement, MissingMarker,
};
pub(crate) use prompts::{demo_block, DELIMITER};
pub use prompts::{render_synthesis_prompt, render_transfer_prompt, render_verify_prompt};
pub use stage::{
    run_synthesis_stage, run_transfer_stage, run_verify_stage, synthesize_one, transfer_one,
    verify_examples, PassStats, TransferConfig, VerifyConfig, VerifyOutput,
};

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("cannot render prompt: {0}")]
    Render(String),
    #[error("unknown source task `{0}`")]
    UnknownTask(String),
    #[error("target task `{0}` has no labeled example")]
    NoLabeledExample(String),
    #[error("{stage}: only {succeeded} of {attempted} items succeeded (threshold {threshold})")]
    BelowThreshold {
        stage: &'static str,
        succeeded: usize,
        attempted: usize,
        threshold: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Pending,
    Qualified,
    Unqualified,
    ParseFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferCandidate {
    pub source_task: String,
    pub source: Demonstration,
    pub target_input: String,
    pub target_reason: String,
    pub target_answer: String,
    pub verdict: Verdict,
    pub raw_transfer_output: String,
    #[serde(default)]
    pub raw_verify_output: Option<String>,
    /// Verification text contained neither verdict token.
    #[serde(default)]
    pub verdict_missing: bool,
    /// Admitted without a verification call.
    #[serde(default)]
    pub unverified: bool,
    /// Service or render failure for this item.
    #[serde(default)]
    pub error: Option<String>,
}

impl TransferCandidate {
    pub(crate) fn from_completion(source_task: &str, source: &Demonstration, raw: String) -> Self {
        let mut c = Self {
            source_task: source_task.to_string(),
            source: source.clone(),
            target_input: String::new(),
            target_reason: String::new(),
            target_answer: String::new(),
            verdict: Verdict::Pending,
            raw_transfer_output: String::new(),
            raw_verify_output: None,
            verdict_missing: false,
            unverified: false,
            error: None,
        };
        match parse_transfer_output(&raw) {
            Ok((input, reason, answer)) if !input.is_empty() && !answer.is_empty() => {
                c.target_input = input;
                c.target_reason = reason;
                c.target_answer = answer;
            }
            Ok(_) => {
                c.verdict = Verdict::ParseFailed;
                c.error = Some("empty input or answer section".into());
            }
            Err(e) => {
                c.verdict = Verdict::ParseFailed;
                c.error = Some(e.to_string());
            }
        }
        c.raw_transfer_output = raw;
        c
    }

    pub(crate) fn failed(source_task: &str, source: &Demonstration, error: String) -> Self {
        let mut c = Self::from_completion(source_task, source, String::new());
        c.verdict = Verdict::Pending;
        c.error = Some(error);
        c
    }

    /// The source demonstration copied verbatim (no rewriting).
    pub fn direct(source_task: &str, source: &Demonstration) -> Self {
        Self {
            source_task: source_task.to_string(),
            source: source.clone(),
            target_input: source.question.clone(),
            target_reason: source.rationale.clone().unwrap_or_default(),
            target_answer: source.answer.clone(),
            verdict: Verdict::Qualified,
            raw_transfer_output: String::new(),
            raw_verify_output: None,
            verdict_missing: false,
            unverified: true,
            error: None,
        }
    }

    /// Whether the item reached the service and produced a usable result.
    pub fn succeeded(&self) -> bool {
        self.error.is_none() || self.verdict == Verdict::ParseFailed
    }

    /// The rewritten demonstration in the target task's format.
    pub fn to_demonstration(&self) -> Demonstration {
        Demonstration {
            question: self.target_input.clone(),
            answer: self.target_answer.clone(),
            rationale: (!self.target_reason.is_empty()).then(|| self.target_reason.clone()),
            origin_task: self.source_task.clone(),
            origin_index: self.source.origin_index,
        }
    }
}
