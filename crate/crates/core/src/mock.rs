//! Deterministic in-process stand-ins for the embedding and chat services.
//!
//! The embedder hashes tokens into a fixed number of signed buckets. The
//! chat model recognizes the pipeline's prompt kinds and answers each with a
//! plausible, well-formed completion; a fixed hash-selected fraction of
//! replies is malformed or negative so that failure paths are exercised.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::chat::{ChatRequest, ChatService};
use crate::embedding::EmbeddingService;
use crate::hashing::sha256_hex;
use crate::inference::tokenize;
use crate::service::ServiceError;

fn bucket(text: &str) -> u64 {
    u64::from_str_radix(&sha256_hex(text.as_bytes())[..16], 16).expect("hex digest")
}

/// Bag-of-words feature hashing, L2-normalized.
#[derive(Debug)]
pub struct MockEmbedding {
    pub dim: usize,
    calls: AtomicUsize,
}

impl MockEmbedding {
    pub fn new(dim: usize) -> Self {
        Self {
            dim: dim.max(1),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn vector(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0.0f32; self.dim];
        for t in tokenize(text) {
            let h = bucket(&t);
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[(h % self.dim as u64) as usize] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl Default for MockEmbedding {
    fn default() -> Self {
        Self::new(64)
    }
}

impl EmbeddingService for MockEmbedding {
    fn embed(&self, _model: &str, texts: &[String]) -> Result<Vec<Vec<f32>>, ServiceError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}

/// Canned chat model. `malformed_every`, `reject_every` and
/// `undecided_every` select replies by prompt hash modulo the given value
/// (0 disables).
#[derive(Debug)]
pub struct MockChat {
    pub malformed_every: u64,
    pub reject_every: u64,
    pub undecided_every: u64,
    pub format_miss_every: u64,
    calls: AtomicUsize,
}

impl Default for MockChat {
    fn default() -> Self {
        Self {
            malformed_every: 16,
            reject_every: 5,
            undecided_every: 29,
            format_miss_every: 23,
            calls: AtomicUsize::new(0),
        }
    }
}

fn hit(h: u64, every: u64) -> bool {
    every != 0 && h.is_multiple_of(every)
}

/// Text between `start` (exclusive) and the next `end`, or the rest.
fn between<'a>(text: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let from = text.find(start)? + start.len();
    let rest = &text[from..];
    Some(rest.find(end).map_or(rest, |e| &rest[..e]))
}

fn headline(definition: &str) -> String {
    tokenize(definition)
        .into_iter()
        .take(4)
        .collect::<Vec<_>>()
        .join(" ")
}

impl MockChat {
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn transfer(&self, prompt: &str, h: u64) -> String {
        if hit(h, self.malformed_every) {
            return "I am unable to convert this example.".into();
        }
        let def_b = between(prompt, "The definition of Task B: ", "\n").unwrap_or("");
        let tail = between(prompt, "to Task B:\nInput:\n", "\n\nYour output format").unwrap_or("");
        let question = tail.split_once("\nAnswer:\n").map_or(tail, |(q, _)| q);
        // Answers in the target task's label space: the paired example's.
        let answer = between(prompt, "Task B could be:\n", "\n\n---")
            .and_then(|b| b.rsplit("Answer:\n").next())
            .unwrap_or("");
        format!(
            "Here is the converted example.\nInput:\n{question} [{}]\nReason:\nRewritten for the target task.\nAnswer:\n{answer}",
            headline(def_b)
        )
    }

    fn synthesize(&self, prompt: &str, h: u64) -> String {
        if hit(h, self.malformed_every) {
            return "I cannot produce a new example.".into();
        }
        let number = between(prompt, "create new example number ", " ").unwrap_or("0");
        let example = between(prompt, "could be:\nInput:\n", "\nReason:\n").unwrap_or("");
        let answer = between(prompt, "could be:\n", "\n\n---")
            .and_then(|b| b.rsplit("Answer:\n").next())
            .unwrap_or("");
        format!("Input:\n{example} (variant {number})\nReason:\nFollows the given example.\nAnswer:\n{answer}")
    }

    fn verify(&self, h: u64) -> String {
        if hit(h, self.undecided_every) {
            "The example is ambiguous and I cannot decide.".into()
        } else if hit(h, self.reject_every) {
            "Format Consistency fails.\nTherefore: Unqualified.".into()
        } else {
            "All criteria are met.\nTherefore: Qualified.".into()
        }
    }

    fn infer(&self, prompt: &str, h: u64) -> String {
        // Copies the answer of the nearest demonstration, which the prompt
        // places last; answers "unknown" with none.
        let answer = prompt
            .rsplit_once("\n\n---\n\nBased on the above")
            .and_then(|(demos, _)| {
                demos
                    .rsplit("\nAnswer:\n")
                    .next()
                    .filter(|_| demos.contains("\nAnswer:\n"))
            })
            .unwrap_or("unknown")
            .to_string();
        if hit(h, self.format_miss_every) {
            answer
        } else {
            format!("Reason:\nMatches the closest demonstration.\nAnswer:\n{answer}")
        }
    }
}

impl ChatService for MockChat {
    fn complete(&self, request: &ChatRequest) -> Result<String, ServiceError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let prompt = request.prompt();
        let h = bucket(prompt);
        Ok(if prompt.starts_with("Convert an example from Task A") {
            self.transfer(prompt, h)
        } else if prompt.starts_with("Create a new example for Task B") {
            self.synthesize(prompt, h)
        } else if prompt.starts_with("Given a task description, several examples") {
            self.verify(h)
        } else {
            self.infer(prompt, h)
        })
    }
}
