//! Synthesizes in-context demonstrations for a target task by sampling
//! labeled demonstrations from similar source tasks, rewriting them into the
//! target task's format with a chat model, verifying and re-sampling the
//! results, and scoring few-shot inference.

pub mod chat;
pub mod config;
pub mod corpus;
pub mod embedding;
pub mod eval;
pub mod hashing;
pub mod inference;
pub mod mock;
pub mod ot;
pub mod pipeline;
pub mod retry;
pub mod sampler;
pub mod service;
pub mod target_sample;
pub mod transfer;
