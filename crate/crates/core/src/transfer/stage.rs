use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    parse_verdict, render_synthesis_prompt, render_transfer_prompt, render_verify_prompt,
    Judgement, TransferCandidate, TransferError, Verdict,
};
use crate::chat::{ChatClient, ChatRequest};
use crate::corpus::{Demonstration, TaskRecord};
use crate::sampler::SampledDemo;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferConfig {
    pub temperature: f64,
    pub max_tokens: u32,
    /// Minimum fraction of items that must succeed.
    pub success_threshold: f64,
    /// Which positive example of each task serves as the labeled example.
    pub example_choice: usize,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            temperature: 0.7,
            max_tokens: 1024,
            success_threshold: 0.9,
            example_choice: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    pub temperature: f64,
    pub max_tokens: u32,
    pub max_examples: usize,
    pub success_threshold: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_tokens: 1024,
            max_examples: 3,
            success_threshold: 0.9,
        }
    }
}

fn check_threshold(
    stage: &'static str,
    succeeded: usize,
    attempted: usize,
    threshold: f64,
) -> Result<(), TransferError> {
    if attempted > 0 && (succeeded as f64) < threshold * attempted as f64 {
        return Err(TransferError::BelowThreshold {
            stage,
            succeeded,
            attempted,
            threshold,
        });
    }
    Ok(())
}

fn labeled(task: &TaskRecord, choice: usize) -> Result<&Demonstration, TransferError> {
    task.labeled_example(choice)
        .ok_or_else(|| TransferError::NoLabeledExample(task.id.clone()))
}

fn transfer_request(
    client: &ChatClient,
    demo: &SampledDemo,
    source: &TaskRecord,
    target: &TaskRecord,
    cfg: &TransferConfig,
) -> Result<ChatRequest, TransferError> {
    let pair = match (
        source.labeled_example(cfg.example_choice),
        target.labeled_example(cfg.example_choice),
    ) {
        (Some(a), Some(b)) => Some((a, b)),
        _ => None,
    };
    let prompt = render_transfer_prompt(&source.definition, &target.definition, pair, &demo.demo)?;
    Ok(client.request(prompt, cfg.temperature, cfg.max_tokens))
}

/// Transfers one sampled demonstration with a single (cached) chat call.
pub fn transfer_one(
    client: &ChatClient,
    demo: &SampledDemo,
    source: &TaskRecord,
    target: &TaskRecord,
    cfg: &TransferConfig,
) -> TransferCandidate {
    match transfer_request(client, demo, source, target, cfg) {
        Ok(req) => match client.complete(&req) {
            Ok(raw) => TransferCandidate::from_completion(&demo.task, &demo.demo, raw),
            Err(e) => TransferCandidate::failed(&demo.task, &demo.demo, e.to_string()),
        },
        Err(e) => TransferCandidate::failed(&demo.task, &demo.demo, e.to_string()),
    }
}

/// One candidate per sampled demonstration, in manifest order. With
/// `direct`, the source demonstrations are copied verbatim and no calls are
/// made.
pub fn run_transfer_stage(
    client: &ChatClient,
    selected: &[SampledDemo],
    sources: &BTreeMap<String, TaskRecord>,
    target: &TaskRecord,
    cfg: &TransferConfig,
    direct: bool,
) -> Result<Vec<TransferCandidate>, TransferError> {
    if selected.is_empty() {
        tracing::warn!(target = %target.id, "no sampled demonstrations to transfer");
        return Ok(Vec::new());
    }
    if direct {
        return Ok(selected
            .iter()
            .map(|s| TransferCandidate::direct(&s.task, &s.demo))
            .collect());
    }
    for s in selected {
        if !sources.contains_key(&s.task) {
            return Err(TransferError::UnknownTask(s.task.clone()));
        }
    }
    let prepared: Vec<Result<ChatRequest, TransferError>> = selected
        .iter()
        .map(|s| transfer_request(client, s, &sources[&s.task], target, cfg))
        .collect();
    let candidates = complete_prepared(client, selected, prepared);
    let ok = candidates.iter().filter(|c| c.succeeded()).count();
    check_threshold("transfer", ok, candidates.len(), cfg.success_threshold)?;
    Ok(candidates)
}

fn complete_prepared(
    client: &ChatClient,
    selected: &[SampledDemo],
    prepared: Vec<Result<ChatRequest, TransferError>>,
) -> Vec<TransferCandidate> {
    let requests: Vec<ChatRequest> = prepared
        .iter()
        .filter_map(|r| r.as_ref().ok().cloned())
        .collect();
    let mut results = client.complete_all(&requests).into_iter();
    selected
        .iter()
        .zip(prepared)
        .map(|(s, req)| match req {
            Ok(_) => match results.next().expect("one result per request") {
                Ok(raw) => TransferCandidate::from_completion(&s.task, &s.demo, raw),
                Err(e) => TransferCandidate::failed(&s.task, &s.demo, e.to_string()),
            },
            Err(e) => TransferCandidate::failed(&s.task, &s.demo, e.to_string()),
        })
        .collect()
}

/// Generates one demonstration from the target's labeled example alone.
pub fn synthesize_one(
    client: &ChatClient,
    target: &TaskRecord,
    variant: usize,
    cfg: &TransferConfig,
) -> Result<TransferCandidate, TransferError> {
    let example = labeled(target, cfg.example_choice)?;
    let prompt = render_synthesis_prompt(&target.definition, example, variant)?;
    let req = client.request(prompt, cfg.temperature, cfg.max_tokens);
    Ok(match client.complete(&req) {
        Ok(raw) => TransferCandidate::from_completion(&target.id, example, raw),
        Err(e) => TransferCandidate::failed(&target.id, example, e.to_string()),
    })
}

/// `count` demonstrations synthesized from scratch.
pub fn run_synthesis_stage(
    client: &ChatClient,
    target: &TaskRecord,
    count: usize,
    cfg: &TransferConfig,
) -> Result<Vec<TransferCandidate>, TransferError> {
    let example = labeled(target, cfg.example_choice)?;
    let selected: Vec<SampledDemo> = (0..count)
        .map(|i| SampledDemo {
            pool_index: i,
            task: target.id.clone(),
            demo: example.clone(),
        })
        .collect();
    let prepared = (0..count)
        .map(|i| {
            render_synthesis_prompt(&target.definition, example, i)
                .map(|p| client.request(p, cfg.temperature, cfg.max_tokens))
        })
        .collect();
    let candidates = complete_prepared(client, &selected, prepared);
    let ok = candidates.iter().filter(|c| c.succeeded()).count();
    check_threshold("synthesis", ok, candidates.len(), cfg.success_threshold)?;
    Ok(candidates)
}

/// Verification examples: the target's positive examples, at most `max`.
pub fn verify_examples(target: &TaskRecord, max: usize) -> &[Demonstration] {
    &target.positive_examples[..target.positive_examples.len().min(max)]
}

/// Verification pass rate. `rate` is `None` when nothing was attempted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PassStats {
    pub attempted: usize,
    pub qualified: usize,
    pub unqualified: usize,
    /// Completions with neither verdict token; counted as unqualified.
    pub no_verdict: usize,
    pub parse_failed: usize,
    pub failed: usize,
    pub unverified: bool,
}

impl PassStats {
    pub fn rate(&self) -> Option<f64> {
        if self.unverified {
            return (self.attempted > 0).then_some(100.0);
        }
        (self.attempted > 0).then(|| 100.0 * self.qualified as f64 / self.attempted as f64)
    }

    pub fn merge(&mut self, other: &PassStats) {
        self.attempted += other.attempted;
        self.qualified += other.qualified;
        self.unqualified += other.unqualified;
        self.no_verdict += other.no_verdict;
        self.parse_failed += other.parse_failed;
        self.failed += other.failed;
        self.unverified |= other.unverified;
    }

    /// `"75.0%"`, `"100.0% (unverified)"` or `"n/a"`.
    pub fn render(&self) -> String {
        match self.rate() {
            None => "n/a".into(),
            Some(r) if self.unverified => format!("{r:.1}% (unverified)"),
            Some(r) => format!("{r:.1}%"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOutput {
    /// Every input candidate with its final verdict, in input order.
    pub candidates: Vec<TransferCandidate>,
    pub stats: PassStats,
}

impl VerifyOutput {
    /// The candidates admitted to the qualified pool.
    pub fn qualified(&self) -> Vec<&TransferCandidate> {
        self.candidates
            .iter()
            .filter(|c| c.verdict == Verdict::Qualified)
            .collect()
    }
}

/// Judges every parsed candidate once; parse failures and failed transfers
/// are discarded without a call. With `skip`, parsed candidates are admitted
/// unverified.
pub fn run_verify_stage(
    client: &ChatClient,
    candidates: Vec<TransferCandidate>,
    target: &TaskRecord,
    cfg: &VerifyConfig,
    skip: bool,
) -> Result<VerifyOutput, TransferError> {
    let mut stats = PassStats {
        unverified: skip,
        ..PassStats::default()
    };
    let eligible = |c: &TransferCandidate| c.verdict == Verdict::Pending && c.error.is_none();
    let mut candidates = candidates;
    for c in &mut candidates {
        if c.verdict == Verdict::ParseFailed {
            stats.parse_failed += 1;
        } else if c.verdict == Verdict::Pending && c.error.is_some() {
            stats.failed += 1;
        }
    }

    if skip {
        for c in candidates.iter_mut().filter(|c| eligible(c)) {
            c.verdict = Verdict::Qualified;
            c.unverified = true;
            stats.attempted += 1;
            stats.qualified += 1;
        }
        return Ok(VerifyOutput { candidates, stats });
    }

    let to_check: Vec<usize> = (0..candidates.len())
        .filter(|&i| eligible(&candidates[i]))
        .collect();
    if to_check.is_empty() {
        if candidates.is_empty() {
            tracing::warn!(target = %target.id, "no candidates to verify");
        }
        return Ok(VerifyOutput { candidates, stats });
    }
    let examples = verify_examples(target, cfg.max_examples);
    let mut requests = Vec::with_capacity(to_check.len());
    for &i in &to_check {
        let c = &candidates[i];
        let prompt = render_verify_prompt(
            &target.definition,
            examples,
            &c.target_input,
            &c.target_reason,
            &c.target_answer,
        )?;
        requests.push(client.request(prompt, cfg.temperature, cfg.max_tokens));
    }
    let results = client.complete_all(&requests);
    let mut call_failures = 0;
    for (&i, result) in to_check.iter().zip(results) {
        let c = &mut candidates[i];
        match result {
            Ok(raw) => {
                stats.attempted += 1;
                match parse_verdict(&raw) {
                    Some(Judgement::Qualified) => {
                        c.verdict = Verdict::Qualified;
                        stats.qualified += 1;
                    }
                    Some(Judgement::Unqualified) => {
                        c.verdict = Verdict::Unqualified;
                        stats.unqualified += 1;
                    }
                    None => {
                        c.verdict = Verdict::Unqualified;
                        c.verdict_missing = true;
                        stats.no_verdict += 1;
                    }
                }
                c.raw_verify_output = Some(raw);
            }
            Err(e) => {
                c.error = Some(e.to_string());
                stats.failed += 1;
                call_failures += 1;
            }
        }
    }
    check_threshold(
        "verify",
        to_check.len() - call_failures,
        to_check.len(),
        cfg.success_threshold,
    )?;
    Ok(VerifyOutput { candidates, stats })
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::{Arc, Mutex};

    use super::*;
    use crate::chat::{ChatService, ResponseCache};
    use crate::service::{ServiceConfig, ServiceError};

    /// Replies from a fixed script, in call order per prompt kind.
    struct Scripted {
        transfer: String,
        verdicts: Mutex<Vec<&'static str>>,
        calls: AtomicUsize,
    }

    impl ChatService for Scripted {
        fn complete(&self, request: &ChatRequest) -> Result<String, ServiceError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            let p = request.prompt();
            if p.starts_with("Given a task description") {
                // Verdict keyed by the candidate input digit.
                let idx: usize = p.rsplit("Input:\nX").next().unwrap()[..1].parse().unwrap();
                Ok(self.verdicts.lock().unwrap()[idx].to_string())
            } else if p.starts_with("Create a new example") {
                let n = p
                    .split("new example number ")
                    .nth(1)
                    .unwrap()
                    .split(' ')
                    .next()
                    .unwrap();
                Ok(format!("Input:\nS{n}\nReason:\nR\nAnswer:\nA"))
            } else if p.contains("Input:\nfail") {
                Err(ServiceError::Status {
                    status: 500,
                    body: "boom".into(),
                })
            } else {
                let n = p.split("transfer the following example").nth(1).unwrap();
                let n = n
                    .split("Input:\n")
                    .nth(1)
                    .unwrap()
                    .lines()
                    .next()
                    .unwrap()
                    .to_string();
                Ok(self.transfer.replace("{n}", n.trim_start_matches('q')))
            }
        }
    }

    fn client(verdicts: Vec<&'static str>, transfer: &str) -> (ChatClient, Arc<Scripted>) {
        let svc = Arc::new(Scripted {
            transfer: transfer.into(),
            verdicts: Mutex::new(verdicts),
            calls: AtomicUsize::new(0),
        });
        let c = ChatClient::new(
            svc.clone(),
            Arc::new(ResponseCache::in_memory()),
            &ServiceConfig::default(),
        );
        (c, svc)
    }

    fn demo(q: &str, task: &str) -> Demonstration {
        Demonstration {
            question: q.into(),
            answer: "a".into(),
            rationale: Some("r".into()),
            origin_task: task.into(),
            origin_index: 0,
        }
    }

    fn task(id: &str) -> TaskRecord {
        TaskRecord {
            id: id.into(),
            definition: format!("definition of {id}"),
            category: None,
            positive_examples: vec![demo("ex", id)],
            instances: Vec::new(),
        }
    }

    fn sampled(n: usize) -> Vec<SampledDemo> {
        (0..n)
            .map(|i| SampledDemo {
                pool_index: i,
                task: "src".into(),
                demo: demo(&format!("q{i}"), "src"),
            })
            .collect()
    }

    fn sources() -> BTreeMap<String, TaskRecord> {
        BTreeMap::from([("src".to_string(), task("src"))])
    }

    const GOOD: &str = "Input:\nX{n}\nReason:\nR\nAnswer:\nA";

    #[test]
    fn transfer_stage_preserves_order_and_caches() {
        let (c, svc) = client(vec![], GOOD);
        let out = run_transfer_stage(
            &c,
            &sampled(6),
            &sources(),
            &task("tgt"),
            &TransferConfig::default(),
            false,
        )
        .unwrap();
        let inputs: Vec<&str> = out.iter().map(|c| c.target_input.as_str()).collect();
        assert_eq!(inputs, ["X0", "X1", "X2", "X3", "X4", "X5"]);
        assert_eq!(svc.calls.load(Ordering::SeqCst), 6);
        let again = run_transfer_stage(
            &c,
            &sampled(6),
            &sources(),
            &task("tgt"),
            &TransferConfig::default(),
            false,
        )
        .unwrap();
        assert_eq!(out, again);
        assert_eq!(svc.calls.load(Ordering::SeqCst), 6);
    }

    #[test]
    fn malformed_completion_yields_parse_failed() {
        let (c, _) = client(vec![], "no markers here");
        let out = run_transfer_stage(
            &c,
            &sampled(2),
            &sources(),
            &task("tgt"),
            &TransferConfig::default(),
            false,
        )
        .unwrap();
        assert!(out.iter().all(|c| c.verdict == Verdict::ParseFailed));
    }

    #[test]
    fn direct_copies_verbatim() {
        let (c, svc) = client(vec![], GOOD);
        let out = run_transfer_stage(
            &c,
            &sampled(3),
            &sources(),
            &task("tgt"),
            &TransferConfig::default(),
            true,
        )
        .unwrap();
        assert_eq!(out.len(), 3);
        assert!(out.iter().all(|c| c.verdict == Verdict::Qualified));
        assert_eq!(out[1].target_input, "q1");
        assert_eq!(svc.calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn empty_selection_is_empty() {
        let (c, _) = client(vec![], GOOD);
        let out = run_transfer_stage(
            &c,
            &[],
            &sources(),
            &task("tgt"),
            &TransferConfig::default(),
            false,
        )
        .unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn failures_below_threshold_fail_stage() {
        let (c, _) = client(vec![], GOOD);
        let mut sel = sampled(10);
        sel[0].demo.question = "fail".into();
        let cfg = TransferConfig {
            success_threshold: 0.9,
            ..TransferConfig::default()
        };
        let out = run_transfer_stage(&c, &sel, &sources(), &task("tgt"), &cfg, false).unwrap();
        assert!(out[0].error.is_some() && !out[0].succeeded());
        sel[1].demo.question = "fail".into();
        assert!(matches!(
            run_transfer_stage(&c, &sel, &sources(), &task("tgt"), &cfg, false),
            Err(TransferError::BelowThreshold {
                succeeded: 8,
                attempted: 10,
                ..
            })
        ));
    }

    #[test]
    fn verify_counts_pass_rate() {
        let verdicts = vec!["Qualified.", "so: Qualified", "Qualified", "Unqualified."];
        let (c, svc) = client(verdicts, GOOD);
        let cands = run_transfer_stage(
            &c,
            &sampled(4),
            &sources(),
            &task("tgt"),
            &TransferConfig::default(),
            false,
        )
        .unwrap();
        let out =
            run_verify_stage(&c, cands, &task("tgt"), &VerifyConfig::default(), false).unwrap();
        assert_eq!(out.qualified().len(), 3);
        assert_eq!(out.stats.render(), "75.0%");
        assert_eq!(svc.calls.load(Ordering::SeqCst), 8);
        assert!(out
            .qualified()
            .iter()
            .all(|c| c.verdict == Verdict::Qualified));
    }

    #[test]
    fn verify_skips_parse_failures_and_missing_verdicts_fail_closed() {
        let (c, svc) = client(vec!["I cannot decide", "Qualified"], GOOD);
        let mut cands = run_transfer_stage(
            &c,
            &sampled(2),
            &sources(),
            &task("tgt"),
            &TransferConfig::default(),
            false,
        )
        .unwrap();
        cands.push(TransferCandidate::from_completion(
            "src",
            &demo("x", "src"),
            "bad".into(),
        ));
        let before = svc.calls.load(Ordering::SeqCst);
        let out =
            run_verify_stage(&c, cands, &task("tgt"), &VerifyConfig::default(), false).unwrap();
        assert_eq!(svc.calls.load(Ordering::SeqCst) - before, 2);
        assert_eq!(out.stats.no_verdict, 1);
        assert_eq!(out.stats.parse_failed, 1);
        assert_eq!(out.candidates[0].verdict, Verdict::Unqualified);
        assert_eq!(out.qualified().len(), 1);
    }

    #[test]
    fn skip_verify_admits_parsed_candidates() {
        let (c, svc) = client(vec![], GOOD);
        let mut cands = run_transfer_stage(
            &c,
            &sampled(3),
            &sources(),
            &task("tgt"),
            &TransferConfig::default(),
            false,
        )
        .unwrap();
        cands.push(TransferCandidate::from_completion(
            "src",
            &demo("x", "src"),
            "bad".into(),
        ));
        let before = svc.calls.load(Ordering::SeqCst);
        let out =
            run_verify_stage(&c, cands, &task("tgt"), &VerifyConfig::default(), true).unwrap();
        assert_eq!(svc.calls.load(Ordering::SeqCst), before);
        assert_eq!(out.qualified().len(), 3);
        assert_eq!(out.stats.render(), "100.0% (unverified)");
    }

    #[test]
    fn zero_candidates_rate_is_na() {
        let (c, _) = client(vec![], GOOD);
        let out = run_verify_stage(
            &c,
            Vec::new(),
            &task("tgt"),
            &VerifyConfig::default(),
            false,
        )
        .unwrap();
        assert!(out.candidates.is_empty());
        assert_eq!(out.stats.rate(), None);
        assert_eq!(out.stats.render(), "n/a");
    }

    #[test]
    fn synthesis_variants_are_distinct_requests() {
        let (c, svc) = client(vec![], GOOD);
        let out = run_synthesis_stage(&c, &task("tgt"), 4, &TransferConfig::default()).unwrap();
        assert_eq!(svc.calls.load(Ordering::SeqCst), 4);
        let inputs: Vec<&str> = out.iter().map(|c| c.target_input.as_str()).collect();
        assert_eq!(inputs, ["S1", "S2", "S3", "S4"]);
        assert!(out.iter().all(|c| c.source_task == "tgt"));
    }
}
