//! Stage sequencing with content-hash resume.
//!
//! Every stage writes its artifacts under the run directory and records, in
//! `run.json`, the hash of its inputs (config subset plus upstream artifact
//! hashes) and of its outputs. A stage is skipped when its recorded input
//! hash matches and its artifacts are intact, so a changed input re-runs
//! exactly that stage and the stages downstream of it.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chat::{ChatClient, HttpChatService, ResponseCache};
use crate::config::{ConfigError, Mode, RunConfig};
use crate::corpus::{
    demo_text, expand_multi_answers, load_corpus_dir, load_task_file, CategoryMap, Demonstration,
    TaskRecord,
};
use crate::embedding::{
    write_atomic, Embedder, EmbeddingCache, EmbeddingVector, HttpEmbeddingService,
};
use crate::eval::{aggregate, estimate_cost, CostModel, ScoreReport};
use crate::hashing::{hash_fields, sha256_hex};
use crate::inference::{run_inference, InferenceRecord};
use crate::mock::{MockChat, MockEmbedding};
use crate::ot::EmpiricalDistribution;
use crate::sampler::{sample_source, SamplingManifest, SourceSampling, SourceTask};
use crate::target_sample::{sample_target, TargetSampling};
use crate::transfer::{
    run_synthesis_stage, run_transfer_stage, run_verify_stage, PassStats, TransferCandidate,
    VerifyOutput,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("run directory {0} is locked by another process (remove {0}/.lock if it is stale)")]
    Locked(PathBuf),
    #[error("stage {stage} failed: {message}\n  run directory: {dir}\n  resume with: demo-transfer run-all --config <config>")]
    Stage {
        stage: String,
        dir: PathBuf,
        message: String,
    },
}

impl PipelineError {
    /// Process exit code: 2 for configuration problems, 3 for stage failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Locked(_) => 2,
            PipelineError::Stage { .. } => 3,
        }
    }
}

/// Pipeline stages in execution order.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum,
)]
pub enum Stage {
    Embed,
    SampleSource,
    Transfer,
    Verify,
    SampleTarget,
    Infer,
    Eval,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Embed => "embed",
            Stage::SampleSource => "sample-source",
            Stage::Transfer => "transfer",
            Stage::Verify => "verify",
            Stage::SampleTarget => "sample-target",
            Stage::Infer => "infer",
            Stage::Eval => "eval",
        }
    }
}

/// The embedding and chat front ends a run talks to.
#[derive(Clone)]
pub struct Services {
    pub embedder: Embedder,
    pub chat: ChatClient,
    embedding_cache: Arc<EmbeddingCache>,
    response_cache: Arc<ResponseCache>,
}

impl Services {
    fn caches(cfg: &RunConfig) -> Result<(Arc<EmbeddingCache>, Arc<ResponseCache>), PipelineError> {
        let dir = cfg.cache_dir();
        let invalid = |e: &dyn std::fmt::Display| {
            PipelineError::Config(ConfigError::Invalid(format!("cache: {e}")))
        };
        let emb = EmbeddingCache::open(&dir.join("embeddings")).map_err(|e| invalid(&e))?;
        let resp = ResponseCache::open(&dir.join("responses.json")).map_err(|e| invalid(&e))?;
        Ok((Arc::new(emb), Arc::new(resp)))
    }

    fn assemble(
        cfg: &RunConfig,
        embed: Arc<dyn crate::embedding::EmbeddingService>,
        chat: Arc<dyn crate::chat::ChatService>,
    ) -> Result<Self, PipelineError> {
        let (emb_cache, resp_cache) = Self::caches(cfg)?;
        Ok(Self {
            embedder: Embedder::new(embed, emb_cache.clone(), &cfg.embedding),
            chat: ChatClient::new(chat, resp_cache.clone(), &cfg.chat),
            embedding_cache: emb_cache,
            response_cache: resp_cache,
        })
    }

    /// Deterministic in-process services.
    pub fn mock(cfg: &RunConfig) -> Result<Self, PipelineError> {
        Self::assemble(
            cfg,
            Arc::new(MockEmbedding::default()),
            Arc::new(MockChat::default()),
        )
    }

    /// HTTP clients for the configured endpoints.
    pub fn http(cfg: &RunConfig) -> Result<Self, PipelineError> {
        let invalid = |e: crate::service::ServiceError| {
            PipelineError::Config(ConfigError::Invalid(e.to_string()))
        };
        let embed = HttpEmbeddingService::new(cfg.embedding.clone()).map_err(invalid)?;
        let chat = HttpChatService::new(cfg.chat.clone()).map_err(invalid)?;
        Self::assemble(cfg, Arc::new(embed), Arc::new(chat))
    }

    /// Custom services over the config's caches.
    pub fn with(
        cfg: &RunConfig,
        embed: Arc<dyn crate::embedding::EmbeddingService>,
        chat: Arc<dyn crate::chat::ChatService>,
    ) -> Result<Self, PipelineError> {
        Self::assemble(cfg, embed, chat)
    }

    fn save_caches(&self) -> Result<(), String> {
        self.embedding_cache.save().map_err(|e| e.to_string())?;
        self.response_cache.save().map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub input_hash: String,
    pub output_hash: String,
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub seed: u64,
    pub stages: BTreeMap<String, StageRecord>,
}

/// Outcome of one pipeline invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_dir: PathBuf,
    pub executed: Vec<String>,
    pub skipped: Vec<String>,
    pub chat_calls: usize,
    pub embedding_calls: usize,
    pub report: Option<ScoreReport>,
}

/// Exclusive ownership of a run directory for the lifetime of the value.
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<Self, PipelineError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| ConfigError::Invalid(format!("cannot create {}: {e}", dir.display())))?;
        let path = dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                use std::io::Write;
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(PipelineError::Locked(dir.to_path_buf()))
            }
            Err(e) => {
                Err(ConfigError::Invalid(format!("cannot lock {}: {e}", dir.display())).into())
            }
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

type Artifacts = Vec<(String, Vec<u8>)>;

fn json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serializes");
    s.push('\n');
    s.into_bytes()
}

fn jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = String::new();
    for it in items {
        out.push_str(&serde_json::to_string(it).expect("record serializes"));
        out.push('\n');
    }
    out.into_bytes()
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| format!("{}: {e}", path.display())))
        .collect()
}

fn config_hash<T: Serialize>(value: &T) -> String {
    sha256_hex(
        serde_json::to_string(value)
            .expect("config serializes")
            .as_bytes(),
    )
}

fn file_hash(path: &Path) -> Result<String, String> {
    std::fs::read(path)
        .map(|b| sha256_hex(&b))
        .map_err(|e| format!("{}: {e}", path.display()))
}

/// Inputs shared by every target task of a run.
struct Corpus {
    sources: BTreeMap<String, TaskRecord>,
    targets: Vec<TaskRecord>,
    categories: CategoryMap,
    /// Hash of every input file.
    hash: String,
    target_hashes: BTreeMap<String, String>,
    categories_hash: String,
}

fn load_corpus(cfg: &RunConfig) -> Result<Corpus, PipelineError> {
    let invalid = |m: String| PipelineError::Config(ConfigError::Invalid(m));
    let mut file_hashes = Vec::new();
    let mut targets = Vec::new();
    let mut target_hashes = BTreeMap::new();
    for path in &cfg.corpus.targets {
        let task = load_task_file(path).map_err(|e| invalid(e.to_string()))?;
        let h = file_hash(path).map_err(invalid)?;
        if target_hashes.insert(task.id.clone(), h.clone()).is_some() {
            return Err(invalid(format!(
                "target task `{}` is listed twice",
                task.id
            )));
        }
        file_hashes.push(h);
        targets.push(task);
    }
    let mut sources = BTreeMap::new();
    if matches!(cfg.mode, Mode::Ictl | Mode::Direct) {
        for (path, task) in
            load_corpus_dir(&cfg.corpus.source_dir).map_err(|e| invalid(e.to_string()))?
        {
            if target_hashes.contains_key(&task.id) {
                continue;
            }
            file_hashes.push(file_hash(&path).map_err(invalid)?);
            sources.insert(task.id.clone(), task);
        }
        if sources.is_empty() {
            return Err(invalid(format!(
                "no source tasks in {}",
                cfg.corpus.source_dir.display()
            )));
        }
    }
    let (mut categories, categories_hash) = match &cfg.corpus.category_map {
        Some(p) => (
            CategoryMap::load(p).map_err(|e| invalid(e.to_string()))?,
            file_hash(p).map_err(invalid)?,
        ),
        None => (CategoryMap::builtin(), "builtin".to_string()),
    };
    // Targets missing from the table fall back to the category in their file.
    for t in &targets {
        if let (None, Some(c)) = (categories.get(&t.id), t.category) {
            categories.insert(t.id.clone(), c);
        }
    }
    Ok(Corpus {
        hash: hash_fields(file_hashes.iter().map(|h| h.as_bytes())),
        sources,
        targets,
        categories,
        target_hashes,
        categories_hash,
    })
}

struct Runner<'a> {
    cfg: &'a RunConfig,
    services: &'a Services,
    dir: PathBuf,
    manifest: RunManifest,
    executed: Vec<String>,
    skipped: Vec<String>,
}

impl<'a> Runner<'a> {
    fn new(cfg: &'a RunConfig, services: &'a Services) -> Result<Self, PipelineError> {
        let dir = cfg.run_dir();
        let path = dir.join("run.json");
        let stages = if path.exists() {
            read_json::<RunManifest>(&path)
                .map(|m| m.stages)
                .unwrap_or_default()
        } else {
            BTreeMap::new()
        };
        Ok(Self {
            cfg,
            services,
            dir,
            manifest: RunManifest {
                config: cfg.clone(),
                seed: cfg.seed,
                stages,
            },
            executed: Vec::new(),
            skipped: Vec::new(),
        })
    }

    fn fail(&self, stage: &str, message: impl std::fmt::Display) -> PipelineError {
        PipelineError::Stage {
            stage: stage.to_string(),
            dir: self.dir.clone(),
            message: message.to_string(),
        }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn intact(&self, record: &StageRecord) -> bool {
        let hashes: Result<Vec<String>, String> = record
            .artifacts
            .iter()
            .map(|a| file_hash(&self.path(a)))
            .collect();
        hashes.is_ok_and(|h| hash_fields(h.iter().map(|x| x.as_bytes())) == record.output_hash)
    }

    /// Runs `compute` unless a matching, intact result exists; returns the
    /// output hash.
    fn stage(
        &mut self,
        key: &str,
        input_hash: String,
        compute: impl FnOnce(&Self) -> Result<Artifacts, String>,
    ) -> Result<String, PipelineError> {
        if let Some(rec) = self.manifest.stages.get(key) {
            if rec.input_hash == input_hash && self.intact(rec) {
                tracing::info!(stage = key, "up to date; skipping");
                self.skipped.push(key.to_string());
                return Ok(rec.output_hash.clone());
            }
        }
        tracing::info!(stage = key, "running");
        let result = compute(self);
        // Persist whatever the services returned, even on failure, so that a
        // resumed run does not repeat the calls.
        let saved = self.services.save_caches();
        let artifacts = result.map_err(|m| self.fail(key, m))?;
        saved.map_err(|m| self.fail(key, m))?;
        let mut names = Vec::with_capacity(artifacts.len());
        let mut hashes = Vec::with_capacity(artifacts.len());
        for (rel, bytes) in &artifacts {
            let path = self.path(rel);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| self.fail(key, e))?;
            }
            write_atomic(&path, bytes).map_err(|e| self.fail(key, e))?;
            names.push(rel.clone());
            hashes.push(sha256_hex(bytes));
        }
        let output_hash = hash_fields(hashes.iter().map(|h| h.as_bytes()));
        self.manifest.stages.insert(
            key.to_string(),
            StageRecord {
                input_hash,
                output_hash: output_hash.clone(),
                artifacts: names,
            },
        );
        self.save_manifest().map_err(|m| self.fail(key, m))?;
        self.executed.push(key.to_string());
        Ok(output_hash)
    }

    fn save_manifest(&self) -> Result<(), String> {
        write_atomic(&self.dir.join("run.json"), &json(&self.manifest)).map_err(|e| e.to_string())
    }

    fn embed_demos(&self, demos: &[Demonstration]) -> Result<Vec<EmbeddingVector>, String> {
        if demos.is_empty() {
            return Ok(Vec::new());
        }
        let texts: Vec<String> = demos
            .iter()
            .map(|d| demo_text(d, self.cfg.demo_text))
            .collect();
        self.services
            .embedder
            .embed_batch(&texts)
            .map_err(|e| e.to_string())
    }

    fn embed_one(&self, text: &str) -> Result<EmbeddingVector, String> {
        let mut v = self
            .services
            .embedder
            .embed_batch(&[text.to_string()])
            .map_err(|e| e.to_string())?;
        Ok(v.pop().expect("one vector"))
    }

    fn source_tasks(&self, corpus: &Corpus) -> Result<Vec<SourceTask>, String> {
        corpus
            .sources
            .values()
            .map(|task| {
                let (def, vecs) = self
                    .services
                    .embedder
                    .embed_task(task, self.cfg.demo_text)
                    .map_err(|e| format!("{}: {e}", task.id))?;
                let (demos, _) = expand_multi_answers(task);
                Ok(SourceTask {
                    id: task.id.clone(),
                    definition: def,
                    demos: demos.into_iter().zip(vecs).collect(),
                })
            })
            .collect()
    }
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Runs every stage up to and including `until` for each target task.
pub fn run_pipeline(
    cfg: &RunConfig,
    services: &Services,
    until: Stage,
) -> Result<RunSummary, PipelineError> {
    cfg.validate()?;
    let corpus = load_corpus(cfg)?;
    let _lock = RunLock::acquire(&cfg.run_dir())?;
    let chat_before = services.chat.network_calls();
    let embed_before = services.embedder.network_calls();
    let mut runner = Runner::new(cfg, services)?;

    let uses_sources = matches!(cfg.mode, Mode::Ictl | Mode::Direct);
    let uses_embeddings = matches!(cfg.mode, Mode::Ictl | Mode::Direct | Mode::Synthesis);

    // Embedding stage: every text the run compares, cached for later stages.
    let mut embed_hash = String::new();
    if uses_embeddings {
        let input = hash_fields([
            b"embed".as_slice(),
            corpus.hash.as_bytes(),
            cfg.embedding.model.as_bytes(),
            config_hash(&cfg.demo_text).as_bytes(),
        ]);
        embed_hash = runner.stage("embed", input, |r| {
            let tasks = if uses_sources {
                r.source_tasks(&corpus)?
            } else {
                Vec::new()
            };
            let mut vectors = Vec::new();
            let mut summary = BTreeMap::new();
            for t in &tasks {
                summary.insert(t.id.clone(), t.demos.len());
                vectors.push(config_hash(&t.definition));
                vectors.extend(t.demos.iter().map(|(_, v)| config_hash(v)));
            }
            for t in &corpus.targets {
                let v = r.embed_one(&t.definition)?;
                vectors.push(config_hash(&v));
            }
            #[derive(Serialize)]
            struct EmbedManifest<'a> {
                model: &'a str,
                source_demos: BTreeMap<String, usize>,
                targets: Vec<&'a str>,
                vectors_hash: String,
            }
            Ok(vec![(
                "manifests/embed.json".into(),
                json(&EmbedManifest {
                    model: &cfg.embedding.model,
                    source_demos: summary,
                    targets: corpus.targets.iter().map(|t| t.id.as_str()).collect(),
                    vectors_hash: hash_fields(vectors.iter().map(|v| v.as_bytes())),
                }),
            )])
        })?;
    }

    let mut infer_hashes = Vec::new();
    let mut pass_rates: BTreeMap<String, PassStats> = BTreeMap::new();
    let mut any_verified = false;
    let mut record_files = Vec::new();
    for target in &corpus.targets {
        let tid = sanitize(&target.id);
        let target_hash = corpus.target_hashes[&target.id].clone();
        let source_params = SourceSampling {
            k_tasks: cfg.pipeline.k_tasks,
            n_demos: cfg.pipeline.n_source,
            random_source: cfg.ablations.random_source,
            only_rank: cfg.pipeline.similarity_rank,
            anneal: cfg.anneal(),
        };

        // Source sampling.
        let sampling_path = format!("manifests/{tid}/sampling.json");
        let mut sampling_hash = String::new();
        if uses_sources && until >= Stage::SampleSource {
            let input = hash_fields([
                b"sample-source".as_slice(),
                embed_hash.as_bytes(),
                target.id.as_bytes(),
                config_hash(&source_params).as_bytes(),
            ]);
            sampling_hash = runner.stage(&format!("sample-source/{tid}"), input, |r| {
                let tasks = r.source_tasks(&corpus)?;
                let def = r.embed_one(&target.definition)?;
                let (manifest, _) = sample_source(&tasks, &target.id, &def, &source_params)
                    .map_err(|e| e.to_string())?;
                Ok(vec![(sampling_path.clone(), json(&manifest))])
            })?;
        }

        // Transfer, synthesis or verbatim copy.
        let candidates_path = format!("candidates/{tid}/transfer.jsonl");
        let mut transfer_hash = String::new();
        let makes_candidates = matches!(cfg.mode, Mode::Ictl | Mode::Direct | Mode::Synthesis);
        if makes_candidates && until >= Stage::Transfer {
            let input = hash_fields([
                b"transfer".as_slice(),
                cfg.mode.as_str().as_bytes(),
                sampling_hash.as_bytes(),
                target_hash.as_bytes(),
                cfg.chat.model.as_bytes(),
                config_hash(&cfg.transfer).as_bytes(),
                cfg.pipeline.n_source.to_string().as_bytes(),
            ]);
            transfer_hash = runner.stage(&format!("transfer/{tid}"), input, |r| {
                let candidates = if cfg.mode == Mode::Synthesis {
                    run_synthesis_stage(
                        &r.services.chat,
                        target,
                        cfg.pipeline.n_source,
                        &cfg.transfer,
                    )
                } else {
                    let manifest: SamplingManifest = read_json(&r.path(&sampling_path))?;
                    run_transfer_stage(
                        &r.services.chat,
                        &manifest.selected,
                        &corpus.sources,
                        target,
                        &cfg.transfer,
                        cfg.mode == Mode::Direct,
                    )
                }
                .map_err(|e| e.to_string())?;
                Ok(vec![(candidates_path.clone(), jsonl(&candidates))])
            })?;
        }

        // Verification.
        let verified_path = format!("candidates/{tid}/verified.jsonl");
        let stats_path = format!("candidates/{tid}/pass_rate.json");
        let mut verify_hash = String::new();
        if makes_candidates && until >= Stage::Verify {
            // Direct copies are never sent for verification.
            let skip = cfg.ablations.skip_verify || cfg.mode == Mode::Direct;
            let input = hash_fields([
                b"verify".as_slice(),
                transfer_hash.as_bytes(),
                target_hash.as_bytes(),
                cfg.chat.model.as_bytes(),
                config_hash(&cfg.verify).as_bytes(),
                skip.to_string().as_bytes(),
            ]);
            verify_hash = runner.stage(&format!("verify/{tid}"), input, |r| {
                let candidates: Vec<TransferCandidate> = read_jsonl(&r.path(&candidates_path))?;
                let out = run_verify_stage(&r.services.chat, candidates, target, &cfg.verify, skip)
                    .map_err(|e| e.to_string())?;
                Ok(vec![
                    (verified_path.clone(), jsonl(&out.candidates)),
                    (stats_path.clone(), json(&out.stats)),
                ])
            })?;
            if cfg.mode != Mode::Direct {
                let stats: PassStats =
                    read_json(&runner.path(&stats_path)).map_err(|m| runner.fail("verify", m))?;
                let category = crate::corpus::category_of(&target.id, &corpus.categories);
                pass_rates.entry(category).or_default().merge(&stats);
                any_verified = true;
            }
        }

        // Final pool.
        let pool_path = format!("pools/{tid}.jsonl");
        let pool_manifest_path = format!("pools/{tid}.manifest.json");
        let mut pool_hash = String::new();
        if makes_candidates && until >= Stage::SampleTarget {
            let params = TargetSampling {
                n: cfg.pipeline.n_target,
                anneal: cfg.anneal(),
                ot: cfg.ot,
                skip: cfg.ablations.skip_target_sample || cfg.mode != Mode::Ictl,
            };
            let input = hash_fields([
                b"sample-target".as_slice(),
                verify_hash.as_bytes(),
                sampling_hash.as_bytes(),
                embed_hash.as_bytes(),
                config_hash(&params).as_bytes(),
                config_hash(&cfg.demo_text).as_bytes(),
            ]);
            pool_hash = runner.stage(&format!("sample-target/{tid}"), input, |r| {
                let verified: Vec<TransferCandidate> = read_jsonl(&r.path(&verified_path))?;
                let stats: PassStats = read_json(&r.path(&stats_path))?;
                let out = VerifyOutput {
                    candidates: verified,
                    stats,
                };
                let qualified: Vec<Demonstration> = out
                    .qualified()
                    .iter()
                    .map(|c| c.to_demonstration())
                    .collect();
                let vectors = r.embed_demos(&qualified)?;
                let target_def = r.embed_one(&target.definition)?;
                let (source, provenance) = if uses_sources {
                    let manifest: SamplingManifest = read_json(&r.path(&sampling_path))?;
                    let demos: Vec<Demonstration> =
                        manifest.selected.iter().map(|s| s.demo.clone()).collect();
                    (r.embed_demos(&demos)?, sampling_hash.clone())
                } else {
                    // No source distribution: the definition stands in for it.
                    (vec![target_def.clone()], transfer_hash.clone())
                };
                let source = EmpiricalDistribution::new(source).map_err(|e| e.to_string())?;
                let pool = sample_target(
                    &target.id,
                    &qualified,
                    &vectors,
                    &source,
                    &target_def,
                    &params,
                    out.stats.unverified,
                    &provenance,
                )
                .map_err(|e| e.to_string())?;
                let mut meta = serde_json::to_value(&pool).expect("pool serializes");
                meta.as_object_mut().expect("object").remove("demos");
                Ok(vec![
                    (pool_path.clone(), jsonl(&pool.demos)),
                    (pool_manifest_path.clone(), json(&meta)),
                ])
            })?;
        }

        // Inference.
        let records_path = format!("records/{tid}.jsonl");
        if until >= Stage::Infer {
            let inference = cfg.inference_config();
            let input = hash_fields([
                b"infer".as_slice(),
                cfg.mode.as_str().as_bytes(),
                pool_hash.as_bytes(),
                target_hash.as_bytes(),
                cfg.chat.model.as_bytes(),
                config_hash(&inference).as_bytes(),
            ]);
            let h = runner.stage(&format!("infer/{tid}"), input, |r| {
                let pool: Vec<Demonstration> = match cfg.mode {
                    Mode::Zero => Vec::new(),
                    Mode::Single => target
                        .labeled_example(cfg.transfer.example_choice)
                        .cloned()
                        .into_iter()
                        .collect(),
                    _ => read_jsonl(&r.path(&pool_path))?,
                };
                let records = run_inference(
                    &r.services.chat,
                    target,
                    &pool,
                    &target.instances,
                    &inference,
                )
                .map_err(|e| e.to_string())?;
                Ok(vec![(records_path.clone(), jsonl(&records))])
            })?;
            infer_hashes.push(h);
            record_files.push(records_path);
        }
    }

    let mut report = None;
    if until >= Stage::Eval {
        let input = hash_fields(
            [
                b"eval".as_slice(),
                corpus.categories_hash.as_bytes(),
                config_hash(&pass_rates).as_bytes(),
            ]
            .into_iter()
            .chain(infer_hashes.iter().map(|h| h.as_bytes())),
        );
        let label = match cfg.mode {
            Mode::Ictl => "ICTL",
            Mode::Zero => "Zero",
            Mode::Direct => "Direct",
            Mode::Single => "Single",
            Mode::Synthesis => "Synthesis",
        };
        runner.stage("eval", input, |r| {
            let mut records: Vec<InferenceRecord> = Vec::new();
            for f in &record_files {
                records.extend(read_jsonl::<InferenceRecord>(&r.path(f))?);
            }
            let mut rep = aggregate(&records, &corpus.categories);
            if any_verified {
                rep.pass_rates = Some(pass_rates.clone());
            }
            let table = rep.render_table(label);
            Ok(vec![
                ("report/report.json".into(), json(&rep)),
                ("report/report.txt".into(), table.into_bytes()),
            ])
        })?;
        report = Some(
            read_json(&runner.path("report/report.json")).map_err(|m| runner.fail("eval", m))?,
        );
    }

    runner
        .save_manifest()
        .map_err(|m| runner.fail("manifest", m))?;
    Ok(RunSummary {
        run_dir: runner.dir.clone(),
        executed: runner.executed,
        skipped: runner.skipped,
        chat_calls: services.chat.network_calls() - chat_before,
        embedding_calls: services.embedder.network_calls() - embed_before,
        report,
    })
}

/// Runs every sibling config of a sweep in turn, then writes a summary
/// table next to the runs.
pub fn run_sweep(
    cfg: &RunConfig,
    make_services: impl Fn(&RunConfig) -> Result<Services, PipelineError>,
) -> Result<Vec<(String, RunSummary)>, PipelineError> {
    cfg.validate()?;
    let runs = cfg.expand_sweep();
    if runs.is_empty() {
        return Err(ConfigError::Invalid("sweep lists no values".into()).into());
    }
    let mut out = Vec::new();
    let mut table = String::from("run\tEM\tRouge-L\n");
    for run in runs {
        let services = make_services(&run)?;
        let summary = run_pipeline(&run, &services, Stage::Eval)?;
        if let Some(r) = &summary.report {
            table.push_str(&format!(
                "{}\t{:.1}\t{:.1}\n",
                run.name, r.overall.em, r.overall.rouge
            ));
        }
        out.push((run.name.clone(), summary));
    }
    let path = cfg.run_root.join(format!("{}-sweep.tsv", cfg.name));
    std::fs::create_dir_all(&cfg.run_root).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    write_atomic(&path, table.as_bytes()).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(out)
}

/// Cost estimate for a configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostPlan {
    pub model: CostModel,
    pub raw: f64,
    pub adjusted: f64,
    pub terms: Vec<(String, f64)>,
    pub dominant: String,
}

impl CostPlan {
    pub fn render(&self) -> String {
        let mut s = format!(
            "source pool N_s = {}, transferred N_s^S = {}, target pool N_t^S = {}\n",
            self.model.n_source, self.model.n_source_sampled, self.model.n_target_sampled
        );
        for (name, v) in &self.terms {
            s.push_str(&format!("  {name:<16} {v:>14.1}\n"));
        }
        s.push_str(&format!("  {:<16} {:>14.1}\n", "total", self.raw));
        s.push_str(&format!("dominant term: {}\n", self.dominant));
        s
    }
}

/// Estimates run cost. `source_pool` is the number of source demonstrations
/// the sampler considers; when `None` it is estimated from the corpus as
/// `k_tasks` times the mean demonstrations per task.
pub fn plan(
    cfg: &RunConfig,
    c_theta: f64,
    c_model: f64,
    source_pool: Option<u64>,
) -> Result<CostPlan, PipelineError> {
    let n_source = match source_pool {
        Some(n) => n,
        None if cfg.corpus.source_dir.is_dir() => {
            let tasks = load_corpus_dir(&cfg.corpus.source_dir)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            let total: usize = tasks
                .iter()
                .map(|(_, t)| expand_multi_answers(t).0.len())
                .sum();
            let k = cfg.pipeline.k_tasks.min(tasks.len());
            if tasks.is_empty() {
                0
            } else {
                (total as f64 / tasks.len() as f64 * k as f64).round() as u64
            }
        }
        None => 0,
    };
    let uses_sources = matches!(cfg.mode, Mode::Ictl | Mode::Direct | Mode::Synthesis);
    let n_ss = if uses_sources {
        cfg.pipeline.n_source as u64
    } else {
        0
    };
    let model = CostModel {
        n_source,
        n_source_sampled: n_ss,
        n_target_sampled: if cfg.mode == Mode::Ictl {
            cfg.pipeline.n_target as u64
        } else {
            0
        },
        c_theta,
        c_model,
    };
    let (raw, adjusted) = estimate_cost(&model).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let terms: Vec<(String, f64)> = model
        .terms()
        .iter()
        .map(|(n, v)| (n.to_string(), *v))
        .collect();
    let dominant = terms
        .iter()
        .fold(None::<&(String, f64)>, |best, t| match best {
            Some(b) if b.1 >= t.1 => Some(b),
            _ => Some(t),
        })
        .map(|t| t.0.clone())
        .unwrap_or_default();
    Ok(CostPlan {
        model,
        raw,
        adjusted,
        terms,
        dominant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_order() {
        assert!(Stage::Embed < Stage::SampleSource && Stage::Infer < Stage::Eval);
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let lock = RunLock::acquire(dir.path()).unwrap();
        assert!(matches!(
            RunLock::acquire(dir.path()),
            Err(PipelineError::Locked(_))
        ));
        drop(lock);
        assert!(RunLock::acquire(dir.path()).is_ok());
    }

    #[test]
    fn plan_scales() {
        let cfg = RunConfig::default();
        let p = plan(&cfg, 1.0, 1.0, Some(2000)).unwrap();
        assert_eq!(p.raw, p.adjusted);
        assert_eq!(p.dominant, "source sampling");
        let mut half = cfg.clone();
        half.pipeline.n_source /= 2;
        assert!(plan(&half, 1.0, 1.0, Some(2000)).unwrap().raw < p.raw);
        assert_eq!(plan(&cfg, 0.0, 0.0, Some(0)).unwrap().raw, 0.0);
    }

    #[test]
    fn sanitize_ids() {
        assert_eq!(sanitize("task1_a/b c"), "task1_a_b_c");
    }
}
