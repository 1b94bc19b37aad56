//! Run configuration, loaded from a TOML document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::DemoTextMode;
use crate::inference::InferenceConfig;
use crate::ot::OtConfig;
use crate::sampler::AnnealConfig;
use crate::service::ServiceConfig;
use crate::transfer::{TransferConfig, VerifyConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Which demonstrations inference draws on.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Sampled, transferred, verified and re-sampled demonstrations.
    #[default]
    Ictl,
    /// No demonstrations.
    Zero,
    /// Sampled source demonstrations, untransferred.
    Direct,
    /// Only the target's labeled example.
    Single,
    /// Demonstrations generated from the labeled example alone.
    Synthesis,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Ictl => "ictl",
            Mode::Zero => "zero",
            Mode::Direct => "direct",
            Mode::Single => "single",
            Mode::Synthesis => "synthesis",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    /// Directory of source task files.
    pub source_dir: PathBuf,
    /// Target task files; their instances are the test questions.
    pub targets: Vec<PathBuf>,
    /// Task id → category table; the built-in table when unset.
    pub category_map: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineParams {
    pub k_tasks: usize,
    pub n_source: usize,
    pub n_target: usize,
    pub shots: usize,
    pub max_instances: usize,
    /// Transfer only from the task at this similarity rank (1-based).
    pub similarity_rank: Option<usize>,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            k_tasks: 16,
            n_source: 128,
            n_target: 512,
            shots: 3,
            max_instances: 100,
            similarity_rank: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablations {
    pub random_source: bool,
    pub skip_verify: bool,
    pub skip_target_sample: bool,
}

impl Ablations {
    pub fn any(&self) -> bool {
        self.random_source || self.skip_verify || self.skip_target_sample
    }
}

/// Each non-empty list expands into one sibling run per value, varying that
/// parameter alone.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepParams {
    pub source_demo_scale: Vec<usize>,
    pub source_task_scale: Vec<usize>,
    pub similarity_rank: Vec<usize>,
    pub target_scale: Vec<usize>,
}

impl SweepParams {
    pub fn is_empty(&self) -> bool {
        self.source_demo_scale.is_empty()
            && self.source_task_scale.is_empty()
            && self.similarity_rank.is_empty()
            && self.target_scale.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceSettings {
    pub temperature: f64,
    pub max_tokens: u32,
    pub success_threshold: f64,
    pub most_similar_last: bool,
}

impl Default for InferenceSettings {
    fn default() -> Self {
        let d = InferenceConfig::default();
        Self {
            temperature: d.temperature,
            max_tokens: d.max_tokens,
            success_threshold: d.success_threshold,
            most_similar_last: d.most_similar_last,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub run_root: PathBuf,
    /// Shared embedding and response caches; `<run_root>/cache` when unset.
    pub cache_dir: Option<PathBuf>,
    pub seed: u64,
    pub mode: Mode,
    pub demo_text: DemoTextMode,
    pub corpus: CorpusConfig,
    pub embedding: ServiceConfig,
    pub chat: ServiceConfig,
    pub pipeline: PipelineParams,
    pub ablations: Ablations,
    pub sweep: SweepParams,
    pub transfer: TransferConfig,
    pub verify: VerifyConfig,
    pub inference: InferenceSettings,
    pub anneal: AnnealConfig,
    pub ot: OtConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            name: "run".into(),
            run_root: PathBuf::from("runs"),
            cache_dir: None,
            seed: 0,
            mode: Mode::Ictl,
            demo_text: DemoTextMode::default(),
            corpus: CorpusConfig::default(),
            embedding: ServiceConfig {
                model: "bge-en-icl".into(),
                ..ServiceConfig::default()
            },
            chat: ServiceConfig {
                model: "gpt-4o".into(),
                ..ServiceConfig::default()
            },
            pipeline: PipelineParams::default(),
            ablations: Ablations::default(),
            sweep: SweepParams::default(),
            transfer: TransferConfig::default(),
            verify: VerifyConfig::default(),
            inference: InferenceSettings::default(),
            anneal: AnnealConfig::default(),
            ot: OtConfig::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if !p.as_os_str().is_empty() && p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    /// Parses `path`; relative paths inside resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text).map_err(|message| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.run_root);
        if let Some(c) = &mut self.cache_dir {
            resolve(base, c);
        }
        resolve(base, &mut self.corpus.source_dir);
        for t in &mut self.corpus.targets {
            resolve(base, t);
        }
        if let Some(m) = &mut self.corpus.category_map {
            resolve(base, m);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name.starts_with('.') {
            return bad(format!(
                "run name `{}` must be a plain directory name",
                self.name
            ));
        }
        if self.mode != Mode::Ictl && self.ablations.any() {
            return bad(format!(
                "ablations are only valid with mode ictl, not {}",
                self.mode.as_str()
            ));
        }
        let p = &self.pipeline;
        for (name, v) in [
            ("k_tasks", p.k_tasks),
            ("n_source", p.n_source),
            ("n_target", p.n_target),
            ("max_instances", p.max_instances),
        ] {
            if v == 0 {
                return bad(format!("pipeline.{name} must be positive"));
            }
        }
        if p.similarity_rank == Some(0) || self.sweep.similarity_rank.contains(&0) {
            return bad("similarity ranks are 1-based".into());
        }
        if self.corpus.targets.is_empty() {
            return bad("corpus.targets lists no target task files".into());
        }
        let needs_sources = matches!(self.mode, Mode::Ictl | Mode::Direct);
        if needs_sources && self.corpus.source_dir.as_os_str().is_empty() {
            return bad("corpus.source_dir is required for this mode".into());
        }
        for (name, t) in [
            ("transfer", self.transfer.success_threshold),
            ("verify", self.verify.success_threshold),
            ("inference", self.inference.success_threshold),
        ] {
            if !(0.0..=1.0).contains(&t) {
                return bad(format!("{name}.success_threshold must lie in [0, 1]"));
            }
        }
        if self.verify.max_examples == 0 {
            return bad("verify.max_examples must be positive".into());
        }
        self.anneal
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir
            .clone()
            .unwrap_or_else(|| self.run_root.join("cache"))
    }

    pub fn run_dir(&self) -> PathBuf {
        self.run_root.join(&self.name)
    }

    pub fn anneal(&self) -> AnnealConfig {
        AnnealConfig {
            seed: self.seed,
            ..self.anneal
        }
    }

    pub fn inference_config(&self) -> InferenceConfig {
        InferenceConfig {
            shots: self.pipeline.shots,
            max_instances: self.pipeline.max_instances,
            temperature: self.inference.temperature,
            max_tokens: self.inference.max_tokens,
            success_threshold: self.inference.success_threshold,
            most_similar_last: self.inference.most_similar_last,
        }
    }

    /// One sibling config per sweep value, sharing this config's caches.
    pub fn expand_sweep(&self) -> Vec<RunConfig> {
        let mut base = self.clone();
        base.sweep = SweepParams::default();
        base.cache_dir = Some(self.cache_dir());
        let mut out = Vec::new();
        let mut push = |axis: &str, value: usize, apply: &dyn Fn(&mut RunConfig)| {
            let mut c = base.clone();
            c.name = format!("{}-{axis}-{value}", self.name);
            apply(&mut c);
            out.push(c);
        };
        for &v in &self.sweep.source_demo_scale {
            push("source-demos", v, &|c| c.pipeline.n_source = v);
        }
        for &v in &self.sweep.source_task_scale {
            push("source-tasks", v, &|c| c.pipeline.k_tasks = v);
        }
        for &v in &self.sweep.similarity_rank {
            push("rank", v, &|c| c.pipeline.similarity_rank = Some(v));
        }
        for &v in &self.sweep.target_scale {
            push("target-demos", v, &|c| c.pipeline.n_target = v);
        }
        out
    }
}
