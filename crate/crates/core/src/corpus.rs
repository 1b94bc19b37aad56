//! Task-file ingestion, multi-answer expansion and category lookup.
//!
//! Task files follow the public Super-NaturalInstructions layout: one JSON
//! object per file with `Definition`, `Positive Examples` and `Instances`.
//! Unknown fields are ignored.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Line markers used by the prompt templates. A demonstration whose text
/// contains one of these as a whole line would make completions ambiguous.
pub const MARKER_LINES: [&str; 3] = ["Input:", "Reason:", "Answer:"];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: cannot read task file: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed task file: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("{path}: field `{field}` is missing")]
    MissingField { path: PathBuf, field: &'static str },
    #[error("{path}: field `{field}` is empty")]
    EmptyField { path: PathBuf, field: &'static str },
    #[error("{path}:{line}: {message}")]
    CategoryMap {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

/// A labeled (question, answer) pair, optionally carrying a rationale.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Demonstration {
    pub question: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
    pub origin_task: String,
    pub origin_index: usize,
}

impl Demonstration {
    /// Stable reference used in manifests: `task#index:answer-hash`.
    pub fn reference(&self) -> String {
        format!(
            "{}#{}:{}",
            self.origin_task,
            self.origin_index,
            &crate::hashing::sha256_hex(self.answer.as_bytes())[..12]
        )
    }
}

/// One raw instance: a question with zero or more reference answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub input: String,
    pub output: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Classification,
    Comprehension,
    Dialogue,
    Extraction,
    Generation,
    Rewriting,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Classification,
        Category::Comprehension,
        Category::Dialogue,
        Category::Extraction,
        Category::Generation,
        Category::Rewriting,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Classification => "Classification",
            Category::Comprehension => "Comprehension",
            Category::Dialogue => "Dialogue",
            Category::Extraction => "Extraction",
            Category::Generation => "Generation",
            Category::Rewriting => "Rewriting",
        }
    }

    pub fn parse(label: &str) -> Option<Category> {
        Category::ALL.into_iter().find(|c| c.as_str() == label)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskRecord {
    pub id: String,
    pub definition: String,
    pub category: Option<Category>,
    /// Human-labeled examples, each with its explanation as rationale.
    pub positive_examples: Vec<Demonstration>,
    pub instances: Vec<Instance>,
}

impl TaskRecord {
    /// The human-labeled example used to show the task's format in prompts.
    pub fn labeled_example(&self, choice: usize) -> Option<&Demonstration> {
        self.positive_examples.get(choice)
    }
}

#[derive(Deserialize)]
struct RawPositive {
    input: String,
    output: String,
    #[serde(default)]
    explanation: Option<String>,
}

#[derive(Deserialize)]
struct RawInstance {
    #[serde(default)]
    id: Option<String>,
    input: String,
    #[serde(default)]
    output: Vec<String>,
}

#[derive(Serialize)]
struct CanonicalPositive<'a> {
    input: &'a str,
    output: &'a str,
    explanation: &'a str,
}

/// Reads one task file. The task id is the file stem.
pub fn load_task_file(path: &Path) -> Result<TaskRecord, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string();
    parse_task(&id, &text, path)
}

/// Parses task-file text; `path` is only used in error messages.
pub fn parse_task(id: &str, text: &str, path: &Path) -> Result<TaskRecord, CorpusError> {
    let malformed = |message: String| CorpusError::Malformed {
        path: path.to_path_buf(),
        message,
    };
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| malformed("top level is not an object".into()))?;

    let definition = match obj.get("Definition") {
        None => {
            return Err(CorpusError::MissingField {
                path: path.to_path_buf(),
                field: "Definition",
            })
        }
        Some(v) => {
            let parts: Vec<String> = serde_json::from_value(v.clone())
                .map_err(|e| malformed(format!("Definition: {e}")))?;
            parts.join(" ")
        }
    };
    if definition.trim().is_empty() {
        return Err(CorpusError::EmptyField {
            path: path.to_path_buf(),
            field: "Definition",
        });
    }

    let category = obj
        .get("Categories")
        .and_then(|v| v.as_array())
        .and_then(|a| {
            a.iter()
                .filter_map(|c| c.as_str())
                .find_map(Category::parse)
        });

    let positives: Vec<RawPositive> = match obj.get("Positive Examples") {
        None => Vec::new(),
        Some(v) => serde_json::from_value(v.clone())
            .map_err(|e| malformed(format!("Positive Examples: {e}")))?,
    };
    let positive_examples = positives
        .into_iter()
        .enumerate()
        .map(|(i, p)| Demonstration {
            question: p.input,
            answer: p.output,
            rationale: Some(p.explanation.unwrap_or_default()),
            origin_task: id.to_string(),
            origin_index: i,
        })
        .collect();

    let raw_instances: Vec<RawInstance> = match obj.get("Instances") {
        None => {
            return Err(CorpusError::MissingField {
                path: path.to_path_buf(),
                field: "Instances",
            })
        }
        Some(v) => {
            serde_json::from_value(v.clone()).map_err(|e| malformed(format!("Instances: {e}")))?
        }
    };
    let instances = raw_instances
        .into_iter()
        .enumerate()
        .map(|(i, r)| Instance {
            id: r.id.unwrap_or_else(|| format!("{id}-{i}")),
            input: r.input,
            output: r.output,
        })
        .collect();

    Ok(TaskRecord {
        id: id.to_string(),
        definition,
        category,
        positive_examples,
        instances,
    })
}

/// Canonical serialization, readable by [`load_task_file`].
pub fn to_task_json(task: &TaskRecord) -> String {
    let positives: Vec<CanonicalPositive<'_>> = task
        .positive_examples
        .iter()
        .map(|d| CanonicalPositive {
            input: &d.question,
            output: &d.answer,
            explanation: d.rationale.as_deref().unwrap_or(""),
        })
        .collect();
    let mut obj = serde_json::Map::new();
    obj.insert(
        "Definition".into(),
        serde_json::json!([task.definition.clone()]),
    );
    if let Some(c) = task.category {
        obj.insert("Categories".into(), serde_json::json!([c.as_str()]));
    }
    obj.insert(
        "Positive Examples".into(),
        serde_json::to_value(positives).expect("positives serialize"),
    );
    obj.insert(
        "Instances".into(),
        serde_json::to_value(&task.instances).expect("instances serialize"),
    );
    serde_json::to_string_pretty(&serde_json::Value::Object(obj)).expect("task serializes")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    NoAnswers,
    EmptyQuestion,
    EmptyAnswer,
    MarkerLine,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipReport {
    pub skipped: Vec<(usize, SkipReason)>,
}

impl SkipReport {
    pub fn count(&self, reason: SkipReason) -> usize {
        self.skipped.iter().filter(|(_, r)| *r == reason).count()
    }

    pub fn len(&self) -> usize {
        self.skipped.len()
    }

    pub fn is_empty(&self) -> bool {
        self.skipped.is_empty()
    }
}

fn has_marker_line(text: &str) -> bool {
    text.lines().any(|l| MARKER_LINES.contains(&l.trim_end()))
}

/// One demonstration per (question, answer) pair, in instance then answer
/// order. Instances that cannot form a valid demonstration are reported.
pub fn expand_multi_answers(task: &TaskRecord) -> (Vec<Demonstration>, SkipReport) {
    let mut demos = Vec::new();
    let mut report = SkipReport::default();
    for (index, inst) in task.instances.iter().enumerate() {
        if inst.output.is_empty() {
            report.skipped.push((index, SkipReason::NoAnswers));
            continue;
        }
        if inst.input.trim().is_empty() {
            report.skipped.push((index, SkipReason::EmptyQuestion));
            continue;
        }
        if has_marker_line(&inst.input) {
            report.skipped.push((index, SkipReason::MarkerLine));
            continue;
        }
        for answer in &inst.output {
            if answer.trim().is_empty() {
                report.skipped.push((index, SkipReason::EmptyAnswer));
                continue;
            }
            if has_marker_line(answer) {
                report.skipped.push((index, SkipReason::MarkerLine));
                continue;
            }
            demos.push(Demonstration {
                question: inst.input.clone(),
                answer: answer.clone(),
                rationale: None,
                origin_task: task.id.clone(),
                origin_index: index,
            });
        }
    }
    (demos, report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemoTextMode {
    QuestionOnly,
    #[default]
    QuestionAndAnswer,
}

/// Canonical text of a demonstration for embedding and lexical retrieval.
pub fn demo_text(demo: &Demonstration, mode: DemoTextMode) -> String {
    match mode {
        DemoTextMode::QuestionOnly => demo.question.clone(),
        DemoTextMode::QuestionAndAnswer => format!("{}\n{}", demo.question, demo.answer),
    }
}

/// Task id → evaluation category.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CategoryMap {
    entries: BTreeMap<String, Category>,
}

const DEFAULT_CATEGORY_MAP: &str = include_str!("../data/categories.tsv");

impl CategoryMap {
    /// The mapping of the Super-NI test split into six categories.
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_CATEGORY_MAP, Path::new("<builtin>")).expect("builtin map parses")
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    /// Tab- or whitespace-separated `id category` lines; `#` starts a comment.
    pub fn parse(text: &str, path: &Path) -> Result<Self, CorpusError> {
        let mut entries = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| CorpusError::CategoryMap {
                path: path.to_path_buf(),
                line: lineno + 1,
                message,
            };
            let mut parts = line.split_whitespace();
            let (Some(id), Some(label), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(err(format!("expected `id category`, got `{line}`")));
            };
            let category =
                Category::parse(label).ok_or_else(|| err(format!("unknown category `{label}`")))?;
            if entries.insert(id.to_string(), category).is_some() {
                return Err(err(format!("duplicate id `{id}`")));
            }
        }
        Ok(Self { entries })
    }

    pub fn insert(&mut self, id: impl Into<String>, category: Category) -> Option<Category> {
        self.entries.insert(id.into(), category)
    }

    pub fn get(&self, id: &str) -> Option<Category> {
        self.entries
            .get(id)
            .copied()
            .or_else(|| numeric_task_key(id).and_then(|key| self.entries.get(key).copied()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// `task641_e_snli_classification` → `641`.
fn numeric_task_key(id: &str) -> Option<&str> {
    let rest = id.strip_prefix("task")?;
    let end = rest
        .find(|c: char| !c.is_ascii_digit())
        .unwrap_or(rest.len());
    (end > 0).then(|| &rest[..end])
}

/// Category label of a task, or `"Unknown"`.
pub fn category_of(id: &str, map: &CategoryMap) -> String {
    map.get(id)
        .map(|c| c.as_str().to_string())
        .unwrap_or_else(|| "Unknown".to_string())
}

/// Loads every `*.json` task file in a directory, sorted by file name.
pub fn load_corpus_dir(dir: &Path) -> Result<Vec<(PathBuf, TaskRecord)>, CorpusError> {
    let entries = std::fs::read_dir(dir).map_err(|source| CorpusError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    use rayon::prelude::*;
    paths
        .into_par_iter()
        .map(|p| load_task_file(&p).map(|t| (p, t)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub task: String,
    pub file: PathBuf,
    pub category: String,
    pub positive_examples: usize,
    pub instances: usize,
    pub demonstrations: usize,
    pub skipped: SkipReport,
}

/// Per-task counts written for downstream stages.
pub fn corpus_manifest(tasks: &[(PathBuf, TaskRecord)], map: &CategoryMap) -> Vec<ManifestEntry> {
    tasks
        .iter()
        .map(|(file, task)| {
            let (demos, skipped) = expand_multi_answers(task);
            ManifestEntry {
                task: task.id.clone(),
                file: file.clone(),
                category: task
                    .category
                    .map(|c| c.as_str().to_string())
                    .unwrap_or_else(|| category_of(&task.id, map)),
                positive_examples: task.positive_examples.len(),
                instances: task.instances.len(),
                demonstrations: demos.len(),
                skipped,
            }
        })
        .collect()
}
