//! Content-addressed vector store.
//!
//! On disk the store is two files: `vectors.bin`, the concatenated
//! little-endian `f32` values, and `index.tsv`, one `model hash offset dim`
//! line per vector. Both are written sorted by key so identical contents give
//! identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use thiserror::Error;

use super::EmbeddingVector;
use crate::hashing::sha256_hex;

const INDEX_FILE: &str = "index.tsv";
const DATA_FILE: &str = "vectors.bin";

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: corrupt index entry")]
    Corrupt { path: PathBuf, line: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CacheKey {
    pub model: String,
    pub content_hash: String,
}

impl CacheKey {
    pub fn new(model: &str, text: &str) -> Self {
        Self {
            model: model.to_string(),
            content_hash: sha256_hex(text.as_bytes()),
        }
    }
}

#[derive(Debug, Default)]
pub struct EmbeddingCache {
    dir: Option<PathBuf>,
    entries: RwLock<BTreeMap<CacheKey, EmbeddingVector>>,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) a persistent store in `dir`.
    pub fn open(dir: &Path) -> Result<Self, CacheError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| CacheError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let index_path = dir.join(INDEX_FILE);
        let data_path = dir.join(DATA_FILE);
        let mut entries = BTreeMap::new();
        if index_path.exists() {
            let index = fs::read_to_string(&index_path).map_err(io(&index_path))?;
            let data = fs::read(&data_path).map_err(io(&data_path))?;
            for (lineno, line) in index.lines().enumerate() {
                let corrupt = || CacheError::Corrupt {
                    path: index_path.clone(),
                    line: lineno + 1,
                };
                let fields: Vec<&str> = line.split('\t').collect();
                let [model, hash, offset, dim] = fields[..] else {
                    return Err(corrupt());
                };
                let offset: usize = offset.parse().map_err(|_| corrupt())?;
                let dim: usize = dim.parse().map_err(|_| corrupt())?;
                let bytes = data.get(offset..offset + dim * 4).ok_or_else(corrupt)?;
                let values = bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect();
                let vector = EmbeddingVector::new(values).map_err(|_| corrupt())?;
                entries.insert(
                    CacheKey {
                        model: model.to_string(),
                        content_hash: hash.to_string(),
                    },
                    vector,
                );
            }
        }
        Ok(Self {
            dir: Some(dir.to_path_buf()),
            entries: RwLock::new(entries),
        })
    }

    pub fn get(&self, key: &CacheKey) -> Option<EmbeddingVector> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    pub fn put(&self, key: CacheKey, vector: EmbeddingVector) {
        self.entries
            .write()
            .expect("cache lock")
            .insert(key, vector);
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Dimension of any stored vector for `model`.
    pub fn model_dim(&self, model: &str) -> Option<usize> {
        self.entries
            .read()
            .expect("cache lock")
            .iter()
            .find(|(k, _)| k.model == model)
            .map(|(_, v)| v.dim())
    }

    /// Writes the store to disk; a no-op for in-memory caches.
    pub fn save(&self) -> Result<(), CacheError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let entries = self.entries.read().expect("cache lock");
        let mut index = String::new();
        let mut data = Vec::new();
        for (key, vector) in entries.iter() {
            index.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                key.model,
                key.content_hash,
                data.len(),
                vector.dim()
            ));
            for v in vector.values() {
                data.extend_from_slice(&v.to_le_bytes());
            }
        }
        write_atomic(&dir.join(DATA_FILE), &data)?;
        write_atomic(&dir.join(INDEX_FILE), index.as_bytes())
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CacheError> {
    let io = |source| CacheError::Io {
        path: path.to_path_buf(),
        source,
    };
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}
