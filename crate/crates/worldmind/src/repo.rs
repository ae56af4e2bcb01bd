//! World knowledge repository: an append-only store of process rules and goal
//! heuristics with deterministic semantic retrieval.
//!
//! Entries are plain text plus provenance. Retrieval ranks by cosine
//! similarity between the query and entry embeddings; the default embedder is
//! a hashed bag-of-words with a fixed hash seed, so rankings are identical
//! across processes and platforms. The interchange format carries text only —
//! embeddings are a disposable cache rebuilt per embedder.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;
use thiserror::Error;

/// Dimensionality of the built-in embedder.
pub const EMBEDDING_DIM: usize = 256;

/// Interchange format version this build reads and writes.
pub const INTERCHANGE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RepoError {
    #[error("text must be nonempty")]
    EmptyText,
    #[error("interchange schema error: {0}")]
    Schema(String),
    #[error("interchange version {found}, expected {INTERCHANGE_VERSION}")]
    VersionMismatch { found: u32 },
    #[error("io error: {0}")]
    Io(String),
}

/// Experience kind: causal rules from prediction errors, or procedural
/// heuristics from successful trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperienceKind {
    Process,
    Goal,
}

/// Where an entry came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Source {
    pub model_id: String,
    pub task_id: String,
    pub episode_step: u32,
}

/// Structured context attached to process entries: the action, the abstracted
/// states around it, and the prediction that missed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessContext {
    pub action_name: String,
    pub abstract_before: String,
    pub predicted: String,
    pub abstract_after: String,
}

/// One repository record. Field order is normative for the interchange format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperienceEntry {
    pub id: u64,
    pub kind: ExperienceKind,
    pub text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub context: Option<ProcessContext>,
    pub source: Source,
    pub created_at: u64,
}

/// Unit-norm embedding vector of fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    components: Vec<f64>,
}

impl EmbeddingVector {
    /// Builds from raw components, normalizing to unit L2 norm.
    /// Errors if the vector is all-zero or has the wrong dimension.
    pub fn from_components(components: Vec<f64>) -> Result<Self, RepoError> {
        if components.len() != EMBEDDING_DIM {
            return Err(RepoError::Schema(format!(
                "embedding dimension {} != {EMBEDDING_DIM}",
                components.len()
            )));
        }
        let norm = components.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(RepoError::EmptyText);
        }
        Ok(Self {
            components: components.into_iter().map(|c| c / norm).collect(),
        })
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn norm(&self) -> f64 {
        self.components.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Cosine similarity; on unit vectors this is the dot product.
    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        self.components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// Pluggable text embedder. Implementations must be deterministic for a given
/// fingerprint; the repository invalidates its cache when the fingerprint
/// changes.
pub trait EmbeddingProvider {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, RepoError>;
    fn fingerprint(&self) -> String;
}

/// Default embedder: lowercase, split on non-alphanumerics, hash each token
/// into one of [`EMBEDDING_DIM`] buckets with a fixed FNV-1a seed, accumulate
/// counts, L2-normalize.
#[derive(Debug, Clone, Copy, Default)]
pub struct HashedBowEmbedder;

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x00000100000001b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Lowercased alphanumeric tokens of the text, in order.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Raw bucket counts before normalization. Exposed so tests can rank with
/// exact integer arithmetic.
pub fn token_bucket_counts(text: &str) -> [u64; EMBEDDING_DIM] {
    let mut counts = [0u64; EMBEDDING_DIM];
    for token in tokenize(text) {
        let bucket = (fnv1a(token.as_bytes()) % EMBEDDING_DIM as u64) as usize;
        counts[bucket] += 1;
    }
    counts
}

impl EmbeddingProvider for HashedBowEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, RepoError> {
        if text.trim().is_empty() {
            return Err(RepoError::EmptyText);
        }
        let counts = token_bucket_counts(text);
        if counts.iter().all(|c| *c == 0) {
            return Err(RepoError::EmptyText);
        }
        EmbeddingVector::from_components(counts.iter().map(|c| *c as f64).collect())
    }

    fn fingerprint(&self) -> String {
        format!("hashed-bow-v1-d{EMBEDDING_DIM}")
    }
}

/// The repository itself. Append-only: entry text and ids never change once
/// written; exact-duplicate texts are collapsed at retrieval time, not on
/// insertion, so the audit history stays complete.
#[derive(Debug, Clone, Default)]
pub struct Repository {
    entries: Vec<ExperienceEntry>,
    embedding_cache: HashMap<u64, EmbeddingVector>,
    cache_fingerprint: Option<String>,
    next_id: u64,
    clock: u64,
}

impl Repository {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[ExperienceEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count_kind(&self, kind: ExperienceKind) -> usize {
        self.entries.iter().filter(|e| e.kind == kind).count()
    }

    fn append(
        &mut self,
        kind: ExperienceKind,
        text: String,
        context: Option<ProcessContext>,
        source: Source,
    ) -> Result<u64, RepoError> {
        if text.trim().is_empty() {
            return Err(RepoError::EmptyText);
        }
        let id = self.next_id;
        self.next_id += 1;
        let created_at = self.clock;
        self.clock += 1;
        self.entries.push(ExperienceEntry {
            id,
            kind,
            text,
            context,
            source,
            created_at,
        });
        Ok(id)
    }

    /// Appends one process-experience rule with its error context.
    pub fn add_process(
        &mut self,
        context: ProcessContext,
        rule_text: impl Into<String>,
        source: Source,
    ) -> Result<u64, RepoError> {
        self.append(ExperienceKind::Process, rule_text.into(), Some(context), source)
    }

    /// Appends one goal-experience heuristic per text, returning the new ids
    /// in order. An empty input is a no-op.
    pub fn add_goal(
        &mut self,
        heuristic_texts: &[String],
        source: Source,
    ) -> Result<Vec<u64>, RepoError> {
        let mut ids = Vec::with_capacity(heuristic_texts.len());
        for text in heuristic_texts {
            ids.push(self.append(ExperienceKind::Goal, text.clone(), None, source.clone())?);
        }
        Ok(ids)
    }

    fn ensure_cache(&mut self, embedder: &dyn EmbeddingProvider) {
        let fingerprint = embedder.fingerprint();
        if self.cache_fingerprint.as_deref() != Some(fingerprint.as_str()) {
            self.embedding_cache.clear();
            self.cache_fingerprint = Some(fingerprint);
        }
        for entry in &self.entries {
            if let std::collections::hash_map::Entry::Vacant(slot) =
                self.embedding_cache.entry(entry.id)
            {
                if let Ok(vector) = embedder.embed(&entry.text) {
                    slot.insert(vector);
                }
            }
        }
    }

    /// Precomputes embeddings for every entry (useful before sharing a frozen
    /// repository across readers).
    pub fn warm_cache(&mut self, embedder: &dyn EmbeddingProvider) {
        self.ensure_cache(embedder);
    }

    /// Top-k entries of the requested kind by descending cosine similarity to
    /// the query text. Ties break toward the older entry; exact-duplicate
    /// texts collapse to the earliest id before ranking. An empty repository
    /// or k = 0 yields an empty list.
    pub fn retrieve(
        &mut self,
        query_text: &str,
        kind: ExperienceKind,
        k: usize,
        embedder: &dyn EmbeddingProvider,
    ) -> Vec<(ExperienceEntry, f64)> {
        if k == 0 || self.entries.is_empty() {
            return Vec::new();
        }
        let query = match embedder.embed(query_text) {
            Ok(v) => v,
            Err(_) => return Vec::new(),
        };
        self.ensure_cache(embedder);

        let mut first_by_text: HashMap<&str, &ExperienceEntry> = HashMap::new();
        for entry in self.entries.iter().filter(|e| e.kind == kind) {
            first_by_text.entry(entry.text.as_str()).or_insert(entry);
        }
        let mut scored: Vec<(&ExperienceEntry, f64)> = first_by_text
            .into_values()
            .filter_map(|entry| {
                self.embedding_cache
                    .get(&entry.id)
                    .map(|vector| (entry, query.cosine(vector)))
            })
            .collect();
        scored.sort_by(|(ea, sa), (eb, sb)| {
            sb.partial_cmp(sa)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(ea.id.cmp(&eb.id))
        });
        scored.truncate(k);
        scored
            .into_iter()
            .map(|(entry, score)| (entry.clone(), score))
            .collect()
    }

    /// Serializes to the interchange document: version header plus entries
    /// sorted by id, pretty-printed with two-space indentation, LF line
    /// endings, and a trailing newline. Byte-stable for a given repository.
    pub fn export(&self) -> String {
        let mut entries: Vec<&ExperienceEntry> = self.entries.iter().collect();
        entries.sort_by_key(|e| e.id);
        let doc = InterchangeDoc {
            version: INTERCHANGE_VERSION,
            entries: entries.into_iter().cloned().collect(),
        };
        let mut text = serde_json::to_string_pretty(&doc).expect("repository serializes");
        text.push('\n');
        text
    }

    /// Parses an interchange document. Embeddings are rebuilt lazily on first
    /// retrieval — transferred knowledge is pure text.
    pub fn import(document: &str) -> Result<Self, RepoError> {
        let doc: InterchangeDoc =
            serde_json::from_str(document).map_err(|e| RepoError::Schema(e.to_string()))?;
        if doc.version != INTERCHANGE_VERSION {
            return Err(RepoError::VersionMismatch { found: doc.version });
        }
        let mut last_id: Option<u64> = None;
        for entry in &doc.entries {
            if entry.text.trim().is_empty() {
                return Err(RepoError::Schema(format!("entry {} has empty text", entry.id)));
            }
            if let Some(prev) = last_id {
                if entry.id <= prev {
                    return Err(RepoError::Schema(
                        "entries must be sorted by strictly increasing id".into(),
                    ));
                }
            }
            last_id = Some(entry.id);
        }
        let next_id = doc.entries.iter().map(|e| e.id + 1).max().unwrap_or(0);
        let clock = doc.entries.iter().map(|e| e.created_at + 1).max().unwrap_or(0);
        Ok(Self {
            entries: doc.entries,
            embedding_cache: HashMap::new(),
            cache_fingerprint: None,
            next_id,
            clock,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), RepoError> {
        std::fs::write(path, self.export()).map_err(|e| RepoError::Io(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, RepoError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RepoError::Io(format!("{}: {e}", path.display())))?;
        Self::import(&text)
    }

    /// Hex SHA-256 of the exported document; used for frozen-phase audits.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(self.export().as_bytes());
        let out = hasher.finalize();
        let mut hex = String::with_capacity(out.len() * 2);
        for b in out {
            hex.push_str(&format!("{b:02x}"));
        }
        hex
    }
}

#[derive(Serialize, Deserialize)]
struct InterchangeDoc {
    version: u32,
    entries: Vec<ExperienceEntry>,
}
