//! The task library: a directory of canonical `.task` files plus one
//! `index.json` holding embeddings, clusters, critic votes and verdicts.
//!
//! ```text
//! library/
//!   build-car.task
//!   ...
//!   index.json
//! ```
//!
//! Mutation goes through `&mut Library`. Callers that share a library across
//! threads wrap it in a lock, which gives the single-writer, many-reader
//! discipline the service relies on.

pub mod cluster;
pub mod embed;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{parse_task, render_canonical};
use crate::pipeline::{verify_task, StagedReport, VerifyOptions};
use crate::seeds::SEED_TASKS;

pub use cluster::{Clustering, Projection, DEFAULT_K};
pub use embed::{cosine, Embedder, EmbeddingConfig, TfIdfEmbedder};

pub const INDEX_VERSION: u32 = 1;
pub const INDEX_FILE: &str = "index.json";
pub const DUPLICATE_THRESHOLD: f64 = 0.92;

#[derive(Debug, Error)]
pub enum LibraryError {
    #[error("a task named `{0}` is already in the library")]
    DuplicateName(String),
    #[error("no task named `{0}`")]
    UnknownName(String),
    #[error("invalid entry: {0}")]
    InvalidEntry(String),
    #[error("index uses embedding {found:?}, expected {expected:?}")]
    EmbeddingMismatch {
        found: EmbeddingConfig,
        expected: EmbeddingConfig,
    },
    #[error("unsupported index version {0}")]
    Version(u32),
    #[error("need {need} entries, library has {have}")]
    TooSmall { need: usize, have: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LibraryError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::DuplicateName(_) => "REJECT_DUPLICATE_NAME",
            Self::UnknownName(_) => "UNKNOWN_TASK",
            Self::InvalidEntry(_) => "INVALID_ENTRY",
            Self::EmbeddingMismatch { .. } => "EMBEDDING_MISMATCH",
            Self::Version(_) => "INDEX_VERSION",
            Self::TooSmall { .. } => "LIBRARY_TOO_SMALL",
            Self::Io(_) => "IO_ERROR",
            Self::Json(_) => "INDEX_CORRUPT",
        }
    }
}

pub type Result<T, E = LibraryError> = std::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    Seed,
    Generated { model_id: String, mode: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriticVote {
    pub accept: bool,
    pub reason: String,
    /// Digest of the raw provider reply this vote was parsed from.
    #[serde(default)]
    pub transcript_digest: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HumanVerdict {
    pub accept: bool,
    pub reviewer: String,
    /// Review duration reported by the client.
    pub seconds: f64,
    pub recorded_at: DateTime<Utc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifySummary {
    pub stage: String,
    pub exit_code: i32,
    pub seeds: Vec<u64>,
    pub per_seed_scores: Vec<f64>,
    pub warnings: usize,
}

impl From<&StagedReport> for VerifySummary {
    fn from(r: &StagedReport) -> Self {
        Self {
            stage: r.stage_label().into(),
            exit_code: r.exit_code(),
            seeds: r.seeds_tried.clone(),
            per_seed_scores: r.per_seed_scores.clone(),
            warnings: r.diagnostics.iter().filter(|d| !d.is_error()).count(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LibraryEntry {
    pub name: String,
    pub description: String,
    /// Kept in `<name>.task` on disk, not in the index.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub dsl_source: String,
    pub embedding: Vec<f64>,
    pub cluster_id: Option<usize>,
    pub provenance: Provenance,
    #[serde(default)]
    pub critic_votes: Vec<CriticVote>,
    pub human_verdict: Option<HumanVerdict>,
    pub created_at: DateTime<Utc>,
    pub verify: VerifySummary,
}

impl LibraryEntry {
    /// Rejected entries stay for audit but are hidden from retrieval and export.
    pub fn is_rejected(&self) -> bool {
        self.human_verdict.as_ref().is_some_and(|v| !v.accept)
    }

    pub fn verdict_status(&self) -> &'static str {
        match &self.human_verdict {
            None => "pending",
            Some(v) if v.accept => "accepted",
            Some(_) => "rejected",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LibraryIndex {
    pub version: u32,
    pub embedding: EmbeddingConfig,
    pub entries: Vec<LibraryEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DuplicateReport {
    pub max_similarity: f64,
    pub nearest_names: Vec<String>,
    pub is_duplicate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapPoint {
    pub name: String,
    pub x: f64,
    pub y: f64,
    pub cluster: Option<usize>,
    /// `None` while no human verdict has been recorded.
    pub accepted: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReviewerSummary {
    pub reviewer: String,
    pub reviewed: usize,
    pub accepted: usize,
    pub accept_rate: f64,
    pub mean_seconds: f64,
}

pub struct Library {
    dir: Option<PathBuf>,
    index: LibraryIndex,
    embedder: Box<dyn Embedder>,
    pub duplicate_threshold: f64,
}

impl std::fmt::Debug for Library {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Library")
            .field("dir", &self.dir)
            .field("entries", &self.index.entries.len())
            .finish()
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

fn task_file(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.task"))
}

impl Library {
    pub fn in_memory() -> Self {
        Self::with_embedder(None, Box::new(TfIdfEmbedder::seeded()))
    }

    fn with_embedder(dir: Option<PathBuf>, embedder: Box<dyn Embedder>) -> Self {
        Self {
            dir,
            index: LibraryIndex {
                version: INDEX_VERSION,
                embedding: embedder.config(),
                entries: Vec::new(),
            },
            embedder,
            duplicate_threshold: DUPLICATE_THRESHOLD,
        }
    }

    /// Opens `dir`, creating an empty library there if it has no index yet.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        Self::open_with(dir, Box::new(TfIdfEmbedder::seeded()))
    }

    pub fn open_with(dir: impl Into<PathBuf>, embedder: Box<dyn Embedder>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let mut lib = Self::with_embedder(Some(dir.clone()), embedder);
        let index_path = dir.join(INDEX_FILE);
        if !index_path.exists() {
            return Ok(lib);
        }
        let mut index: LibraryIndex = serde_json::from_slice(&fs::read(&index_path)?)?;
        if index.version != INDEX_VERSION {
            return Err(LibraryError::Version(index.version));
        }
        if index.embedding != lib.index.embedding {
            return Err(LibraryError::EmbeddingMismatch {
                found: index.embedding,
                expected: lib.index.embedding,
            });
        }
        for e in &mut index.entries {
            e.dsl_source = fs::read_to_string(task_file(&dir, &e.name))?;
        }
        lib.index = index;
        Ok(lib)
    }

    /// A fresh library holding the ten seed tasks, each verified first.
    pub fn init_seeds(dir: Option<PathBuf>) -> Result<Self> {
        let mut lib = match dir {
            Some(d) => {
                let lib = Self::open(d)?;
                if !lib.is_empty() {
                    return Err(LibraryError::InvalidEntry(
                        "library directory already has entries".into(),
                    ));
                }
                lib
            }
            None => Self::in_memory(),
        };
        let opts = VerifyOptions::default();
        for (_, src) in SEED_TASKS {
            let report = verify_task(src, &opts);
            let entry = lib.make_entry(src, Provenance::Seed, &report)?;
            lib.add_entry(entry)?;
        }
        Ok(lib)
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn index(&self) -> &LibraryIndex {
        &self.index
    }

    pub fn entries(&self) -> &[LibraryEntry] {
        &self.index.entries
    }

    pub fn len(&self) -> usize {
        self.index.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&LibraryEntry> {
        self.index.entries.iter().find(|e| e.name == name)
    }

    pub fn names(&self) -> Vec<String> {
        self.index.entries.iter().map(|e| e.name.clone()).collect()
    }

    pub fn embed(&self, source: &str) -> Vec<f64> {
        self.embedder.embed(source)
    }

    /// Builds an entry from verified source. The source is canonicalized.
    pub fn make_entry(&self, source: &str, provenance: Provenance, report: &StagedReport) -> Result<LibraryEntry> {
        let spec =
            parse_task(source).map_err(|d| LibraryError::InvalidEntry(format!("source does not parse: {}", d[0])))?;
        let canonical = render_canonical(&spec);
        Ok(LibraryEntry {
            name: spec.name.clone(),
            description: spec.description.clone(),
            embedding: self.embed(&canonical),
            dsl_source: canonical,
            cluster_id: None,
            provenance,
            critic_votes: Vec::new(),
            human_verdict: None,
            created_at: Utc::now(),
            verify: report.into(),
        })
    }

    fn check_entry(&self, e: &LibraryEntry) -> Result<()> {
        if self.get(&e.name).is_some() {
            return Err(LibraryError::DuplicateName(e.name.clone()));
        }
        let spec = parse_task(&e.dsl_source)
            .map_err(|d| LibraryError::InvalidEntry(format!("source does not parse: {}", d[0])))?;
        if spec.name != e.name {
            return Err(LibraryError::InvalidEntry(format!(
                "entry name `{}` differs from task name `{}`",
                e.name, spec.name
            )));
        }
        if render_canonical(&spec) != e.dsl_source {
            return Err(LibraryError::InvalidEntry("source is not canonical".into()));
        }
        if e.embedding.len() != self.index.embedding.dimension {
            return Err(LibraryError::InvalidEntry(format!(
                "embedding has dimension {}, library uses {}",
                e.embedding.len(),
                self.index.embedding.dimension
            )));
        }
        Ok(())
    }

    pub fn add_entry(&mut self, entry: LibraryEntry) -> Result<()> {
        self.check_entry(&entry)?;
        if let Some(dir) = &self.dir {
            write_atomic(&task_file(dir, &entry.name), entry.dsl_source.as_bytes())?;
        }
        self.index.entries.push(entry);
        if let Err(e) = self.persist_index() {
            self.index.entries.pop();
            return Err(e);
        }
        Ok(())
    }

    /// Rewrites `index.json`. The `.task` files are written on insertion and
    /// never change afterwards.
    fn persist_index(&self) -> Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let mut stored = self.index.clone();
        for e in &mut stored.entries {
            e.dsl_source.clear();
        }
        let mut bytes = serde_json::to_vec_pretty(&stored)?;
        bytes.push(b'\n');
        write_atomic(&dir.join(INDEX_FILE), &bytes)?;
        Ok(())
    }

    /// Entries available for retrieval and export.
    pub fn active(&self) -> impl Iterator<Item = &LibraryEntry> {
        self.index.entries.iter().filter(|e| !e.is_rejected())
    }

    /// Up to `k` non-rejected entries by descending cosine, ties by name.
    pub fn nearest(&self, query: &[f64], k: usize) -> Vec<(&LibraryEntry, f64)> {
        let mut scored: Vec<_> = self.active().map(|e| (e, cosine(query, &e.embedding))).collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.name.cmp(&b.0.name)));
        scored.truncate(k.max(1));
        scored
    }

    pub fn duplicate_check(&self, candidate_source: &str, candidate_name: &str) -> DuplicateReport {
        let v = self.embed(candidate_source);
        let mut scored: Vec<_> = self
            .index
            .entries
            .iter()
            .map(|e| (e.name.as_str(), cosine(&v, &e.embedding)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let max_similarity = scored.first().map_or(0.0, |s| s.1);
        DuplicateReport {
            max_similarity,
            nearest_names: scored.iter().take(3).map(|s| s.0.to_string()).collect(),
            is_duplicate: max_similarity >= self.duplicate_threshold || self.get(candidate_name).is_some(),
        }
    }

    /// Clusters every entry and stores the assignment on it.
    pub fn cluster(&mut self, k: usize) -> Result<Clustering> {
        if k == 0 || k > self.len() {
            return Err(LibraryError::TooSmall {
                need: k.max(1),
                have: self.len(),
            });
        }
        let points: Vec<Vec<f64>> = self.index.entries.iter().map(|e| e.embedding.clone()).collect();
        let c = cluster::kmeans(&points, k, cluster::KMEANS_SEED);
        for (e, &a) in self.index.entries.iter_mut().zip(&c.assignments) {
            e.cluster_id = Some(a);
        }
        self.persist_index()?;
        Ok(c)
    }

    pub fn project_2d(&self) -> Result<Projection> {
        if self.len() < 2 {
            return Err(LibraryError::TooSmall {
                need: 2,
                have: self.len(),
            });
        }
        let rows: Vec<Vec<f64>> = self.index.entries.iter().map(|e| e.embedding.clone()).collect();
        Ok(cluster::pca_2d(&rows))
    }

    /// Entries in index order. A single entry maps to the origin.
    pub fn map(&self) -> Vec<MapPoint> {
        let coords = match self.project_2d() {
            Ok(p) => p.coords,
            Err(_) => vec![[0.0, 0.0]; self.len()],
        };
        self.index
            .entries
            .iter()
            .zip(coords)
            .map(|(e, [x, y])| MapPoint {
                name: e.name.clone(),
                x,
                y,
                cluster: e.cluster_id,
                accepted: e.human_verdict.as_ref().map(|v| v.accept),
            })
            .collect()
    }

    pub fn record_human_verdict(
        &mut self,
        name: &str,
        accept: bool,
        reviewer: &str,
        seconds: f64,
    ) -> Result<&LibraryEntry> {
        if !(seconds.is_finite() && seconds >= 0.0) {
            return Err(LibraryError::InvalidEntry(format!(
                "review seconds must be a nonnegative number, got {seconds}"
            )));
        }
        let i = self
            .index
            .entries
            .iter()
            .position(|e| e.name == name)
            .ok_or_else(|| LibraryError::UnknownName(name.into()))?;
        let previous = self.index.entries[i].human_verdict.replace(HumanVerdict {
            accept,
            reviewer: reviewer.into(),
            seconds,
            recorded_at: Utc::now(),
        });
        if let Err(e) = self.persist_index() {
            self.index.entries[i].human_verdict = previous;
            return Err(e);
        }
        Ok(&self.index.entries[i])
    }

    pub fn set_critic_votes(&mut self, name: &str, votes: Vec<CriticVote>) -> Result<()> {
        let e = self
            .index
            .entries
            .iter_mut()
            .find(|e| e.name == name)
            .ok_or_else(|| LibraryError::UnknownName(name.into()))?;
        e.critic_votes = votes;
        self.persist_index()
    }

    /// Per-reviewer acceptance rate and mean review time, sorted by reviewer.
    pub fn verdict_summary(&self) -> Vec<ReviewerSummary> {
        let mut by: BTreeMap<&str, (usize, usize, f64)> = BTreeMap::new();
        for v in self.index.entries.iter().filter_map(|e| e.human_verdict.as_ref()) {
            let s = by.entry(v.reviewer.as_str()).or_default();
            s.0 += 1;
            s.1 += v.accept as usize;
            s.2 += v.seconds;
        }
        by.into_iter()
            .map(|(reviewer, (n, acc, secs))| ReviewerSummary {
                reviewer: reviewer.into(),
                reviewed: n,
                accepted: acc,
                accept_rate: acc as f64 / n as f64,
                mean_seconds: secs / n as f64,
            })
            .collect()
    }
}
