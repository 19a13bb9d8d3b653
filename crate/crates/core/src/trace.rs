//! Trace records shared by every suite, plus ingestion and persistence.
//!
//! A trace file is UTF-8 JSON Lines. Each line is either an embedding record
//! (`"kind":"emb"`) or a log-probability record (`"kind":"lp"`). Unknown
//! fields are ignored so adapters can attach extra provenance (revision
//! hashes, timings) without breaking ingestion.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numstats::StatsError;

/// Training tokens consumed per optimizer step on the Pythia schedule.
pub const TOKENS_PER_PYTHIA_STEP: u64 = 2_000_000;

/// Surface form used to present a text item to the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextFormat {
    /// Arabic numerals, e.g. `7`.
    Digit,
    /// Lower-case number word, e.g. `seven`.
    WordLower,
    /// Capitalised number word, e.g. `Seven`.
    WordMixed,
    /// Any other text (category labels, control words, analogy terms).
    Plain,
}

impl TextFormat {
    pub const NUMBER_FORMATS: [TextFormat; 3] =
        [TextFormat::Digit, TextFormat::WordLower, TextFormat::WordMixed];

    pub fn as_str(self) -> &'static str {
        match self {
            TextFormat::Digit => "digit",
            TextFormat::WordLower => "word_lower",
            TextFormat::WordMixed => "word_mixed",
            TextFormat::Plain => "plain",
        }
    }
}

impl fmt::Display for TextFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which scoring task a log-probability record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Blimp,
    TypicalitySurprisal,
    Rpm,
    Analogy,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Blimp => "blimp",
            Task::TypicalitySurprisal => "typicality_surprisal",
            Task::Rpm => "rpm",
            Task::Analogy => "analogy",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One mean-pooled hidden-state vector for one text at one layer and checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    #[serde(rename = "model")]
    pub model_id: String,
    #[serde(rename = "step")]
    pub checkpoint_step: u64,
    #[serde(rename = "tokens")]
    pub tokens_seen: u64,
    pub layer: u32,
    pub text: String,
    #[serde(rename = "format")]
    pub text_format: TextFormat,
    #[serde(rename = "vec")]
    pub vector: Vec<f64>,
}

/// Total natural-log probability of one text under one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogProbRecord {
    #[serde(rename = "model")]
    pub model_id: String,
    #[serde(rename = "step")]
    pub checkpoint_step: u64,
    #[serde(rename = "tokens")]
    pub tokens_seen: u64,
    pub task: Task,
    #[serde(rename = "item")]
    pub item_id: String,
    #[serde(rename = "cond")]
    pub condition: String,
    pub text: String,
    #[serde(rename = "logprob")]
    pub total_logprob: f64,
    #[serde(rename = "ntok")]
    pub n_tokens: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind")]
enum TraceLine {
    #[serde(rename = "emb")]
    Emb(EmbeddingRecord),
    #[serde(rename = "lp")]
    Lp(LogProbRecord),
}

/// Identity of one training snapshot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model_id: String,
    pub checkpoint_step: u64,
    pub tokens_seen: u64,
}

impl CheckpointMeta {
    /// Checkpoint on the Pythia schedule, where every step is 2M tokens.
    pub fn pythia(model_id: impl Into<String>, checkpoint_step: u64) -> Self {
        Self {
            model_id: model_id.into(),
            checkpoint_step,
            tokens_seen: checkpoint_step * TOKENS_PER_PYTHIA_STEP,
        }
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: non-finite value in `{field}`")]
    NonFinite { line: usize, field: &'static str },
    #[error("line {line}: embedding vector is empty")]
    EmptyVector { line: usize },
    #[error("line {line}: n_tokens must be positive")]
    ZeroTokens { line: usize },
    #[error("line {line}: duplicate record {key}")]
    Duplicate { line: usize, key: String },
    #[error(
        "line {line}: tokens_seen {found} for {model}@{step} disagrees with earlier value {expected}"
    )]
    InconsistentTokens {
        line: usize,
        model: String,
        step: u64,
        expected: u64,
        found: u64,
    },
    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<TraceError>,
    },
}

#[derive(Debug, Default, Clone)]
struct CheckpointIndex {
    tokens_seen: u64,
    embeddings: HashMap<(u32, TextFormat), HashMap<String, usize>>,
    logprobs: HashMap<Task, HashMap<String, BTreeMap<String, usize>>>,
    layers: BTreeSet<u32>,
}

/// Validated, indexed collection of trace records.
///
/// Records keep their ingestion order, so writing a set back out reproduces
/// the input lines (modulo field order and float formatting).
#[derive(Debug, Default, Clone)]
pub struct TraceSet {
    embeddings: Vec<EmbeddingRecord>,
    logprobs: Vec<LogProbRecord>,
    order: Vec<RecordRef>,
    index: BTreeMap<String, BTreeMap<u64, CheckpointIndex>>,
}

#[derive(Debug, Clone, Copy)]
enum RecordRef {
    Emb(usize),
    Lp(usize),
}

impl TraceSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reads and validates one trace file.
    pub fn ingest(path: impl AsRef<Path>) -> Result<Self, TraceError> {
        let mut set = Self::new();
        set.ingest_file(path)?;
        Ok(set)
    }

    /// Reads several trace files into one set. Keys must be unique across files.
    pub fn ingest_many<P: AsRef<Path>>(paths: &[P]) -> Result<Self, TraceError> {
        let mut set = Self::new();
        for path in paths {
            set.ingest_file(path)?;
        }
        Ok(set)
    }

    fn ingest_file(&mut self, path: impl AsRef<Path>) -> Result<(), TraceError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| TraceError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.read_lines(BufReader::new(file))
            .map_err(|e| match e {
                TraceError::Io { source, .. } => TraceError::Io {
                    path: path.to_path_buf(),
                    source,
                },
                other => TraceError::InFile {
                    path: path.to_path_buf(),
                    source: Box::new(other),
                },
            })
    }

    /// Parses JSON Lines from any reader. Blank lines are skipped.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, TraceError> {
        let mut set = Self::new();
        set.read_lines(reader)?;
        Ok(set)
    }

    fn read_lines<R: BufRead>(&mut self, reader: R) -> Result<(), TraceError> {
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|source| TraceError::Io {
                path: PathBuf::new(),
                source,
            })?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let parsed: TraceLine = serde_json::from_str(trimmed).map_err(|e| {
                if contains_non_finite_token(trimmed) {
                    TraceError::NonFinite {
                        line: line_no,
                        field: "vec/logprob",
                    }
                } else {
                    TraceError::Malformed {
                        line: line_no,
                        message: e.to_string(),
                    }
                }
            })?;
            match parsed {
                TraceLine::Emb(rec) => self.insert_embedding_at(rec, line_no)?,
                TraceLine::Lp(rec) => self.insert_logprob_at(rec, line_no)?,
            }
        }
        Ok(())
    }

    /// Adds an embedding record, enforcing every record invariant.
    pub fn insert_embedding(&mut self, rec: EmbeddingRecord) -> Result<(), TraceError> {
        let line = self.len() + 1;
        self.insert_embedding_at(rec, line)
    }

    /// Adds a log-probability record, enforcing every record invariant.
    pub fn insert_logprob(&mut self, rec: LogProbRecord) -> Result<(), TraceError> {
        let line = self.len() + 1;
        self.insert_logprob_at(rec, line)
    }

    fn insert_embedding_at(&mut self, rec: EmbeddingRecord, line: usize) -> Result<(), TraceError> {
        if rec.vector.is_empty() {
            return Err(TraceError::EmptyVector { line });
        }
        if rec.vector.iter().any(|v| !v.is_finite()) {
            return Err(TraceError::NonFinite { line, field: "vec" });
        }
        let pos = self.embeddings.len();
        let ckpt = self.checkpoint_entry(&rec.model_id, rec.checkpoint_step, rec.tokens_seen, line)?;
        let slot = ckpt
            .embeddings
            .entry((rec.layer, rec.text_format))
            .or_default();
        if slot.contains_key(&rec.text) {
            return Err(TraceError::Duplicate {
                line,
                key: format!(
                    "emb {}@{} layer {} {} {:?}",
                    rec.model_id, rec.checkpoint_step, rec.layer, rec.text_format, rec.text
                ),
            });
        }
        slot.insert(rec.text.clone(), pos);
        ckpt.layers.insert(rec.layer);
        self.embeddings.push(rec);
        self.order.push(RecordRef::Emb(pos));
        Ok(())
    }

    fn insert_logprob_at(&mut self, rec: LogProbRecord, line: usize) -> Result<(), TraceError> {
        if !rec.total_logprob.is_finite() {
            return Err(TraceError::NonFinite {
                line,
                field: "logprob",
            });
        }
        if rec.n_tokens == 0 {
            return Err(TraceError::ZeroTokens { line });
        }
        let pos = self.logprobs.len();
        let ckpt = self.checkpoint_entry(&rec.model_id, rec.checkpoint_step, rec.tokens_seen, line)?;
        let conds = ckpt
            .logprobs
            .entry(rec.task)
            .or_default()
            .entry(rec.item_id.clone())
            .or_default();
        if conds.contains_key(&rec.condition) {
            return Err(TraceError::Duplicate {
                line,
                key: format!(
                    "lp {}@{} {} item {:?} cond {:?}",
                    rec.model_id, rec.checkpoint_step, rec.task, rec.item_id, rec.condition
                ),
            });
        }
        conds.insert(rec.condition.clone(), pos);
        self.logprobs.push(rec);
        self.order.push(RecordRef::Lp(pos));
        Ok(())
    }

    fn checkpoint_entry(
        &mut self,
        model: &str,
        step: u64,
        tokens: u64,
        line: usize,
    ) -> Result<&mut CheckpointIndex, TraceError> {
        let by_step = self.index.entry(model.to_string()).or_default();
        let is_new = !by_step.contains_key(&step);
        let entry = by_step.entry(step).or_default();
        if is_new {
            entry.tokens_seen = tokens;
        } else if entry.tokens_seen != tokens {
            return Err(TraceError::InconsistentTokens {
                line,
                model: model.to_string(),
                step,
                expected: entry.tokens_seen,
                found: tokens,
            });
        }
        Ok(entry)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn embeddings(&self) -> &[EmbeddingRecord] {
        &self.embeddings
    }

    pub fn logprobs(&self) -> &[LogProbRecord] {
        &self.logprobs
    }

    /// All checkpoints in (model, step) order.
    pub fn checkpoints(&self) -> Vec<CheckpointMeta> {
        self.index
            .iter()
            .flat_map(|(model, steps)| {
                steps.iter().map(move |(step, idx)| CheckpointMeta {
                    model_id: model.clone(),
                    checkpoint_step: *step,
                    tokens_seen: idx.tokens_seen,
                })
            })
            .collect()
    }

    /// Read-only view of a single checkpoint, if present.
    pub fn view<'a>(&'a self, model: &'a str, step: u64) -> Option<CheckpointView<'a>> {
        let index = self.index.get(model)?.get(&step)?;
        Some(CheckpointView {
            trace: self,
            model,
            step,
            index,
        })
    }

    /// Writes every record back out as JSON Lines in ingestion order.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.order {
            let line = match *r {
                RecordRef::Emb(i) => serde_json::to_string(&TraceLine::Emb(self.embeddings[i].clone())),
                RecordRef::Lp(i) => serde_json::to_string(&TraceLine::Lp(self.logprobs[i].clone())),
            }
            .map_err(std::io::Error::other)?;
            out.write_all(line.as_bytes())?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TraceError> {
        let path = path.as_ref();
        let io_err = |source| TraceError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = File::create(path).map_err(io_err)?;
        self.write_to(BufWriter::new(file)).map_err(io_err)
    }
}

fn contains_non_finite_token(line: &str) -> bool {
    line.contains("NaN") || line.contains("Infinity")
}

/// Borrowed view of the records belonging to one (model, step).
#[derive(Debug, Clone, Copy)]
pub struct CheckpointView<'a> {
    trace: &'a TraceSet,
    model: &'a str,
    step: u64,
    index: &'a CheckpointIndex,
}

impl<'a> CheckpointView<'a> {
    pub fn model_id(&self) -> &'a str {
        self.model
    }

    pub fn checkpoint_step(&self) -> u64 {
        self.step
    }

    pub fn tokens_seen(&self) -> u64 {
        self.index.tokens_seen
    }

    pub fn meta(&self) -> CheckpointMeta {
        CheckpointMeta {
            model_id: self.model.to_string(),
            checkpoint_step: self.step,
            tokens_seen: self.index.tokens_seen,
        }
    }

    /// Layers with at least one embedding, ascending.
    pub fn layers(&self) -> Vec<u32> {
        self.index.layers.iter().copied().collect()
    }

    pub fn embedding(&self, layer: u32, format: TextFormat, text: &str) -> Option<&'a EmbeddingRecord> {
        let pos = *self.index.embeddings.get(&(layer, format))?.get(text)?;
        Some(&self.trace.embeddings[pos])
    }

    pub fn vector(&self, layer: u32, format: TextFormat, text: &str) -> Option<&'a [f64]> {
        self.embedding(layer, format, text).map(|r| r.vector.as_slice())
    }

    pub fn logprob(&self, task: Task, item: &str, condition: &str) -> Option<&'a LogProbRecord> {
        let pos = *self.index.logprobs.get(&task)?.get(item)?.get(condition)?;
        Some(&self.trace.logprobs[pos])
    }

    pub fn has_task(&self, task: Task) -> bool {
        self.index.logprobs.get(&task).is_some_and(|m| !m.is_empty())
    }

    pub fn has_embeddings(&self) -> bool {
        !self.index.layers.is_empty()
    }

    /// Item ids recorded for a task, sorted.
    pub fn items(&self, task: Task) -> Vec<&'a str> {
        let mut items: Vec<&str> = self
            .index
            .logprobs
            .get(&task)
            .map(|m| m.keys().map(String::as_str).collect())
            .unwrap_or_default();
        items.sort_unstable();
        items
    }
}

/// Cosine of the angle between two equal-length, non-zero vectors.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(StatsError::ZeroVector);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(text: &str, layer: u32, vec: Vec<f64>) -> EmbeddingRecord {
        EmbeddingRecord {
            model_id: "m".into(),
            checkpoint_step: 1,
            tokens_seen: 2_000_000,
            layer,
            text: text.into(),
            text_format: TextFormat::Digit,
            vector: vec,
        }
    }

    #[test]
    fn ingests_three_embedding_lines() {
        let src = r#"{"kind":"emb","model":"m","step":1,"tokens":2000000,"layer":0,"text":"1","format":"digit","vec":[1.0,0.0]}
{"kind":"emb","model":"m","step":1,"tokens":2000000,"layer":0,"text":"2","format":"digit","vec":[0.0,1.0]}
{"kind":"emb","model":"m","step":1,"tokens":2000000,"layer":1,"text":"1","format":"digit","vec":[0.5,0.5],"extra":"ignored"}
"#;
        let set = TraceSet::from_reader(src.as_bytes()).unwrap();
        assert_eq!(set.len(), 3);
        let view = set.view("m", 1).unwrap();
        assert_eq!(view.layers(), vec![0, 1]);
        assert_eq!(view.vector(1, TextFormat::Digit, "1").unwrap(), &[0.5, 0.5]);
    }

    #[test]
    fn nan_entry_reports_line_number() {
        let src = "{\"kind\":\"emb\",\"model\":\"m\",\"step\":1,\"tokens\":2,\"layer\":0,\"text\":\"1\",\"format\":\"digit\",\"vec\":[1.0]}\n\
                   {\"kind\":\"emb\",\"model\":\"m\",\"step\":1,\"tokens\":2,\"layer\":0,\"text\":\"2\",\"format\":\"digit\",\"vec\":[NaN]}\n";
        let err = TraceSet::from_reader(src.as_bytes()).unwrap_err();
        assert!(matches!(err, TraceError::NonFinite { line: 2, .. }), "{err}");
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let src = "\n{\"kind\":\"lp\",\"model\":\"m\"}\n";
        let err = TraceSet::from_reader(src.as_bytes()).unwrap_err();
        assert!(matches!(err, TraceError::Malformed { line: 2, .. }), "{err}");
    }

    #[test]
    fn rejects_duplicates_and_inconsistent_tokens() {
        let mut set = TraceSet::new();
        set.insert_embedding(emb("1", 0, vec![1.0])).unwrap();
        assert!(matches!(
            set.insert_embedding(emb("1", 0, vec![2.0])),
            Err(TraceError::Duplicate { .. })
        ));
        let mut other = emb("2", 0, vec![1.0]);
        other.tokens_seen = 7;
        assert!(matches!(
            set.insert_embedding(other),
            Err(TraceError::InconsistentTokens { expected: 2_000_000, found: 7, .. })
        ));
    }

    #[test]
    fn rejects_empty_vector_and_non_finite_logprob() {
        let mut set = TraceSet::new();
        assert!(matches!(
            set.insert_embedding(emb("1", 0, vec![])),
            Err(TraceError::EmptyVector { .. })
        ));
        let lp = LogProbRecord {
            model_id: "m".into(),
            checkpoint_step: 1,
            tokens_seen: 2_000_000,
            task: Task::Blimp,
            item_id: "x".into(),
            condition: "good".into(),
            text: "t".into(),
            total_logprob: f64::NEG_INFINITY,
            n_tokens: 3,
        };
        assert!(matches!(set.insert_logprob(lp), Err(TraceError::NonFinite { .. })));
    }

    #[test]
    fn cosine_basics() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(StatsError::ZeroVector)
        ));
        assert!(matches!(
            cosine_similarity(&[1.0], &[1.0, 0.0]),
            Err(StatsError::LengthMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn cosine_matches_definition() {
        // 32 / (sqrt(14) * sqrt(77))
        let expected = 32.0 / (14.0f64.sqrt() * 77.0f64.sqrt());
        let got = cosine_similarity(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((got - expected).abs() < 1e-15);
    }

    #[test]
    fn pythia_schedule() {
        let meta = CheckpointMeta::pythia("pythia-70m", 4);
        assert_eq!(meta.tokens_seen, 8_000_000);
    }
}
