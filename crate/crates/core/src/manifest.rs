//! Request manifest for the model adapter.
//!
//! One JSON object per line. Embedding requests carry `text`, `formats` and
//! `layers` (empty means every layer). Log-prob requests carry `task`,
//! `item`, `cond` and the full `text`; the adapter echoes `task`, `item`
//! and `cond` into the matching trace record. `typicality_prompt` lines ask
//! for free-text completions instead of a score.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::concept::{build_typicality_prompts, PromptMode, TypicalityNorms};
use crate::error::{Error, Result};
use crate::fluid::{render_rpm_candidates, surprisal_text, AnalogyItem, RenderOptions, RpmItem};
use crate::linguistic::{MinimalPair, BAD, GOOD};
use crate::numeric::NumberSet;
use crate::trace::{Task, TextFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    Embedding,
    Blimp,
    TypicalitySurprisal,
    Rpm,
    Analogy,
    TypicalityPrompt,
}

impl RequestKind {
    /// The trace task a log-prob request feeds.
    pub fn score_task(self) -> Option<Task> {
        match self {
            RequestKind::Blimp => Some(Task::Blimp),
            RequestKind::TypicalitySurprisal => Some(Task::TypicalitySurprisal),
            RequestKind::Rpm => Some(Task::Rpm),
            RequestKind::Analogy => Some(Task::Analogy),
            RequestKind::Embedding | RequestKind::TypicalityPrompt => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub task: RequestKind,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cond: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub formats: Vec<TextFormat>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub layers: Vec<u32>,
}

impl ManifestEntry {
    pub fn embedding(text: impl Into<String>, format: TextFormat, layers: &[u32]) -> Self {
        Self {
            task: RequestKind::Embedding,
            text: text.into(),
            item: None,
            cond: None,
            formats: vec![format],
            layers: layers.to_vec(),
        }
    }

    pub fn scored(task: RequestKind, item: impl Into<String>, cond: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            task,
            text: text.into(),
            item: Some(item.into()),
            cond: Some(cond.into()),
            formats: Vec::new(),
            layers: Vec::new(),
        }
    }
}

/// Accumulates requests; repeated embedding requests are dropped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    seen_embeddings: BTreeSet<(String, TextFormat)>,
    /// Layers attached to every embedding request added from now on.
    pub layers: Vec<u32>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn add_embedding(&mut self, text: &str, format: TextFormat) {
        if self.seen_embeddings.insert((text.to_string(), format)) {
            self.entries.push(ManifestEntry::embedding(text, format, &self.layers));
        }
    }

    pub fn add_numbers(&mut self, numbers: &NumberSet, formats: &[TextFormat], control_words: &[String]) {
        for &f in formats {
            for t in numbers.texts(f) {
                self.add_embedding(&t, f);
            }
        }
        for w in control_words {
            self.add_embedding(w, TextFormat::Plain);
        }
    }

    pub fn add_blimp(&mut self, pairs: &[MinimalPair]) {
        for p in pairs {
            self.entries
                .push(ManifestEntry::scored(RequestKind::Blimp, &p.item_id, GOOD, &p.sentence_good));
            self.entries
                .push(ManifestEntry::scored(RequestKind::Blimp, &p.item_id, BAD, &p.sentence_bad));
        }
    }

    /// Plain embeddings for every category and member, surprisal texts for
    /// each shot count, and re-rank prompts for each shot count.
    pub fn add_typicality(&mut self, norms: &[TypicalityNorms], shots: &[u8], seed: u64) -> Result<()> {
        for cat in norms {
            self.add_embedding(&cat.category, TextFormat::Plain);
            for (m, _) in &cat.members {
                self.add_embedding(m, TextFormat::Plain);
            }
        }
        for &k in shots {
            for p in build_typicality_prompts(norms, k, PromptMode::Surprisal, seed)? {
                self.entries.push(ManifestEntry::scored(
                    RequestKind::TypicalitySurprisal,
                    p.item_id,
                    p.condition,
                    p.text,
                ));
            }
            for p in build_typicality_prompts(norms, k, PromptMode::Prompting, seed)? {
                self.entries.push(ManifestEntry::scored(
                    RequestKind::TypicalityPrompt,
                    p.item_id,
                    p.condition,
                    p.text,
                ));
            }
        }
        Ok(())
    }

    pub fn add_rpm(&mut self, items: &[RpmItem], opts: &RenderOptions) {
        for item in items {
            for (k, text) in render_rpm_candidates(item, opts).into_iter().enumerate() {
                self.entries
                    .push(ManifestEntry::scored(RequestKind::Rpm, &item.item_id, k.to_string(), text));
            }
        }
    }

    pub fn add_analogies(&mut self, items: &[AnalogyItem]) {
        for item in items {
            self.add_embedding(&item.a, TextFormat::Plain);
            self.add_embedding(&item.b, TextFormat::Plain);
            for (k, (c, d)) in item.candidates.iter().enumerate() {
                self.add_embedding(c, TextFormat::Plain);
                self.add_embedding(d, TextFormat::Plain);
                self.entries.push(ManifestEntry::scored(
                    RequestKind::Analogy,
                    &item.item_id,
                    k.to_string(),
                    surprisal_text(&item.a, &item.b, c, d),
                ));
            }
        }
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub fn parse_manifest<R: BufRead>(reader: R) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(Error::io("<manifest>"))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(&line)
            .map_err(|e| Error::Invalid(format!("manifest line {}: {e}", i + 1)))?;
        let ok = match entry.task {
            RequestKind::Embedding => !entry.formats.is_empty(),
            _ => entry.item.is_some() && entry.cond.is_some(),
        };
        if !ok {
            return Err(Error::Invalid(format!("manifest line {}: missing fields for {:?}", i + 1, entry.task)));
        }
        out.push(entry);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fluid::generate_rpm_items;

    #[test]
    fn embeddings_are_deduplicated() {
        let mut m = Manifest::new();
        m.add_numbers(&NumberSet::default(), &[TextFormat::Digit], &["dog".into()]);
        m.add_embedding("dog", TextFormat::Plain);
        assert_eq!(m.len(), 10);
    }

    #[test]
    fn round_trip_and_wire_shape() {
        let mut m = Manifest::new();
        m.layers = vec![0, 3];
        m.add_embedding("7", TextFormat::Digit);
        m.add_rpm(&generate_rpm_items(1, 0), &RenderOptions::default());
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(r#"{"task":"embedding","text":"7","formats":["digit"],"layers":[0,3]}"#));
        assert!(text.contains(r#""task":"rpm","#));
        let back = parse_manifest(buf.as_slice()).unwrap();
        assert_eq!(back, m.entries);
        assert_eq!(back.iter().filter(|e| e.task.score_task() == Some(Task::Rpm)).count(), 8);
    }

    #[test]
    fn rejects_incomplete_lines() {
        assert!(parse_manifest(r#"{"task":"blimp","text":"x"}"#.as_bytes()).is_err());
    }
}
