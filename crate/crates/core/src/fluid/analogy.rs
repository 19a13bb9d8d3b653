//! Four-term verbal analogies `A : B :: C : D`, where the model picks the
//! `(C, D)` pair that best completes the stem `(A, B)`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::argmax_lowest;
use crate::error::{Error, Result};
use crate::numstats::StatsError;
use crate::text::normalize;
use crate::trace::{cosine_similarity, CheckpointView, Task, TextFormat};

/// Keeps the cos-mul denominator away from zero.
pub const COS_MUL_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalogyItem {
    #[serde(rename = "item")]
    pub item_id: String,
    pub a: String,
    pub b: String,
    /// `(C, D)` pairs.
    pub candidates: Vec<(String, String)>,
    pub answer: usize,
}

impl AnalogyItem {
    pub fn validate(&self) -> Result<()> {
        if self.candidates.len() < 2 {
            return Err(Error::Invalid(format!("{}: needs at least two candidates", self.item_id)));
        }
        if self.answer >= self.candidates.len() {
            return Err(Error::Invalid(format!("{}: answer index out of range", self.item_id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalogyMethod {
    CosAdd,
    CosMul,
    ConcatCos,
    Surprisal,
}

impl AnalogyMethod {
    pub const ALL: [AnalogyMethod; 4] = [
        AnalogyMethod::CosAdd,
        AnalogyMethod::CosMul,
        AnalogyMethod::ConcatCos,
        AnalogyMethod::Surprisal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AnalogyMethod::CosAdd => "cos_add",
            AnalogyMethod::CosMul => "cos_mul",
            AnalogyMethod::ConcatCos => "concat_cos",
            AnalogyMethod::Surprisal => "surprisal",
        }
    }
}

impl fmt::Display for AnalogyMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn surprisal_text(a: &str, b: &str, c: &str, d: &str) -> String {
    format!("{a} is to {b} as {c} is to {d}")
}

fn vec_of<'a>(view: &CheckpointView<'a>, layer: u32, text: &str) -> Result<&'a [f64]> {
    view.vector(layer, TextFormat::Plain, text)
        .ok_or_else(|| Error::MissingEmbedding {
            text: text.to_string(),
            format: TextFormat::Plain,
            layer,
        })
}

fn cos(x: &[f64], y: &[f64], ctx: impl FnOnce() -> String) -> Result<f64> {
    cosine_similarity(x, y).map_err(|e: StatsError| Error::stats_at(ctx())(e))
}

/// One score per candidate; larger is better. `layer` is ignored for
/// `Surprisal`, which reads log-prob records with condition `"k"`.
pub fn analogy_candidate_scores(
    view: &CheckpointView<'_>,
    item: &AnalogyItem,
    method: AnalogyMethod,
    layer: u32,
) -> Result<Vec<f64>> {
    if method == AnalogyMethod::Surprisal {
        return (0..item.candidates.len())
            .map(|k| {
                let cond = k.to_string();
                view.logprob(Task::Analogy, &item.item_id, &cond)
                    .map(|r| r.total_logprob)
                    .ok_or_else(|| Error::MissingLogProb {
                        task: Task::Analogy.to_string(),
                        item: item.item_id.clone(),
                        condition: cond,
                    })
            })
            .collect();
    }
    let va = vec_of(view, layer, &item.a)?;
    let vb = vec_of(view, layer, &item.b)?;
    item.candidates
        .iter()
        .map(|(c, d)| {
            let vc = vec_of(view, layer, c)?;
            let vd = vec_of(view, layer, d)?;
            let ctx = || format!("{} candidate ({c}, {d})", item.item_id);
            match method {
                AnalogyMethod::CosAdd => {
                    if vc.len() != va.len() || vb.len() != va.len() {
                        return Err(Error::stats_at(ctx())(StatsError::LengthMismatch {
                            left: va.len(),
                            right: vc.len().max(vb.len()),
                        }));
                    }
                    let target: Vec<f64> = (0..va.len()).map(|i| vc[i] - va[i] + vb[i]).collect();
                    cos(vd, &target, ctx)
                }
                AnalogyMethod::CosMul => {
                    let db = cos(vd, vb, ctx)?;
                    let dc = cos(vd, vc, ctx)?;
                    let da = cos(vd, va, ctx)?;
                    Ok(db * dc / (da + COS_MUL_EPSILON))
                }
                AnalogyMethod::ConcatCos => {
                    let ab: Vec<f64> = va.iter().chain(vb).copied().collect();
                    let cd: Vec<f64> = vc.iter().chain(vd).copied().collect();
                    cos(&ab, &cd, ctx)
                }
                AnalogyMethod::Surprisal => unreachable!("handled above"),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalogyScore {
    pub method: String,
    pub accuracy: f64,
    pub n_items: usize,
    pub n_correct: usize,
    pub n_tied: usize,
}

pub fn analogy_accuracy(
    view: &CheckpointView<'_>,
    items: &[AnalogyItem],
    method: AnalogyMethod,
    layer: u32,
) -> Result<AnalogyScore> {
    if items.is_empty() {
        return Err(Error::Invalid("no analogy items to score".into()));
    }
    let (mut correct, mut tied) = (0, 0);
    for item in items {
        let scores = analogy_candidate_scores(view, item, method, layer)?;
        let (best, tie) = argmax_lowest(&scores)
            .ok_or_else(|| Error::Invalid(format!("{}: non-finite candidate score", item.item_id)))?;
        correct += usize::from(best == item.answer);
        tied += usize::from(tie);
    }
    Ok(AnalogyScore {
        method: method.to_string(),
        accuracy: correct as f64 / items.len() as f64,
        n_items: items.len(),
        n_correct: correct,
        n_tied: tied,
    })
}

fn contains_phrase(hay: &str, needle: &str) -> bool {
    let h: Vec<&str> = hay.split(' ').collect();
    let n: Vec<&str> = needle.split(' ').collect();
    !n.is_empty() && h.windows(n.len()).any(|w| w == n.as_slice())
}

/// Reads a free-text answer. A bare number `1..=n` selects by position;
/// otherwise exactly one candidate's `C` and `D` must both appear. Anything
/// else is `None`.
pub fn parse_analogy_choice(item: &AnalogyItem, completion: &str) -> Option<usize> {
    let text = normalize(completion);
    if let Ok(k) = text.parse::<usize>() {
        return (1..=item.candidates.len()).contains(&k).then(|| k - 1);
    }
    let hits: Vec<usize> = item
        .candidates
        .iter()
        .enumerate()
        .filter(|(_, (c, d))| contains_phrase(&text, &normalize(c)) && contains_phrase(&text, &normalize(d)))
        .map(|(k, _)| k)
        .collect();
    match hits.as_slice() {
        [k] => Some(*k),
        _ => None,
    }
}

/// Accuracy over parseable completions, keyed by item id. Returns `None`
/// when nothing parses.
pub fn analogy_prompt_accuracy(
    items: &[AnalogyItem],
    completions: &BTreeMap<String, Vec<String>>,
) -> Option<AnalogyScore> {
    let (mut n, mut correct) = (0, 0);
    for item in items {
        for text in completions.get(&item.item_id).into_iter().flatten() {
            if let Some(k) = parse_analogy_choice(item, text) {
                n += 1;
                correct += usize::from(k == item.answer);
            }
        }
    }
    (n > 0).then(|| AnalogyScore {
        method: "prompt".into(),
        accuracy: correct as f64 / n as f64,
        n_items: n,
        n_correct: correct,
        n_tied: 0,
    })
}

pub fn parse_analogy_items<R: BufRead>(reader: R) -> Result<Vec<AnalogyItem>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(Error::io("<analogy>"))?;
        if line.trim().is_empty() {
            continue;
        }
        let item: AnalogyItem = serde_json::from_str(&line)
            .map_err(|e| Error::Invalid(format!("analogy line {}: {e}", i + 1)))?;
        item.validate()?;
        out.push(item);
    }
    Ok(out)
}

pub fn load_analogy_items(path: impl AsRef<Path>) -> Result<Vec<AnalogyItem>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(Error::io(path))?;
    parse_analogy_items(std::io::BufReader::new(file)).map_err(|e| Error::parse(path, e))
}
