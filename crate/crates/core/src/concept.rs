//! Category typicality: how well model preferences over category members
//! track human production norms.
//!
//! Three routes produce a model score per member: cosine between member
//! and category embeddings, total log-probability of "a member is a
//! category" with zero to three exemplar sentences in context, and rank
//! positions parsed from free-text re-rank completions. Each route is scored
//! with a per-category Spearman correlation against the human norms.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::BufRead;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numstats::{mean, spearman, StatsError};
use crate::text::{indefinite_article, normalize};
use crate::trace::{cosine_similarity, CheckpointView, Task, TextFormat};

pub const MAX_SHOTS: u8 = 3;

/// Human production norms for one category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypicalityNorms {
    pub category: String,
    /// (member, proportion of participants producing it)
    pub members: Vec<(String, f64)>,
}

impl TypicalityNorms {
    pub fn validate(&self) -> Result<()> {
        if self.members.len() < 2 {
            return Err(Error::Invalid(format!(
                "category {:?} needs at least two members",
                self.category
            )));
        }
        if self.members.iter().any(|(_, s)| !s.is_finite() || *s < 0.0) {
            return Err(Error::Invalid(format!(
                "category {:?} has a negative or non-finite score",
                self.category
            )));
        }
        let first = self.members[0].1;
        if self.members.iter().all(|(_, s)| *s == first) {
            return Err(Error::Invalid(format!(
                "category {:?} has identical human scores",
                self.category
            )));
        }
        let distinct: BTreeSet<String> = self.members.iter().map(|(m, _)| normalize(m)).collect();
        if distinct.len() != self.members.len() {
            return Err(Error::Invalid(format!(
                "category {:?} lists a member twice",
                self.category
            )));
        }
        Ok(())
    }

    pub fn human_scores(&self) -> Vec<f64> {
        self.members.iter().map(|(_, s)| *s).collect()
    }

    pub fn member_names(&self) -> Vec<String> {
        self.members.iter().map(|(m, _)| m.clone()).collect()
    }
}

#[derive(Debug, Deserialize)]
struct NormRow {
    category: String,
    member: String,
    score: f64,
}

/// Reads `category,member,score` rows (with header). Categories keep their
/// first-appearance order.
pub fn parse_norms_csv<R: std::io::Read>(reader: R) -> Result<Vec<TypicalityNorms>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut order: Vec<String> = Vec::new();
    let mut by_cat: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    for (i, row) in rdr.deserialize::<NormRow>().enumerate() {
        let row = row.map_err(|e| Error::Invalid(format!("norms row {}: {e}", i + 2)))?;
        if !by_cat.contains_key(&row.category) {
            order.push(row.category.clone());
        }
        by_cat.entry(row.category).or_default().push((row.member, row.score));
    }
    let norms: Vec<TypicalityNorms> = order
        .into_iter()
        .map(|category| {
            let members = by_cat.remove(&category).unwrap_or_default();
            TypicalityNorms { category, members }
        })
        .collect();
    for n in &norms {
        n.validate()?;
    }
    if norms.is_empty() {
        return Err(Error::Invalid("norms file has no rows".into()));
    }
    Ok(norms)
}

pub fn load_norms(path: impl AsRef<Path>) -> Result<Vec<TypicalityNorms>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(Error::io(path))?;
    parse_norms_csv(file).map_err(|e| Error::parse(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TypicalityMethod {
    Latent,
    Surprisal { shots: u8 },
    Prompting,
}

impl fmt::Display for TypicalityMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypicalityMethod::Latent => f.write_str("latent"),
            TypicalityMethod::Surprisal { shots } => write!(f, "surprisal_{shots}shot"),
            TypicalityMethod::Prompting => f.write_str("prompting"),
        }
    }
}

impl Serialize for TypicalityMethod {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TypicalityMethod {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        match s.as_str() {
            "latent" => Ok(TypicalityMethod::Latent),
            "prompting" => Ok(TypicalityMethod::Prompting),
            other => other
                .strip_prefix("surprisal_")
                .and_then(|r| r.strip_suffix("shot"))
                .and_then(|k| k.parse().ok())
                .map(|shots| TypicalityMethod::Surprisal { shots })
                .ok_or_else(|| serde::de::Error::custom(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypicalityResult {
    pub method: TypicalityMethod,
    pub per_category: BTreeMap<String, f64>,
    /// Unweighted mean of `per_category`; `None` when no category is defined.
    pub average: Option<f64>,
    /// Categories left out, with the reason.
    pub skipped: BTreeMap<String, String>,
}

impl TypicalityResult {
    fn finish(
        method: TypicalityMethod,
        per_category: BTreeMap<String, f64>,
        skipped: BTreeMap<String, String>,
    ) -> Self {
        let vals: Vec<f64> = per_category.values().copied().collect();
        Self {
            method,
            average: (!vals.is_empty()).then(|| mean(&vals)),
            per_category,
            skipped,
        }
    }
}

fn category_spearman(model: &[f64], norms: &TypicalityNorms) -> std::result::Result<f64, String> {
    match spearman(model, &norms.human_scores()) {
        Ok(r) => Ok(r),
        Err(StatsError::ConstantInput) => Err("model scores are constant".into()),
        Err(e) => Err(e.to_string()),
    }
}

/// Cosine(member, category) at one layer, correlated with the norms.
pub fn latent_typicality(
    view: &CheckpointView<'_>,
    norms: &[TypicalityNorms],
    layer: u32,
) -> Result<TypicalityResult> {
    let mut per_category = BTreeMap::new();
    let mut skipped = BTreeMap::new();
    for cat in norms {
        let get = |text: &str| {
            view.vector(layer, TextFormat::Plain, text)
                .ok_or_else(|| Error::MissingEmbedding {
                    text: text.to_string(),
                    format: TextFormat::Plain,
                    layer,
                })
        };
        let cat_vec = get(&cat.category)?;
        let scores = cat
            .members
            .iter()
            .map(|(m, _)| {
                cosine_similarity(get(m)?, cat_vec).map_err(Error::stats_at(format!(
                    "cosine({m}, {}) at layer {layer}",
                    cat.category
                )))
            })
            .collect::<Result<Vec<f64>>>()?;
        match category_spearman(&scores, cat) {
            Ok(r) => {
                per_category.insert(cat.category.clone(), r);
            }
            Err(why) => {
                skipped.insert(cat.category.clone(), why);
            }
        }
    }
    Ok(TypicalityResult::finish(TypicalityMethod::Latent, per_category, skipped))
}

/// Latent typicality averaged over layers: each category's value is the
/// mean of its per-layer correlations.
pub fn latent_typicality_layers(
    view: &CheckpointView<'_>,
    norms: &[TypicalityNorms],
    layers: &[u32],
) -> Result<TypicalityResult> {
    let mut acc: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut reasons: BTreeMap<String, String> = BTreeMap::new();
    for &layer in layers {
        let r = latent_typicality(view, norms, layer)?;
        for (c, v) in r.per_category {
            acc.entry(c).or_default().push(v);
        }
        for (c, why) in r.skipped {
            reasons.entry(c).or_insert(format!("layer {layer}: {why}"));
        }
    }
    let per_category: BTreeMap<String, f64> = acc.into_iter().map(|(c, v)| (c, mean(&v))).collect();
    let skipped = reasons
        .into_iter()
        .filter(|(c, _)| !per_category.contains_key(c))
        .collect();
    Ok(TypicalityResult::finish(TypicalityMethod::Latent, per_category, skipped))
}

pub fn typicality_item_id(category: &str, member: &str) -> String {
    format!("{category}::{member}")
}

pub fn shot_condition(shots: u8) -> String {
    format!("{shots}shot")
}

/// Total log-probability of the k-shot "member is a category" sequence.
pub fn surprisal_typicality(
    view: &CheckpointView<'_>,
    norms: &[TypicalityNorms],
    shots: u8,
) -> Result<TypicalityResult> {
    if shots > MAX_SHOTS {
        return Err(Error::Invalid(format!("shots must be 0..={MAX_SHOTS}, got {shots}")));
    }
    let cond = shot_condition(shots);
    let mut per_category = BTreeMap::new();
    let mut skipped = BTreeMap::new();
    for cat in norms {
        let scores = cat
            .members
            .iter()
            .map(|(m, _)| {
                let item = typicality_item_id(&cat.category, m);
                view.logprob(Task::TypicalitySurprisal, &item, &cond)
                    .map(|r| r.total_logprob)
                    .ok_or(Error::MissingLogProb {
                        task: Task::TypicalitySurprisal.to_string(),
                        item,
                        condition: cond.clone(),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        match category_spearman(&scores, cat) {
            Ok(r) => {
                per_category.insert(cat.category.clone(), r);
            }
            Err(why) => {
                skipped.insert(cat.category.clone(), why);
            }
        }
    }
    Ok(TypicalityResult::finish(
        TypicalityMethod::Surprisal { shots },
        per_category,
        skipped,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscardReason {
    MissingOption,
    DuplicateOption,
    /// Two options collapse to the same normalised label.
    AmbiguousOptions,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankParse {
    /// Option indices, most typical first. Always a full permutation.
    Ranked(Vec<usize>),
    Discard(DiscardReason),
}

fn strip_list_marker(line: &str) -> &str {
    let t = line.trim_start();
    let t = t.trim_start_matches(['-', '*', '•']);
    let digits = t.len() - t.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits > 0 {
        let rest = &t[digits..];
        if let Some(r) = rest.strip_prefix(['.', ')', ':']) {
            return r;
        }
    }
    t
}

/// Matches each completion line to one option (case, whitespace and
/// punctuation are ignored; a leading list marker such as `1.` or `-` is
/// tolerated). Lines that match no option are ignored. Anything short of
/// every option exactly once is discarded.
pub fn parse_rank_completion(options: &[String], completion: &str) -> RankParse {
    let keys: Vec<String> = options.iter().map(|o| normalize(o)).collect();
    let distinct: BTreeSet<&String> = keys.iter().collect();
    if options.is_empty() || distinct.len() != keys.len() || keys.iter().any(String::is_empty) {
        return RankParse::Discard(DiscardReason::AmbiguousOptions);
    }
    let find = |s: &str| {
        let n = normalize(s);
        keys.iter().position(|k| *k == n)
    };
    let mut ranking = Vec::with_capacity(options.len());
    let mut used = vec![false; options.len()];
    for line in completion.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let Some(idx) = find(line).or_else(|| find(strip_list_marker(line))) else {
            continue;
        };
        if used[idx] {
            return RankParse::Discard(DiscardReason::DuplicateOption);
        }
        used[idx] = true;
        ranking.push(idx);
    }
    if ranking.len() != options.len() {
        return RankParse::Discard(DiscardReason::MissingOption);
    }
    RankParse::Ranked(ranking)
}

/// Spearman of parsed rankings against the norms, averaged per category
/// over retained completions and then across categories.
pub fn prompting_typicality(
    norms: &[TypicalityNorms],
    completions: &BTreeMap<String, Vec<String>>,
) -> TypicalityResult {
    let mut per_category = BTreeMap::new();
    let mut skipped = BTreeMap::new();
    for cat in norms {
        let Some(runs) = completions.get(&cat.category) else {
            continue;
        };
        let options = cat.member_names();
        let mut rhos = Vec::new();
        let mut discarded = 0usize;
        for text in runs {
            match parse_rank_completion(&options, text) {
                RankParse::Ranked(order) => {
                    let mut model = vec![0.0; options.len()];
                    for (pos, &idx) in order.iter().enumerate() {
                        model[idx] = -(pos as f64);
                    }
                    match category_spearman(&model, cat) {
                        Ok(r) => rhos.push(r),
                        Err(_) => discarded += 1,
                    }
                }
                RankParse::Discard(_) => discarded += 1,
            }
        }
        if rhos.is_empty() {
            skipped.insert(
                cat.category.clone(),
                format!("no usable completions ({discarded} discarded)"),
            );
        } else {
            per_category.insert(cat.category.clone(), mean(&rhos));
        }
    }
    for cat in completions.keys() {
        if !norms.iter().any(|n| &n.category == cat) {
            skipped.insert(cat.clone(), "category not in norms".into());
        }
    }
    TypicalityResult::finish(TypicalityMethod::Prompting, per_category, skipped)
}

#[derive(Debug, Deserialize)]
struct CompletionLine {
    category: String,
    run_index: u32,
    completion_text: String,
}

/// Reads `{category, run_index, completion_text}` lines, grouped by category
/// and ordered by run index.
pub fn parse_completions<R: BufRead>(reader: R) -> Result<BTreeMap<String, Vec<String>>> {
    let mut runs: BTreeMap<String, BTreeMap<u32, String>> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(Error::io("<completions>"))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CompletionLine = serde_json::from_str(&line)
            .map_err(|e| Error::Invalid(format!("completions line {}: {e}", i + 1)))?;
        if runs
            .entry(rec.category.clone())
            .or_default()
            .insert(rec.run_index, rec.completion_text)
            .is_some()
        {
            return Err(Error::Invalid(format!(
                "completions line {}: duplicate run {} for {:?}",
                i + 1,
                rec.run_index,
                rec.category
            )));
        }
    }
    Ok(runs
        .into_iter()
        .map(|(c, m)| (c, m.into_values().collect()))
        .collect())
}

pub fn load_completions(path: impl AsRef<Path>) -> Result<BTreeMap<String, Vec<String>>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(Error::io(path))?;
    parse_completions(std::io::BufReader::new(file)).map_err(|e| Error::parse(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    Surprisal,
    Prompting,
}

/// A text the model adapter should score (surprisal) or complete (prompting).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypicalityPrompt {
    pub category: String,
    /// Set for surprisal items only.
    pub member: Option<String>,
    pub item_id: String,
    pub condition: String,
    pub text: String,
    /// Options in presented order (prompting only).
    pub options: Vec<String>,
}

pub const TYPICALITY_GUIDELINES: &str = "Some members of a category are better examples of it than others. \
Re-rank the options below from the most typical to the least typical member of the category named in the query. \
Write every option exactly once, one per line, and nothing else.";

/// "A pigeon is a bird."
pub fn membership_sentence(member: &str, category: &str) -> String {
    let art = indefinite_article(member);
    let mut first = art.chars();
    let cap: String = first
        .next()
        .map(|c| c.to_uppercase().chain(first).collect())
        .unwrap_or_default();
    format!("{cap} {member} is {} {category}.", indefinite_article(category))
}

fn sample_exemplars(
    norms: &[TypicalityNorms],
    exclude: usize,
    shots: u8,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<String>> {
    let pool: Vec<(usize, usize)> = norms
        .iter()
        .enumerate()
        .filter(|(ci, _)| *ci != exclude)
        .flat_map(|(ci, n)| (0..n.members.len()).map(move |mi| (ci, mi)))
        .collect();
    if pool.len() < shots as usize {
        return Err(Error::Invalid(format!(
            "{shots}-shot context needs exemplars from other categories; only {} available",
            pool.len()
        )));
    }
    Ok(pool
        .choose_multiple(rng, shots as usize)
        .map(|&(ci, mi)| membership_sentence(&norms[ci].members[mi].0, &norms[ci].category))
        .collect())
}

/// Deterministic prompt texts for the adapter. Exemplars come from other
/// categories; prompting options are shuffled with the seeded generator.
pub fn build_typicality_prompts(
    norms: &[TypicalityNorms],
    shots: u8,
    mode: PromptMode,
    seed: u64,
) -> Result<Vec<TypicalityPrompt>> {
    if shots > MAX_SHOTS {
        return Err(Error::Invalid(format!("shots must be 0..={MAX_SHOTS}, got {shots}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cond = shot_condition(shots);
    let mut out = Vec::new();
    for (ci, cat) in norms.iter().enumerate() {
        match mode {
            PromptMode::Surprisal => {
                for (member, _) in &cat.members {
                    let mut lines = sample_exemplars(norms, ci, shots, &mut rng)?;
                    lines.push(membership_sentence(member, &cat.category));
                    out.push(TypicalityPrompt {
                        category: cat.category.clone(),
                        member: Some(member.clone()),
                        item_id: typicality_item_id(&cat.category, member),
                        condition: cond.clone(),
                        text: lines.join("\n"),
                        options: Vec::new(),
                    });
                }
            }
            PromptMode::Prompting => {
                let exemplars = sample_exemplars(norms, ci, shots, &mut rng)?;
                let mut options = cat.member_names();
                options.shuffle(&mut rng);
                let mut text = String::from(TYPICALITY_GUIDELINES);
                text.push_str("\n\n");
                for e in &exemplars {
                    text.push_str("Example: ");
                    text.push_str(e);
                    text.push('\n');
                }
                text.push_str(&format!("Query: The ___ is a \"{}\"\n\nOptions:\n", cat.category));
                text.push_str(&options.join("\n"));
                out.push(TypicalityPrompt {
                    category: cat.category.clone(),
                    member: None,
                    item_id: cat.category.clone(),
                    condition: cond.clone(),
                    text,
                    options,
                });
            }
        }
    }
    Ok(out)
}
