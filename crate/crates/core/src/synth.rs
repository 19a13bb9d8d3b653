//! Seeded synthetic fixtures: a multi-checkpoint trace plus the item
//! corpora it was generated for.
//!
//! Structure in the fake representations and log-probs fades in with
//! training tokens along a logistic curve in log-tokens, so every suite has
//! a developmental trajectory to find. Useful for tests, demos and
//! benchmarks; the numbers mean nothing about real models.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::concept::{build_typicality_prompts, shot_condition, PromptMode, TypicalityNorms, MAX_SHOTS};
use crate::error::{Error, Result};
use crate::fluid::{generate_rpm_items, render_rpm_candidates, surprisal_text, write_rpm_items, AnalogyItem, RenderOptions, RpmItem};
use crate::linguistic::{Level, MinimalPair, Phenomenon, PhenomenonMap, BAD, GOOD};
use crate::numeric::{default_control_words, NumberSet};
use crate::trace::{CheckpointMeta, EmbeddingRecord, LogProbRecord, Task, TextFormat, TraceSet};

/// Pythia's log-spaced early checkpoints followed by a sparse tail.
pub fn pythia_steps() -> Vec<u64> {
    let mut v: Vec<u64> = (0..10).map(|i| 1u64 << i).collect();
    v.extend([1000, 2000, 4000, 8000, 16000, 32000, 64000, 143000]);
    v
}

/// Logistic in log10(tokens), rising from 10% to 90% over two decades
/// centred on `center_log10`.
pub fn development(tokens: u64, center_log10: f64) -> f64 {
    let x = (tokens.max(1) as f64).log10();
    let k = 9f64.ln();
    1.0 / (1.0 + (-k * (x - center_log10)).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthOptions {
    pub model_id: String,
    pub steps: Vec<u64>,
    pub layers: u32,
    pub dim: usize,
    pub seed: u64,
    pub uids_per_phenomenon: usize,
    pub pairs_per_uid: usize,
    pub n_rpm: usize,
    pub n_analogy: usize,
    pub completion_runs: usize,
    /// Per-dimension noise standard deviation in embeddings.
    pub noise: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            model_id: "synthetic-160m".into(),
            steps: pythia_steps(),
            layers: 2,
            dim: 24,
            seed: 7,
            uids_per_phenomenon: 2,
            pairs_per_uid: 6,
            n_rpm: 32,
            n_analogy: 16,
            completion_runs: 4,
            noise: 0.12,
        }
    }
}

impl SynthOptions {
    /// A few checkpoints and items; fast enough for unit tests.
    pub fn small() -> Self {
        Self {
            steps: vec![1, 64, 1000, 16000, 143000],
            uids_per_phenomenon: 1,
            pairs_per_uid: 4,
            n_rpm: 8,
            n_analogy: 6,
            completion_runs: 2,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthBundle {
    pub options: SynthOptions,
    pub trace: TraceSet,
    pub blimp_pairs: Vec<MinimalPair>,
    /// (file name, JSON Lines body) in BLiMP's own format.
    pub blimp_files: Vec<(String, String)>,
    pub norms: Vec<TypicalityNorms>,
    pub rpm_items: Vec<RpmItem>,
    pub analogy_items: Vec<AnalogyItem>,
    /// Re-rank completions for the final checkpoint, by category.
    pub completions: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BundlePaths {
    pub root: PathBuf,
    pub trace: PathBuf,
    pub blimp_dir: PathBuf,
    pub norms: PathBuf,
    pub rpm: PathBuf,
    pub analogy: PathBuf,
    pub completions: PathBuf,
}

pub fn synthetic_norms() -> Vec<TypicalityNorms> {
    let cat = |name: &str, members: &[(&str, f64)]| TypicalityNorms {
        category: name.into(),
        members: members.iter().map(|(m, s)| (m.to_string(), *s)).collect(),
    };
    vec![
        cat("bird", &[("robin", 0.92), ("sparrow", 0.81), ("pigeon", 0.55), ("owl", 0.43), ("penguin", 0.18), ("ostrich", 0.09)]),
        cat("fruit", &[("orange", 0.88), ("banana", 0.76), ("pear", 0.6), ("grape", 0.47), ("fig", 0.21), ("olive", 0.05)]),
        cat("furniture", &[("sofa", 0.85), ("table", 0.83), ("bed", 0.62), ("desk", 0.5), ("lamp", 0.22), ("rug", 0.12)]),
        cat("vehicle", &[("car", 0.95), ("bus", 0.74), ("truck", 0.7), ("bicycle", 0.41), ("boat", 0.3), ("sled", 0.08)]),
    ]
}

fn unit(rng: &mut ChaCha8Rng, dim: usize, from: usize) -> Vec<f64> {
    let n = Normal::new(0.0, 1.0).expect("valid normal");
    let mut v = vec![0.0; dim];
    for x in v.iter_mut().skip(from) {
        *x = n.sample(rng);
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

fn level_center(levels: &[Level]) -> f64 {
    match levels.first() {
        Some(Level::Morphology) => 9.0,
        Some(Level::Syntax) => 9.5,
        _ => 10.0,
    }
}

pub fn synthesize(opts: &SynthOptions) -> Result<SynthBundle> {
    if opts.dim < 8 || opts.layers == 0 || opts.steps.is_empty() {
        return Err(Error::Invalid("synthetic trace needs dim >= 8, a layer and a checkpoint".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let dim = opts.dim;
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");

    // Static structure for every plain text. Number texts get a log number
    // line on dims 1 and 2 and a shared "number" direction on dim 0.
    let numbers = NumberSet::default();
    let max_ln = (*numbers.numbers.iter().max().expect("non-empty") as f64).ln();
    let mut number_base: Vec<(u32, Vec<f64>)> = Vec::new();
    for &n in &numbers.numbers {
        let theta = (n as f64).ln() / max_ln * FRAC_PI_2;
        let mut v = vec![0.0; dim];
        v[0] = 1.0;
        v[1] = theta.cos();
        v[2] = theta.sin();
        number_base.push((n, v));
    }
    let mut plain: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for w in default_control_words() {
        let u = unit(&mut rng, dim, 3);
        plain.entry(w).or_insert(u);
    }
    let norms = synthetic_norms();
    for cat in &norms {
        let u = unit(&mut rng, dim, 3);
        for (m, typ) in &cat.members {
            let other = unit(&mut rng, dim, 3);
            let v: Vec<f64> = u.iter().zip(&other).map(|(a, b)| typ * a + (1.0 - typ) * b).collect();
            plain.entry(m.clone()).or_insert(v);
        }
        plain.entry(cat.category.clone()).or_insert(u);
    }
    let mut analogy_items = Vec::new();
    for i in 0..opts.n_analogy {
        let word = |tag: &str, k: usize| format!("an{i:02}{tag}{k}");
        let rel = unit(&mut rng, dim, 3);
        let n_cand = 4;
        let answer = rng.gen_range(0..n_cand);
        let a = unit(&mut rng, dim, 3);
        let b: Vec<f64> = a.iter().zip(&rel).map(|(x, r)| x + r).collect();
        plain.insert(word("a", 0), a);
        plain.insert(word("b", 0), b);
        let mut candidates = Vec::new();
        for k in 0..n_cand {
            let c = unit(&mut rng, dim, 3);
            let r = if k == answer { rel.clone() } else { unit(&mut rng, dim, 3) };
            let d: Vec<f64> = c.iter().zip(&r).map(|(x, y)| x + y).collect();
            plain.insert(word("c", k), c);
            plain.insert(word("d", k), d);
            candidates.push((word("c", k), word("d", k)));
        }
        analogy_items.push(AnalogyItem {
            item_id: format!("analogy-{i:03}"),
            a: word("a", 0),
            b: word("b", 0),
            candidates,
            answer,
        });
    }

    // BLiMP corpus in the dataset's own file format.
    let map = PhenomenonMap::default();
    let mut blimp_files = Vec::new();
    let mut blimp_pairs = Vec::new();
    for p in Phenomenon::ALL {
        for uid in map.uids(p).into_iter().take(opts.uids_per_phenomenon) {
            let mut body = String::new();
            for i in 0..opts.pairs_per_uid {
                let good = format!("The {} example number {i} reads well.", uid.replace('_', " "));
                let bad = format!("The {} example number {i} well reads.", uid.replace('_', " "));
                body.push_str(&serde_json::json!({
                    "sentence_good": good, "sentence_bad": bad, "UID": uid, "pairID": i.to_string()
                }).to_string());
                body.push('\n');
                blimp_pairs.push(MinimalPair::new(format!("{uid}/{i}"), uid, p, &map, good, bad)?);
            }
            blimp_files.push((format!("{uid}.jsonl"), body));
        }
    }

    let rpm_items = generate_rpm_items(opts.n_rpm, opts.seed ^ 0xA5A5);
    let rpm_texts: Vec<Vec<String>> = rpm_items
        .iter()
        .map(|it| render_rpm_candidates(it, &RenderOptions::default()))
        .collect();
    let typ_prompts: Vec<_> = (0..=MAX_SHOTS)
        .map(|k| build_typicality_prompts(&norms, k, PromptMode::Surprisal, opts.seed))
        .collect::<Result<_>>()?;

    let mut trace = TraceSet::new();
    let noise = Normal::new(0.0, opts.noise).map_err(|e| Error::Invalid(e.to_string()))?;
    for &step in &opts.steps {
        let meta = CheckpointMeta::pythia(&opts.model_id, step);
        let s_num = development(meta.tokens_seen, 9.0);
        let s_plain = development(meta.tokens_seen, 9.5);
        let floor = 0.05;
        let mut emit = |rng: &mut ChaCha8Rng, layer: u32, text: &str, format: TextFormat, base: &[f64], s: f64| {
            let scale = 1.0 + 2.0 * (1.0 - s);
            let vector: Vec<f64> = base
                .iter()
                .map(|b| (floor + s) * b + scale * noise.sample(rng))
                .collect();
            trace.insert_embedding(EmbeddingRecord {
                model_id: meta.model_id.clone(),
                checkpoint_step: step,
                tokens_seen: meta.tokens_seen,
                layer,
                text: text.to_string(),
                text_format: format,
                vector,
            })
        };
        for layer in 0..opts.layers {
            for format in TextFormat::NUMBER_FORMATS {
                for (idx, (_, base)) in number_base.iter().enumerate() {
                    let text = numbers.text(idx, format).expect("1..9 have words");
                    emit(&mut rng, layer, &text, format, base, s_num)?;
                }
            }
            for (text, base) in &plain {
                emit(&mut rng, layer, text, TextFormat::Plain, base, s_plain)?;
            }
        }

        let mut lp = |task: Task, item: &str, cond: &str, text: &str, logprob: f64| {
            trace.insert_logprob(LogProbRecord {
                model_id: meta.model_id.clone(),
                checkpoint_step: step,
                tokens_seen: meta.tokens_seen,
                task,
                item_id: item.to_string(),
                condition: cond.to_string(),
                text: text.to_string(),
                total_logprob: logprob,
                n_tokens: (text.split_whitespace().count() as u32).max(1),
            })
        };
        for pair in &blimp_pairs {
            let s = development(meta.tokens_seen, level_center(&pair.levels));
            let good = -30.0 + 2.0 * std_normal.sample(&mut rng);
            let diff = 2.5 * s + std_normal.sample(&mut rng);
            lp(Task::Blimp, &pair.item_id, GOOD, &pair.sentence_good, good)?;
            lp(Task::Blimp, &pair.item_id, BAD, &pair.sentence_bad, good - diff)?;
        }
        for (k, prompts) in typ_prompts.iter().enumerate() {
            for p in prompts {
                let member = p.member.as_deref().unwrap_or_default();
                let typ = norms
                    .iter()
                    .find(|n| n.category == p.category)
                    .and_then(|n| n.members.iter().find(|(m, _)| m == member))
                    .map_or(0.0, |(_, t)| *t);
                let v = -12.0 - 8.0 * k as f64 + 4.0 * s_plain * typ + 0.5 * std_normal.sample(&mut rng);
                lp(Task::TypicalitySurprisal, &p.item_id, &shot_condition(k as u8), &p.text, v)?;
            }
        }
        let s_fluid = development(meta.tokens_seen, 10.0);
        for (item, texts) in rpm_items.iter().zip(&rpm_texts) {
            for (k, text) in texts.iter().enumerate() {
                let bonus = if k == item.answer_index { 4.0 * s_fluid } else { 0.0 };
                let v = -40.0 + bonus + std_normal.sample(&mut rng);
                lp(Task::Rpm, &item.item_id, &k.to_string(), text, v)?;
            }
        }
        for item in &analogy_items {
            for (k, (c, d)) in item.candidates.iter().enumerate() {
                let bonus = if k == item.answer { 3.0 * s_fluid } else { 0.0 };
                let v = -25.0 + bonus + std_normal.sample(&mut rng);
                lp(Task::Analogy, &item.item_id, &k.to_string(), &surprisal_text(&item.a, &item.b, c, d), v)?;
            }
        }
    }

    let mut completions = BTreeMap::new();
    for cat in &norms {
        let mut runs = Vec::new();
        for r in 0..opts.completion_runs {
            let mut order = cat.member_names();
            for _ in 0..2 {
                let i = rng.gen_range(0..order.len() - 1);
                order.swap(i, i + 1);
            }
            if r == 0 {
                order.shuffle(&mut rng);
            }
            let body: Vec<String> = order.iter().enumerate().map(|(i, m)| format!("{}. {m}", i + 1)).collect();
            runs.push(format!("Here is my ranking:\n{}", body.join("\n")));
        }
        // one malformed completion that has to be discarded
        runs.push(cat.members[0].0.clone());
        completions.insert(cat.category.clone(), runs);
    }

    Ok(SynthBundle {
        options: opts.clone(),
        trace,
        blimp_pairs,
        blimp_files,
        norms,
        rpm_items,
        analogy_items,
        completions,
    })
}

impl SynthBundle {
    /// Writes every input file under `dir` (created if missing).
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<BundlePaths> {
        let root = dir.as_ref().to_path_buf();
        let blimp_dir = root.join("blimp");
        fs::create_dir_all(&blimp_dir).map_err(Error::io(&blimp_dir))?;
        let paths = BundlePaths {
            trace: root.join("trace.jsonl"),
            norms: root.join("norms.csv"),
            rpm: root.join("rpm.jsonl"),
            analogy: root.join("analogy.jsonl"),
            completions: root.join("completions.jsonl"),
            blimp_dir,
            root,
        };
        self.trace.save(&paths.trace)?;
        for (name, body) in &self.blimp_files {
            let p = paths.blimp_dir.join(name);
            fs::write(&p, body).map_err(Error::io(&p))?;
        }
        let mut norms = String::from("category,member,score\n");
        for cat in &self.norms {
            for (m, s) in &cat.members {
                norms.push_str(&format!("{},{m},{s}\n", cat.category));
            }
        }
        fs::write(&paths.norms, norms).map_err(Error::io(&paths.norms))?;
        let mut rpm = Vec::new();
        write_rpm_items(&self.rpm_items, &mut rpm).map_err(Error::io(&paths.rpm))?;
        fs::write(&paths.rpm, rpm).map_err(Error::io(&paths.rpm))?;
        let mut analogy = String::new();
        for item in &self.analogy_items {
            analogy.push_str(&serde_json::to_string(item).map_err(|e| Error::Invalid(e.to_string()))?);
            analogy.push('\n');
        }
        fs::write(&paths.analogy, analogy).map_err(Error::io(&paths.analogy))?;
        let mut comp = String::new();
        for (cat, runs) in &self.completions {
            for (i, text) in runs.iter().enumerate() {
                comp.push_str(
                    &serde_json::json!({"category": cat, "run_index": i, "completion_text": text}).to_string(),
                );
                comp.push('\n');
            }
        }
        fs::write(&paths.completions, comp).map_err(Error::io(&paths.completions))?;
        Ok(paths)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn development_is_monotone_and_centered() {
        assert!((development(10u64.pow(9), 9.0) - 0.5).abs() < 1e-12);
        assert!((development(10u64.pow(8), 9.0) - 0.1).abs() < 1e-12);
        let a = development(2_000_000, 9.5);
        let b = development(286_000_000_000, 9.5);
        assert!(a < 0.05 && b > 0.9);
    }

    #[test]
    fn synthesis_is_deterministic() {
        let a = synthesize(&SynthOptions::small()).unwrap();
        let b = synthesize(&SynthOptions::small()).unwrap();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        a.trace.write_to(&mut x).unwrap();
        b.trace.write_to(&mut y).unwrap();
        assert_eq!(x, y);
        assert_eq!(a.trace.checkpoints().len(), 5);
    }

    #[test]
    fn bundle_files_parse_back() {
        let bundle = synthesize(&SynthOptions::small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let paths = bundle.write_to_dir(dir.path()).unwrap();
        let map = PhenomenonMap::default();
        let mut loaded = crate::linguistic::load_blimp_dir(&paths.blimp_dir, &map).unwrap();
        let mut expected = bundle.blimp_pairs.clone();
        loaded.sort_by(|a, b| a.item_id.cmp(&b.item_id));
        expected.sort_by(|a, b| a.item_id.cmp(&b.item_id));
        assert_eq!(loaded, expected);
        assert_eq!(crate::concept::load_norms(&paths.norms).unwrap(), bundle.norms);
        assert_eq!(crate::fluid::load_rpm_items(&paths.rpm).unwrap(), bundle.rpm_items);
        assert_eq!(crate::fluid::load_analogy_items(&paths.analogy).unwrap(), bundle.analogy_items);
        assert_eq!(crate::concept::load_completions(&paths.completions).unwrap(), bundle.completions);
        assert_eq!(TraceSet::ingest(&paths.trace).unwrap().len(), bundle.trace.len());
    }
}
