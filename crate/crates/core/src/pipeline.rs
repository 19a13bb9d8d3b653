//! End-to-end runs: load a trace and corpora, score every checkpoint with
//! the selected suites, and write a report bundle.
//!
//! Suites run on separate threads over the same immutable [`TraceSet`]; the
//! bundle is assembled afterwards on the calling thread. A failing
//! checkpoint does not stop a suite: the error is logged with its context,
//! the suite is marked incomplete in `manifest.json`, and everything that
//! did succeed is still written.
//!
//! Bundle layout under `out`:
//!
//! ```text
//! <suite>.json / <suite>.csv   per-suite results
//! scores.csv                   every scalar score
//! report.md                    combined per-checkpoint table
//! trajectories/*.csv           one curve per (model, suite, submetric)
//! windows.json                 development windows
//! manifest.json                run metadata, incomplete suites, errors
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::concept::{
    latent_typicality_layers, load_completions, load_norms, prompting_typicality, surprisal_typicality,
    TypicalityNorms, TypicalityResult, MAX_SHOTS,
};
use crate::error::{Error, Result};
use crate::fluid::{
    analogy_accuracy, generate_rpm_items, load_analogy_items, load_rpm_items, score_rpm, AnalogyItem,
    AnalogyMethod, AnalogyScore, RpmItem,
};
use crate::linguistic::{aggregate_blimp, blimp_verdicts, load_blimp_dir, MinimalPair, PhenomenonMap, ScoreOptions};
use crate::numeric::{numeric_report, NumericConfig};
use crate::score::{Suite, SuiteScore};
use crate::trace::{CheckpointMeta, CheckpointView, Task, TraceSet};
use crate::trajectory::{annotate, build_curves, write_curve_csv, WindowOptions, MIN_POINTS};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RpmGenerate {
    pub count: usize,
    /// Falls back to the run seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TypicalityConfig {
    pub shots: Vec<u8>,
    /// Layers averaged for latent typicality; `None` means all.
    pub layers: Option<Vec<u32>>,
}

impl Default for TypicalityConfig {
    fn default() -> Self {
        Self {
            shots: (0..=MAX_SHOTS).collect(),
            layers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub traces: Vec<PathBuf>,
    pub blimp_dir: Option<PathBuf>,
    /// Alternative UID-to-phenomenon table; the shipped one otherwise.
    pub phenomena: Option<PathBuf>,
    pub norms: Option<PathBuf>,
    pub completions: Option<PathBuf>,
    pub rpm: Option<PathBuf>,
    pub rpm_generate: Option<RpmGenerate>,
    pub analogy: Option<PathBuf>,
    /// Layer for the vector analogy scorers; the deepest layer otherwise.
    pub analogy_layer: Option<u32>,
    pub suites: Vec<Suite>,
    pub seed: u64,
    pub out: PathBuf,
    pub numeric: NumericConfig,
    pub blimp: ScoreOptions,
    pub typicality: TypicalityConfig,
    pub window: WindowOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            traces: Vec::new(),
            blimp_dir: None,
            phenomena: None,
            norms: None,
            completions: None,
            rpm: None,
            rpm_generate: None,
            analogy: None,
            analogy_layer: None,
            suites: Suite::ALL.to_vec(),
            seed: 0,
            out: PathBuf::from("report"),
            numeric: NumericConfig::default(),
            blimp: ScoreOptions::default(),
            typicality: TypicalityConfig::default(),
            window: WindowOptions::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(src: &str) -> Result<Self> {
        toml::from_str(src).map_err(|e| Error::Invalid(format!("run config: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Invalid(format!("run config: {e}")))
    }

    /// Reads a TOML config; relative paths are taken relative to the file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let src = fs::read_to_string(path).map_err(Error::io(path))?;
        let mut cfg = Self::from_toml(&src).map_err(|e| Error::parse(path, e))?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.traces.iter_mut().for_each(fix);
        for p in [
            &mut self.blimp_dir,
            &mut self.phenomena,
            &mut self.norms,
            &mut self.completions,
            &mut self.rpm,
            &mut self.analogy,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut self.out);
    }

    /// Checks everything that can be checked before reading inputs.
    pub fn validate(&self) -> Result<()> {
        if self.traces.is_empty() {
            return Err(Error::Invalid("no trace files given".into()));
        }
        if self.suites.is_empty() {
            return Err(Error::Invalid("no suites selected".into()));
        }
        let mut paths: Vec<&PathBuf> = self.traces.iter().collect();
        paths.extend(
            [&self.blimp_dir, &self.phenomena, &self.norms, &self.completions, &self.rpm, &self.analogy]
                .into_iter()
                .flatten(),
        );
        for p in paths {
            if !p.exists() {
                return Err(Error::Invalid(format!("input path does not exist: {}", p.display())));
            }
        }
        self.numeric.numbers.validate()?;
        if let Some(&k) = self.typicality.shots.iter().find(|&&k| k > MAX_SHOTS) {
            return Err(Error::Invalid(format!("typicality shots must be 0..={MAX_SHOTS}, got {k}")));
        }
        Ok(())
    }
}

/// Inputs shared read-only by all suite threads.
struct Inputs {
    trace: TraceSet,
    checkpoints: Vec<CheckpointMeta>,
    blimp: Option<Vec<MinimalPair>>,
    norms: Option<Vec<TypicalityNorms>>,
    completions: Option<BTreeMap<String, Vec<String>>>,
    rpm: Option<Vec<RpmItem>>,
    analogy: Option<Vec<AnalogyItem>>,
}

fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let trace = TraceSet::ingest_many(&cfg.traces)?;
    if trace.is_empty() {
        return Err(Error::Invalid("trace contains no records".into()));
    }
    let checkpoints = trace.checkpoints();
    let wants = |s: Suite| cfg.suites.contains(&s);
    let blimp = match (&cfg.blimp_dir, wants(Suite::Blimp)) {
        (Some(dir), true) => {
            let map = match &cfg.phenomena {
                Some(p) => PhenomenonMap::load(p)?,
                None => PhenomenonMap::default(),
            };
            Some(load_blimp_dir(dir, &map)?)
        }
        _ => None,
    };
    let norms = match (&cfg.norms, wants(Suite::Typicality)) {
        (Some(p), true) => Some(load_norms(p)?),
        _ => None,
    };
    let completions = match (&cfg.completions, wants(Suite::Typicality)) {
        (Some(p), true) => Some(load_completions(p)?),
        _ => None,
    };
    let rpm = if !wants(Suite::Rpm) {
        None
    } else if let Some(p) = &cfg.rpm {
        Some(load_rpm_items(p)?)
    } else {
        cfg.rpm_generate
            .as_ref()
            .map(|g| generate_rpm_items(g.count, g.seed.unwrap_or(cfg.seed)))
    };
    let analogy = match (&cfg.analogy, wants(Suite::Analogy)) {
        (Some(p), true) => Some(load_analogy_items(p)?),
        _ => None,
    };
    Ok(Inputs {
        trace,
        checkpoints,
        blimp,
        norms,
        completions,
        rpm,
        analogy,
    })
}

#[derive(Debug, Clone, Serialize)]
struct CheckpointDetail {
    model_id: String,
    checkpoint_step: u64,
    tokens_seen: u64,
    result: serde_json::Value,
}

#[derive(Debug, Default)]
struct SuiteRun {
    scores: Vec<SuiteScore>,
    details: Vec<CheckpointDetail>,
    extra: BTreeMap<String, serde_json::Value>,
    /// Reported but not fatal, e.g. skipped categories.
    notes: Vec<String>,
    errors: Vec<String>,
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("report types serialise")
}

type CheckpointOutput = (Vec<(String, f64)>, serde_json::Value, Vec<String>);

fn per_checkpoint<F>(suite: Suite, inputs: &Inputs, mut f: F) -> SuiteRun
where
    F: FnMut(&CheckpointView<'_>) -> Result<CheckpointOutput>,
{
    let mut run = SuiteRun::default();
    for meta in &inputs.checkpoints {
        let Some(view) = inputs.trace.view(&meta.model_id, meta.checkpoint_step) else {
            continue;
        };
        let ctx = format!("{suite} @ {}:{}", meta.model_id, meta.checkpoint_step);
        match f(&view) {
            Ok((scores, result, soft_errors)) => {
                run.scores
                    .extend(scores.into_iter().map(|(name, v)| SuiteScore::new(meta, suite, name, v)));
                run.details.push(CheckpointDetail {
                    model_id: meta.model_id.clone(),
                    checkpoint_step: meta.checkpoint_step,
                    tokens_seen: meta.tokens_seen,
                    result,
                });
                run.notes.extend(soft_errors.into_iter().map(|e| format!("{ctx}: {e}")));
            }
            Err(e) => run.errors.push(format!("{ctx}: {e}")),
        }
    }
    run
}

fn run_numeric(cfg: &RunConfig, inputs: &Inputs) -> SuiteRun {
    per_checkpoint(Suite::Numeric, inputs, |view| {
        let report = numeric_report(view, &cfg.numeric)?;
        let scores = report
            .metrics()
            .into_iter()
            .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
            .collect();
        Ok((scores, to_json(&report), Vec::new()))
    })
}

fn run_blimp(cfg: &RunConfig, inputs: &Inputs, pairs: &[MinimalPair]) -> SuiteRun {
    per_checkpoint(Suite::Blimp, inputs, |view| {
        let verdicts = blimp_verdicts(view, pairs, cfg.blimp)?;
        let score = aggregate_blimp(pairs, &verdicts)?;
        let mut scores = vec![("overall".to_string(), score.overall_accuracy)];
        for (level, t) in &score.per_level {
            scores.push((format!("level_{level}"), t.accuracy()));
        }
        for (p, t) in &score.per_phenomenon {
            scores.push((format!("phenomenon_{p}"), t.accuracy()));
        }
        let mut result = to_json(&score);
        result["morphology_leads"] = to_json(&score.morphology_leads());
        Ok((scores, result, Vec::new()))
    })
}

fn run_typicality(cfg: &RunConfig, inputs: &Inputs, norms: &[TypicalityNorms]) -> SuiteRun {
    let mut run = per_checkpoint(Suite::Typicality, inputs, |view| {
        let mut methods: Vec<TypicalityResult> = Vec::new();
        if view.has_embeddings() {
            let layers = cfg.typicality.layers.clone().unwrap_or_else(|| view.layers());
            methods.push(latent_typicality_layers(view, norms, &layers)?);
        }
        if view.has_task(Task::TypicalitySurprisal) {
            for &k in &cfg.typicality.shots {
                methods.push(surprisal_typicality(view, norms, k)?);
            }
        }
        if methods.is_empty() {
            return Err(Error::Invalid("no embeddings or typicality log-probs at this checkpoint".into()));
        }
        let scores = methods
            .iter()
            .filter_map(|m| m.average.map(|a| (m.method.to_string(), a)))
            .collect();
        let soft = methods
            .iter()
            .flat_map(|m| m.skipped.iter().map(move |(c, why)| format!("{}: category {c} skipped: {why}", m.method)))
            .collect();
        Ok((scores, to_json(&methods), soft))
    });
    if let Some(comp) = &inputs.completions {
        let res = prompting_typicality(norms, comp);
        for (c, why) in &res.skipped {
            run.notes.push(format!("typicality prompting: category {c} skipped: {why}"));
        }
        run.extra.insert("prompting".into(), to_json(&res));
    }
    run
}

fn run_rpm(inputs: &Inputs, items: &[RpmItem]) -> SuiteRun {
    per_checkpoint(Suite::Rpm, inputs, |view| {
        let score = score_rpm(view, items)?;
        Ok((vec![("accuracy".to_string(), score.accuracy)], to_json(&score), Vec::new()))
    })
}

fn run_analogy(cfg: &RunConfig, inputs: &Inputs, items: &[AnalogyItem]) -> SuiteRun {
    per_checkpoint(Suite::Analogy, inputs, |view| {
        let mut results: Vec<AnalogyScore> = Vec::new();
        if view.has_embeddings() {
            let layer = match cfg.analogy_layer {
                Some(l) => l,
                None => *view.layers().last().expect("has embeddings"),
            };
            for m in [AnalogyMethod::CosAdd, AnalogyMethod::CosMul, AnalogyMethod::ConcatCos] {
                results.push(analogy_accuracy(view, items, m, layer)?);
            }
        }
        if view.has_task(Task::Analogy) {
            results.push(analogy_accuracy(view, items, AnalogyMethod::Surprisal, 0)?);
        }
        if results.is_empty() {
            return Err(Error::Invalid("no embeddings or analogy log-probs at this checkpoint".into()));
        }
        let scores = results.iter().map(|r| (r.method.clone(), r.accuracy)).collect();
        Ok((scores, to_json(&results), Vec::new()))
    })
}

/// One row of the combined table. Every value is a copy of one per-suite
/// score, named in [`TABLE_COLUMNS`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub model_id: String,
    pub checkpoint_step: u64,
    pub tokens_seen: u64,
    pub values: Vec<Option<f64>>,
}

/// (header, suite, submetric) for the value columns of the combined table.
pub const TABLE_COLUMNS: [(&str, Suite, &str); 6] = [
    ("Distance", Suite::Numeric, "distance_r2"),
    ("Ratio", Suite::Numeric, "ratio_r2"),
    ("BLiMP", Suite::Blimp, "overall"),
    ("Latent Rep.", Suite::Typicality, "latent"),
    ("Zero Shot", Suite::Typicality, "surprisal_0shot"),
    ("RPM", Suite::Rpm, "accuracy"),
];

pub fn combined_table(checkpoints: &[CheckpointMeta], scores: &[SuiteScore]) -> Vec<TableRow> {
    let index: BTreeMap<(&str, u64, Suite, &str), f64> = scores
        .iter()
        .map(|s| ((s.model_id.as_str(), s.checkpoint_step, s.suite, s.submetric.as_str()), s.value))
        .collect();
    checkpoints
        .iter()
        .map(|m| TableRow {
            model_id: m.model_id.clone(),
            checkpoint_step: m.checkpoint_step,
            tokens_seen: m.tokens_seen,
            values: TABLE_COLUMNS
                .iter()
                .map(|(_, suite, sub)| index.get(&(m.model_id.as_str(), m.checkpoint_step, *suite, *sub)).copied())
                .collect(),
        })
        .collect()
}

fn fmt3(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.3}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub model_id: String,
    pub suite: Suite,
    pub submetric: String,
    pub n_points: usize,
    pub start_tokens: Option<u64>,
    pub end_tokens: Option<u64>,
    pub warmup_end: Option<u64>,
    pub post_window_instability: Option<f64>,
    /// Window inside 1e8..2e10 tokens, where large gains are usually seen.
    pub in_typical_range: Option<bool>,
    pub note: Option<String>,
}

/// Score row as written to CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub model_id: String,
    pub checkpoint_step: u64,
    pub tokens_seen: u64,
    pub suite: Suite,
    pub submetric: String,
    pub value: f64,
    pub seed: u64,
}

pub fn write_scores_csv(path: &Path, scores: &[SuiteScore], seed: u64) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e))?;
    for s in scores {
        w.serialize(ScoreRow {
            model_id: s.model_id.clone(),
            checkpoint_step: s.checkpoint_step,
            tokens_seen: s.tokens_seen,
            suite: s.suite,
            submetric: s.submetric.clone(),
            value: s.value,
            seed,
        })
        .map_err(|e| Error::parse(path, e))?;
    }
    w.flush().map_err(Error::io(path))
}

pub fn read_scores_csv(path: impl AsRef<Path>) -> Result<Vec<SuiteScore>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e))?;
    r.deserialize::<ScoreRow>()
        .map(|row| {
            let row = row.map_err(|e| Error::parse(path, e))?;
            Ok(SuiteScore {
                model_id: row.model_id,
                checkpoint_step: row.checkpoint_step,
                tokens_seen: row.tokens_seen,
                suite: row.suite,
                submetric: row.submetric,
                value: row.value,
            })
        })
        .collect()
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut body = serde_json::to_string_pretty(v).map_err(|e| Error::parse(path, e))?;
    body.push('\n');
    fs::write(path, body).map_err(Error::io(path))
}

fn curve_file_name(key: &str) -> String {
    key.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect::<String>()
        + ".csv"
}

/// Builds curves from `scores`, detects windows where there are enough
/// checkpoints, and writes `trajectories/*.csv` and `windows.json`.
pub fn write_trajectories(out: &Path, scores: &[SuiteScore], opts: &WindowOptions, seed: u64) -> Result<Vec<WindowRecord>> {
    let dir = out.join("trajectories");
    fs::create_dir_all(&dir).map_err(Error::io(&dir))?;
    let mut records = Vec::new();
    for mut curve in build_curves(scores)? {
        let mut rec = WindowRecord {
            model_id: curve.model_id.clone(),
            suite: curve.suite,
            submetric: curve.submetric.clone(),
            n_points: curve.points.len(),
            start_tokens: None,
            end_tokens: None,
            warmup_end: None,
            post_window_instability: None,
            in_typical_range: None,
            note: None,
        };
        if curve.points.len() < MIN_POINTS {
            rec.note = Some(format!("fewer than {MIN_POINTS} checkpoints; no window detection"));
            records.push(rec);
            continue;
        }
        let report = annotate(&mut curve, opts)?;
        let path = dir.join(curve_file_name(&curve.key()));
        let mut buf = Vec::new();
        write_curve_csv(&curve, &report, seed, &mut buf).map_err(Error::io(&path))?;
        fs::write(&path, buf).map_err(Error::io(&path))?;
        match report.window {
            Some(w) => {
                rec.start_tokens = Some(w.start_tokens);
                rec.end_tokens = Some(w.end_tokens);
                rec.warmup_end = report.warmup_end;
                rec.post_window_instability = report.post_window_instability;
                rec.in_typical_range = Some(w.start_tokens >= 100_000_000 && w.end_tokens <= 20_000_000_000);
            }
            None => rec.note = Some("flat curve: no development window".into()),
        }
        records.push(rec);
    }
    write_json(&out.join("windows.json"), &serde_json::json!({ "seed": seed, "windows": records }))?;
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub out: PathBuf,
    pub seed: u64,
    pub suites: Vec<Suite>,
    /// Suite name to the errors that made it incomplete.
    pub incomplete: BTreeMap<String, Vec<String>>,
    pub scores: Vec<SuiteScore>,
    pub table: Vec<TableRow>,
    pub windows: Vec<WindowRecord>,
}

impl RunSummary {
    pub fn is_complete(&self) -> bool {
        self.incomplete.is_empty()
    }
}

fn render_report(summary: &RunSummary, prompting: Option<&serde_json::Value>) -> String {
    let mut md = String::new();
    let _ = writeln!(md, "# Alignment report\n");
    let _ = writeln!(md, "Seed: {}\n", summary.seed);
    let headers: Vec<&str> = TABLE_COLUMNS.iter().map(|c| c.0).collect();
    let _ = writeln!(md, "| Model | Step | Tokens | {} |", headers.join(" | "));
    let _ = writeln!(md, "|{}", "---|".repeat(3 + headers.len()));
    for row in &summary.table {
        let vals: Vec<String> = row.values.iter().map(|v| fmt3(*v)).collect();
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} |",
            row.model_id,
            row.checkpoint_step,
            row.tokens_seen,
            vals.join(" | ")
        );
    }
    if let Some(avg) = prompting.and_then(|p| p.get("average")).and_then(|a| a.as_f64()) {
        let _ = writeln!(md, "\nTypicality from re-rank completions: {avg:.3}");
    }
    let with_window: Vec<&WindowRecord> = summary.windows.iter().filter(|w| w.start_tokens.is_some()).collect();
    if !with_window.is_empty() {
        let _ = writeln!(md, "\n## Development windows\n");
        let _ = writeln!(md, "| Model | Suite | Submetric | Start tokens | End tokens | Warm-up end |");
        let _ = writeln!(md, "|---|---|---|---|---|---|");
        for w in with_window {
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} | {} |",
                w.model_id,
                w.suite,
                w.submetric,
                w.start_tokens.unwrap_or_default(),
                w.end_tokens.unwrap_or_default(),
                w.warmup_end.map_or_else(|| "n/a".into(), |t| t.to_string())
            );
        }
    }
    if !summary.incomplete.is_empty() {
        let _ = writeln!(md, "\n## Incomplete suites\n");
        for (suite, errs) in &summary.incomplete {
            let _ = writeln!(md, "- {suite}: {} problem(s); see manifest.json", errs.len());
        }
    }
    md
}

/// Runs the configured suites and writes the bundle. Fails only when the
/// configuration or inputs cannot be read; per-checkpoint failures end up
/// in the summary and in `manifest.json`.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let inputs = load_inputs(cfg)?;
    let out = cfg.out.clone();
    fs::create_dir_all(&out).map_err(Error::io(&out))?;

    let mut suites = cfg.suites.clone();
    suites.sort();
    suites.dedup();

    let mut runs: BTreeMap<Suite, SuiteRun> = BTreeMap::new();
    std::thread::scope(|scope| {
        let inputs = &inputs;
        let handles: Vec<_> = suites
            .iter()
            .map(|&suite| {
                let handle = scope.spawn(move || -> SuiteRun {
                    let missing = |what: &str| SuiteRun {
                        errors: vec![format!("{suite}: no {what} given")],
                        ..SuiteRun::default()
                    };
                    match suite {
                        Suite::Numeric => run_numeric(cfg, inputs),
                        Suite::Blimp => match &inputs.blimp {
                            Some(p) => run_blimp(cfg, inputs, p),
                            None => missing("BLiMP directory"),
                        },
                        Suite::Typicality => match &inputs.norms {
                            Some(n) => run_typicality(cfg, inputs, n),
                            None => missing("typicality norms"),
                        },
                        Suite::Rpm => match &inputs.rpm {
                            Some(items) => run_rpm(inputs, items),
                            None => missing("RPM items"),
                        },
                        Suite::Analogy => match &inputs.analogy {
                            Some(items) => run_analogy(cfg, inputs, items),
                            None => missing("analogy items"),
                        },
                    }
                });
                (suite, handle)
            })
            .collect();
        for (suite, h) in handles {
            let run = h.join().unwrap_or_else(|_| SuiteRun {
                errors: vec![format!("{suite}: worker panicked")],
                ..SuiteRun::default()
            });
            runs.insert(suite, run);
        }
    });

    let mut all_scores = Vec::new();
    let mut incomplete = BTreeMap::new();
    let mut prompting = None;
    for (suite, run) in &runs {
        let json = serde_json::json!({
            "suite": suite,
            "seed": cfg.seed,
            "checkpoints": run.details,
            "extra": run.extra,
            "notes": run.notes,
            "errors": run.errors,
        });
        write_json(&out.join(format!("{suite}.json")), &json)?;
        write_scores_csv(&out.join(format!("{suite}.csv")), &run.scores, cfg.seed)?;
        if !run.errors.is_empty() {
            incomplete.insert(suite.to_string(), run.errors.clone());
        }
        if let Some(p) = run.extra.get("prompting") {
            prompting = Some(p.clone());
        }
        all_scores.extend(run.scores.iter().cloned());
    }
    all_scores.sort_by(|a, b| {
        (&a.model_id, a.tokens_seen, a.checkpoint_step, a.suite, &a.submetric).cmp(&(
            &b.model_id,
            b.tokens_seen,
            b.checkpoint_step,
            b.suite,
            &b.submetric,
        ))
    });
    write_scores_csv(&out.join("scores.csv"), &all_scores, cfg.seed)?;

    let windows = write_trajectories(&out, &all_scores, &cfg.window, cfg.seed)?;
    let summary = RunSummary {
        out: out.clone(),
        seed: cfg.seed,
        suites: suites.clone(),
        incomplete,
        table: combined_table(&inputs.checkpoints, &all_scores),
        scores: all_scores,
        windows,
    };
    let report_path = out.join("report.md");
    fs::write(&report_path, render_report(&summary, prompting.as_ref())).map_err(Error::io(&report_path))?;
    write_json(&out.join("table.json"), &serde_json::json!({
        "seed": cfg.seed,
        "columns": TABLE_COLUMNS.iter().map(|(h, s, m)| serde_json::json!({"header": h, "suite": s, "submetric": m})).collect::<Vec<_>>(),
        "rows": summary.table,
    }))?;

    let generated = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or_default();
    write_json(
        &out.join("manifest.json"),
        &serde_json::json!({
            "generated_unix": generated,
            "seed": cfg.seed,
            "suites": suites,
            "complete": summary.is_complete(),
            "incomplete": summary.incomplete,
            "checkpoints": inputs.checkpoints.len(),
            "config": cfg,
        }),
    )?;
    Ok(summary)
}
