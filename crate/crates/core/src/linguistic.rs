//! BLiMP minimal-pair scoring.
//!
//! A pair is correct when the acceptable sentence has strictly higher total
//! log-probability than the unacceptable one. Accuracy is aggregated
//! overall, per phenomenon, and per linguistic level; phenomena that belong
//! to two levels count toward both.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{CheckpointView, LogProbRecord, Task};

pub const GOOD: &str = "good";
pub const BAD: &str = "bad";

/// The default UID → phenomenon → level table.
pub const DEFAULT_PHENOMENA_TOML: &str = include_str!("../config/blimp_phenomena.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phenomenon {
    AnaphorAgreement,
    ArgumentStructure,
    Binding,
    ControlRaising,
    DeterminerNounAgreement,
    Ellipsis,
    FillerGap,
    IrregularForms,
    IslandEffects,
    NpiLicensing,
    Quantifiers,
    SubjectVerbAgreement,
}

impl Phenomenon {
    pub const ALL: [Phenomenon; 12] = [
        Phenomenon::AnaphorAgreement,
        Phenomenon::ArgumentStructure,
        Phenomenon::Binding,
        Phenomenon::ControlRaising,
        Phenomenon::DeterminerNounAgreement,
        Phenomenon::Ellipsis,
        Phenomenon::FillerGap,
        Phenomenon::IrregularForms,
        Phenomenon::IslandEffects,
        Phenomenon::NpiLicensing,
        Phenomenon::Quantifiers,
        Phenomenon::SubjectVerbAgreement,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Phenomenon::AnaphorAgreement => "anaphor_agreement",
            Phenomenon::ArgumentStructure => "argument_structure",
            Phenomenon::Binding => "binding",
            Phenomenon::ControlRaising => "control_raising",
            Phenomenon::DeterminerNounAgreement => "determiner_noun_agreement",
            Phenomenon::Ellipsis => "ellipsis",
            Phenomenon::FillerGap => "filler_gap",
            Phenomenon::IrregularForms => "irregular_forms",
            Phenomenon::IslandEffects => "island_effects",
            Phenomenon::NpiLicensing => "npi_licensing",
            Phenomenon::Quantifiers => "quantifiers",
            Phenomenon::SubjectVerbAgreement => "subject_verb_agreement",
        }
    }

    pub fn parse(label: &str) -> Result<Phenomenon> {
        Phenomenon::ALL
            .into_iter()
            .find(|p| p.as_str() == label)
            .ok_or_else(|| Error::UnknownPhenomenon(label.to_string()))
    }
}

impl fmt::Display for Phenomenon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Morphology,
    Syntax,
    Semantics,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Morphology => "morphology",
            Level::Syntax => "syntax",
            Level::Semantics => "semantics",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Deserialize)]
struct PhenomenaFile {
    phenomenon: Vec<PhenomenonEntry>,
}

#[derive(Debug, Deserialize)]
struct PhenomenonEntry {
    name: String,
    levels: Vec<Level>,
    #[serde(default)]
    uids: Vec<String>,
}

/// UID → phenomenon and phenomenon → levels lookup.
#[derive(Debug, Clone)]
pub struct PhenomenonMap {
    levels: BTreeMap<Phenomenon, Vec<Level>>,
    by_uid: HashMap<String, Phenomenon>,
}

impl PhenomenonMap {
    pub fn from_toml(src: &str) -> Result<Self> {
        let file: PhenomenaFile =
            toml::from_str(src).map_err(|e| Error::Invalid(format!("phenomenon config: {e}")))?;
        let mut levels = BTreeMap::new();
        let mut by_uid = HashMap::new();
        for entry in file.phenomenon {
            let p = Phenomenon::parse(&entry.name)?;
            if entry.levels.is_empty() {
                return Err(Error::Invalid(format!("phenomenon {p} has no levels")));
            }
            levels.insert(p, entry.levels);
            for uid in entry.uids {
                if let Some(prev) = by_uid.insert(uid.clone(), p) {
                    return Err(Error::Invalid(format!("UID {uid} mapped to both {prev} and {p}")));
                }
            }
        }
        Ok(Self { levels, by_uid })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let src = fs::read_to_string(path).map_err(Error::io(path))?;
        Self::from_toml(&src)
    }

    pub fn phenomenon_for_uid(&self, uid: &str) -> Option<Phenomenon> {
        self.by_uid.get(uid).copied()
    }

    pub fn levels(&self, p: Phenomenon) -> Result<&[Level]> {
        self.levels
            .get(&p)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownPhenomenon(p.to_string()))
    }

    pub fn uid_count(&self) -> usize {
        self.by_uid.len()
    }

    /// UIDs assigned to `p`, sorted.
    pub fn uids(&self, p: Phenomenon) -> Vec<&str> {
        let mut v: Vec<&str> = self
            .by_uid
            .iter()
            .filter(|(_, q)| **q == p)
            .map(|(u, _)| u.as_str())
            .collect();
        v.sort_unstable();
        v
    }
}

impl Default for PhenomenonMap {
    fn default() -> Self {
        Self::from_toml(DEFAULT_PHENOMENA_TOML).expect("shipped phenomenon table is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimalPair {
    pub item_id: String,
    pub uid: String,
    pub phenomenon: Phenomenon,
    pub levels: Vec<Level>,
    pub sentence_good: String,
    pub sentence_bad: String,
}

impl MinimalPair {
    pub fn new(
        item_id: impl Into<String>,
        uid: impl Into<String>,
        phenomenon: Phenomenon,
        map: &PhenomenonMap,
        sentence_good: impl Into<String>,
        sentence_bad: impl Into<String>,
    ) -> Result<Self> {
        let pair = Self {
            item_id: item_id.into(),
            uid: uid.into(),
            phenomenon,
            levels: map.levels(phenomenon)?.to_vec(),
            sentence_good: sentence_good.into(),
            sentence_bad: sentence_bad.into(),
        };
        if pair.sentence_good == pair.sentence_bad {
            return Err(Error::Invalid(format!(
                "pair {} has identical sentences",
                pair.item_id
            )));
        }
        Ok(pair)
    }
}

#[derive(Debug, Deserialize)]
struct BlimpLine {
    sentence_good: String,
    sentence_bad: String,
    #[serde(rename = "UID")]
    uid: String,
    #[serde(rename = "pairID", default)]
    pair_id: Option<serde_json::Value>,
}

/// Parses one BLiMP JSON Lines file. Item ids are `UID/pairID`, falling back
/// to the 0-based line index when `pairID` is absent.
pub fn parse_blimp_jsonl(src: &str, map: &PhenomenonMap, origin: &Path) -> Result<Vec<MinimalPair>> {
    let mut out = Vec::new();
    for (idx, line) in src.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: BlimpLine = serde_json::from_str(line)
            .map_err(|e| Error::parse(origin, format!("line {}: {e}", idx + 1)))?;
        let phenomenon = map
            .phenomenon_for_uid(&rec.uid)
            .ok_or_else(|| Error::UnknownPhenomenon(rec.uid.clone()))?;
        let pair_id = match rec.pair_id {
            Some(serde_json::Value::String(s)) => s,
            Some(v) => v.to_string(),
            None => idx.to_string(),
        };
        let item_id = format!("{}/{}", rec.uid, pair_id);
        out.push(MinimalPair::new(
            item_id,
            rec.uid,
            phenomenon,
            map,
            rec.sentence_good,
            rec.sentence_bad,
        )?);
    }
    Ok(out)
}

/// Loads every `*.jsonl` file in `dir`, in file-name order.
pub fn load_blimp_dir(dir: impl AsRef<Path>, map: &PhenomenonMap) -> Result<Vec<MinimalPair>> {
    let dir = dir.as_ref();
    let mut files: Vec<_> = fs::read_dir(dir)
        .map_err(Error::io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    let mut pairs = Vec::new();
    for f in files {
        let src = fs::read_to_string(&f).map_err(Error::io(&f))?;
        pairs.extend(parse_blimp_jsonl(&src, map, &f)?);
    }
    Ok(pairs)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreOptions {
    /// Compare mean per-token log-probability instead of totals.
    pub per_token: bool,
}

/// True iff the acceptable sentence is strictly more probable. Ties are wrong.
pub fn score_pair(good: &LogProbRecord, bad: &LogProbRecord) -> Result<bool> {
    score_pair_with(good, bad, ScoreOptions::default())
}

pub fn score_pair_with(good: &LogProbRecord, bad: &LogProbRecord, opts: ScoreOptions) -> Result<bool> {
    if good.model_id != bad.model_id
        || good.checkpoint_step != bad.checkpoint_step
        || good.item_id != bad.item_id
        || good.condition != GOOD
        || bad.condition != BAD
    {
        return Err(Error::Invalid(format!(
            "mismatched minimal pair records: {}@{} {}/{} vs {}@{} {}/{}",
            good.model_id,
            good.checkpoint_step,
            good.item_id,
            good.condition,
            bad.model_id,
            bad.checkpoint_step,
            bad.item_id,
            bad.condition
        )));
    }
    let value = |r: &LogProbRecord| {
        if opts.per_token {
            r.total_logprob / r.n_tokens as f64
        } else {
            r.total_logprob
        }
    };
    Ok(value(good) > value(bad))
}

/// Verdict for every pair at one checkpoint.
pub fn blimp_verdicts(view: &CheckpointView<'_>, pairs: &[MinimalPair], opts: ScoreOptions) -> Result<Vec<bool>> {
    pairs
        .iter()
        .map(|p| {
            let get = |cond: &str| {
                view.logprob(Task::Blimp, &p.item_id, cond)
                    .ok_or_else(|| Error::MissingLogProb {
                        task: Task::Blimp.to_string(),
                        item: p.item_id.clone(),
                        condition: cond.to_string(),
                    })
            };
            score_pair_with(get(GOOD)?, get(BAD)?, opts)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub correct: usize,
    pub total: usize,
}

impl Tally {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    fn add(&mut self, ok: bool) {
        self.total += 1;
        self.correct += usize::from(ok);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlimpScore {
    pub overall_accuracy: f64,
    pub n_pairs: usize,
    pub n_correct: usize,
    pub per_phenomenon: BTreeMap<Phenomenon, Tally>,
    pub per_level: BTreeMap<Level, Tally>,
}

impl BlimpScore {
    pub fn level_accuracy(&self, level: Level) -> Option<f64> {
        self.per_level.get(&level).map(Tally::accuracy)
    }

    /// Morphology at least as accurate as syntax and semantics; `None` when
    /// a level is absent.
    pub fn morphology_leads(&self) -> Option<bool> {
        let m = self.level_accuracy(Level::Morphology)?;
        let syn = self.level_accuracy(Level::Syntax)?;
        let sem = self.level_accuracy(Level::Semantics)?;
        Some(m >= syn && m >= sem)
    }
}

pub fn aggregate_blimp(pairs: &[MinimalPair], verdicts: &[bool]) -> Result<BlimpScore> {
    if pairs.len() != verdicts.len() {
        return Err(Error::Invalid(format!(
            "{} pairs but {} verdicts",
            pairs.len(),
            verdicts.len()
        )));
    }
    if pairs.is_empty() {
        return Err(Error::Invalid("no BLiMP pairs to aggregate".into()));
    }
    let mut per_phenomenon: BTreeMap<Phenomenon, Tally> = BTreeMap::new();
    let mut per_level: BTreeMap<Level, Tally> = BTreeMap::new();
    let mut n_correct = 0;
    for (pair, &ok) in pairs.iter().zip(verdicts) {
        if pair.levels.is_empty() {
            return Err(Error::Invalid(format!("pair {} has no level", pair.item_id)));
        }
        n_correct += usize::from(ok);
        per_phenomenon.entry(pair.phenomenon).or_default().add(ok);
        for level in &pair.levels {
            per_level.entry(*level).or_default().add(ok);
        }
    }
    Ok(BlimpScore {
        overall_accuracy: n_correct as f64 / pairs.len() as f64,
        n_pairs: pairs.len(),
        n_correct,
        per_phenomenon,
        per_level,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(cond: &str, logprob: f64) -> LogProbRecord {
        LogProbRecord {
            model_id: "m".into(),
            checkpoint_step: 1,
            tokens_seen: 2_000_000,
            task: Task::Blimp,
            item_id: "x/0".into(),
            condition: cond.into(),
            text: String::new(),
            total_logprob: logprob,
            n_tokens: 4,
        }
    }

    #[test]
    fn pair_verdicts() {
        assert!(score_pair(&lp(GOOD, -10.0), &lp(BAD, -12.5)).unwrap());
        assert!(!score_pair(&lp(GOOD, -12.5), &lp(BAD, -10.0)).unwrap());
        assert!(!score_pair(&lp(GOOD, -10.0), &lp(BAD, -10.0)).unwrap());
    }

    #[test]
    fn mismatched_items_rejected() {
        let mut bad = lp(BAD, -3.0);
        bad.item_id = "y/0".into();
        assert!(score_pair(&lp(GOOD, -1.0), &bad).is_err());
        assert!(score_pair(&lp(BAD, -1.0), &lp(BAD, -2.0)).is_err());
    }

    #[test]
    fn per_token_option() {
        let mut good = lp(GOOD, -12.0);
        good.n_tokens = 6;
        let bad = lp(BAD, -10.0);
        assert!(!score_pair(&good, &bad).unwrap());
        assert!(score_pair_with(&good, &bad, ScoreOptions { per_token: true }).unwrap());
    }

    #[test]
    fn shipped_table_covers_67_uids() {
        let map = PhenomenonMap::default();
        assert_eq!(map.uid_count(), 67);
        assert_eq!(
            map.levels(Phenomenon::Binding).unwrap(),
            &[Level::Syntax, Level::Semantics]
        );
        assert_eq!(map.phenomenon_for_uid("wh_island"), Some(Phenomenon::IslandEffects));
    }

    #[test]
    fn unknown_phenomenon_label() {
        let src = "[[phenomenon]]\nname = \"telepathy\"\nlevels = [\"syntax\"]\n";
        assert!(matches!(
            PhenomenonMap::from_toml(src),
            Err(Error::UnknownPhenomenon(_))
        ));
    }

    #[test]
    fn dual_level_pairs_count_twice() {
        let map = PhenomenonMap::default();
        let pairs = vec![
            MinimalPair::new("a", "principle_A_case_1", Phenomenon::Binding, &map, "g", "b").unwrap(),
            MinimalPair::new("b", "passive_1", Phenomenon::ArgumentStructure, &map, "g", "b").unwrap(),
            MinimalPair::new("c", "anaphor_gender_agreement", Phenomenon::AnaphorAgreement, &map, "g", "b")
                .unwrap(),
        ];
        let score = aggregate_blimp(&pairs, &[true, false, true]).unwrap();
        assert_eq!(score.per_level[&Level::Syntax], Tally { correct: 1, total: 2 });
        assert_eq!(score.per_level[&Level::Semantics], Tally { correct: 1, total: 1 });
        assert_eq!(score.per_level[&Level::Morphology], Tally { correct: 1, total: 1 });
        assert_eq!(score.n_correct, 2);
        assert_eq!(score.morphology_leads(), Some(true));
    }

    #[test]
    fn parses_blimp_lines() {
        let map = PhenomenonMap::default();
        let src = r#"{"sentence_good": "Who should Derek hug after shocking Richard?", "sentence_bad": "Who should Derek hug Richard after shocking?", "field": "syntax", "linguistics_term": "island_effects", "UID": "adjunct_island", "simple_LM_method": true, "one_prefix_method": false, "two_prefix_method": false, "lexically_identical": true, "pairID": "0"}"#;
        let pairs = parse_blimp_jsonl(src, &map, Path::new("adjunct_island.jsonl")).unwrap();
        assert_eq!(pairs[0].item_id, "adjunct_island/0");
        assert_eq!(pairs[0].phenomenon, Phenomenon::IslandEffects);
        let bad_uid = r#"{"sentence_good":"a","sentence_bad":"b","UID":"nope"}"#;
        assert!(parse_blimp_jsonl(bad_uid, &map, Path::new("x")).is_err());
    }
}
