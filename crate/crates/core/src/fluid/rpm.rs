//! Progressive matrices rendered as text.
//!
//! A cell is a triple of integer levels: shape type `1..=5`, size `1..=9`
//! and colour `0..=9`. Size and colour are shown as tenths, so the cell
//! `(2, 4, 7)` prints as `(2, 0.4, 0.7)`. Every attribute follows one rule
//! applied along each of the three rows, and the model has to pick the
//! bottom-right cell from eight candidates.

use std::fmt;
use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::argmax_lowest;
use crate::error::{Error, Result};
use crate::trace::{CheckpointView, Task};

pub const N_CANDIDATES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[u8; 3]", into = "[u8; 3]")]
pub struct Cell {
    pub shape: u8,
    pub size: u8,
    pub color: u8,
}

impl From<[u8; 3]> for Cell {
    fn from([shape, size, color]: [u8; 3]) -> Self {
        Cell { shape, size, color }
    }
}

impl From<Cell> for [u8; 3] {
    fn from(c: Cell) -> Self {
        [c.shape, c.size, c.color]
    }
}

impl Cell {
    pub fn new(shape: u8, size: u8, color: u8) -> Self {
        Cell { shape, size, color }
    }

    pub fn get(&self, a: Attribute) -> u8 {
        match a {
            Attribute::Shape => self.shape,
            Attribute::Size => self.size,
            Attribute::Color => self.color,
        }
    }

    pub fn set(&mut self, a: Attribute, v: u8) {
        match a {
            Attribute::Shape => self.shape = v,
            Attribute::Size => self.size = v,
            Attribute::Color => self.color = v,
        }
    }

    pub fn in_range(&self) -> bool {
        Attribute::ALL.iter().all(|&a| {
            let (lo, hi) = a.range();
            (lo..=hi).contains(&self.get(a))
        })
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {:.1}, {:.1})",
            self.shape,
            f64::from(self.size) / 10.0,
            f64::from(self.color) / 10.0
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Shape,
    Size,
    Color,
}

impl Attribute {
    pub const ALL: [Attribute; 3] = [Attribute::Shape, Attribute::Size, Attribute::Color];

    pub fn range(self) -> (u8, u8) {
        match self {
            Attribute::Shape => (1, 5),
            Attribute::Size => (1, 9),
            Attribute::Color => (0, 9),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// Same value across a row; rows may differ.
    Constant,
    /// Step of `+1` or `-1` along a row from a per-row base.
    Progression(i8),
    /// The same three values in every row, shifted cyclically by one per row.
    DistributeThree,
}

impl Rule {
    const CHOICES: [Rule; 4] = [
        Rule::Constant,
        Rule::Progression(1),
        Rule::Progression(-1),
        Rule::DistributeThree,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSet {
    pub shape: Rule,
    pub size: Rule,
    pub color: Rule,
}

impl RuleSet {
    pub fn get(&self, a: Attribute) -> Rule {
        match a {
            Attribute::Shape => self.shape,
            Attribute::Size => self.size,
            Attribute::Color => self.color,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpmItem {
    #[serde(rename = "item")]
    pub item_id: String,
    /// Row-major cells with the bottom-right one missing.
    pub context: [Cell; 8],
    pub candidates: [Cell; N_CANDIDATES],
    #[serde(rename = "answer")]
    pub answer_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rules: Option<RuleSet>,
}

impl RpmItem {
    pub fn answer(&self) -> Cell {
        self.candidates[self.answer_index]
    }

    /// Full 3x3 grid with `last` in the bottom-right position.
    pub fn grid_with(&self, last: Cell) -> [[Cell; 3]; 3] {
        let c = &self.context;
        [[c[0], c[1], c[2]], [c[3], c[4], c[5]], [c[6], c[7], last]]
    }

    pub fn validate(&self) -> Result<()> {
        if self.answer_index >= N_CANDIDATES {
            return Err(Error::Invalid(format!(
                "{}: answer index {} out of range",
                self.item_id, self.answer_index
            )));
        }
        let mut seen = self.candidates.to_vec();
        seen.sort();
        seen.dedup();
        if seen.len() != N_CANDIDATES {
            return Err(Error::Invalid(format!("{}: duplicate candidates", self.item_id)));
        }
        if !self.context.iter().chain(&self.candidates).all(Cell::in_range) {
            return Err(Error::Invalid(format!("{}: attribute level out of range", self.item_id)));
        }
        Ok(())
    }
}

fn row_values(rule: Rule, a: Attribute, rng: &mut ChaCha8Rng) -> [[u8; 3]; 3] {
    let (lo, hi) = a.range();
    let mut rows = [[0u8; 3]; 3];
    match rule {
        Rule::Constant => {
            for row in &mut rows {
                *row = [rng.gen_range(lo..=hi); 3];
            }
        }
        Rule::Progression(d) => {
            for row in &mut rows {
                let base = if d > 0 {
                    rng.gen_range(lo..=hi - 2)
                } else {
                    rng.gen_range(lo + 2..=hi)
                };
                for (j, v) in row.iter_mut().enumerate() {
                    *v = (i16::from(base) + i16::from(d) * j as i16) as u8;
                }
            }
        }
        Rule::DistributeThree => {
            let mut pool: Vec<u8> = (lo..=hi).collect();
            pool.shuffle(rng);
            let vals = [pool[0], pool[1], pool[2]];
            for (r, row) in rows.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = vals[(r + j) % 3];
                }
            }
        }
    }
    rows
}

fn make_item(item_id: String, rng: &mut ChaCha8Rng) -> RpmItem {
    let rules = RuleSet {
        shape: *Rule::CHOICES.choose(rng).expect("non-empty"),
        size: *Rule::CHOICES.choose(rng).expect("non-empty"),
        color: *Rule::CHOICES.choose(rng).expect("non-empty"),
    };
    let mut grid = [[Cell::new(0, 0, 0); 3]; 3];
    for a in Attribute::ALL {
        let vals = row_values(rules.get(a), a, rng);
        for r in 0..3 {
            for c in 0..3 {
                grid[r][c].set(a, vals[r][c]);
            }
        }
    }
    let answer = grid[2][2];
    let mut options = vec![answer];
    while options.len() < N_CANDIDATES {
        let a = *Attribute::ALL.choose(rng).expect("non-empty");
        let (lo, hi) = a.range();
        let v = rng.gen_range(lo..=hi);
        if v == answer.get(a) {
            continue;
        }
        let mut d = answer;
        d.set(a, v);
        if !options.contains(&d) {
            options.push(d);
        }
    }
    options.shuffle(rng);
    let answer_index = options.iter().position(|c| *c == answer).expect("answer present");
    let flat: Vec<Cell> = grid.iter().flatten().copied().collect();
    RpmItem {
        item_id,
        context: flat[..8].try_into().expect("eight context cells"),
        candidates: options.try_into().expect("eight candidates"),
        answer_index,
        rules: Some(rules),
    }
}

/// `n` items from a seeded generator. Distractors differ from the answer
/// in exactly one attribute.
pub fn generate_rpm_items(n: usize, seed: u64) -> Vec<RpmItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| make_item(format!("rpm-{i:05}"), &mut rng)).collect()
}

fn rule_holds(rule: Rule, rows: [[u8; 3]; 3]) -> bool {
    match rule {
        Rule::Constant => rows.iter().all(|r| r[0] == r[1] && r[1] == r[2]),
        Rule::Progression(d) => rows.iter().all(|r| {
            let (a, b, c) = (i16::from(r[0]), i16::from(r[1]), i16::from(r[2]));
            b - a == i16::from(d) && c - b == i16::from(d)
        }),
        Rule::DistributeThree => {
            let first = rows[0];
            first[0] != first[1]
                && first[1] != first[2]
                && first[0] != first[2]
                && (1..3).all(|r| (0..3).all(|j| rows[r][j] == first[(r + j) % 3]))
        }
    }
}

/// True if every attribute of `grid` obeys its rule.
pub fn check_rules(grid: &[[Cell; 3]; 3], rules: &RuleSet) -> bool {
    Attribute::ALL.iter().all(|&a| {
        let mut rows = [[0u8; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                rows[r][c] = grid[r][c].get(a);
            }
        }
        rule_holds(rules.get(a), rows)
    })
}

pub const DEFAULT_RPM_INSTRUCTION: &str =
    "Each cell is (shape type, size, color). Complete the pattern by filling in the last cell of row 3.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderOptions {
    pub instruction: String,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            instruction: DEFAULT_RPM_INSTRUCTION.to_string(),
        }
    }
}

/// Instruction line followed by the three rows; the last row ends with an
/// open slot after `", "`.
pub fn render_rpm_prompt(item: &RpmItem, opts: &RenderOptions) -> String {
    let c = &item.context;
    let mut s = String::new();
    if !opts.instruction.is_empty() {
        s.push_str(&opts.instruction);
        s.push('\n');
    }
    s.push_str(&format!("row 1: {}, {}, {}\n", c[0], c[1], c[2]));
    s.push_str(&format!("row 2: {}, {}, {}\n", c[3], c[4], c[5]));
    s.push_str(&format!("row 3: {}, {}, ", c[6], c[7]));
    s
}

/// One full text per candidate, in candidate order.
pub fn render_rpm_candidates(item: &RpmItem, opts: &RenderOptions) -> Vec<String> {
    let prompt = render_rpm_prompt(item, opts);
    item.candidates.iter().map(|c| format!("{prompt}{c}")).collect()
}

fn parse_cell(tuple: &str) -> Result<Cell> {
    let bad = || Error::Invalid(format!("cannot parse cell {tuple:?}"));
    let inner = tuple.trim().strip_prefix('(').and_then(|t| t.strip_suffix(')')).ok_or_else(bad)?;
    let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let shape: u8 = parts[0].parse().map_err(|_| bad())?;
    let tenth = |p: &str| -> Result<u8> {
        let v: f64 = p.parse().map_err(|_| bad())?;
        let scaled = (v * 10.0).round();
        if !(0.0..=255.0).contains(&scaled) {
            return Err(bad());
        }
        Ok(scaled as u8)
    };
    Ok(Cell::new(shape, tenth(parts[1])?, tenth(parts[2])?))
}

/// Recovers the eight context cells from a rendered prompt (any instruction
/// line is skipped).
pub fn parse_rendered_context(text: &str) -> Result<[Cell; 8]> {
    let mut cells = Vec::with_capacity(8);
    for line in text.lines() {
        let Some((head, rest)) = line.split_once(':') else {
            continue;
        };
        if !head.trim().starts_with("row ") {
            continue;
        }
        let mut rest = rest.trim();
        while let Some(start) = rest.find('(') {
            let end = rest[start..]
                .find(')')
                .ok_or_else(|| Error::Invalid(format!("unterminated cell in {line:?}")))?;
            cells.push(parse_cell(&rest[start..=start + end])?);
            rest = &rest[start + end + 1..];
        }
    }
    cells
        .try_into()
        .map_err(|v: Vec<Cell>| Error::Invalid(format!("expected 8 context cells, found {}", v.len())))
}

pub fn parse_rpm_items<R: BufRead>(reader: R) -> Result<Vec<RpmItem>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(Error::io("<rpm>"))?;
        if line.trim().is_empty() {
            continue;
        }
        let item: RpmItem = serde_json::from_str(&line)
            .map_err(|e| Error::Invalid(format!("rpm line {}: {e}", i + 1)))?;
        item.validate()?;
        out.push(item);
    }
    Ok(out)
}

pub fn load_rpm_items(path: impl AsRef<Path>) -> Result<Vec<RpmItem>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(Error::io(path))?;
    parse_rpm_items(std::io::BufReader::new(file)).map_err(|e| Error::parse(path, e))
}

pub fn write_rpm_items<W: Write>(items: &[RpmItem], mut out: W) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpmVerdict {
    pub item_id: String,
    pub chosen: usize,
    pub answer: usize,
    pub correct: bool,
    pub tied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpmScore {
    pub accuracy: f64,
    pub n_items: usize,
    pub n_correct: usize,
    pub n_tied: usize,
    pub verdicts: Vec<RpmVerdict>,
}

/// Argmax over per-candidate scores from `lookup(item, candidate_index)`.
pub fn score_rpm_with<F>(items: &[RpmItem], mut lookup: F) -> Result<RpmScore>
where
    F: FnMut(&RpmItem, usize) -> Result<f64>,
{
    if items.is_empty() {
        return Err(Error::Invalid("no RPM items to score".into()));
    }
    let mut verdicts = Vec::with_capacity(items.len());
    for item in items {
        let scores = (0..N_CANDIDATES)
            .map(|k| lookup(item, k))
            .collect::<Result<Vec<f64>>>()?;
        let (chosen, tied) = argmax_lowest(&scores)
            .ok_or_else(|| Error::Invalid(format!("{}: non-finite candidate score", item.item_id)))?;
        verdicts.push(RpmVerdict {
            item_id: item.item_id.clone(),
            chosen,
            answer: item.answer_index,
            correct: chosen == item.answer_index,
            tied,
        });
    }
    let n_correct = verdicts.iter().filter(|v| v.correct).count();
    Ok(RpmScore {
        accuracy: n_correct as f64 / verdicts.len() as f64,
        n_items: verdicts.len(),
        n_correct,
        n_tied: verdicts.iter().filter(|v| v.tied).count(),
        verdicts,
    })
}

/// Candidate log-probs come from records with condition `"0"`..`"7"`.
pub fn score_rpm(view: &CheckpointView<'_>, items: &[RpmItem]) -> Result<RpmScore> {
    score_rpm_with(items, |item, k| {
        let cond = k.to_string();
        view.logprob(Task::Rpm, &item.item_id, &cond)
            .map(|r| r.total_logprob)
            .ok_or_else(|| Error::MissingLogProb {
                task: Task::Rpm.to_string(),
                item: item.item_id.clone(),
                condition: cond,
            })
    })
}
