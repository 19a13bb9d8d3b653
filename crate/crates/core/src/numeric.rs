//! Magnitude-comparison effects in number embeddings.
//!
//! The linking hypothesis: two numbers whose representations have higher
//! cosine similarity are harder to tell apart. Distance, ratio and size
//! effects are fits of similarity against |x - y|, max/min and x + y; the
//! mental number line is recovered with 1-D MDS and compared to ln(n).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numstats::{
    fit_linear, fit_neg_exponential, mds_1d_with, mean, FitResult, MdsOptions, MdsResult,
    StatsError,
};
use crate::text::render_number;
use crate::trace::{cosine_similarity, CheckpointView, TextFormat};

/// Numbers under test plus optional custom spellings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumberSet {
    pub numbers: Vec<u32>,
    /// Lower-case word for each entry of `numbers`, overriding the built-in
    /// English spelling. Mixed-case words capitalise the first letter.
    #[serde(default)]
    pub words: Option<Vec<String>>,
}

impl Default for NumberSet {
    fn default() -> Self {
        Self::range(1, 9)
    }
}

impl NumberSet {
    pub fn range(lo: u32, hi: u32) -> Self {
        Self {
            numbers: (lo..=hi).collect(),
            words: None,
        }
    }

    pub fn new(numbers: Vec<u32>) -> Result<Self> {
        let set = Self {
            numbers,
            words: None,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn with_words(mut self, words: Vec<String>) -> Result<Self> {
        if words.len() != self.numbers.len() {
            return Err(Error::Invalid(format!(
                "{} number words supplied for {} numbers",
                words.len(),
                self.numbers.len()
            )));
        }
        self.words = Some(words);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.numbers.len() < 2 {
            return Err(Error::Invalid("number set needs at least two numbers".into()));
        }
        if self.numbers.contains(&0) {
            return Err(Error::Invalid("numbers must be positive (ratios divide by the smaller)".into()));
        }
        let distinct: BTreeSet<_> = self.numbers.iter().collect();
        if distinct.len() != self.numbers.len() {
            return Err(Error::Invalid("number set contains duplicates".into()));
        }
        Ok(())
    }

    /// Text for the `idx`-th number in `format`.
    pub fn text(&self, idx: usize, format: TextFormat) -> Option<String> {
        let n = self.numbers[idx];
        match (&self.words, format) {
            (Some(words), TextFormat::WordLower) => Some(words[idx].to_lowercase()),
            (Some(words), TextFormat::WordMixed) => {
                let w = words[idx].to_lowercase();
                let mut c = w.chars();
                c.next().map(|f| f.to_uppercase().chain(c).collect())
            }
            _ => render_number(n, format),
        }
    }

    /// Every text the numeric suite looks up, by format.
    pub fn texts(&self, format: TextFormat) -> Vec<String> {
        (0..self.numbers.len())
            .filter_map(|i| self.text(i, format))
            .collect()
    }
}

/// Cosine similarity of one unordered number pair within one (layer, format) slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumberPairSample {
    pub x: u32,
    pub y: u32,
    pub distance: u32,
    pub ratio: f64,
    pub size_sum: u32,
    pub similarity: f64,
    pub layer: u32,
    pub text_format: TextFormat,
}

impl NumberPairSample {
    pub fn new(x: u32, y: u32, similarity: f64, layer: u32, text_format: TextFormat) -> Self {
        let (lo, hi) = if x < y { (x, y) } else { (y, x) };
        Self {
            x,
            y,
            distance: hi - lo,
            ratio: hi as f64 / lo as f64,
            size_sum: x + y,
            similarity,
            layer,
            text_format,
        }
    }
}

fn lookup<'a>(view: &CheckpointView<'a>, layer: u32, format: TextFormat, text: &str) -> Result<&'a [f64]> {
    view.vector(layer, format, text)
        .ok_or_else(|| Error::MissingEmbedding {
            text: text.to_string(),
            format,
            layer,
        })
}

/// One sample per unordered pair of `numbers`.
pub fn build_pairs(
    view: &CheckpointView<'_>,
    numbers: &NumberSet,
    layer: u32,
    format: TextFormat,
) -> Result<Vec<NumberPairSample>> {
    numbers.validate()?;
    let vectors = (0..numbers.numbers.len())
        .map(|i| {
            let text = numbers.text(i, format).ok_or_else(|| {
                Error::Invalid(format!("no {format} spelling for {}", numbers.numbers[i]))
            })?;
            lookup(view, layer, format, &text)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(vectors.len() * (vectors.len() - 1) / 2);
    for i in 0..vectors.len() {
        for j in i + 1..vectors.len() {
            let sim = cosine_similarity(vectors[i], vectors[j]).map_err(Error::stats_at(format!(
                "cosine of {} and {} at layer {layer} ({format})",
                numbers.numbers[i], numbers.numbers[j]
            )))?;
            out.push(NumberPairSample::new(
                numbers.numbers[i],
                numbers.numbers[j],
                sim,
                layer,
                format,
            ));
        }
    }
    Ok(out)
}

fn distinct_count<T: PartialOrd + Copy>(vals: impl Iterator<Item = T>) -> usize {
    let mut v: Vec<T> = vals.collect();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    v.dedup();
    v.len()
}

/// Linear fit of similarity on |x - y|.
pub fn distance_effect(samples: &[NumberPairSample]) -> Result<FitResult> {
    if distinct_count(samples.iter().map(|s| s.distance)) < 3 {
        return Err(Error::Invalid("distance effect needs at least 3 distinct distances".into()));
    }
    let xs: Vec<f64> = samples.iter().map(|s| s.distance as f64).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.similarity).collect();
    Ok(fit_linear(&xs, &ys)?)
}

/// Negative-exponential fit of min-max normalised similarity on max/min.
pub fn ratio_effect(samples: &[NumberPairSample]) -> Result<FitResult> {
    if distinct_count(samples.iter().map(|s| s.ratio)) < 4 {
        return Err(Error::Invalid("ratio effect needs at least 4 distinct ratios".into()));
    }
    let sims: Vec<f64> = samples.iter().map(|s| s.similarity).collect();
    let lo = sims.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sims.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Err(StatsError::DegenerateResponse.into());
    }
    let normalised: Vec<f64> = sims.iter().map(|s| (s - lo) / (hi - lo)).collect();
    let ratios: Vec<f64> = samples.iter().map(|s| s.ratio).collect();
    Ok(fit_neg_exponential(&ratios, &normalised)?)
}

/// Linear fit of similarity on x + y at fixed distance.
///
/// Pairs are grouped by distance; each group's sizes are centred on the
/// group mean before pooling. Groups with a single pair carry no size
/// contrast and are dropped.
pub fn size_effect(samples: &[NumberPairSample]) -> Result<FitResult> {
    let mut groups: BTreeMap<u32, Vec<&NumberPairSample>> = BTreeMap::new();
    for s in samples {
        groups.entry(s.distance).or_default().push(s);
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for group in groups.values().filter(|g| g.len() >= 2) {
        let centre = group.iter().map(|s| s.size_sum as f64).sum::<f64>() / group.len() as f64;
        for s in group {
            xs.push(s.size_sum as f64 - centre);
            ys.push(s.similarity);
        }
    }
    if distinct_count(xs.iter().copied()) < 3 {
        return Err(Error::Invalid("size effect needs at least 3 size levels".into()));
    }
    Ok(fit_linear(&xs, &ys)?)
}

/// 1-D MDS of `1 - similarity`, correlated with `ln(n)`.
pub fn mnl_mds(samples: &[NumberPairSample], numbers: &NumberSet, opts: &MdsOptions) -> Result<MdsResult> {
    let pos: BTreeMap<u32, usize> = numbers
        .numbers
        .iter()
        .enumerate()
        .map(|(i, &n)| (n, i))
        .collect();
    let n = numbers.numbers.len();
    let mut d = vec![vec![0.0; n]; n];
    let mut seen = vec![vec![false; n]; n];
    for s in samples {
        let (Some(&i), Some(&j)) = (pos.get(&s.x), pos.get(&s.y)) else {
            continue;
        };
        let v = (1.0 - s.similarity).max(0.0);
        d[i][j] = v;
        d[j][i] = v;
        seen[i][j] = true;
        seen[j][i] = true;
    }
    for i in 0..n {
        for j in i + 1..n {
            if !seen[i][j] {
                return Err(Error::Invalid(format!(
                    "no similarity for pair ({}, {})",
                    numbers.numbers[i], numbers.numbers[j]
                )));
            }
        }
    }
    let target: Vec<f64> = numbers.numbers.iter().map(|&n| (n as f64).ln()).collect();
    Ok(mds_1d_with(&d, &target, opts)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumberConceptStats {
    pub sim_max: f64,
    pub sim_range: f64,
    pub mean_num_num: f64,
    pub mean_num_non: Option<f64>,
    pub mean_non_non: Option<f64>,
}

/// Similarity statistics between number words and non-number control words
/// in one slice. Control words are looked up in the `plain` format.
pub fn number_concept_stats(
    view: &CheckpointView<'_>,
    numbers: &NumberSet,
    non_numbers: &[String],
    layer: u32,
    format: TextFormat,
) -> Result<NumberConceptStats> {
    let nums = build_pairs(view, numbers, layer, format)?;
    concept_stats_from(view, &nums, numbers, non_numbers, layer, format)
}

fn concept_stats_from(
    view: &CheckpointView<'_>,
    nums: &[NumberPairSample],
    numbers: &NumberSet,
    non_numbers: &[String],
    layer: u32,
    format: TextFormat,
) -> Result<NumberConceptStats> {
    let sims: Vec<f64> = nums.iter().map(|s| s.similarity).collect();
    let max = sims.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = sims.iter().copied().fold(f64::INFINITY, f64::min);
    let mut stats = NumberConceptStats {
        sim_max: max,
        sim_range: max - min,
        mean_num_num: mean(&sims),
        mean_num_non: None,
        mean_non_non: None,
    };
    if non_numbers.is_empty() {
        return Ok(stats);
    }
    let num_vecs = (0..numbers.numbers.len())
        .map(|i| {
            let t = numbers.text(i, format).unwrap_or_default();
            lookup(view, layer, format, &t)
        })
        .collect::<Result<Vec<_>>>()?;
    let non_vecs = non_numbers
        .iter()
        .map(|w| lookup(view, layer, TextFormat::Plain, w))
        .collect::<Result<Vec<_>>>()?;
    let cos = |a: &[f64], b: &[f64]| {
        cosine_similarity(a, b).map_err(Error::stats_at(format!("control-word cosine at layer {layer}")))
    };
    let mut cross = Vec::new();
    for a in &num_vecs {
        for b in &non_vecs {
            cross.push(cos(a, b)?);
        }
    }
    stats.mean_num_non = Some(mean(&cross));
    let mut within = Vec::new();
    for i in 0..non_vecs.len() {
        for j in i + 1..non_vecs.len() {
            within.push(cos(non_vecs[i], non_vecs[j])?);
        }
    }
    if !within.is_empty() {
        stats.mean_non_non = Some(mean(&within));
    }
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NumericConfig {
    pub numbers: NumberSet,
    pub formats: Vec<TextFormat>,
    /// Layers to include; `None` means every layer present at the checkpoint.
    pub layers: Option<Vec<u32>>,
    pub control_words: Vec<String>,
    pub mds: MdsOptions,
}

impl Default for NumericConfig {
    fn default() -> Self {
        Self {
            numbers: NumberSet::default(),
            formats: TextFormat::NUMBER_FORMATS.to_vec(),
            layers: None,
            control_words: default_control_words(),
            mds: MdsOptions::default(),
        }
    }
}

/// Shipped non-number control words. Concrete nouns and adjectives of
/// similar frequency to small number words.
pub fn default_control_words() -> Vec<String> {
    ["apple", "chair", "river", "house", "green", "happy", "window", "dog", "music"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

/// Per-slice values. A `None` effect means the fit was undefined for the
/// slice; the reason is kept in `notes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericSlice {
    pub layer: u32,
    pub format: TextFormat,
    pub distance_r2: Option<f64>,
    pub ratio_r2: Option<f64>,
    pub size_r2: Option<f64>,
    pub mds_stress: Option<f64>,
    pub mds_correlation: Option<f64>,
    pub sim_range: f64,
    pub sim_max: f64,
    pub mean_num_num: f64,
    pub mean_num_non: Option<f64>,
    pub mean_non_non: Option<f64>,
    pub notes: Vec<String>,
}

/// Checkpoint-level means over (layer, format) slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericReport {
    pub distance_r2: Option<f64>,
    pub ratio_r2: Option<f64>,
    pub size_r2: Option<f64>,
    pub mds_stress: Option<f64>,
    pub mds_correlation: Option<f64>,
    pub sim_range: Option<f64>,
    pub sim_max: Option<f64>,
    pub mean_num_num: Option<f64>,
    pub mean_num_non: Option<f64>,
    pub mean_non_non: Option<f64>,
    pub slices: Vec<NumericSlice>,
}

impl NumericReport {
    /// Named aggregate values, in a fixed order.
    pub fn metrics(&self) -> Vec<(&'static str, Option<f64>)> {
        vec![
            ("distance_r2", self.distance_r2),
            ("ratio_r2", self.ratio_r2),
            ("size_r2", self.size_r2),
            ("mds_stress", self.mds_stress),
            ("mds_correlation", self.mds_correlation),
            ("sim_range", self.sim_range),
            ("sim_max", self.sim_max),
            ("mean_num_num", self.mean_num_num),
            ("mean_num_non", self.mean_num_non),
            ("mean_non_non", self.mean_non_non),
        ]
    }

    /// Aggregates precomputed slices; every aggregate is the plain mean of
    /// the slice values that are present.
    pub fn from_slices(mut slices: Vec<NumericSlice>) -> Self {
        slices.sort_by_key(|s| (s.layer, s.format));
        let agg = |f: &dyn Fn(&NumericSlice) -> Option<f64>| -> Option<f64> {
            let vals: Vec<f64> = slices.iter().filter_map(f).collect();
            (!vals.is_empty()).then(|| mean(&vals))
        };
        Self {
            distance_r2: agg(&|s| s.distance_r2),
            ratio_r2: agg(&|s| s.ratio_r2),
            size_r2: agg(&|s| s.size_r2),
            mds_stress: agg(&|s| s.mds_stress),
            mds_correlation: agg(&|s| s.mds_correlation),
            sim_range: agg(&|s| Some(s.sim_range)),
            sim_max: agg(&|s| Some(s.sim_max)),
            mean_num_num: agg(&|s| Some(s.mean_num_num)),
            mean_num_non: agg(&|s| s.mean_num_non),
            mean_non_non: agg(&|s| s.mean_non_non),
            slices,
        }
    }
}

/// Every effect for one (layer, format) slice.
pub fn numeric_slice(
    view: &CheckpointView<'_>,
    config: &NumericConfig,
    layer: u32,
    format: TextFormat,
) -> Result<NumericSlice> {
    let samples = build_pairs(view, &config.numbers, layer, format)?;
    let mut notes = Vec::new();
    let mut keep = |name: &str, r: Result<f64>| match r {
        Ok(v) => Some(v),
        Err(e) => {
            notes.push(format!("{name}: {e}"));
            None
        }
    };
    let distance_r2 = keep("distance", distance_effect(&samples).map(|f| f.r_squared));
    let ratio_r2 = keep("ratio", ratio_effect(&samples).map(|f| f.r_squared));
    let size_r2 = keep("size", size_effect(&samples).map(|f| f.r_squared));
    let mds = mnl_mds(&samples, &config.numbers, &config.mds);
    let (mds_stress, mds_correlation) = match mds {
        Ok(m) => (Some(m.stress), Some(m.correlation)),
        Err(e) => {
            notes.push(format!("mds: {e}"));
            (None, None)
        }
    };
    let stats = concept_stats_from(view, &samples, &config.numbers, &config.control_words, layer, format)?;
    Ok(NumericSlice {
        layer,
        format,
        distance_r2,
        ratio_r2,
        size_r2,
        mds_stress,
        mds_correlation,
        sim_range: stats.sim_range,
        sim_max: stats.sim_max,
        mean_num_num: stats.mean_num_num,
        mean_num_non: stats.mean_num_non,
        mean_non_non: stats.mean_non_non,
        notes,
    })
}

/// All layers × configured formats at one checkpoint, averaged.
pub fn numeric_report(view: &CheckpointView<'_>, config: &NumericConfig) -> Result<NumericReport> {
    let layers = config.layers.clone().unwrap_or_else(|| view.layers());
    if layers.is_empty() {
        return Err(Error::Invalid(format!(
            "no embeddings at {}@{}",
            view.model_id(),
            view.checkpoint_step()
        )));
    }
    let mut slices = Vec::with_capacity(layers.len() * config.formats.len());
    for &layer in &layers {
        for &format in &config.formats {
            slices.push(numeric_slice(view, config, layer, format)?);
        }
    }
    Ok(NumericReport::from_slices(slices))
}
