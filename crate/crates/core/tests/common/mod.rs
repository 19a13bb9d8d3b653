//! Shared fixtures and independently coded reference implementations.
#![allow(dead_code)]

use devalign_core::trace::{EmbeddingRecord, LogProbRecord, Task, TextFormat, TraceSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MODEL: &str = "m";
pub const STEP: u64 = 1;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A single-checkpoint trace assembled record by record.
pub struct Fixture {
    pub set: TraceSet,
}

impl Fixture {
    pub fn new() -> Self {
        Self { set: TraceSet::new() }
    }

    pub fn emb(&mut self, layer: u32, format: TextFormat, text: &str, vector: Vec<f64>) -> &mut Self {
        self.set
            .insert_embedding(EmbeddingRecord {
                model_id: MODEL.into(),
                checkpoint_step: STEP,
                tokens_seen: 2_000_000,
                layer,
                text: text.into(),
                text_format: format,
                vector,
            })
            .expect("valid embedding");
        self
    }

    pub fn lp(&mut self, task: Task, item: &str, cond: &str, logprob: f64) -> &mut Self {
        self.set
            .insert_logprob(LogProbRecord {
                model_id: MODEL.into(),
                checkpoint_step: STEP,
                tokens_seen: 2_000_000,
                task,
                item_id: item.into(),
                condition: cond.into(),
                text: format!("{item} {cond}"),
                total_logprob: logprob,
                n_tokens: 5,
            })
            .expect("valid logprob");
        self
    }
}

pub fn gaussian_vec(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// Textbook cosine, written out term by term.
pub fn cosine_oracle(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Mid-rank of each value by counting: 1 + (#smaller) + (#equal - 1) / 2.
pub fn ranks_by_counting(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|&x| {
            let below = xs.iter().filter(|&&y| y < x).count() as f64;
            let equal = xs.iter().filter(|&&y| y == x).count() as f64;
            1.0 + below + (equal - 1.0) / 2.0
        })
        .collect()
}

fn pearson_oracle(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Rank correlation: the classic `1 - 6 Σd² / (n(n²-1))` when there are no
/// ties, Pearson on counted mid-ranks otherwise.
pub fn spearman_oracle(xs: &[f64], ys: &[f64]) -> f64 {
    let rx = ranks_by_counting(xs);
    let ry = ranks_by_counting(ys);
    let untied = |r: &[f64]| r.iter().all(|v| v.fract() == 0.0) && {
        let mut s = r.to_vec();
        s.sort_by(f64::total_cmp);
        s.windows(2).all(|w| w[0] != w[1])
    };
    if untied(&rx) && untied(&ry) {
        let n = xs.len() as f64;
        let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
        1.0 - 6.0 * d2 / (n * (n * n - 1.0))
    } else {
        pearson_oracle(&rx, &ry)
    }
}

/// Closed-form simple regression: slope = cov/var, intercept = ȳ - slope x̄.
pub fn ols_oracle(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let my = sy / n;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    (slope, intercept, 1.0 - ss_res / ss_tot)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn raw_stress(delta: &[Vec<f64>], x: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            s += (delta[i][j] - (x[i] - x[j]).abs()).powi(2);
        }
    }
    s
}

pub fn stress1_oracle(delta: &[Vec<f64>], x: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let d = (x[i] - x[j]).abs();
            num += (delta[i][j] - d).powi(2);
            den += d * d;
        }
    }
    (num / den).sqrt()
}

/// Globally optimal 1-D metric scaling for small `n` by enumerating point
/// orders. For a fixed order the least-squares coordinates are
/// `x_i = (1/n) Σ_j sign(order_i - order_j) δ_ij`, and the best order is
/// the one with the least raw stress. Returns (coords, Kruskal stress-1).
pub fn exhaustive_mds(delta: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let n = delta.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for order in permutations(n) {
        let mut pos = vec![0usize; n];
        for (rank, &p) in order.iter().enumerate() {
            pos[p] = rank;
        }
        let x: Vec<f64> = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i)
                    .map(|j| if pos[i] > pos[j] { delta[i][j] } else { -delta[i][j] })
                    .sum::<f64>()
                    / n as f64
            })
            .collect();
        let s = raw_stress(delta, &x);
        if best.as_ref().is_none_or(|(b, _)| s < *b) {
            best = Some((s, x));
        }
    }
    let (_, x) = best.expect("at least one order");
    let s1 = stress1_oracle(delta, &x);
    (x, s1)
}

/// Euclidean distances between random points in the plane.
pub fn random_planar_metric(rng: &mut impl Rng, n: usize) -> Vec<Vec<f64>> {
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen::<f64>(), rng.gen::<f64>())).collect();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt())
                .collect()
        })
        .collect()
}

/// A log-spaced logistic development curve: 41 checkpoints from 10^6 to
/// 10^11 tokens, rising from 10% to 90% between 10^8 and 10^10.
pub fn logistic_schedule() -> (Vec<u64>, Vec<f64>) {
    let k = 9f64.ln();
    let tokens: Vec<u64> = (0..41).map(|i| 10f64.powf(6.0 + i as f64 * 0.125).round() as u64).collect();
    let values = tokens
        .iter()
        .map(|&t| 1.0 / (1.0 + (-k * ((t as f64).log10() - 9.0)).exp()))
        .collect();
    (tokens, values)
}

/// Re-derives every structural promise of an RPM item from its raw cells:
/// levels in range, candidates distinct, each distractor one attribute away
/// from the answer, and exactly one candidate (the keyed one) completing all
/// three attribute rules.
pub fn check_rpm_item(item: &devalign_core::fluid::RpmItem) -> Result<(), String> {
    use devalign_core::fluid::{Cell, Rule};
    let attrs = |c: &Cell| [c.shape, c.size, c.color];
    let ranges = [(1u8, 5u8), (1, 9), (0, 9)];
    for c in item.context.iter().chain(&item.candidates) {
        for (v, (lo, hi)) in attrs(c).iter().zip(ranges) {
            if !(lo..=hi).contains(v) {
                return Err(format!("{}: level {v} outside {lo}..={hi}", item.item_id));
            }
        }
    }
    for i in 0..8 {
        for j in i + 1..8 {
            if item.candidates[i] == item.candidates[j] {
                return Err(format!("{}: candidates {i} and {j} coincide", item.item_id));
            }
        }
    }
    let answer = item.candidates.get(item.answer_index).ok_or("answer index out of range")?;
    for (k, c) in item.candidates.iter().enumerate() {
        let diffs = attrs(c).iter().zip(attrs(answer)).filter(|(a, b)| **a != *b).count();
        if k != item.answer_index && diffs != 1 {
            return Err(format!("{}: distractor {k} differs in {diffs} attributes", item.item_id));
        }
    }
    let rules = item.rules.ok_or("generated item without rules")?;
    let rule_list = [rules.shape, rules.size, rules.color];
    let holds = |rule: Rule, g: [[i32; 3]; 3]| -> bool {
        match rule {
            Rule::Constant => g.iter().all(|r| r[0] == r[1] && r[1] == r[2]),
            Rule::Progression(d) => {
                let d = i32::from(d);
                g.iter().all(|r| r[1] - r[0] == d && r[2] - r[1] == d)
            }
            Rule::DistributeThree => {
                let first = g[0];
                let mut sorted = first;
                sorted.sort();
                sorted[0] != sorted[1]
                    && sorted[1] != sorted[2]
                    && g[1] == [first[1], first[2], first[0]]
                    && g[2] == [first[2], first[0], first[1]]
            }
        }
    };
    let completes = |cand: &Cell| -> bool {
        let mut cells: Vec<Cell> = item.context.to_vec();
        cells.push(*cand);
        (0..3).all(|a| {
            let mut g = [[0i32; 3]; 3];
            for (idx, c) in cells.iter().enumerate() {
                g[idx / 3][idx % 3] = i32::from(attrs(c)[a]);
            }
            holds(rule_list[a], g)
        })
    };
    let fitting: Vec<usize> = (0..8).filter(|&k| completes(&item.candidates[k])).collect();
    if fitting != [item.answer_index] {
        return Err(format!(
            "{}: candidates {fitting:?} complete the rules, answer is {}",
            item.item_id, item.answer_index
        ));
    }
    Ok(())
}

/// The three vector analogy scores for one candidate, straight from their
/// definitions.
pub fn analogy_oracle(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> [f64; 3] {
    let offset: Vec<f64> = (0..a.len()).map(|i| c[i] - a[i] + b[i]).collect();
    let cos_add = cosine_oracle(d, &offset);
    let cos_mul = cosine_oracle(d, b) * cosine_oracle(d, c) / (cosine_oracle(d, a) + 1e-6);
    let ab: Vec<f64> = a.iter().chain(b).copied().collect();
    let cd: Vec<f64> = c.iter().chain(d).copied().collect();
    [cos_add, cos_mul, cosine_oracle(&ab, &cd)]
}

/// First index of the largest value.
pub fn first_argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
