//! One-dimensional metric MDS by stress majorization (SMACOF).
//!
//! In one dimension the Guttman transform depends only on the ordering of
//! the points, so plain SMACOF stalls at whichever ordering the start
//! implies. Each restart therefore alternates SMACOF with a local search
//! that moves single points to other positions in the ordering, accepting a
//! move only when it lowers raw stress.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{pearson, StatsError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MdsOptions {
    pub restarts: usize,
    pub seed: u64,
    /// Stop when normalized raw stress improves by less than this.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for MdsOptions {
    fn default() -> Self {
        Self {
            restarts: 8,
            seed: 0x5EED_4D05,
            tolerance: 1e-9,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdsRestart {
    pub stress: f64,
    pub correlation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdsResult {
    /// Configuration, sign-aligned so that it correlates non-negatively with the target.
    pub coords: Vec<f64>,
    /// Kruskal stress-1 of `coords`.
    pub stress: f64,
    /// Pearson correlation between `coords` and the target scale.
    pub correlation: f64,
    pub restarts: Vec<MdsRestart>,
}

pub fn mds_1d(dissimilarities: &[Vec<f64>], target: &[f64]) -> Result<MdsResult, StatsError> {
    mds_1d_with(dissimilarities, target, &MdsOptions::default())
}

pub fn mds_1d_with(
    dissimilarities: &[Vec<f64>],
    target: &[f64],
    opts: &MdsOptions,
) -> Result<MdsResult, StatsError> {
    let n = dissimilarities.len();
    validate(dissimilarities)?;
    if target.len() != n {
        return Err(StatsError::LengthMismatch {
            left: n,
            right: target.len(),
        });
    }
    if n < 2 {
        return Err(StatsError::TooFewPoints { needed: 2, got: n });
    }
    let delta = dissimilarities;
    let norm: f64 = pairs(n).map(|(i, j)| delta[i][j] * delta[i][j]).sum();
    let norm = if norm > 0.0 { norm } else { 1.0 };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut restarts = Vec::with_capacity(opts.restarts.max(1));
    for _ in 0..opts.restarts.max(1) {
        let start: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let coords = optimise(delta, start, norm, opts);
        let raw = raw_stress(delta, &coords);
        let (coords, correlation) = align_sign(coords, target);
        restarts.push(MdsRestart {
            stress: kruskal_stress(delta, &coords),
            correlation,
        });
        if best.as_ref().is_none_or(|(s, _)| raw < *s) {
            best = Some((raw, coords));
        }
    }
    let (_, coords) = best.expect("at least one restart");
    let (coords, correlation) = align_sign(coords, target);
    Ok(MdsResult {
        stress: kruskal_stress(delta, &coords),
        correlation,
        coords,
        restarts,
    })
}

fn validate(d: &[Vec<f64>]) -> Result<(), StatsError> {
    let n = d.len();
    for (i, row) in d.iter().enumerate() {
        if row.len() != n {
            return Err(StatsError::NotSquare);
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite);
        }
        if row[i] != 0.0 {
            return Err(StatsError::NonZeroDiagonal(i));
        }
    }
    for (i, j) in pairs(n) {
        if d[i][j] < 0.0 {
            return Err(StatsError::NegativeDissimilarity(i, j));
        }
        if (d[i][j] - d[j][i]).abs() > 1e-12 * (1.0 + d[i][j].abs()) {
            return Err(StatsError::NotSymmetric(i, j));
        }
    }
    Ok(())
}

fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

fn raw_stress(delta: &[Vec<f64>], x: &[f64]) -> f64 {
    pairs(x.len())
        .map(|(i, j)| {
            let e = delta[i][j] - (x[i] - x[j]).abs();
            e * e
        })
        .sum()
}

/// Kruskal stress-1: `sqrt(sum (delta - d)^2 / sum d^2)` over `i < j`,
/// with `d` the configuration distances.
pub fn kruskal_stress(delta: &[Vec<f64>], x: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, j) in pairs(x.len()) {
        let d = (x[i] - x[j]).abs();
        num += (delta[i][j] - d).powi(2);
        den += d * d;
    }
    if den == 0.0 {
        return 1.0;
    }
    (num / den).sqrt()
}

fn guttman(delta: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..n {
                if i == j {
                    continue;
                }
                let diff = x[i] - x[j];
                if diff != 0.0 {
                    acc += delta[i][j] * diff / diff.abs();
                }
            }
            acc / n as f64
        })
        .collect()
}

fn smacof(delta: &[Vec<f64>], mut x: Vec<f64>, norm: f64, opts: &MdsOptions) -> Vec<f64> {
    let mut stress = raw_stress(delta, &x) / norm;
    for _ in 0..opts.max_iter {
        let next = guttman(delta, &x);
        let next_stress = raw_stress(delta, &next) / norm;
        let improvement = stress - next_stress;
        x = next;
        stress = next_stress;
        if improvement < opts.tolerance {
            break;
        }
    }
    x
}

/// Coordinates minimising raw stress for a fixed left-to-right ordering.
fn ordered_solution(delta: &[Vec<f64>], order: &[usize]) -> Vec<f64> {
    let n = order.len();
    let mut rank = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        rank[i] = pos;
    }
    (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| if rank[i] > rank[j] { delta[i][j] } else { -delta[i][j] })
                .sum::<f64>()
                / n as f64
        })
        .collect()
}

fn ordering(x: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    order
}

fn optimise(delta: &[Vec<f64>], start: Vec<f64>, norm: f64, opts: &MdsOptions) -> Vec<f64> {
    let n = start.len();
    let mut x = smacof(delta, start, norm, opts);
    let mut stress = raw_stress(delta, &x);
    loop {
        let order = ordering(&x);
        let mut improved = None;
        'search: for from in 0..n {
            for to in 0..n {
                if from == to {
                    continue;
                }
                let mut moved = order.clone();
                let item = moved.remove(from);
                moved.insert(to, item);
                let candidate = ordered_solution(delta, &moved);
                let s = raw_stress(delta, &candidate);
                if s < stress - 1e-12 * norm {
                    improved = Some(candidate);
                    break 'search;
                }
            }
        }
        match improved {
            Some(candidate) => {
                x = smacof(delta, candidate, norm, opts);
                stress = raw_stress(delta, &x);
            }
            None => return x,
        }
    }
}

fn align_sign(mut coords: Vec<f64>, target: &[f64]) -> (Vec<f64>, f64) {
    let r = pearson(&coords, target).unwrap_or(0.0);
    if r < 0.0 {
        coords.iter_mut().for_each(|c| *c = -*c);
    }
    (coords, r.abs())
}
