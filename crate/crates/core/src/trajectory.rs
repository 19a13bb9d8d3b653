//! Developmental curves: one submetric over checkpoints, with a
//! phase-transition window located on the smoothed curve.
//!
//! The window is the shortest run of consecutive checkpoints whose positive
//! increments of the smoothed curve add up to at least `gain_fraction` of
//! all positive increments. Length is counted in checkpoints, so on a
//! log-spaced schedule it is a span in log-tokens.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numstats::{mean, std_dev};
use crate::score::{Suite, SuiteScore};

pub const MIN_POINTS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub checkpoint_step: u64,
    pub tokens_seen: u64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseWindow {
    pub start_index: usize,
    pub end_index: usize,
    pub start_tokens: u64,
    pub end_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryCurve {
    pub model_id: String,
    pub suite: Suite,
    pub submetric: String,
    /// Sorted by tokens seen, one point per checkpoint.
    pub points: Vec<TrajectoryPoint>,
    pub window: Option<PhaseWindow>,
}

impl TrajectoryCurve {
    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    pub fn key(&self) -> String {
        format!("{}__{}__{}", self.model_id, self.suite, self.submetric)
    }
}

/// Groups scores by (model, suite, submetric) into sorted curves.
/// Two scores for the same checkpoint in one group are an error.
pub fn build_curves(scores: &[SuiteScore]) -> Result<Vec<TrajectoryCurve>> {
    let mut groups: BTreeMap<(String, Suite, String), Vec<TrajectoryPoint>> = BTreeMap::new();
    for s in scores {
        groups
            .entry((s.model_id.clone(), s.suite, s.submetric.clone()))
            .or_default()
            .push(TrajectoryPoint {
                checkpoint_step: s.checkpoint_step,
                tokens_seen: s.tokens_seen,
                value: s.value,
            });
    }
    groups
        .into_iter()
        .map(|((model_id, suite, submetric), mut points)| {
            points.sort_by_key(|p| (p.tokens_seen, p.checkpoint_step));
            if let Some(w) = points.windows(2).find(|w| w[0].checkpoint_step == w[1].checkpoint_step) {
                return Err(Error::Invalid(format!(
                    "{model_id}/{suite}/{submetric}: checkpoint {} appears twice",
                    w[0].checkpoint_step
                )));
            }
            if points.iter().any(|p| !p.value.is_finite()) {
                return Err(Error::Invalid(format!("{model_id}/{suite}/{submetric}: non-finite value")));
            }
            Ok(TrajectoryCurve {
                model_id,
                suite,
                submetric,
                points,
                window: None,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowOptions {
    /// Moving-average width (odd).
    pub width: usize,
    pub gain_fraction: f64,
}

impl Default for WindowOptions {
    fn default() -> Self {
        Self {
            width: 5,
            gain_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub window: Option<PhaseWindow>,
    /// Tokens at the last pre-window checkpoint still near the starting level.
    pub warmup_end: Option<u64>,
    /// Spread of the smoothed curve after the window.
    pub post_window_instability: Option<f64>,
    pub smoothed: Vec<f64>,
    pub total_gain: f64,
    pub window_gain: f64,
}

/// Centered moving average; near the ends the window shrinks symmetrically
/// so it stays centered.
pub fn smooth(values: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    let n = values.len();
    (0..n)
        .map(|i| {
            let h = half.min(i).min(n - 1 - i);
            mean(&values[i - h..=i + h])
        })
        .collect()
}

pub fn detect_window(curve: &TrajectoryCurve, opts: &WindowOptions) -> Result<PhaseReport> {
    let raw = curve.values();
    let n = raw.len();
    if n < MIN_POINTS {
        return Err(Error::Invalid(format!(
            "{}: window detection needs at least {MIN_POINTS} checkpoints, got {n}",
            curve.key()
        )));
    }
    if opts.width == 0 || opts.width % 2 == 0 {
        return Err(Error::Invalid(format!("smoothing width must be odd, got {}", opts.width)));
    }
    if !(opts.gain_fraction > 0.0 && opts.gain_fraction <= 1.0) {
        return Err(Error::Invalid(format!("gain fraction must be in (0, 1], got {}", opts.gain_fraction)));
    }
    let smoothed = smooth(&raw, opts.width);
    let gains: Vec<f64> = smoothed.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect();
    let total_gain: f64 = gains.iter().sum();

    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let resid: Vec<f64> = raw.iter().zip(&smoothed).map(|(r, s)| r - s).collect();
    let noise = std_dev(&resid);
    let flat = hi - lo == 0.0 || total_gain <= 2.0 * noise;
    let none = PhaseReport {
        window: None,
        warmup_end: None,
        post_window_instability: None,
        smoothed: smoothed.clone(),
        total_gain,
        window_gain: 0.0,
    };
    if flat {
        return Ok(none);
    }

    // cum[i] = gain accumulated from point 0 to point i
    let mut cum = vec![0.0; n];
    for i in 1..n {
        cum[i] = cum[i - 1] + gains[i - 1];
    }
    let need = opts.gain_fraction * total_gain * (1.0 - 1e-12);
    let median_pos = cum.iter().position(|&c| c >= 0.5 * total_gain).unwrap_or(0) as f64;
    // gains this close are the same gain summed in a different order
    let tie_tol = 1e-12 * total_gain;

    let mut best: Option<(usize, usize, f64)> = None;
    'len: for len in 1..n {
        for a in 0..n - len {
            let b = a + len;
            let g = cum[b] - cum[a];
            if g < need {
                continue;
            }
            let better = match best {
                None => true,
                Some((ba, bb, bg)) => {
                    if (g - bg).abs() > tie_tol {
                        g > bg
                    } else {
                        let mid = (a + b) as f64 / 2.0;
                        let bmid = (ba + bb) as f64 / 2.0;
                        (mid - median_pos).abs() < (bmid - median_pos).abs()
                    }
                }
            };
            if better {
                best = Some((a, b, g));
            }
        }
        if best.is_some() {
            break 'len;
        }
    }
    let Some((a, b, window_gain)) = best else {
        return Ok(none);
    };

    let pre = &raw[..=a];
    let tol = 2.0 * std_dev(pre);
    let mut warm = 0;
    for i in 0..=a {
        if (smoothed[i] - smoothed[0]).abs() <= tol {
            warm = i;
        } else {
            break;
        }
    }
    let post = &smoothed[b + 1..];
    Ok(PhaseReport {
        window: Some(PhaseWindow {
            start_index: a,
            end_index: b,
            start_tokens: curve.points[a].tokens_seen,
            end_tokens: curve.points[b].tokens_seen,
        }),
        warmup_end: Some(curve.points[warm].tokens_seen),
        post_window_instability: (post.len() >= 2).then(|| std_dev(post)),
        smoothed,
        total_gain,
        window_gain,
    })
}

/// Runs detection and stores the window on the curve.
pub fn annotate(curve: &mut TrajectoryCurve, opts: &WindowOptions) -> Result<PhaseReport> {
    let report = detect_window(curve, opts)?;
    curve.window = report.window;
    Ok(report)
}

/// `tokens_seen,raw,smoothed,in_window,seed` rows.
pub fn write_curve_csv<W: Write>(
    curve: &TrajectoryCurve,
    report: &PhaseReport,
    seed: u64,
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "tokens_seen,raw,smoothed,in_window,seed")?;
    for (i, (p, s)) in curve.points.iter().zip(&report.smoothed).enumerate() {
        let inside = report
            .window
            .is_some_and(|w| (w.start_index..=w.end_index).contains(&i));
        writeln!(out, "{},{},{},{},{seed}", p.tokens_seen, p.value, s, inside)?;
    }
    Ok(())
}
