//! Ordinary least squares and a damped Gauss-Newton fit of the decaying
//! exponential `s(r) = a * exp(-b * (r - 1)) + c`.

use serde::{Deserialize, Serialize};

use super::StatsError;

pub const NEG_EXP_MAX_ITER: usize = 200;
pub const NEG_EXP_GRADIENT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    Linear,
    NegExponential,
}

/// Outcome of a fit. `params` is `[slope, intercept]` for linear fits and
/// `[a, b, c]` for the exponential family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub kind: FitKind,
    pub params: Vec<f64>,
    pub residuals: Vec<f64>,
    pub r_squared: f64,
    pub n_points: usize,
    pub converged: bool,
}

impl FitResult {
    pub fn predict(&self, x: f64) -> f64 {
        match self.kind {
            FitKind::Linear => self.params[0] * x + self.params[1],
            FitKind::NegExponential => {
                neg_exponential(x, self.params[0], self.params[1], self.params[2])
            }
        }
    }
}

#[inline]
pub fn neg_exponential(r: f64, a: f64, b: f64, c: f64) -> f64 {
    a * (-b * (r - 1.0)).exp() + c
}

fn check_inputs(xs: &[f64], ys: &[f64], min_points: usize) -> Result<(), StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < min_points {
        return Err(StatsError::TooFewPoints {
            needed: min_points,
            got: xs.len(),
        });
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

fn total_sum_of_squares(ys: &[f64]) -> Result<f64, StatsError> {
    if ys.iter().all(|&y| y == ys[0]) {
        return Err(StatsError::DegenerateResponse);
    }
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if ss_tot == 0.0 {
        return Err(StatsError::DegenerateResponse);
    }
    Ok(ss_tot)
}

/// `1 - SS_res / SS_tot`; errors when the response is flat.
pub fn r_squared(ys: &[f64], residuals: &[f64]) -> Result<f64, StatsError> {
    let ss_tot = total_sum_of_squares(ys)?;
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Ordinary least-squares line through `(xs, ys)`.
pub fn fit_linear(xs: &[f64], ys: &[f64]) -> Result<FitResult, StatsError> {
    check_inputs(xs, ys, 3)?;
    if xs.iter().all(|&x| x == xs[0]) {
        return Err(StatsError::DegeneratePredictor);
    }
    let ss_tot = total_sum_of_squares(ys)?;
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| y - (slope * x + intercept))
        .collect();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    Ok(FitResult {
        kind: FitKind::Linear,
        params: vec![slope, intercept],
        residuals,
        r_squared: 1.0 - ss_res / ss_tot,
        n_points: xs.len(),
        converged: true,
    })
}

/// Exponential fit together with the objective value after every accepted step.
#[derive(Debug, Clone)]
pub struct NegExpTrace {
    pub fit: FitResult,
    /// `0.5 * sum(residual^2)`, starting with the initial guess.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
}

/// Fits `a * exp(-b * (r - 1)) + c` with `b >= 0`.
///
/// Non-convergence is not an error: the best parameters found are returned
/// with `converged == false`.
pub fn fit_neg_exponential(ratios: &[f64], sims: &[f64]) -> Result<FitResult, StatsError> {
    fit_neg_exponential_traced(ratios, sims).map(|t| t.fit)
}

pub fn fit_neg_exponential_traced(ratios: &[f64], sims: &[f64]) -> Result<NegExpTrace, StatsError> {
    check_inputs(ratios, sims, 4)?;
    if let Some(&r) = ratios.iter().find(|&&r| r < 1.0) {
        return Err(StatsError::RatioBelowOne(r));
    }
    let ss_tot = total_sum_of_squares(sims)?;

    let max = sims.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = sims.iter().copied().fold(f64::INFINITY, f64::min);
    let mut p = [max - min, 1.0, min];
    let mut cost = objective(ratios, sims, &p);
    let mut history = vec![cost];
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < NEG_EXP_MAX_ITER {
        iterations += 1;
        let (jtj, grad) = normal_equations(ratios, sims, &p);
        if projected_gradient_norm(&grad, &p) <= NEG_EXP_GRADIENT_TOL {
            converged = true;
            break;
        }

        let mut accepted = false;
        while lambda < 1e16 {
            let mut damped = jtj;
            for (k, row) in damped.iter_mut().enumerate() {
                row[k] += lambda * jtj[k][k].max(1e-12);
            }
            let step = match solve3(damped, [-grad[0], -grad[1], -grad[2]]) {
                Some(s) => s,
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let mut trial = [p[0] + step[0], p[1] + step[1], p[2] + step[2]];
            trial[1] = trial[1].max(0.0);
            let trial_cost = objective(ratios, sims, &trial);
            if trial_cost.is_finite() && trial_cost < cost {
                let moved = (0..3).map(|k| (trial[k] - p[k]).abs()).fold(0.0, f64::max);
                let scale = p.iter().map(|v| v.abs()).fold(1e-12, f64::max);
                let rel_drop = (cost - trial_cost) / cost.max(f64::MIN_POSITIVE);
                p = trial;
                cost = trial_cost;
                history.push(cost);
                lambda = (lambda * 0.1).max(1e-12);
                accepted = true;
                if moved <= 1e-14 * scale && rel_drop <= 1e-14 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no descent direction left at machine precision
            let (_, grad) = normal_equations(ratios, sims, &p);
            converged = projected_gradient_norm(&grad, &p) <= NEG_EXP_GRADIENT_TOL.sqrt()
                || cost <= 1e-28 * ss_tot;
            break;
        }
        if converged {
            break;
        }
    }

    let residuals: Vec<f64> = ratios
        .iter()
        .zip(sims)
        .map(|(&r, &s)| s - neg_exponential(r, p[0], p[1], p[2]))
        .collect();
    let ss_res: f64 = residuals.iter().map(|e| e * e).sum();
    Ok(NegExpTrace {
        fit: FitResult {
            kind: FitKind::NegExponential,
            params: p.to_vec(),
            residuals,
            r_squared: 1.0 - ss_res / ss_tot,
            n_points: ratios.len(),
            converged,
        },
        objective_history: history,
        iterations,
    })
}

fn objective(rs: &[f64], ys: &[f64], p: &[f64; 3]) -> f64 {
    0.5 * rs
        .iter()
        .zip(ys)
        .map(|(&r, &y)| {
            let e = neg_exponential(r, p[0], p[1], p[2]) - y;
            e * e
        })
        .sum::<f64>()
}

/// `J^T J` and `J^T e` for residuals `e = model - y`.
fn normal_equations(rs: &[f64], ys: &[f64], p: &[f64; 3]) -> ([[f64; 3]; 3], [f64; 3]) {
    let mut jtj = [[0.0; 3]; 3];
    let mut grad = [0.0; 3];
    for (&r, &y) in rs.iter().zip(ys) {
        let decay = (-p[1] * (r - 1.0)).exp();
        let row = [decay, -p[0] * (r - 1.0) * decay, 1.0];
        let e = p[0] * decay + p[2] - y;
        for i in 0..3 {
            grad[i] += row[i] * e;
            for j in 0..3 {
                jtj[i][j] += row[i] * row[j];
            }
        }
    }
    (jtj, grad)
}

/// Gradient norm with the `b >= 0` bound folded in.
fn projected_gradient_norm(grad: &[f64; 3], p: &[f64; 3]) -> f64 {
    let gb = if p[1] <= 0.0 && grad[1] > 0.0 { 0.0 } else { grad[1] };
    grad[0].abs().max(gb.abs()).max(grad[2].abs())
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}
