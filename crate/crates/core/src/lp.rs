//! Entry-wise ℓp reconstruction: the convex residual subproblem and the
//! sampling solver built on it.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{RoundRecord, SelectResult};
use crate::matrix::DenseMatrix;

/// min over x of ‖u − C x‖_p^p for p ≥ 1, by smoothed iteratively
/// reweighted least squares with backtracking. Accurate to ~1e-6 relative
/// on well-scaled inputs.
pub fn lp_residual(u: &DVector<f64>, cols: &[DVector<f64>], p: f64) -> Result<f64> {
    if p < 1.0 {
        return Err(Error::InvalidParameter(format!("p must be >= 1, got {p}")));
    }
    if cols.is_empty() {
        return Ok(u.iter().map(|v| v.abs().powf(p)).sum());
    }
    let d = u.len();
    if cols.iter().any(|c| c.len() != d) {
        return Err(Error::DimensionMismatch("ragged column lengths".into()));
    }
    let c = DMatrix::from_fn(d, cols.len(), |r, j| cols[j][r]);

    // Least-squares start; exact answer for p = 2.
    let mut x = least_squares(&c, u);
    if (p - 2.0).abs() < 1e-14 {
        let r = u - &c * &x;
        return Ok(r.norm_squared());
    }

    let scale = (u.norm_squared() / d as f64).max(1e-30);
    let objective = |x: &DVector<f64>, smooth: f64| -> f64 {
        let r = u - &c * x;
        r.iter().map(|v| (v * v + smooth).powf(p / 2.0)).sum()
    };

    let mut smooth = 1e-2 * scale;
    while smooth > 1e-18 * scale {
        for _ in 0..200 {
            let r = u - &c * &x;
            let weights: Vec<f64> = r.iter().map(|v| (v * v + smooth).powf(p / 2.0 - 1.0)).collect();
            let x_ls = weighted_least_squares(&c, u, &weights);
            let cur = objective(&x, smooth);
            // Damped update: full IRLS steps can overshoot for p > 2.
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let cand = &x * (1.0 - t) + &x_ls * t;
                if objective(&cand, smooth) <= cur * (1.0 + 1e-15) {
                    let moved = (&cand - &x).norm();
                    x = cand;
                    accepted = true;
                    if moved <= 1e-12 * (1.0 + x.norm()) {
                        t = -1.0; // signal convergence
                    }
                    break;
                }
                t *= 0.5;
            }
            if !accepted || t < 0.0 {
                break;
            }
        }
        smooth *= 1e-2;
    }
    let r = u - &c * &x;
    Ok(r.iter().map(|v| v.abs().powf(p)).sum())
}

fn least_squares(c: &DMatrix<f64>, u: &DVector<f64>) -> DVector<f64> {
    let svd = c.clone().svd(true, true);
    svd.solve(u, 1e-12).unwrap_or_else(|_| DVector::zeros(c.ncols()))
}

fn weighted_least_squares(c: &DMatrix<f64>, u: &DVector<f64>, w: &[f64]) -> DVector<f64> {
    let mut cw = c.clone();
    let mut uw = u.clone();
    for (i, &wi) in w.iter().enumerate() {
        let s = wi.sqrt();
        for j in 0..cw.ncols() {
            cw[(i, j)] *= s;
        }
        uw[i] *= s;
    }
    least_squares(&cw, &uw)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpSelectParams {
    pub m: usize,
    pub k: usize,
    pub delta: f64,
    pub p: f64,
    /// Guess for the optimal total ℓp^p error, from a ladder sweep.
    pub theta_guess: f64,
}

/// SELECT skeleton under entry-wise ℓp error: sample 2k columns per round,
/// mark covered every active column whose ℓp residual against them is at
/// most 100(k+1)·guess/n, resample on a short round, fail when no
/// repetition ever meets the quota.
pub fn lp_select<R: Rng>(
    a: &DenseMatrix,
    params: &LpSelectParams,
    rng: &mut R,
) -> Result<SelectResult> {
    let LpSelectParams {
        m,
        k,
        delta,
        p,
        theta_guess,
    } = *params;
    if p < 1.0 {
        return Err(Error::InvalidParameter(format!("p must be >= 1, got {p}")));
    }
    if !(theta_guess > 0.0) {
        return Err(Error::InvalidParameter("theta_guess must be positive".into()));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidParameter("delta must lie in (0, 1]".into()));
    }
    let n = a.cols();
    if m > n {
        return Err(Error::InvalidParameter(format!("m = {m} exceeds n = {n}")));
    }
    let n0 = (2 * k).max(1);
    let threshold = 100.0 * (k as f64 + 1.0) * theta_guess / n as f64;
    let reps = (16.0 * (n.max(2) as f64).ln()).ceil() as usize;

    let mut result = SelectResult {
        outliers: Vec::new(),
        chosen_columns: Vec::new(),
        rounds: Vec::new(),
        depth: 0,
        base_case_n0: 0,
    };
    let mut active: Vec<usize> = (0..n).collect();
    loop {
        result.depth += 1;
        let n_active = active.len();
        // At n_active == n0 a sample is the whole active set and no column is
        // left to cover, so fold it into the keep-everything base case.
        if n_active <= n0 {
            for &i in &active {
                if !result.chosen_columns.contains(&i) {
                    result.chosen_columns.push(i);
                }
            }
            result.base_case_n0 = n0;
            break;
        }
        if n_active as f64 <= (1.0 + delta) * m as f64 {
            result.outliers = active;
            result.outliers.sort_unstable();
            break;
        }
        let quota = (((n_active.saturating_sub(m)) as f64 / 10.0).ceil() as usize)
            .min(n_active - n0)
            .max(1);
        let mut accepted: Option<(Vec<usize>, Vec<usize>, f64)> = None;
        for _ in 0..reps {
            let mut pool = active.clone();
            for i in 0..n0 {
                let j = rng.gen_range(i..pool.len());
                pool.swap(i, j);
            }
            let sample: Vec<usize> = pool[..n0].to_vec();
            let sample_cols: Vec<DVector<f64>> = sample.iter().map(|&i| a.column(i)).collect();
            let sample_set: std::collections::BTreeSet<usize> = sample.iter().copied().collect();
            let mut covered = Vec::new();
            let mut total = 0.0;
            for &i in &active {
                if sample_set.contains(&i) {
                    continue;
                }
                let res = lp_residual(&a.column(i), &sample_cols, p)?;
                if res <= threshold * (1.0 + 1e-9) {
                    covered.push(i);
                    total += res;
                }
            }
            if covered.len() >= quota {
                accepted = Some((sample, covered, total));
                break;
            }
        }
        let Some((sample, covered, total)) = accepted else {
            return Err(Error::GuessTooSmall);
        };
        result.rounds.push(RoundRecord {
            round: result.depth - 1,
            sample_size: sample.len(),
            marked: covered.len(),
            round_error: total,
        });
        for &i in &sample {
            if !result.chosen_columns.contains(&i) {
                result.chosen_columns.push(i);
            }
        }
        let covered_set: std::collections::BTreeSet<usize> = covered.into_iter().collect();
        active.retain(|i| !covered_set.contains(i));
    }

    assert!(
        result.outliers.len() as f64 <= (1.0 + delta) * m as f64 + 1e-9,
        "outlier budget violated"
    );
    Ok(result)
}

/// Total ℓp^p reconstruction error of the non-outlier columns against the
/// chosen columns.
pub fn lp_inlier_error(a: &DenseMatrix, result: &SelectResult, p: f64) -> Result<f64> {
    let chosen: Vec<DVector<f64>> = result.chosen_columns.iter().map(|&i| a.column(i)).collect();
    let mut total = 0.0;
    for i in 0..a.cols() {
        if result.outliers.binary_search(&i).is_ok() {
            continue;
        }
        total += lp_residual(&a.column(i), &chosen, p)?;
    }
    Ok(total)
}
