//! Ground-truth machinery: exact brute-force optimum, objective evaluation,
//! geometric guess ladder, and the rank-k condition number.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{residual_sq_norms, DenseMatrix};

/// Cap on C(n, m) enumerated by [`brute_force_opt`].
pub const BRUTE_FORCE_GUARD: u128 = 1_000_000;

/// Disjoint inlier/outlier column-index sets over [0, n).
/// Inliers are implicit: every index not listed as an outlier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub n: usize,
    pub outliers: Vec<usize>,
}

impl Partition {
    pub fn new(n: usize, mut outliers: Vec<usize>) -> Result<Self> {
        outliers.sort_unstable();
        if outliers.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("duplicate outlier index".into()));
        }
        if outliers.last().is_some_and(|&i| i >= n) {
            return Err(Error::InvalidParameter(format!(
                "outlier index out of range (n = {n})"
            )));
        }
        Ok(Self { n, outliers })
    }

    pub fn all_inliers(n: usize) -> Self {
        Self {
            n,
            outliers: Vec::new(),
        }
    }

    pub fn inliers(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| !self.is_outlier(i)).collect()
    }

    pub fn is_outlier(&self, i: usize) -> bool {
        self.outliers.binary_search(&i).is_ok()
    }
}

/// Solver parameters: target rank, outlier budget, accuracy, outlier slack,
/// norm exponent, RNG seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveParams {
    pub k: usize,
    pub m: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub p: f64,
    pub seed: u64,
}

impl SolveParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must lie in (0, 1], got {}",
                self.epsilon
            )));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "delta must lie in (0, 1], got {}",
                self.delta
            )));
        }
        if self.p < 1.0 {
            return Err(Error::InvalidParameter(format!(
                "p must be >= 1, got {}",
                self.p
            )));
        }
        Ok(())
    }
}

/// Geometric grid of candidate optimum values with ratio (1+ε).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GuessLadder {
    pub values: Vec<f64>,
    pub includes_zero: bool,
}

/// err_k of the inlier submatrix. `k` at or above the inlier span collapses
/// to zero error.
pub fn objective_error(a: &DenseMatrix, part: &Partition, k: usize) -> Result<f64> {
    if part.n != a.cols() {
        return Err(Error::DimensionMismatch(format!(
            "partition over {} columns, matrix has {}",
            part.n,
            a.cols()
        )));
    }
    let inliers = part.inliers();
    if inliers.is_empty() {
        return Ok(0.0);
    }
    let sub = a.select_columns(&inliers)?;
    let k_eff = k.min(sub.rows()).min(sub.cols());
    let (_, err) = sub.best_rank_k(k_eff)?;
    Ok(err)
}

fn binomial(n: usize, m: usize) -> u128 {
    if m > n {
        return 0;
    }
    let m = m.min(n - m);
    let mut acc: u128 = 1;
    for i in 0..m {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Exact minimizer of `objective_error` over all outlier sets of size m,
/// by exhaustion. Ties broken by lexicographically smallest outlier set.
pub fn brute_force_opt(a: &DenseMatrix, k: usize, m: usize) -> Result<(Partition, f64)> {
    let n = a.cols();
    if m > n {
        return Err(Error::InvalidParameter(format!("m = {m} exceeds n = {n}")));
    }
    let count = binomial(n, m);
    if count > BRUTE_FORCE_GUARD {
        return Err(Error::CombinatorialGuard {
            n,
            m,
            count,
            limit: BRUTE_FORCE_GUARD,
        });
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    // combinations() yields subsets in lexicographic order; strict < keeps
    // the first (lexicographically smallest) minimizer.
    for subset in (0..n).combinations(m) {
        let part = Partition {
            n,
            outliers: subset.clone(),
        };
        let err = objective_error(a, &part, k)?;
        if best.as_ref().is_none_or(|(_, b)| err < *b) {
            best = Some((subset, err));
        }
    }
    let (outliers, opt) = best.expect("at least one subset");
    // Removing columns never increases err_k, so size-m subsets dominate
    // smaller ones.
    let full_err = objective_error(a, &Partition::all_inliers(n), k)?;
    debug_assert!(opt <= full_err * (1.0 + 1e-9) + 1e-12);
    Ok((Partition { n, outliers }, opt))
}

/// values = lower·(1+ε)^j, stopping at the first value ≥ upper.
pub fn guess_ladder(lower: f64, upper: f64, epsilon: f64) -> Result<GuessLadder> {
    if !(lower > 0.0 && upper > 0.0) {
        return Err(Error::InvalidParameter(
            "ladder bounds must be positive".into(),
        ));
    }
    if lower > upper {
        return Err(Error::InvalidParameter(format!(
            "lower {lower} exceeds upper {upper}"
        )));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter("epsilon must be positive".into()));
    }
    let mut values = vec![lower];
    let mut j = 1u32;
    while *values.last().unwrap() < upper {
        values.push(lower * (1.0 + epsilon).powi(j as i32));
        j += 1;
    }
    Ok(GuessLadder {
        values,
        includes_zero: false,
    })
}

/// Range for the guess ladder plus a one-sided zero test: dropping the m
/// columns of largest rank-k residual and rank-testing the rest. Sound but
/// not complete as a zero detector.
pub fn ladder_bounds(a: &DenseMatrix, k: usize, m: usize) -> Result<(f64, f64, bool)> {
    let upper = a.frobenius_sq();
    if upper == 0.0 {
        return Ok((0.0, 0.0, true));
    }
    let lower = upper * 2f64.powi(-60);
    let n = a.cols();
    let k_eff = k.min(a.rows()).min(n);
    let zero_detected = if m >= n {
        true
    } else {
        let (space, _) = a.best_rank_k(k_eff)?;
        let res = residual_sq_norms(a, &space)?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&x, &y| res[y].partial_cmp(&res[x]).unwrap().then(x.cmp(&y)));
        let keep: Vec<usize> = {
            let mut kept = order[m..].to_vec();
            kept.sort_unstable();
            kept
        };
        if keep.is_empty() {
            true
        } else {
            let sub = a.select_columns(&keep)?;
            sub.numerical_rank(crate::matrix::RANK_REL_TOL)? <= k
        }
    };
    Ok((lower, upper, zero_detected))
}

/// Rank-k condition number: ‖A‖_F² / err_k(inliers). Infinite when the
/// inliers are exactly rank ≤ k.
pub fn condition_number(a: &DenseMatrix, inlier_part: &Partition, k: usize) -> Result<f64> {
    let denom = objective_error(a, inlier_part, k)?;
    let num = a.frobenius_sq();
    if denom <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(num / denom)
}
