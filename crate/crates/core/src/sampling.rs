//! Recursive iterative uniform sampling with outliers, plus the no-outlier
//! coverage primitive it rests on.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{residual_sq_norms, DenseMatrix, Subspace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub sample_size: usize,
    pub marked: usize,
    pub round_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectResult {
    pub outliers: Vec<usize>,
    pub chosen_columns: Vec<usize>,
    pub rounds: Vec<RoundRecord>,
    pub depth: usize,
    /// n0 at the final keep-everything base case, 0 if the recursion ended
    /// in the outlier branch. The column budget carries this as slack.
    pub base_case_n0: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CoverageTrialStats {
    pub trials: usize,
    pub successes: usize,
    pub epsilon: f64,
    pub k: usize,
}

impl CoverageTrialStats {
    pub fn rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.successes as f64 / self.trials as f64
        }
    }

    /// One-sided lower confidence bound (normal approximation).
    pub fn lower_confidence_bound(&self, z: f64) -> f64 {
        let p = self.rate();
        let se = (p * (1.0 - p) / self.trials.max(1) as f64).sqrt();
        (p - z * se).max(0.0)
    }
}

/// Sample-size threshold n0 = ⌈(α/(α−1))·8k/ε³⌉ with α = N/m.
/// Unbounded when N ≤ m (the keep-everything base case then triggers).
fn sample_threshold(n_active: usize, m: usize, k: usize, epsilon: f64) -> usize {
    let base = 8.0 * k as f64 / epsilon.powi(3);
    if m == 0 {
        return base.ceil() as usize;
    }
    let alpha = n_active as f64 / m as f64;
    if alpha <= 1.0 {
        return usize::MAX;
    }
    (alpha / (alpha - 1.0) * base).ceil() as usize
}

fn repetition_count(n_total: usize, epsilon: f64) -> usize {
    ((16.0 * (n_total.max(2) as f64).ln()) / (epsilon * epsilon)).ceil() as usize
}

/// Uniform sample of `count` distinct values from [0, n) (Fisher–Yates
/// prefix), returned in draw order.
fn sample_without_replacement<R: Rng>(n: usize, count: usize, rng: &mut R) -> Vec<usize> {
    debug_assert!(count <= n);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..count {
        let j = rng.gen_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(count);
    pool
}

/// One sampling round over an active matrix: repeat the draw, keep the
/// (R, Â, X) with the smallest marked-set error X. Index sets are positions
/// into `a_active`.
pub fn sample_round<R: Rng>(
    a_active: &DenseMatrix,
    n_total: usize,
    m: usize,
    k: usize,
    epsilon: f64,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<usize>, f64)> {
    let n_active = a_active.cols();
    let n0 = sample_threshold(n_active, m, k, epsilon);
    if n_active < n0 {
        return Err(Error::InvalidParameter(format!(
            "active column count {n_active} below sample size {n0}"
        )));
    }
    let marked_count = ((epsilon.powi(3) * (n_active.saturating_sub(m)) as f64).ceil() as usize)
        .min(n_active - n0);
    let reps = repetition_count(n_total, epsilon);

    let mut best: Option<(Vec<usize>, Vec<usize>, f64)> = None;
    for _ in 0..reps {
        let r = sample_without_replacement(n_active, n0, rng);
        let span = Subspace::span_of_matrix(a_active.select_columns(&r)?.as_dmatrix());
        let res = residual_sq_norms(a_active, &span)?;
        let mut order: Vec<usize> = (0..n_active).collect();
        order.sort_by(|&x, &y| res[x].partial_cmp(&res[y]).unwrap().then(x.cmp(&y)));
        let marked: Vec<usize> = order[..marked_count].to_vec();
        let x: f64 = marked.iter().map(|&i| res[i]).sum();
        if best.as_ref().is_none_or(|(_, _, bx)| x < *bx) {
            best = Some((r, marked, x));
        }
    }
    Ok(best.expect("at least one repetition"))
}

/// Recursive SELECT. Per level: keep everything when too few columns remain
/// to sample, declare everything an outlier when the active set fits the
/// slacked outlier budget, otherwise run a sampling round, retire the
/// marked columns as covered, and keep the sampled columns.
pub fn select<R: Rng>(
    a: &DenseMatrix,
    m: usize,
    k: usize,
    epsilon: f64,
    delta: f64,
    rng: &mut R,
) -> Result<SelectResult> {
    if m > a.cols() {
        return Err(Error::InvalidParameter(format!(
            "m = {m} exceeds n = {}",
            a.cols()
        )));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) || !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidParameter(
            "epsilon and delta must lie in (0, 1]".into(),
        ));
    }
    let n = a.cols();
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
        let n0 = sample_threshold(n_active, m, k, epsilon);
        if n_active < n0 {
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
        let sub = a.select_columns(&active)?;
        let (r_star, marked, x) = sample_round(&sub, n, m, k, epsilon, rng)?;
        result.rounds.push(RoundRecord {
            round: result.depth - 1,
            sample_size: r_star.len(),
            marked: marked.len(),
            round_error: x,
        });
        for &pos in &r_star {
            let orig = active[pos];
            if !result.chosen_columns.contains(&orig) {
                result.chosen_columns.push(orig);
            }
        }
        let covered: std::collections::BTreeSet<usize> =
            marked.iter().map(|&pos| active[pos]).collect();
        active.retain(|i| !covered.contains(i));
    }

    assert!(
        result.outliers.len() as f64 <= (1.0 + delta) * m as f64 + 1e-9,
        "outlier budget violated: {} > (1+{delta}){m}",
        result.outliers.len()
    );
    if m > 0 {
        let depth_bound =
            ((n as f64 / (delta * m as f64)).ln() / epsilon.powi(3)).ceil() as usize + 1;
        assert!(
            result.depth <= depth_bound.max(2),
            "recursion depth {} exceeds bound {depth_bound}",
            result.depth
        );
        let budget = (16.0 * k as f64 / epsilon.powi(6))
            * ((n as f64 / m as f64).log2().max(0.0) + 2.0 / delta)
            + result.base_case_n0 as f64;
        assert!(
            result.chosen_columns.len() as f64 <= budget,
            "column budget violated: {} > {budget}",
            result.chosen_columns.len()
        );
    }
    Ok(result)
}

impl SelectResult {
    /// Span of the chosen columns.
    pub fn chosen_span(&self, a: &DenseMatrix) -> Result<Subspace> {
        if self.chosen_columns.is_empty() {
            return Ok(Subspace::empty(a.rows()));
        }
        let sub = a.select_columns(&self.chosen_columns)?;
        Ok(Subspace::span_of_matrix(sub.as_dmatrix()))
    }

    /// Total squared residual of non-outlier columns against the chosen span.
    pub fn inlier_error(&self, a: &DenseMatrix) -> Result<f64> {
        let span = self.chosen_span(a)?;
        let res = residual_sq_norms(a, &span)?;
        Ok(res
            .iter()
            .enumerate()
            .filter(|(i, _)| self.outliers.binary_search(i).is_err())
            .map(|(_, v)| v)
            .sum())
    }
}

/// One trial of the coverage event: does a uniform sample of ⌈4k/ε²⌉
/// columns reconstruct the required fraction of the remaining columns
/// within the per-column threshold?
pub fn coverage_trial<R: Rng>(
    a_clean: &DenseMatrix,
    k: usize,
    epsilon: f64,
    rng: &mut R,
) -> Result<bool> {
    let n = a_clean.cols();
    let s = (4.0 * k as f64 / (epsilon * epsilon)).ceil() as usize;
    if n < s {
        return Err(Error::InvalidParameter(format!(
            "need at least {s} columns for k = {k}, epsilon = {epsilon}; got {n}"
        )));
    }
    if n == s {
        return Ok(true);
    }
    let k_eff = k.min(a_clean.rows()).min(n);
    let (_, err_k) = a_clean.best_rank_k(k_eff)?;
    let threshold = (1.0 + epsilon) * err_k / n as f64;

    let sample = sample_without_replacement(n, s, rng);
    let span = Subspace::span_of_matrix(a_clean.select_columns(&sample)?.as_dmatrix());
    let res = residual_sq_norms(a_clean, &span)?;
    let in_sample: std::collections::BTreeSet<usize> = sample.into_iter().collect();
    // Round-off floor: exactly-representable columns project to ~eps^2-sized
    // residuals, not literal zero.
    let floor = 1e-18 * a_clean.frobenius_sq() / n as f64;
    let qualifying = (0..n)
        .filter(|i| !in_sample.contains(i))
        .filter(|&i| res[i] <= threshold * (1.0 + 1e-12) + floor)
        .count();
    let need = (epsilon * epsilon * (n - s) as f64 / 8.0).ceil() as usize;
    Ok(qualifying >= need)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn rank_one_noisy(d: usize, n: usize, sigma: f64, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dir = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0)).normalize();
        let cols: Vec<DVector<f64>> = (0..n)
            .map(|_| {
                let scale: f64 = rng.gen_range(0.5..2.0);
                let noise = if sigma > 0.0 {
                    DVector::from_fn(d, |_, _| rng.gen_range(-sigma..sigma))
                } else {
                    DVector::zeros(d)
                };
                &dir * scale + noise
            })
            .collect();
        DenseMatrix::from_columns(&cols).unwrap()
    }

    #[test]
    fn sample_round_identical_columns_zero_error() {
        let col = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let cols: Vec<DVector<f64>> = (0..60).map(|_| col.clone()).collect();
        let a = DenseMatrix::from_columns(&cols).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (_, marked, x) = sample_round(&a, 60, 2, 1, 1.0, &mut rng).unwrap();
        assert!(x <= 1e-18);
        assert!(!marked.is_empty());
    }

    #[test]
    fn sample_round_orthonormal_sanity() {
        let n = 40;
        let a = DenseMatrix::from_dmatrix(nalgebra::DMatrix::identity(n, n)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (_, marked, x) = sample_round(&a, n, 2, 1, 1.0, &mut rng).unwrap();
        // Every column has residual 0 or 1, so X cannot exceed the marked count.
        assert!(x <= marked.len() as f64 + 1e-12);
    }

    #[test]
    fn select_everything_outlier_when_budget_covers() {
        // n = 100, m = 90, eps = 1: n0 = ceil((alpha/(alpha-1)) * 8k) = 80,
        // so the small-n base case does not fire, while n <= (1+delta)m = 108
        // sends every column to the outlier set.
        let a = rank_one_noisy(5, 100, 0.1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = select(&a, 90, 1, 1.0, 0.2, &mut rng).unwrap();
        assert_eq!(r.outliers, (0..100).collect::<Vec<_>>());
        assert!(r.chosen_columns.is_empty());
    }

    #[test]
    fn select_small_n_keeps_everything() {
        let a = rank_one_noisy(4, 6, 0.1, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = select(&a, 1, 1, 0.5, 0.5, &mut rng).unwrap();
        // n = 6 < n0, so every column is chosen and spans all of A.
        assert_eq!(r.chosen_columns.len(), 6);
        assert!(r.outliers.is_empty());
        assert!(r.inlier_error(&a).unwrap() <= 1e-16 * a.frobenius_sq());
    }

    #[test]
    fn select_structural_invariants() {
        for seed in 0..5 {
            let a = rank_one_noisy(10, 120, 0.05, 10 + seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = select(&a, 10, 1, 1.0, 0.5, &mut rng).unwrap();
            // invariants already asserted inside select(); check the tally here
            let mut seen = std::collections::BTreeSet::new();
            for &c in &r.chosen_columns {
                assert!(seen.insert(c), "duplicate chosen column {c}");
            }
            for &o in &r.outliers {
                assert!(!seen.contains(&o), "column {o} both outlier and chosen");
            }
        }
    }

    #[test]
    fn select_determinism_per_seed() {
        let a = rank_one_noisy(8, 80, 0.05, 21);
        let run = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            serde_json::to_string(&select(&a, 8, 1, 1.0, 0.5, &mut rng).unwrap()).unwrap()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn coverage_exact_rank_k_always_true() {
        let a = rank_one_noisy(6, 30, 0.0, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            assert!(coverage_trial(&a, 1, 1.0, &mut rng).unwrap());
        }
    }

    #[test]
    fn coverage_vacuous_when_sample_is_everything() {
        let a = rank_one_noisy(6, 4, 0.2, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert!(coverage_trial(&a, 1, 1.0, &mut rng).unwrap());
    }

    #[test]
    fn coverage_rate_clears_lemma_bound() {
        // Light version of the acceptance run: ε = 1, k = 1.
        let a = rank_one_noisy(12, 100, 0.3, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let trials = 200;
        let successes = (0..trials)
            .filter(|_| coverage_trial(&a, 1, 1.0, &mut rng).unwrap())
            .count();
        let stats = CoverageTrialStats {
            trials,
            successes,
            epsilon: 1.0,
            k: 1,
        };
        assert!(
            stats.rate() >= 0.125 - 3.0 * (0.125 * 0.875 / trials as f64).sqrt(),
            "rate {}",
            stats.rate()
        );
    }

    #[test]
    fn coverage_too_few_columns_rejected() {
        let a = rank_one_noisy(6, 3, 0.2, 13);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        assert!(coverage_trial(&a, 1, 1.0, &mut rng).is_err());
    }
}
