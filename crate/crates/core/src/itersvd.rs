//! Iterative SVD with outlier batch removal: alternate between dropping the
//! m heaviest residual columns and growing the subspace by a fresh SVD,
//! validating the expected mass drop after every round.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{residual_sq_norms, DenseMatrix, Subspace};
use crate::oracle::{guess_ladder, ladder_bounds, Partition};

/// Relative slack on the mass-drop check, against floating-point noise.
const DROP_REL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Success,
    Fail,
}

/// Solver state after `round` rounds.
#[derive(Debug, Clone)]
pub struct IterSvdState {
    pub round: usize,
    pub space: Subspace,
    /// Sorted original indices still treated as inliers.
    pub inliers: Vec<usize>,
    /// Residual mass of the inliers against `space`.
    pub mu: f64,
    /// Rounds that took the SVD branch (diagnostic only; dimension
    /// accounting uses the global round index).
    pub svd_rounds: usize,
}

impl IterSvdState {
    pub fn initial(a: &DenseMatrix) -> Self {
        Self {
            round: 0,
            space: Subspace::empty(a.rows()),
            inliers: (0..a.cols()).collect(),
            mu: a.frobenius_sq(),
            svd_rounds: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterSvdOutcome {
    pub status: SolveStatus,
    #[serde(skip)]
    pub space: Option<Subspace>,
    pub basis_dim: usize,
    pub partition: Partition,
    pub rounds: usize,
    pub svd_rounds: usize,
    pub mu_trace: Vec<f64>,
    pub xi: f64,
}

impl IterSvdOutcome {
    /// Residual mass of the returned inliers against the returned space.
    pub fn residual_mass(&self) -> f64 {
        *self.mu_trace.last().unwrap_or(&0.0)
    }
}

/// One round of the loop: remove the top-m residual batch if it carries at
/// least half the gap (μ − ξ), otherwise replace the space with the best
/// rank-((j+1)·k) left space of the ORIGINAL surviving columns.
pub fn iterative_svd_step(
    state: &IterSvdState,
    a: &DenseMatrix,
    k: usize,
    m: usize,
    xi: f64,
) -> Result<IterSvdState> {
    let sub = a.select_columns(&state.inliers)?;
    let res = residual_sq_norms(&sub, &state.space)?;
    let mu: f64 = res.iter().sum();

    let take = m.min(state.inliers.len());
    let mut order: Vec<usize> = (0..state.inliers.len()).collect();
    order.sort_by(|&x, &y| res[y].partial_cmp(&res[x]).unwrap().then(x.cmp(&y)));
    let top_mass: f64 = order[..take].iter().map(|&i| res[i]).sum();

    let next_round = state.round + 1;
    if top_mass >= 0.5 * (mu - xi) {
        let drop: std::collections::BTreeSet<usize> =
            order[..take].iter().map(|&i| state.inliers[i]).collect();
        let inliers: Vec<usize> = state
            .inliers
            .iter()
            .copied()
            .filter(|i| !drop.contains(i))
            .collect();
        Ok(IterSvdState {
            round: next_round,
            space: state.space.clone(),
            inliers,
            mu: mu - top_mass,
            svd_rounds: state.svd_rounds,
        })
    } else {
        let target = (next_round * k).min(sub.rows()).min(sub.cols());
        let (space, _) = sub.best_rank_k(target)?;
        let new_mu: f64 = residual_sq_norms(&sub, &space)?.iter().sum();
        Ok(IterSvdState {
            round: next_round,
            space,
            inliers: state.inliers.clone(),
            mu: new_mu,
            svd_rounds: state.svd_rounds + 1,
        })
    }
}

/// Run the loop for a fixed guess ξ. FAILs when the guaranteed mass drop
/// μ' ≤ (μ + ξ)/2 is violated or the round budget for this ξ is exhausted
/// (either signals ξ below the optimum).
pub fn iterative_svd(
    a: &DenseMatrix,
    k: usize,
    m: usize,
    epsilon: f64,
    xi: f64,
) -> Result<IterSvdOutcome> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must lie in (0, 1], got {epsilon}"
        )));
    }
    if !(xi > 0.0) {
        return Err(Error::InvalidParameter(
            "xi must be positive (use the ladder floor when the optimum is zero)".into(),
        ));
    }
    let mass = a.frobenius_sq();
    let threshold = (1.0 + epsilon) * xi;
    let max_rounds = if mass <= epsilon * xi {
        1
    } else {
        (mass / (epsilon * xi)).log2().ceil() as usize + 1
    };

    let mut state = IterSvdState::initial(a);
    let mut mu_trace = vec![state.mu];

    loop {
        if state.mu < threshold || state.inliers.is_empty() {
            let part = outlier_partition(a.cols(), &state.inliers);
            debug_assert!(state.space.dim() <= state.round * k);
            debug_assert!(part.outliers.len() <= state.round.max(1) * m || m == 0);
            return Ok(IterSvdOutcome {
                status: SolveStatus::Success,
                basis_dim: state.space.dim(),
                space: Some(state.space),
                partition: part,
                rounds: state.round,
                svd_rounds: state.svd_rounds,
                mu_trace,
                xi,
            });
        }
        if state.round >= max_rounds {
            return Ok(fail_outcome(a, state, mu_trace, xi));
        }
        let prev_mu = state.mu;
        let next = iterative_svd_step(&state, a, k, m, xi)?;
        mu_trace.push(next.mu);
        let bound = 0.5 * (prev_mu + xi) + DROP_REL_SLACK * prev_mu;
        if next.mu > bound {
            return Ok(fail_outcome(a, next, mu_trace, xi));
        }
        state = next;
    }
}

fn fail_outcome(
    a: &DenseMatrix,
    state: IterSvdState,
    mu_trace: Vec<f64>,
    xi: f64,
) -> IterSvdOutcome {
    IterSvdOutcome {
        status: SolveStatus::Fail,
        basis_dim: state.space.dim(),
        space: Some(state.space),
        partition: outlier_partition(a.cols(), &state.inliers),
        rounds: state.round,
        svd_rounds: state.svd_rounds,
        mu_trace,
        xi,
    }
}

fn outlier_partition(n: usize, inliers: &[usize]) -> Partition {
    let inlier_set: std::collections::BTreeSet<usize> = inliers.iter().copied().collect();
    Partition {
        n,
        outliers: (0..n).filter(|i| !inlier_set.contains(i)).collect(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub best: IterSvdOutcome,
    /// ξ values that FAILed before the first success.
    pub failed_guesses: Vec<f64>,
    pub zero_detected: bool,
}

/// Sweep the guess ladder bottom-up and keep the smallest successful ξ.
pub fn iterative_svd_sweep(
    a: &DenseMatrix,
    k: usize,
    m: usize,
    epsilon: f64,
) -> Result<SweepOutcome> {
    let (lower, upper, zero_detected) = ladder_bounds(a, k, m)?;
    if upper == 0.0 {
        // Zero matrix: nothing to do.
        return Ok(SweepOutcome {
            best: IterSvdOutcome {
                status: SolveStatus::Success,
                space: Some(Subspace::empty(a.rows())),
                basis_dim: 0,
                partition: Partition::all_inliers(a.cols()),
                rounds: 0,
                svd_rounds: 0,
                mu_trace: vec![0.0],
                xi: 0.0,
            },
            failed_guesses: Vec::new(),
            zero_detected,
        });
    }
    let ladder = guess_ladder(lower, upper, epsilon)?;
    let mut failed = Vec::new();
    for &xi in &ladder.values {
        let outcome = iterative_svd(a, k, m, epsilon, xi)?;
        match outcome.status {
            SolveStatus::Success => {
                return Ok(SweepOutcome {
                    best: outcome,
                    failed_guesses: failed,
                    zero_detected,
                })
            }
            SolveStatus::Fail => failed.push(xi),
        }
    }
    Err(Error::SweepFailure)
}
