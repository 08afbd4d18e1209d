//! Experiment runner: loads or generates instances, runs solvers and
//! oracles, checks every assertable guarantee, emits JSON-lines reports.

use std::path::PathBuf;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::{planted_instance, Graph, OutlierMode, PlantedInstance};
use crate::itersvd::{iterative_svd_sweep, SolveStatus};
use crate::lp::{lp_inlier_error, lp_select, LpSelectParams};
use crate::matrix::{residual_sq_norms, DenseMatrix};
use crate::oracle::{
    brute_force_opt, condition_number, objective_error, Partition, SolveParams,
    BRUTE_FORCE_GUARD,
};
use crate::sampling::{coverage_trial, select, CoverageTrialStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[clap(rename_all = "kebab-case")]
pub enum Algorithm {
    IterSvd,
    Select,
    LpSelect,
    BruteForce,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum InstanceSource {
    File {
        matrix: PathBuf,
        truth: Option<PathBuf>,
    },
    Planted {
        d: usize,
        n: usize,
        sigma: f64,
        mode: OutlierMode,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: InstanceSource,
    pub algorithm: Algorithm,
    pub params: SolveParams,
    pub trials: usize,
    /// Guess for the optimal ℓp^p error; lp-select only.
    pub theta_guess: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub objective: f64,
    pub outlier_count: usize,
    /// Subspace dimension (iter-svd) or chosen column count (select).
    pub dim: usize,
    /// Rounds (iter-svd) or recursion depth (select).
    pub rounds: usize,
    pub status: SolveStatus,
    pub mu_trace: Option<Vec<f64>>,
    pub guarantees_pass: bool,
    pub guarantee_notes: Vec<String>,
    /// objective / brute-force optimum, when the oracle is feasible.
    pub oracle_ratio: Option<f64>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportSummary {
    pub trials: usize,
    pub guarantee_passes: usize,
    pub mean_objective: f64,
    pub min_objective: f64,
    pub max_objective: f64,
    pub all_pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub records: Vec<TrialRecord>,
    pub summary: ReportSummary,
}

impl Report {
    /// JSON lines: one trial per line, then the summary object.
    pub fn write_jsonl<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        for rec in &self.records {
            serde_json::to_writer(&mut w, rec)?;
            writeln!(w)?;
        }
        serde_json::to_writer(&mut w, &self.summary)?;
        writeln!(w)?;
        Ok(())
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "trial,seed,objective,outlier_count,dim,rounds,status,guarantees_pass,oracle_ratio,wall_ms"
        )?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{},{:?},{},{},{}",
                r.trial,
                r.seed,
                r.objective,
                r.outlier_count,
                r.dim,
                r.rounds,
                r.status,
                r.guarantees_pass,
                r.oracle_ratio.map_or(String::new(), |v| v.to_string()),
                r.wall_ms
            )?;
        }
        Ok(())
    }

    /// Identical bytes modulo wall-time, for determinism checks.
    pub fn stable_digest(&self) -> Result<String> {
        let mut clone = self.clone();
        for r in &mut clone.records {
            r.wall_ms = 0.0;
        }
        Ok(serde_json::to_string(&clone)?)
    }
}

fn binomial_small(n: usize, m: usize) -> u128 {
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

fn load_instance(cfg: &ExperimentConfig, seed: u64) -> Result<(DenseMatrix, Option<PlantedInstance>)> {
    match &cfg.source {
        InstanceSource::File { matrix, .. } => {
            Ok((DenseMatrix::read_text_file(matrix)?, None))
        }
        InstanceSource::Planted { d, n, sigma, mode } => {
            let inst = planted_instance(
                *d,
                *n,
                cfg.params.k,
                cfg.params.m,
                *sigma,
                *mode,
                seed,
            )?;
            Ok((inst.a.clone(), Some(inst)))
        }
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.params.validate()?;
    if cfg.trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    let mut records = Vec::with_capacity(cfg.trials);
    for trial in 0..cfg.trials {
        let seed = cfg.params.seed.wrapping_add(trial as u64);
        let (a, truth) = load_instance(cfg, seed)?;
        records.push(run_trial(cfg, trial, seed, &a, truth.as_ref())?);
    }
    records.sort_by_key(|r| r.trial);
    let objectives: Vec<f64> = records.iter().map(|r| r.objective).collect();
    let passes = records.iter().filter(|r| r.guarantees_pass).count();
    let summary = ReportSummary {
        trials: records.len(),
        guarantee_passes: passes,
        mean_objective: objectives.iter().sum::<f64>() / objectives.len() as f64,
        min_objective: objectives.iter().cloned().fold(f64::INFINITY, f64::min),
        max_objective: objectives.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        all_pass: passes == records.len(),
    };
    Ok(Report { records, summary })
}

fn run_trial(
    cfg: &ExperimentConfig,
    trial: usize,
    seed: u64,
    a: &DenseMatrix,
    truth: Option<&PlantedInstance>,
) -> Result<TrialRecord> {
    let SolveParams {
        k, m, epsilon, delta, p, ..
    } = cfg.params;
    let n = a.cols();
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut pass = true;
    fn note_check(notes: &mut Vec<String>, pass: &mut bool, ok: bool, msg: String) {
        if !ok {
            *pass = false;
        }
        notes.push(format!("{}: {}", if ok { "pass" } else { "FAIL" }, msg));
    }

    let (objective, outlier_count, dim, rounds, status, mu_trace) = match cfg.algorithm {
        Algorithm::IterSvd => {
            let sweep = iterative_svd_sweep(a, k, m, epsilon)?;
            let out = &sweep.best;
            let objective = objective_error(a, &out.partition, k)?;
            if let Some(t) = truth {
                let lambda = condition_number(a, &t.truth, k)?;
                if lambda.is_finite() {
                    let factor = (lambda / epsilon).log2().ceil().max(1.0);
                    note_check(
                        &mut notes,
                        &mut pass,
                        out.partition.outliers.len() as f64 <= m as f64 * factor,
                        format!(
                            "outlier count {} <= m*ceil(log2(Lambda/eps)) = {}",
                            out.partition.outliers.len(),
                            m as f64 * factor
                        ),
                    );
                    note_check(
                        &mut notes,
                        &mut pass,
                        out.basis_dim as f64 <= k as f64 * factor,
                        format!(
                            "dim {} <= k*ceil(log2(Lambda/eps)) = {}",
                            out.basis_dim,
                            k as f64 * factor
                        ),
                    );
                }
            }
            note_check(
                &mut notes,
                &mut pass,
                out.residual_mass() < (1.0 + epsilon) * out.xi || out.xi == 0.0,
                format!(
                    "residual {} < (1+eps)*xi = {}",
                    out.residual_mass(),
                    (1.0 + epsilon) * out.xi
                ),
            );
            (
                objective,
                out.partition.outliers.len(),
                out.basis_dim,
                out.rounds,
                out.status,
                Some(out.mu_trace.clone()),
            )
        }
        Algorithm::Select => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let result = select(a, m, k, epsilon, delta, &mut rng)?;
            let err = result.inlier_error(a)?;
            note_check(
                &mut notes,
                &mut pass,
                result.outliers.len() as f64 <= (1.0 + delta) * m as f64,
                format!("outliers {} <= (1+delta)m", result.outliers.len()),
            );
            if let Some(t) = truth {
                let bound = (1.0 + epsilon) / (1.0 - epsilon).max(1e-9) * t.opt_hint;
                note_check(
                    &mut notes,
                    &mut pass,
                    err <= bound * (1.0 + 1e-6) + 1e-12 || epsilon >= 1.0,
                    format!("inlier residual {err} <= ((1+eps)/(1-eps))*err_k(B) = {bound}"),
                );
            }
            (
                err,
                result.outliers.len(),
                result.chosen_columns.len(),
                result.depth,
                SolveStatus::Success,
                None,
            )
        }
        Algorithm::LpSelect => {
            let theta = cfg.theta_guess.ok_or_else(|| {
                Error::InvalidParameter("lp-select requires a theta guess".into())
            })?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params = LpSelectParams {
                m,
                k,
                delta,
                p,
                theta_guess: theta,
            };
            match lp_select(a, &params, &mut rng) {
                Ok(result) => {
                    let err = lp_inlier_error(a, &result, p)?;
                    note_check(
                        &mut notes,
                        &mut pass,
                        result.outliers.len() as f64 <= (1.0 + delta) * m as f64,
                        format!("outliers {} <= (1+delta)m", result.outliers.len()),
                    );
                    (
                        err,
                        result.outliers.len(),
                        result.chosen_columns.len(),
                        result.depth,
                        SolveStatus::Success,
                        None,
                    )
                }
                Err(Error::GuessTooSmall) => {
                    notes.push("FAIL: guess too small, no round met quota".into());
                    pass = false;
                    (f64::NAN, 0, 0, 0, SolveStatus::Fail, None)
                }
                Err(e) => return Err(e),
            }
        }
        Algorithm::BruteForce => {
            let (part, opt) = brute_force_opt(a, k, m)?;
            let objective = opt;
            (
                objective,
                part.outliers.len(),
                k.min(n),
                0,
                SolveStatus::Success,
                None,
            )
        }
    };

    // Oracle comparison when the enumeration is feasible.
    let oracle_ratio = if binomial_small(n, m) <= BRUTE_FORCE_GUARD && n <= 64 {
        let (_, opt) = brute_force_opt(a, k, m)?;
        if opt > 0.0 {
            Some(objective / opt)
        } else {
            Some(if objective <= 1e-9 * a.frobenius_sq().max(1.0) {
                1.0
            } else {
                f64::INFINITY
            })
        }
    } else {
        None
    };

    Ok(TrialRecord {
        trial,
        seed,
        objective,
        outlier_count,
        dim,
        rounds,
        status,
        mu_trace,
        guarantees_pass: pass,
        guarantee_notes: notes,
        oracle_ratio,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Run coverage trials over a clean (outlier-free) planted family.
pub fn validate_lemma2(
    d: usize,
    n: usize,
    k: usize,
    epsilon: f64,
    sigma: f64,
    trials: usize,
    seed: u64,
) -> Result<CoverageTrialStats> {
    let inst = planted_instance(d, n, k, 0, sigma, OutlierMode::GaussianFar, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut successes = 0;
    for _ in 0..trials {
        if coverage_trial(&inst.a, k, epsilon, &mut rng)? {
            successes += 1;
        }
    }
    Ok(CoverageTrialStats {
        trials,
        successes,
        epsilon,
        k,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lemma5Summary {
    pub subsets_tested: usize,
    pub violations: Vec<Vec<usize>>,
}

impl Lemma5Summary {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check the edge-subspace sandwich over random subsets of a graph.
pub fn validate_lemma5(g: &Graph, subsets: usize, seed: u64) -> Result<Lemma5Summary> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = Vec::new();
    for _ in 0..subsets {
        let subset: Vec<usize> = (0..g.edges.len()).filter(|_| rng.gen_bool(0.5)).collect();
        let (_, _, holds) = crate::instances::verify_edge_subspace_bound(g, &subset)?;
        if !holds {
            violations.push(subset);
        }
    }
    Ok(Lemma5Summary {
        subsets_tested: subsets,
        violations,
    })
}

/// Certified residual check used by reports: recompute the inlier residual
/// of a partition against a subspace from raw data.
pub fn partition_residual(
    a: &DenseMatrix,
    part: &Partition,
    space: &crate::matrix::Subspace,
) -> Result<f64> {
    let res = residual_sq_norms(a, space)?;
    Ok(part.inliers().iter().map(|&i| res[i]).sum())
}
