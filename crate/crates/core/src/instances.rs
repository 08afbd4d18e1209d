//! Synthetic planted instances, adversarial instances, and edge-vector
//! gadget matrices with rank verification.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, Subspace, RANK_REL_TOL};
use crate::oracle::Partition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[clap(rename_all = "kebab-case")]
pub enum OutlierMode {
    /// Large-norm columns in random directions.
    GaussianFar,
    /// Outliers near a different rank-k space: the approximate-structure
    /// pathology that makes the problem ill-posed without slack.
    LowRankDecoy,
    /// Repeated copies of one vector orthogonal to the planted space.
    OrthogonalPad,
}

/// A matrix with ground-truth decomposition for evaluation.
#[derive(Debug, Clone)]
pub struct PlantedInstance {
    pub a: DenseMatrix,
    pub truth: Partition,
    pub planted_space: Subspace,
    pub noise_sigma: f64,
    /// err_k of the true inliers, recomputed from the assembled matrix.
    pub opt_hint: f64,
    pub k: usize,
}

/// Ground-truth sidecar, written next to exported matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceTruth {
    pub k: usize,
    pub noise_sigma: f64,
    pub outliers: Vec<usize>,
    pub opt_hint: f64,
}

pub fn planted_instance(
    d: usize,
    n: usize,
    k: usize,
    m: usize,
    sigma: f64,
    mode: OutlierMode,
    seed: u64,
) -> Result<PlantedInstance> {
    if k > d {
        return Err(Error::InvalidParameter(format!("k = {k} exceeds d = {d}")));
    }
    if m > n {
        return Err(Error::InvalidParameter(format!("m = {m} exceeds n = {n}")));
    }
    if sigma < 0.0 {
        return Err(Error::InvalidParameter("sigma must be nonnegative".into()));
    }
    if mode == OutlierMode::OrthogonalPad && k >= d && m > 0 {
        return Err(Error::InvalidParameter(
            "orthogonal-pad requires k < d".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaussian = |rng: &mut ChaCha8Rng, len: usize| -> DVector<f64> {
        DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
    };

    let planted_space = if k == 0 {
        Subspace::empty(d)
    } else {
        let raw = DMatrix::from_fn(d, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        Subspace::span_of_matrix(&raw)
    };

    let mut outlier_idx: Vec<usize> = {
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..m {
            let j = rng.gen_range(i..n);
            pool.swap(i, j);
        }
        pool.truncate(m);
        pool
    };
    outlier_idx.sort_unstable();
    let truth = Partition::new(n, outlier_idx)?;

    let typical_norm = ((k as f64) + (d as f64) * sigma * sigma).sqrt().max(1.0);
    let decoy_space = if mode == OutlierMode::LowRankDecoy && k > 0 {
        let raw = DMatrix::from_fn(d, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        Some(Subspace::span_of_matrix(&raw))
    } else {
        None
    };
    let pad_vector = if mode == OutlierMode::OrthogonalPad && m > 0 {
        let raw = gaussian(&mut rng, d);
        let res = planted_space.residual(&raw);
        Some(&res / res.norm())
    } else {
        None
    };

    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let col = if truth.is_outlier(i) {
            match mode {
                OutlierMode::GaussianFar => {
                    let dir = gaussian(&mut rng, d);
                    &dir / dir.norm() * (30.0 * typical_norm)
                }
                OutlierMode::LowRankDecoy => {
                    let space = decoy_space.as_ref().expect("decoy space with k > 0");
                    let coeffs = gaussian(&mut rng, space.dim());
                    space.basis() * coeffs * 10.0 + gaussian(&mut rng, d) * sigma
                }
                OutlierMode::OrthogonalPad => {
                    pad_vector.as_ref().expect("pad vector") * (10.0 * typical_norm)
                }
            }
        } else if k == 0 {
            gaussian(&mut rng, d) * sigma
        } else {
            let coeffs = gaussian(&mut rng, planted_space.dim());
            planted_space.basis() * coeffs + gaussian(&mut rng, d) * sigma
        };
        cols.push(col);
    }
    let a = DenseMatrix::from_columns(&cols)?;

    let opt_hint = crate::oracle::objective_error(&a, &truth, k)?;
    Ok(PlantedInstance {
        a,
        truth,
        planted_space,
        noise_sigma: sigma,
        opt_hint,
        k,
    })
}

impl PlantedInstance {
    pub fn truth_sidecar(&self) -> InstanceTruth {
        InstanceTruth {
            k: self.k,
            noise_sigma: self.noise_sigma,
            outliers: self.truth.outliers.clone(),
            opt_hint: self.opt_hint,
        }
    }

    /// Optimal average squared error per inlier column.
    pub fn theta(&self) -> f64 {
        let inliers = self.truth.n - self.truth.outliers.len();
        if inliers == 0 {
            0.0
        } else {
            self.opt_hint / inliers as f64
        }
    }

    pub fn export(&self, matrix_path: &Path, truth_path: &Path) -> Result<()> {
        self.a.write_text_file(matrix_path)?;
        let f = std::fs::File::create(truth_path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), &self.truth_sidecar())?;
        Ok(())
    }
}

/// Simple undirected graph: no self-loops, no duplicate edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    pub n_vertices: usize,
    pub edges: Vec<(usize, usize)>,
}

impl Graph {
    pub fn new(n_vertices: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut normalized = Vec::with_capacity(edges.len());
        let mut seen = std::collections::BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::InvalidParameter(format!("self-loop at vertex {a}")));
            }
            if a >= n_vertices || b >= n_vertices {
                return Err(Error::InvalidParameter(format!(
                    "edge ({a}, {b}) out of range for {n_vertices} vertices"
                )));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return Err(Error::InvalidParameter(format!("duplicate edge {e:?}")));
            }
            normalized.push(e);
        }
        Ok(Self {
            n_vertices,
            edges: normalized,
        })
    }

    /// Erdős–Rényi G(n, p).
    pub fn gnp(n: usize, p: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter("p must lie in [0, 1]".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for a in 0..n {
            for b in (a + 1)..n {
                if rng.gen_bool(p) {
                    edges.push((a, b));
                }
            }
        }
        Self::new(n, edges)
    }

    /// Graph text format: "n_vertices n_edges" then one "i j" pair per line.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {}", self.n_vertices, self.edges.len())?;
        for (a, b) in &self.edges {
            writeln!(w, "{a} {b}")?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty graph file".into()))??;
        let mut parts = header.split_whitespace();
        let n: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse("bad header: expected 'n_vertices n_edges'".into()))?;
        let e: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse("bad header: expected 'n_vertices n_edges'".into()))?;
        let mut edges = Vec::with_capacity(e);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let a: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad edge line {line:?}")))?;
            let b: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad edge line {line:?}")))?;
            edges.push((a, b));
        }
        if edges.len() != e {
            return Err(Error::Parse(format!(
                "expected {e} edges, got {}",
                edges.len()
            )));
        }
        Self::new(n, edges)
    }

    pub fn read_text_file(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_text(std::io::BufReader::new(f))
    }
}

/// |V|×|E| matrix with column e_i + e_j per edge {i, j}.
pub fn sse_gadget(g: &Graph) -> Result<DenseMatrix> {
    if g.edges.is_empty() {
        return Err(Error::InvalidParameter("graph has no edges".into()));
    }
    let mut data = DMatrix::zeros(g.n_vertices, g.edges.len());
    for (idx, &(a, b)) in g.edges.iter().enumerate() {
        data[(a, idx)] = 1.0;
        data[(b, idx)] = 1.0;
    }
    DenseMatrix::from_dmatrix(data)
}

/// Check ⌈n′/2⌉ ≤ rank(span of edge vectors) ≤ n′ for a subset of edges,
/// where n′ counts the incident vertices.
pub fn verify_edge_subspace_bound(
    g: &Graph,
    edge_subset: &[usize],
) -> Result<(usize, usize, bool)> {
    for &e in edge_subset {
        if e >= g.edges.len() {
            return Err(Error::InvalidParameter(format!(
                "edge index {e} out of range"
            )));
        }
    }
    if edge_subset.is_empty() {
        return Ok((0, 0, true));
    }
    let mut vertices = std::collections::BTreeSet::new();
    for &e in edge_subset {
        let (a, b) = g.edges[e];
        vertices.insert(a);
        vertices.insert(b);
    }
    let n_prime = vertices.len();
    let gadget = sse_gadget(g)?;
    let sub = gadget.select_columns(edge_subset)?;
    let rank = sub.numerical_rank(RANK_REL_TOL)?;
    let holds = n_prime.div_ceil(2) <= rank && rank <= n_prime;
    Ok((n_prime, rank, holds))
}

/// Package the gadget as a PCA-with-outliers instance: zero-error solutions
/// with m = |E| − r outliers correspond to r-edge subgraphs.
pub fn sres_gadget(g: &Graph, r: usize) -> Result<(DenseMatrix, usize)> {
    if r > g.edges.len() {
        return Err(Error::InvalidParameter(format!(
            "r = {r} exceeds |E| = {}",
            g.edges.len()
        )));
    }
    Ok((sse_gadget(g)?, g.edges.len() - r))
}
