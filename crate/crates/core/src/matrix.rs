//! Dense real linear algebra: SVD, rank-k approximation, orthogonal
//! projection, numerical rank, column norms.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default relative tolerance for numerical rank decisions.
pub const RANK_REL_TOL: f64 = 1e-9;

/// A d×n real matrix, column-indexed, immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    data: DMatrix<f64>,
}

impl DenseMatrix {
    /// Build from column-major entries. Rejects non-finite values and
    /// entry-count mismatches.
    pub fn from_column_major(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                entries.len()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            data: DMatrix::from_column_slice(rows, cols, &entries),
        })
    }

    pub fn from_dmatrix(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::InvalidParameter(
                "matrix dimensions must be positive".into(),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { data })
    }

    /// Build from a list of columns (all of equal length).
    pub fn from_columns(cols: &[DVector<f64>]) -> Result<Self> {
        if cols.is_empty() {
            return Err(Error::InvalidParameter("no columns given".into()));
        }
        let d = cols[0].len();
        if cols.iter().any(|c| c.len() != d) {
            return Err(Error::DimensionMismatch("ragged column lengths".into()));
        }
        Self::from_dmatrix(DMatrix::from_fn(d, cols.len(), |r, c| cols[c][r]))
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn column(&self, i: usize) -> DVector<f64> {
        self.data.column(i).into_owned()
    }

    /// Submatrix A⟨T⟩ formed by the given column indices, in the given order.
    pub fn select_columns(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidParameter(
                "cannot form a submatrix with zero columns".into(),
            ));
        }
        for &i in indices {
            if i >= self.cols() {
                return Err(Error::InvalidParameter(format!(
                    "column index {i} out of range (n = {})",
                    self.cols()
                )));
            }
        }
        Ok(Self {
            data: self.data.select_columns(indices.iter()),
        })
    }

    /// ‖M‖_F² (squared mass).
    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Per-column squared norms; sums to `frobenius_sq`.
    pub fn column_sq_norms(&self) -> Vec<f64> {
        (0..self.cols())
            .map(|i| self.data.column(i).norm_squared())
            .collect()
    }

    /// Singular values (descending) and the matching left singular vectors.
    pub fn svd(&self) -> SvdFactors {
        let svd = self.data.clone().svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| {
            svd.singular_values[b]
                .partial_cmp(&svd.singular_values[a])
                .unwrap()
                .then(a.cmp(&b))
        });
        let singular_values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
        let left = u.select_columns(order.iter());
        SvdFactors {
            singular_values,
            left,
        }
    }

    /// Best rank-k approximation: the span of the top-k left singular
    /// vectors plus the squared tail error Σ_{i>k} σ_i².
    pub fn best_rank_k(&self, k: usize) -> Result<(Subspace, f64)> {
        let max_rank = self.rows().min(self.cols());
        if k > max_rank {
            return Err(Error::InvalidParameter(format!(
                "k = {k} exceeds min(d, n) = {max_rank}"
            )));
        }
        let factors = self.svd();
        let err: f64 = factors.singular_values[k..].iter().map(|s| s * s).sum();
        // Zero singular directions carry no mass; dropping them keeps dim ≤ k.
        let sigma_max = factors.singular_values.first().copied().unwrap_or(0.0);
        let kept = factors.singular_values[..k]
            .iter()
            .take_while(|&&s| s > RANK_REL_TOL * sigma_max && s > 0.0)
            .count();
        let basis = factors.left.columns(0, kept).into_owned();
        Ok((
            Subspace {
                ambient_dim: self.rows(),
                basis,
            },
            err,
        ))
    }

    /// Count of singular values above `rel_tol` times the largest.
    pub fn numerical_rank(&self, rel_tol: f64) -> Result<usize> {
        if !(rel_tol > 0.0 && rel_tol < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "rel_tol must lie in (0, 1), got {rel_tol}"
            )));
        }
        let sv = self.data.clone().singular_values();
        let sigma_max = sv.iter().cloned().fold(0.0_f64, f64::max);
        if sigma_max == 0.0 {
            return Ok(0);
        }
        Ok(sv.iter().filter(|&&s| s > rel_tol * sigma_max).count())
    }

    /// Write the matrix text format: first line "d n", then one column per
    /// line. Values round-trip exactly (shortest f64 representation).
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {}", self.rows(), self.cols())?;
        for i in 0..self.cols() {
            let col = self.data.column(i);
            let line: Vec<String> = col.iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty matrix file".into()))??;
        let mut parts = header.split_whitespace();
        let d: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse("bad header: expected 'd n'".into()))?;
        let n: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse("bad header: expected 'd n'".into()))?;
        let mut entries = Vec::with_capacity(d * n);
        for (idx, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::Parse(format!("bad number {s:?} in column {idx}")))
                })
                .collect::<Result<_>>()?;
            if vals.len() != d {
                return Err(Error::Parse(format!(
                    "column {idx} has {} entries, expected {d}",
                    vals.len()
                )));
            }
            entries.extend(vals);
        }
        if entries.len() != d * n {
            return Err(Error::Parse(format!(
                "expected {n} columns of {d} entries, got {} entries",
                entries.len()
            )));
        }
        Self::from_column_major(d, n, entries)
    }

    pub fn write_text_file(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_text(std::io::BufWriter::new(f))
    }

    pub fn read_text_file(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_text(std::io::BufReader::new(f))
    }
}

/// Singular values in descending order with matching left vectors.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub singular_values: Vec<f64>,
    pub left: DMatrix<f64>,
}

/// Orthonormal basis of a linear subspace of d-space (possibly empty).
#[derive(Debug, Clone)]
pub struct Subspace {
    ambient_dim: usize,
    /// d×r matrix with orthonormal columns.
    basis: DMatrix<f64>,
}

impl Subspace {
    pub fn empty(ambient_dim: usize) -> Self {
        Self {
            ambient_dim,
            basis: DMatrix::zeros(ambient_dim, 0),
        }
    }

    /// Orthonormal span of the given vectors; near-dependent directions are
    /// dropped (column-pivoted QR with relative tolerance).
    pub fn span_of(vectors: &[DVector<f64>]) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::InvalidParameter(
                "span_of requires the ambient dimension; use Subspace::empty".into(),
            ));
        }
        let d = vectors[0].len();
        if vectors.iter().any(|v| v.len() != d) {
            return Err(Error::DimensionMismatch("ragged vector lengths".into()));
        }
        let m = DMatrix::from_fn(d, vectors.len(), |r, c| vectors[c][r]);
        Ok(Self::span_of_matrix(&m))
    }

    pub(crate) fn span_of_matrix(m: &DMatrix<f64>) -> Self {
        let d = m.nrows();
        let qr = m.clone().col_piv_qr();
        let q = qr.q();
        let r = qr.r();
        let rmax = (0..r.nrows().min(r.ncols()))
            .map(|i| r[(i, i)].abs())
            .fold(0.0_f64, f64::max);
        let rank = (0..r.nrows().min(r.ncols()))
            .take_while(|&i| r[(i, i)].abs() > RANK_REL_TOL * rmax && r[(i, i)] != 0.0)
            .count();
        Self {
            ambient_dim: d,
            basis: q.columns(0, rank).into_owned(),
        }
    }

    pub fn from_orthonormal_basis(basis: DMatrix<f64>) -> Result<Self> {
        let s = Self {
            ambient_dim: basis.nrows(),
            basis,
        };
        s.check_orthonormal()?;
        Ok(s)
    }

    fn check_orthonormal(&self) -> Result<()> {
        let g = self.basis.transpose() * &self.basis;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                if (g[(i, j)] - target).abs() > 1e-10 {
                    return Err(Error::InvalidParameter(format!(
                        "basis not orthonormal: gram[{i}][{j}] = {}",
                        g[(i, j)]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Π_W^⊥ u for a single vector.
    pub fn residual(&self, u: &DVector<f64>) -> DVector<f64> {
        if self.dim() == 0 {
            return u.clone();
        }
        let coeffs = self.basis.transpose() * u;
        u - &self.basis * coeffs
    }

    /// Union of this subspace and the span of the given matrix columns.
    pub fn extended_with(&self, m: &DMatrix<f64>) -> Self {
        let mut cols: Vec<DVector<f64>> = (0..self.dim()).map(|i| self.basis.column(i).into_owned()).collect();
        cols.extend((0..m.ncols()).map(|i| m.column(i).into_owned()));
        if cols.is_empty() {
            return Self::empty(self.ambient_dim);
        }
        let stacked = DMatrix::from_fn(self.ambient_dim, cols.len(), |r, c| cols[c][r]);
        Self::span_of_matrix(&stacked)
    }
}

/// Π_W^⊥ M: residual of every column of `m` against the subspace.
pub fn project_residual(m: &DenseMatrix, w: &Subspace) -> Result<DenseMatrix> {
    if w.ambient_dim() != m.rows() {
        return Err(Error::DimensionMismatch(format!(
            "subspace ambient dim {} vs matrix rows {}",
            w.ambient_dim(),
            m.rows()
        )));
    }
    if w.dim() == 0 {
        return Ok(m.clone());
    }
    let coeffs = w.basis().transpose() * m.as_dmatrix();
    let residual = m.as_dmatrix() - w.basis() * coeffs;
    Ok(DenseMatrix { data: residual })
}

/// Squared residual norm of every column of `m` against the subspace.
pub fn residual_sq_norms(m: &DenseMatrix, w: &Subspace) -> Result<Vec<f64>> {
    let res = project_residual(m, w)?;
    Ok(res.column_sq_norms())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seeded_matrix(d: usize, n: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries: Vec<f64> = (0..d * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        DenseMatrix::from_column_major(d, n, entries).unwrap()
    }

    /// Cyclic Jacobi eigensolver for symmetric matrices; independent of the
    /// SVD path under test.
    fn jacobi_eigenvalues(mut a: DMatrix<f64>) -> Vec<f64> {
        let n = a.nrows();
        assert_eq!(n, a.ncols());
        for _ in 0..100 {
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += a[(p, q)] * a[(p, q)];
                }
            }
            if off < 1e-24 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if a[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for i in 0..n {
                        let aip = a[(i, p)];
                        let aiq = a[(i, q)];
                        a[(i, p)] = c * aip - s * aiq;
                        a[(i, q)] = s * aip + c * aiq;
                    }
                    for i in 0..n {
                        let api = a[(p, i)];
                        let aqi = a[(q, i)];
                        a[(p, i)] = c * api - s * aqi;
                        a[(q, i)] = s * api + c * aqi;
                    }
                }
            }
        }
        let mut eig: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
        eig.sort_by(|x, y| y.partial_cmp(x).unwrap());
        eig
    }

    #[test]
    fn svd_diagonal() {
        let m = DenseMatrix::from_column_major(3, 3, vec![3.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0])
            .unwrap();
        let f = m.svd();
        assert_relative_eq!(f.singular_values[0], 3.0, max_relative = 1e-12);
        assert_relative_eq!(f.singular_values[1], 2.0, max_relative = 1e-12);
        assert_relative_eq!(f.singular_values[2], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn svd_zero_matrix() {
        let m = DenseMatrix::from_column_major(4, 5, vec![0.0; 20]).unwrap();
        let f = m.svd();
        assert!(f.singular_values.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn svd_matches_eigen_oracle() {
        let m = seeded_matrix(5, 8, 42);
        let gram = m.as_dmatrix().transpose() * m.as_dmatrix();
        let eig = jacobi_eigenvalues(gram);
        let f = m.svd();
        for (i, &s) in f.singular_values.iter().enumerate() {
            let lambda = eig[i].max(0.0);
            assert_relative_eq!(s * s, lambda, max_relative = 1e-8, epsilon = 1e-12);
        }
    }

    #[test]
    fn non_finite_rejected() {
        let err = DenseMatrix::from_column_major(2, 1, vec![1.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFinite));
    }

    #[test]
    fn best_rank_k_rank_one() {
        let m = DenseMatrix::from_column_major(2, 2, vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        let (space, err) = m.best_rank_k(1).unwrap();
        assert_eq!(space.dim(), 1);
        assert!(err.abs() < 1e-18 * m.frobenius_sq().max(1.0));
    }

    #[test]
    fn best_rank_k_diag_tail() {
        let m = DenseMatrix::from_column_major(3, 3, vec![3.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0])
            .unwrap();
        let (_, err) = m.best_rank_k(2).unwrap();
        assert_relative_eq!(err, 1.0, max_relative = 1e-10);
    }

    #[test]
    fn best_rank_k_matches_eigen_tail() {
        let m = seeded_matrix(6, 10, 7);
        let gram = m.as_dmatrix().transpose() * m.as_dmatrix();
        let eig = jacobi_eigenvalues(gram);
        let tail: f64 = eig[2..].iter().map(|&l| l.max(0.0)).sum();
        let (_, err) = m.best_rank_k(2).unwrap();
        assert_relative_eq!(err, tail, max_relative = 1e-8, epsilon = 1e-12);
    }

    #[test]
    fn best_rank_k_too_large_rejected() {
        let m = seeded_matrix(3, 4, 0);
        assert!(m.best_rank_k(4).is_err());
    }

    #[test]
    fn project_residual_empty_subspace_is_identity() {
        let m = seeded_matrix(4, 5, 3);
        let w = Subspace::empty(4);
        let r = project_residual(&m, &w).unwrap();
        assert_eq!(r.as_dmatrix(), m.as_dmatrix());
    }

    #[test]
    fn project_residual_full_span_kills_mass() {
        let m = seeded_matrix(4, 6, 9);
        let cols: Vec<DVector<f64>> = (0..6).map(|i| m.column(i)).collect();
        let w = Subspace::span_of(&cols).unwrap();
        let r = project_residual(&m, &w).unwrap();
        assert!(r.frobenius_sq() <= 1e-16 * m.frobenius_sq());
    }

    #[test]
    fn project_residual_coordinate() {
        let m = DenseMatrix::from_column_major(2, 1, vec![1.0, 1.0]).unwrap();
        let w = Subspace::span_of(&[DVector::from_vec(vec![1.0, 0.0])]).unwrap();
        let r = project_residual(&m, &w).unwrap();
        assert_relative_eq!(r.as_dmatrix()[(0, 0)], 0.0, epsilon = 1e-12);
        assert_relative_eq!(r.as_dmatrix()[(1, 0)], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn project_residual_dimension_mismatch() {
        let m = seeded_matrix(4, 2, 1);
        let w = Subspace::empty(3);
        assert!(project_residual(&m, &w).is_err());
    }

    #[test]
    fn column_sq_norms_identity() {
        let m = DenseMatrix::from_dmatrix(DMatrix::identity(3, 3)).unwrap();
        assert_eq!(m.column_sq_norms(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn column_sq_norms_matches_naive() {
        let m = seeded_matrix(7, 9, 11);
        let norms = m.column_sq_norms();
        for j in 0..9 {
            let mut acc = 0.0;
            for i in 0..7 {
                acc += m.as_dmatrix()[(i, j)] * m.as_dmatrix()[(i, j)];
            }
            assert_relative_eq!(norms[j], acc, max_relative = 1e-12);
        }
        let total: f64 = norms.iter().sum();
        assert_relative_eq!(total, m.frobenius_sq(), max_relative = 1e-10);
    }

    #[test]
    fn numerical_rank_identity_and_outer_product() {
        let id = DenseMatrix::from_dmatrix(DMatrix::identity(4, 4)).unwrap();
        assert_eq!(id.numerical_rank(1e-9).unwrap(), 4);

        let u = DVector::from_vec(vec![1.0, 2.0, -1.0]);
        let v = DVector::from_vec(vec![0.5, 3.0, 1.0, -2.0]);
        let outer = DenseMatrix::from_dmatrix(&u * v.transpose()).unwrap();
        assert_eq!(outer.numerical_rank(1e-9).unwrap(), 1);

        let zero = DenseMatrix::from_column_major(2, 2, vec![0.0; 4]).unwrap();
        assert_eq!(zero.numerical_rank(1e-9).unwrap(), 0);
    }

    #[test]
    fn text_format_round_trip() {
        let m = seeded_matrix(5, 7, 101);
        let mut buf = Vec::new();
        m.write_text(&mut buf).unwrap();
        let back = DenseMatrix::read_text(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(m.as_dmatrix(), back.as_dmatrix());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn projection_contraction(seed in 0u64..1000, r in 0usize..4) {
            let m = seeded_matrix(5, 6, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
            let span_cols: Vec<DVector<f64>> = (0..r)
                .map(|_| DVector::from_fn(5, |_, _| rng.gen_range(-1.0..1.0)))
                .collect();
            let w = if span_cols.is_empty() {
                Subspace::empty(5)
            } else {
                Subspace::span_of(&span_cols).unwrap()
            };
            let res = residual_sq_norms(&m, &w).unwrap();
            let orig = m.column_sq_norms();
            for (a, b) in res.iter().zip(orig.iter()) {
                prop_assert!(*a <= b * (1.0 + 1e-10) + 1e-14);
            }
        }

        #[test]
        fn pythagoras(seed in 0u64..1000) {
            let m = seeded_matrix(6, 4, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31));
            let span_cols: Vec<DVector<f64>> = (0..2)
                .map(|_| DVector::from_fn(6, |_, _| rng.gen_range(-1.0..1.0)))
                .collect();
            let w = Subspace::span_of(&span_cols).unwrap();
            for i in 0..4 {
                let u = m.column(i);
                let res = w.residual(&u);
                let proj_sq = u.norm_squared() - res.norm_squared();
                prop_assert!(
                    (res.norm_squared() + proj_sq - u.norm_squared()).abs()
                        <= 1e-9 * u.norm_squared().max(1e-12)
                );
            }
        }

        #[test]
        fn basis_monotonicity(seed in 0u64..1000) {
            let m = seeded_matrix(6, 5, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(77));
            let v1 = DVector::from_fn(6, |_, _| rng.gen_range(-1.0..1.0));
            let v2 = DVector::from_fn(6, |_, _| rng.gen_range(-1.0..1.0));
            let small = Subspace::span_of(&[v1.clone()]).unwrap();
            let big = Subspace::span_of(&[v1, v2]).unwrap();
            let r1 = residual_sq_norms(&m, &small).unwrap();
            let r2 = residual_sq_norms(&m, &big).unwrap();
            for (a, b) in r2.iter().zip(r1.iter()) {
                prop_assert!(*a <= b * (1.0 + 1e-9) + 1e-12);
            }
        }

        #[test]
        fn rank_k_error_monotone(seed in 0u64..500) {
            let m = seeded_matrix(5, 7, seed);
            let mut prev = f64::INFINITY;
            for k in 0..=5 {
                let (_, err) = m.best_rank_k(k).unwrap();
                prop_assert!(err <= prev * (1.0 + 1e-12) + 1e-12);
                prev = err;
            }
            let (_, full) = m.best_rank_k(5).unwrap();
            prop_assert!(full <= 1e-9 * m.frobenius_sq());
        }
    }
}
