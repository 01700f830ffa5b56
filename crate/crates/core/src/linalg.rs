//! Dense symmetric linear algebra: a cyclic Jacobi eigensolver, inverse
//! square roots for whitening, orthogonal projectors and Frobenius
//! distances between them.
//!
//! Everything here is deterministic and free of global state. Matrix sizes
//! in this crate stay in the low hundreds at most, where Jacobi rotations
//! are both accurate and fast enough.

use std::cmp::Ordering;

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Off-diagonal mass, relative to the Frobenius norm, at which Jacobi stops.
const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;
/// Entries at or below this magnitude are skipped by the sign rule.
const SIGN_EPS: f64 = 1e-12;
/// Relative gap below which two eigenvalues count as tied.
const TIE_TOL: f64 = 1e-12;
const ORTHONORMAL_TOL: f64 = 1e-8;

/// A square matrix that is exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(Array2<f64>);

impl SymMatrix {
    /// Wraps a square matrix, replacing it with `(M + Mᵀ) / 2`.
    pub fn new(m: Array2<f64>) -> Result<Self> {
        let (r, c) = m.dim();
        if r != c {
            return Err(Error::DimensionMismatch {
                expected: "square matrix".into(),
                got: format!("{r}x{c}"),
            });
        }
        if r == 0 {
            return Err(Error::invalid("matrix dimension must be positive"));
        }
        Ok(Self::symmetrized(m))
    }

    /// Symmetrizes in place; the caller guarantees a square matrix.
    pub(crate) fn symmetrized(mut m: Array2<f64>) -> Self {
        let n = m.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (m[[i, j]] + m[[j, i]]);
                m[[i, j]] = v;
                m[[j, i]] = v;
            }
        }
        SymMatrix(m)
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(Array2::eye(dim))
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix(Array2::zeros((dim, dim)))
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        SymMatrix(Array2::from_diag(&Array1::from(diag.to_vec())))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_array(self) -> Array2<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> f64 {
        self.0.diag().sum()
    }

    /// Returns `self + eps·I`.
    pub fn add_ridge(&self, eps: f64) -> Self {
        let mut m = self.0.clone();
        m.diag_mut().mapv_inplace(|v| v + eps);
        SymMatrix(m)
    }
}

/// Eigenpairs of a symmetric matrix, eigenvalues sorted in decreasing order.
///
/// Column `i` of `eigenvectors` belongs to `eigenvalues[i]`. Each column is
/// sign-normalized so that its first entry of magnitude above `1e-12` is
/// positive; ties between eigenvalues are ordered by the lexicographically
/// larger normalized eigenvector first.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub eigenvalues: Array1<f64>,
    pub eigenvectors: Array2<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// The `d` leading eigenvectors as a `p × d` matrix.
    pub fn top_vectors(&self, d: usize) -> Array2<f64> {
        self.eigenvectors.slice(ndarray::s![.., ..d]).to_owned()
    }

    /// `V·diag(λ)·Vᵀ`.
    pub fn reconstruct(&self) -> Array2<f64> {
        let scaled = &self.eigenvectors * &self.eigenvalues.view().insert_axis(Axis(0));
        scaled.dot(&self.eigenvectors.t())
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
pub fn sym_eigen(m: &SymMatrix) -> Result<EigenDecomposition> {
    if !m.is_finite() {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    let n = m.dim();
    let mut a = m.as_array().clone();
    let mut v = Array2::<f64>::eye(n);
    let threshold = JACOBI_TOL * m.frobenius_norm();

    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&a) <= threshold {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let tau = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                rotate_columns(&mut a, p, q, c, s);
                rotate_rows(&mut a, p, q, c, s);
                a[[p, q]] = 0.0;
                a[[q, p]] = 0.0;
                rotate_columns(&mut v, p, q, c, s);
            }
        }
    }
    if !converged && off_diagonal_norm(&a) > threshold {
        return Err(Error::NoConvergence {
            sweeps: JACOBI_MAX_SWEEPS,
        });
    }

    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|i| {
            let mut col = v.column(i).to_vec();
            normalize_sign(&mut col);
            (a[[i, i]], col)
        })
        .collect();
    sort_pairs(&mut pairs);

    let eigenvalues = Array1::from_iter(pairs.iter().map(|(l, _)| *l));
    let mut eigenvectors = Array2::zeros((n, n));
    for (j, (_, col)) in pairs.iter().enumerate() {
        for (i, x) in col.iter().enumerate() {
            eigenvectors[[i, j]] = *x;
        }
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

fn off_diagonal_norm(a: &Array2<f64>) -> f64 {
    let mut acc = 0.0;
    for ((i, j), v) in a.indexed_iter() {
        if i != j {
            acc += v * v;
        }
    }
    acc.sqrt()
}

// A <- A·J for the plane rotation J acting on columns p, q.
fn rotate_columns(a: &mut Array2<f64>, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..a.nrows() {
        let akp = a[[k, p]];
        let akq = a[[k, q]];
        a[[k, p]] = c * akp - s * akq;
        a[[k, q]] = s * akp + c * akq;
    }
}

// A <- Jᵀ·A.
fn rotate_rows(a: &mut Array2<f64>, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..a.ncols() {
        let apk = a[[p, k]];
        let aqk = a[[q, k]];
        a[[p, k]] = c * apk - s * aqk;
        a[[q, k]] = s * apk + c * aqk;
    }
}

fn normalize_sign(col: &mut [f64]) {
    if let Some(first) = col.iter().find(|x| x.abs() > SIGN_EPS) {
        if *first < 0.0 {
            col.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

fn lex_desc(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match y.partial_cmp(x) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    Ordering::Equal
}

fn sort_pairs(pairs: &mut [(f64, Vec<f64>)]) {
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let scale = pairs.iter().map(|(l, _)| l.abs()).fold(0.0, f64::max);
    let tol = TIE_TOL * scale;
    let mut start = 0;
    while start < pairs.len() {
        let mut end = start + 1;
        while end < pairs.len() && pairs[end - 1].0 - pairs[end].0 <= tol {
            end += 1;
        }
        if end - start > 1 {
            // reorder vectors only, so the values stay exactly descending
            let values: Vec<f64> = pairs[start..end].iter().map(|(l, _)| *l).collect();
            pairs[start..end].sort_by(|a, b| lex_desc(&a.1, &b.1));
            for (pair, l) in pairs[start..end].iter_mut().zip(values) {
                pair.0 = l;
            }
        }
        start = end;
    }
}

/// Lower bound on the eigenvalues accepted by [`inv_sqrt`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EigFloor {
    /// Fraction of the largest eigenvalue.
    Relative(f64),
    Absolute(f64),
}

impl Default for EigFloor {
    fn default() -> Self {
        EigFloor::Relative(1e-10)
    }
}

impl EigFloor {
    pub fn resolve(self, largest_eigenvalue: f64) -> f64 {
        match self {
            EigFloor::Relative(r) => r * largest_eigenvalue,
            EigFloor::Absolute(a) => a,
        }
    }

    fn validate(self) -> Result<()> {
        let v = match self {
            EigFloor::Relative(v) | EigFloor::Absolute(v) => v,
        };
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::invalid(format!(
                "eigenvalue floor must be positive and finite, got {v}"
            )));
        }
        Ok(())
    }
}

/// `M^{-1/2}` for a symmetric positive definite `M`.
///
/// Fails with [`Error::RankDeficient`] if any eigenvalue is below the floor;
/// no pseudo-inverse is ever taken silently.
pub fn inv_sqrt(m: &SymMatrix, eig_floor: EigFloor) -> Result<SymMatrix> {
    eig_floor.validate()?;
    let eig = sym_eigen(m)?;
    let floor = eig_floor.resolve(eig.eigenvalues[0]);
    let smallest = eig.eigenvalues[eig.dim() - 1];
    if smallest < floor || smallest <= 0.0 {
        return Err(Error::RankDeficient {
            eigenvalue: smallest,
            floor,
        });
    }
    let scale = eig.eigenvalues.mapv(|l| 1.0 / l.sqrt());
    let scaled = &eig.eigenvectors * &scale.view().insert_axis(Axis(0));
    Ok(SymMatrix::symmetrized(scaled.dot(&eig.eigenvectors.t())))
}

/// Orthogonal projector onto a subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    matrix: Array2<f64>,
    rank: usize,
}

impl Projector {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    /// Projector onto the span of the canonical vectors `e_i`, `i ∈ indices`.
    pub fn coordinate(dim: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut matrix = Array2::zeros((dim, dim));
        let mut rank = 0;
        for i in indices {
            matrix[[i, i]] = 1.0;
            rank += 1;
        }
        Projector { matrix, rank }
    }

    /// `I − P`.
    pub fn complement(&self) -> Self {
        let matrix = Array2::eye(self.dim()) - &self.matrix;
        Projector {
            matrix,
            rank: self.dim() - self.rank,
        }
    }
}

/// `B·Bᵀ` for a basis `B` with orthonormal columns.
pub fn projector_from_basis(basis: ArrayView2<f64>) -> Result<Projector> {
    let (p, d) = basis.dim();
    if p == 0 || d > p {
        return Err(Error::invalid(format!("basis of shape {p}x{d} cannot be orthonormal")));
    }
    if !basis.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("basis has non-finite entries"));
    }
    let gram = basis.t().dot(&basis);
    for ((i, j), g) in gram.indexed_iter() {
        let target = if i == j { 1.0 } else { 0.0 };
        if (g - target).abs() > ORTHONORMAL_TOL {
            return Err(Error::invalid(format!(
                "basis columns are not orthonormal: (BᵀB)[{i},{j}] = {g}"
            )));
        }
    }
    let matrix = SymMatrix::symmetrized(basis.dot(&basis.t())).into_array();
    Ok(Projector { matrix, rank: d })
}

/// `‖P1 − P2‖²_F`.
pub fn frobenius_dist_sq(a: &Projector, b: &Projector) -> Result<f64> {
    frobenius_dist_sq_matrices(a.matrix(), b.matrix())
}

pub(crate) fn frobenius_dist_sq_matrices(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: format!("{:?}", a.dim()),
            got: format!("{:?}", b.dim()),
        });
    }
    Ok(a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Modified Gram–Schmidt on the columns of `m`.
///
/// Errors when a column is (numerically) dependent on the previous ones.
pub fn orthonormalize_columns(m: ArrayView2<f64>) -> Result<Array2<f64>> {
    let mut q = m.to_owned();
    for j in 0..q.ncols() {
        for i in 0..j {
            let prev = q.column(i).to_owned();
            let r = prev.dot(&q.column(j));
            q.column_mut(j).scaled_add(-r, &prev);
        }
        let norm = q.column(j).dot(&q.column(j)).sqrt();
        let scale = m.column(j).dot(&m.column(j)).sqrt();
        if norm <= 1e-12 * scale.max(f64::MIN_POSITIVE) || norm == 0.0 {
            return Err(Error::invalid(format!("column {j} is linearly dependent")));
        }
        q.column_mut(j).mapv_inplace(|v| v / norm);
    }
    Ok(q)
}
