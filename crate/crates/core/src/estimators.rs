//! TIREX1/TIREX2 candidate matrices, the tail inverse-regression processes
//! they integrate, the classical baselines, and subspace extraction.
//!
//! With `z_(1), z_(2), …` the whitened covariates ordered by decreasing
//! target, the first-order process is
//!
//! ```text
//! C(u) = (1/k) · Σ_{i ≤ ⌈ku⌉} z_(i)
//! ```
//!
//! and the second-order process `B(u)` sums `z_(i) z_(i)ᵀ − I` instead. Both
//! are constant on `((j−1)/k, j/k]`, so their integrated outer products
//! collapse to the cumulative-sum forms computed by [`tirex1_matrix`] and
//! [`tirex2_matrix`] in `O(n log n + k·p²)` (resp. `O(n log n + k·p³)`).

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{ceil_count, mean_and_covariance, rank_view, standardize, Dataset, RankView, WhitenOptions};
use crate::error::{Error, Result};
use crate::linalg::{orthonormalize_columns, projector_from_basis, sym_eigen, EigenDecomposition, Projector, SymMatrix};

/// Dimension-reduction method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Tirex1,
    Tirex2,
    /// TIREX1 with `k = n`.
    Cume,
    /// TIREX2 with `k = n`.
    Cuve,
    Pca,
    /// Non-centered PCA.
    SvdPca,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Tirex1,
        Method::Tirex2,
        Method::Cume,
        Method::Cuve,
        Method::Pca,
        Method::SvdPca,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Tirex1 => "tirex1",
            Method::Tirex2 => "tirex2",
            Method::Cume => "cume",
            Method::Cuve => "cuve",
            Method::Pca => "pca",
            Method::SvdPca => "svd_pca",
        }
    }

    /// Whether the method depends on the number `k` of top order statistics.
    pub fn uses_k(self) -> bool {
        matches!(self, Method::Tirex1 | Method::Tirex2)
    }

    /// Default reduced dimension, if the method has one.
    pub fn default_d(self) -> Option<usize> {
        match self {
            Method::Tirex1 | Method::Cume => Some(1),
            _ => None,
        }
    }

    fn is_inverse_regression(self) -> bool {
        !matches!(self, Method::Pca | Method::SvdPca)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tirex1" => Ok(Method::Tirex1),
            "tirex2" => Ok(Method::Tirex2),
            "cume" => Ok(Method::Cume),
            "cuve" => Ok(Method::Cuve),
            "pca" => Ok(Method::Pca),
            "svd_pca" | "svd-pca" | "svd" => Ok(Method::SvdPca),
            other => Err(Error::invalid(format!("unknown method `{other}`"))),
        }
    }
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k must lie in 1..={n}, got {k}")));
    }
    Ok(())
}

fn check_inputs(z: ArrayView2<f64>, order: &RankView, k: usize) -> Result<()> {
    if order.len() != z.nrows() {
        return Err(Error::DimensionMismatch {
            expected: format!("rank view over {} rows", z.nrows()),
            got: format!("{}", order.len()),
        });
    }
    check_k(k, z.nrows())
}

fn check_u(u: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::invalid(format!("u must lie in [0, 1], got {u}")));
    }
    Ok(())
}

/// First-order tail inverse-regression process `Ĉ_n(u)`.
pub fn c_process(z: ArrayView2<f64>, order: &RankView, k: usize, u: f64) -> Result<Array1<f64>> {
    check_inputs(z, order, k)?;
    check_u(u)?;
    let mut acc = Array1::zeros(z.ncols());
    for &i in &order.order()[..ceil_count(k, u)] {
        acc += &z.row(i);
    }
    Ok(acc / k as f64)
}

/// Second-order tail inverse-regression process `B̂_n(u)`.
pub fn b_process(z: ArrayView2<f64>, order: &RankView, k: usize, u: f64) -> Result<SymMatrix> {
    check_inputs(z, order, k)?;
    check_u(u)?;
    let p = z.ncols();
    let mut acc = Array2::<f64>::zeros((p, p));
    for &i in &order.order()[..ceil_count(k, u)] {
        add_centered_outer(&mut acc, z.row(i));
    }
    Ok(SymMatrix::symmetrized(acc / k as f64))
}

// acc += z zᵀ − I
fn add_centered_outer(acc: &mut Array2<f64>, z: ArrayView1<f64>) {
    let p = z.len();
    for a in 0..p {
        for b in 0..p {
            acc[[a, b]] += z[a] * z[b];
        }
        acc[[a, a]] -= 1.0;
    }
}

/// `k⁻³ Σ_{j≤k} S_j S_jᵀ` with `S_j` the running sum of the top-`j` rows.
pub fn tirex1_matrix(z: ArrayView2<f64>, order: &RankView, k: usize) -> Result<SymMatrix> {
    check_inputs(z, order, k)?;
    let p = z.ncols();
    let mut running = vec![0.0; p];
    let mut m = Array2::<f64>::zeros((p, p));
    for &i in &order.order()[..k] {
        let row = z.row(i);
        for (s, x) in running.iter_mut().zip(row.iter()) {
            *s += x;
        }
        for a in 0..p {
            let sa = running[a];
            for b in a..p {
                m[[a, b]] += sa * running[b];
            }
        }
    }
    Ok(finish_upper(m, k))
}

/// `k⁻³ Σ_{j≤k} T_j T_jᵀ` with `T_j = Σ_{i≤j} (z_(i) z_(i)ᵀ − I)`.
pub fn tirex2_matrix(z: ArrayView2<f64>, order: &RankView, k: usize) -> Result<SymMatrix> {
    check_inputs(z, order, k)?;
    let p = z.ncols();
    let mut running = Array2::<f64>::zeros((p, p));
    let mut m = Array2::<f64>::zeros((p, p));
    for &i in &order.order()[..k] {
        add_centered_outer(&mut running, z.row(i));
        // T_j is symmetric, so T_j T_jᵀ = T_j².
        ndarray::linalg::general_mat_mul(1.0, &running, &running, 1.0, &mut m);
    }
    Ok(SymMatrix::symmetrized(m / (k as f64).powi(3)))
}

fn finish_upper(mut m: Array2<f64>, k: usize) -> SymMatrix {
    let p = m.nrows();
    let scale = 1.0 / (k as f64).powi(3);
    for a in 0..p {
        for b in a..p {
            let v = m[[a, b]] * scale;
            m[[a, b]] = v;
            m[[b, a]] = v;
        }
    }
    SymMatrix::symmetrized(m)
}

/// Brute-force CUME matrix `(1/n) Σ_a m_a m_aᵀ`, `m_a = (1/n) Σ_i z_i 1{y_i ≥ y_a}`.
///
/// Quadratic in `n`; meant as a reference for [`tirex1_matrix`] with `k = n`.
pub fn cume_matrix_oracle(z: ArrayView2<f64>, y: ArrayView1<f64>) -> SymMatrix {
    let (n, p) = z.dim();
    let nf = n as f64;
    let mut m = Array2::<f64>::zeros((p, p));
    for a in 0..n {
        let mut mean = Array1::<f64>::zeros(p);
        for i in 0..n {
            // ỹ_i ≤ ỹ_a with ỹ = −y
            if y[i] >= y[a] {
                mean += &z.row(i);
            }
        }
        mean /= nf;
        let col = mean.view().insert_axis(Axis(1));
        m += &col.dot(&col.t());
    }
    SymMatrix::symmetrized(m / nf)
}

/// Brute-force CUVE matrix, the second-order analogue of [`cume_matrix_oracle`].
pub fn cuve_matrix_oracle(z: ArrayView2<f64>, y: ArrayView1<f64>) -> SymMatrix {
    let (n, p) = z.dim();
    let nf = n as f64;
    let mut m = Array2::<f64>::zeros((p, p));
    for a in 0..n {
        let mut mean = Array2::<f64>::zeros((p, p));
        for i in 0..n {
            if y[i] >= y[a] {
                add_centered_outer(&mut mean, z.row(i));
            }
        }
        mean /= nf;
        m += &mean.dot(&mean.t());
    }
    SymMatrix::symmetrized(m / nf)
}

fn second_moment(x: ArrayView2<f64>, centered: bool) -> (Option<Array1<f64>>, SymMatrix) {
    if centered {
        let (mean, cov) = mean_and_covariance(x);
        (Some(mean), cov)
    } else {
        let m = x.t().dot(&x) / x.nrows() as f64;
        (None, SymMatrix::symmetrized(m))
    }
}

/// Top-`d` principal directions of the raw covariates.
pub fn pca_basis(ds: &Dataset, d: usize, centered: bool) -> Result<Array2<f64>> {
    if d == 0 || d > ds.p() {
        return Err(Error::invalid(format!("d must lie in 1..={}, got {d}", ds.p())));
    }
    let (_, m) = second_moment(ds.x(), centered);
    Ok(sym_eigen(&m)?.top_vectors(d))
}

/// Coordinates a fit's basis lives in, and how to map raw rows into them.
#[derive(Debug, Clone)]
pub enum Frame {
    /// `z = Σ̂^{-1/2}(x − m̂)`.
    Whitened { mean: Array1<f64>, whitener: SymMatrix },
    /// Raw covariates, optionally centered.
    Raw { center: Option<Array1<f64>> },
}

/// A fitted reduction subspace.
///
/// For the inverse-regression methods `basis_whitened` holds the top-`d`
/// eigenvectors of the candidate matrix built on whitened covariates and
/// `basis_raw` maps them back with `Σ̂^{-1/2}` (then re-orthonormalizes).
/// PCA variants work on raw covariates, so both bases coincide.
#[derive(Debug, Clone)]
pub struct SdrFit {
    pub method: Method,
    pub k: usize,
    pub d: usize,
    pub candidate_matrix: SymMatrix,
    pub eigen: EigenDecomposition,
    pub basis_whitened: Array2<f64>,
    pub projector_whitened: Projector,
    pub basis_raw: Array2<f64>,
    pub frame: Frame,
}

impl SdrFit {
    /// Reduced coordinates of raw covariate rows.
    pub fn project(&self, x: ArrayView2<f64>) -> Array2<f64> {
        match &self.frame {
            Frame::Whitened { mean, whitener } => {
                let z = (&x - &mean.view().insert_axis(Axis(0))).dot(whitener.as_array());
                z.dot(&self.basis_whitened)
            }
            Frame::Raw { center: Some(mean) } => {
                (&x - &mean.view().insert_axis(Axis(0))).dot(&self.basis_whitened)
            }
            Frame::Raw { center: None } => x.dot(&self.basis_whitened),
        }
    }

    /// Projector onto the span of `basis_raw`.
    pub fn projector_raw(&self) -> Result<Projector> {
        projector_from_basis(self.basis_raw.view())
    }
}

/// Standardize, build the candidate matrix, and keep its top-`d` eigenvectors.
///
/// `k` is required for TIREX1/TIREX2, forced to `n` for CUME/CUVE and
/// ignored by the PCA variants.
pub fn fit(ds: &Dataset, method: Method, k: Option<usize>, d: usize, whiten: &WhitenOptions) -> Result<SdrFit> {
    let p = ds.p();
    if d == 0 || d > p {
        return Err(Error::invalid(format!("d must lie in 1..={p}, got {d}")));
    }
    let n = ds.n();
    let k = match method {
        Method::Tirex1 | Method::Tirex2 => {
            let k = k.ok_or_else(|| Error::invalid(format!("{method} needs an explicit k")))?;
            check_k(k, n)?;
            k
        }
        _ => n,
    };

    if !method.is_inverse_regression() {
        let centered = method == Method::Pca;
        let (center, candidate_matrix) = second_moment(ds.x(), centered);
        let eigen = sym_eigen(&candidate_matrix)?;
        let basis = eigen.top_vectors(d);
        let projector_whitened = projector_from_basis(basis.view())?;
        return Ok(SdrFit {
            method,
            k,
            d,
            candidate_matrix,
            eigen,
            basis_raw: basis.clone(),
            basis_whitened: basis,
            projector_whitened,
            frame: Frame::Raw { center },
        });
    }

    let std = standardize(ds, whiten)?;
    let order = rank_view(ds);
    let candidate_matrix = match method {
        Method::Tirex1 | Method::Cume => tirex1_matrix(std.z.view(), &order, k)?,
        _ => tirex2_matrix(std.z.view(), &order, k)?,
    };
    let eigen = sym_eigen(&candidate_matrix)?;
    let basis_whitened = eigen.top_vectors(d);
    let projector_whitened = projector_from_basis(basis_whitened.view())?;
    let basis_raw = orthonormalize_columns(std.whitener.as_array().dot(&basis_whitened).view())?;
    Ok(SdrFit {
        method,
        k,
        d,
        candidate_matrix,
        eigen,
        basis_whitened,
        projector_whitened,
        basis_raw,
        frame: Frame::Whitened {
            mean: std.mean,
            whitener: std.whitener,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn order_of(y: &[f64]) -> RankView {
        RankView::from_values(ArrayView1::from(y))
    }

    #[test]
    fn c_process_examples() {
        let z = array![[5.0]];
        let o = order_of(&[1.0]);
        assert_eq!(c_process(z.view(), &o, 1, 0.0).unwrap().to_vec(), vec![0.0]);
        assert_eq!(c_process(z.view(), &o, 1, 1.0).unwrap().to_vec(), vec![5.0]);

        let z = array![[1.0], [2.0], [3.0], [4.0]];
        let o = order_of(&[4.0, 3.0, 2.0, 1.0]);
        assert_eq!(c_process(z.view(), &o, 2, 0.6).unwrap().to_vec(), vec![1.5]);
        assert!(c_process(z.view(), &o, 5, 0.5).is_err());
        assert!(c_process(z.view(), &o, 0, 0.5).is_err());
        assert!(c_process(z.view(), &o, 2, 1.5).is_err());
    }

    #[test]
    fn b_process_examples() {
        let z = array![[2.0]];
        let o = order_of(&[0.0]);
        assert_eq!(b_process(z.view(), &o, 1, 0.0).unwrap(), SymMatrix::zeros(1));
        assert_eq!(b_process(z.view(), &o, 1, 1.0).unwrap().as_array(), &array![[3.0]]);

        let z = array![[1.0], [3.0]];
        let o = order_of(&[2.0, 1.0]);
        assert_eq!(b_process(z.view(), &o, 2, 1.0).unwrap().as_array(), &array![[4.0]]);
    }

    #[test]
    fn tirex1_small_cases() {
        let z = array![[1.5, -2.0]];
        let m = tirex1_matrix(z.view(), &order_of(&[0.0]), 1).unwrap();
        assert_eq!(m.as_array(), &array![[2.25, -3.0], [-3.0, 4.0]]);

        let z = Array2::<f64>::zeros((4, 3));
        let m = tirex1_matrix(z.view(), &order_of(&[1.0, 2.0, 3.0, 4.0]), 3).unwrap();
        assert_eq!(m, SymMatrix::zeros(3));
    }

    #[test]
    fn tirex2_small_cases() {
        let m = tirex2_matrix(array![[2.0]].view(), &order_of(&[0.0]), 1).unwrap();
        assert_eq!(m.as_array(), &array![[9.0]]);

        let z = array![[1.0], [-1.0], [1.0], [-1.0]];
        let m = tirex2_matrix(z.view(), &order_of(&[1.0, 2.0, 3.0, 4.0]), 4).unwrap();
        assert_eq!(m, SymMatrix::zeros(1));
    }

    #[test]
    fn cume_oracle_trivial_cases() {
        let z = array![[1.0, 2.0]];
        let m = cume_matrix_oracle(z.view(), array![0.0].view());
        assert_eq!(m.as_array(), &array![[1.0, 2.0], [2.0, 4.0]]);
        let m = cume_matrix_oracle(Array2::zeros((3, 2)).view(), array![1.0, 2.0, 3.0].view());
        assert_eq!(m, SymMatrix::zeros(2));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("sir".parse::<Method>().is_err());
    }

    #[test]
    fn pca_on_a_line() {
        let x = array![[0.0, 0.0], [1.0, 2.0], [2.0, 4.0], [3.0, 6.0]];
        let ds = Dataset::new(x, array![0.0, 1.0, 2.0, 3.0], None).unwrap();
        let b = pca_basis(&ds, 1, true).unwrap();
        let s = 5f64.sqrt();
        assert_abs_diff_eq!(b, array![[1.0 / s], [2.0 / s]], epsilon = 1e-12);
        assert!(pca_basis(&ds, 3, true).is_err());
    }

    #[test]
    fn pca_hand_instance() {
        // Covariance of (0,0), (2,0), (0,1), (2,3) is [[1, .5], [.5, 1.5]];
        // eigenvalues 1.25 ± √(0.0625 + 0.25), top vector ∝ (0.5, λ₁ − 1).
        let x = array![[0.0, 0.0], [2.0, 0.0], [0.0, 1.0], [2.0, 3.0]];
        let ds = Dataset::new(x, array![1.0, 2.0, 3.0, 4.0], None).unwrap();
        let l1 = 1.25 + 0.3125f64.sqrt();
        let v = array![0.5, l1 - 1.0];
        let v = &v / v.dot(&v).sqrt();
        let b = pca_basis(&ds, 1, true).unwrap();
        assert_abs_diff_eq!(b.column(0), v.view(), epsilon = 1e-12);
        let full = pca_basis(&ds, 2, true).unwrap();
        assert_abs_diff_eq!(full.t().dot(&full), Array2::<f64>::eye(2), epsilon = 1e-12);
    }

    #[test]
    fn svd_pca_uses_raw_second_moment() {
        // All points equal (3, 4): centered covariance is zero, raw second
        // moment is rank one along (3, 4)/5.
        let x = array![[3.0, 4.0], [3.0, 4.0], [3.0, 4.0]];
        let ds = Dataset::new(x, array![1.0, 2.0, 3.0], None).unwrap();
        let b = pca_basis(&ds, 1, false).unwrap();
        assert_abs_diff_eq!(b, array![[0.6], [0.8]], epsilon = 1e-12);
    }

    fn small_dataset() -> Dataset {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(11, 0);
        let x = Array2::from_shape_fn((40, 3), |_| rng.random::<f64>());
        let y = Array1::from_shape_fn(40, |i| x[[i, 2]] * 3.0 + rng.random::<f64>() * 0.1);
        Dataset::new(x, y, None).unwrap()
    }

    #[test]
    fn fit_cume_equals_tirex1_with_k_n() {
        let ds = small_dataset();
        let w = WhitenOptions::default();
        let a = fit(&ds, Method::Cume, None, 2, &w).unwrap();
        let b = fit(&ds, Method::Tirex1, Some(ds.n()), 2, &w).unwrap();
        assert_eq!(a.k, b.k);
        assert_eq!(a.candidate_matrix, b.candidate_matrix);
        assert_eq!(a.eigen, b.eigen);
        assert_eq!(a.basis_whitened, b.basis_whitened);
        assert_eq!(a.projector_whitened, b.projector_whitened);
        assert_eq!(a.basis_raw, b.basis_raw);

        let c = fit(&ds, Method::Cuve, Some(3), 2, &w).unwrap();
        let d = fit(&ds, Method::Tirex2, Some(ds.n()), 2, &w).unwrap();
        assert_eq!(c.candidate_matrix, d.candidate_matrix);
        assert_eq!(c.k, ds.n());
    }

    #[test]
    fn fit_p1_gives_identity_projector() {
        let x = array![[0.3], [1.0], [-2.0], [4.0]];
        let ds = Dataset::new(x, array![1.0, 4.0, 2.0, 3.0], None).unwrap();
        for m in Method::ALL {
            let f = fit(&ds, m, Some(2), 1, &WhitenOptions::default()).unwrap();
            assert_abs_diff_eq!(f.projector_whitened.matrix(), &array![[1.0]], epsilon = 1e-12);
        }
    }

    #[test]
    fn fit_argument_errors() {
        let ds = small_dataset();
        let w = WhitenOptions::default();
        assert!(fit(&ds, Method::Tirex1, None, 1, &w).is_err());
        assert!(fit(&ds, Method::Tirex1, Some(0), 1, &w).is_err());
        assert!(fit(&ds, Method::Tirex1, Some(41), 1, &w).is_err());
        assert!(fit(&ds, Method::Tirex1, Some(10), 0, &w).is_err());
        assert!(fit(&ds, Method::Tirex1, Some(10), 4, &w).is_err());
    }

    #[test]
    fn fit_recovers_signal_direction() {
        let ds = small_dataset();
        let f = fit(&ds, Method::Tirex1, Some(10), 1, &WhitenOptions::default()).unwrap();
        // y is driven by the third covariate
        assert!(f.basis_raw[[2, 0]].abs() > 0.9);
        let proj = f.project(ds.x());
        assert_eq!(proj.dim(), (40, 1));
        let raw = f.projector_raw().unwrap();
        assert_eq!(raw.rank(), 1);
    }

    #[test]
    fn projection_matches_whitened_coordinates() {
        let ds = small_dataset();
        let w = WhitenOptions::default();
        let f = fit(&ds, Method::Tirex2, Some(20), 2, &w).unwrap();
        let std = standardize(&ds, &w).unwrap();
        assert_abs_diff_eq!(f.project(ds.x()), std.z.dot(&f.basis_whitened), epsilon = 1e-12);
        let g = fit(&ds, Method::Pca, None, 2, &w).unwrap();
        let (mean, _) = mean_and_covariance(ds.x());
        let centered = &ds.x() - &mean.view().insert_axis(Axis(0));
        assert_abs_diff_eq!(g.project(ds.x()), centered.dot(&g.basis_raw), epsilon = 1e-12);
    }
}
