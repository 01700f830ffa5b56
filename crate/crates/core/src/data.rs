//! Datasets, CSV input/output, empirical whitening, quantiles and ranks.

use std::fs::File;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::linalg::{inv_sqrt, EigFloor, SymMatrix};

/// Covariates `x` (`n × p`) with a real target `y` of length `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Array2<f64>,
    y: Array1<f64>,
    names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array1<f64>, names: Option<Vec<String>>) -> Result<Self> {
        let (n, p) = x.dim();
        if n == 0 {
            return Err(Error::invalid("dataset needs at least one row"));
        }
        if p == 0 {
            return Err(Error::invalid("dataset needs at least one covariate"));
        }
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: format!("{n} targets"),
                got: format!("{}", y.len()),
            });
        }
        if let Some(names) = &names {
            if names.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: format!("{p} covariate names"),
                    got: format!("{}", names.len()),
                });
            }
        }
        if let Some(((i, j), v)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite covariate {v} at row {i}, column {j}")));
        }
        if let Some((i, v)) = y.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite target {v} at row {i}")));
        }
        Ok(Dataset { x, y, names })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn y(&self) -> ArrayView1<'_, f64> {
        self.y.view()
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    /// Column labels, falling back to `x1..xp`.
    pub fn column_names(&self) -> Vec<String> {
        match &self.names {
            Some(n) => n.clone(),
            None => (1..=self.p()).map(|j| format!("x{j}")).collect(),
        }
    }

    /// The rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), indices),
            y: self.y.select(Axis(0), indices),
            names: self.names.clone(),
        }
    }

    /// Same covariates with the target replaced.
    pub fn with_target(&self, y: Array1<f64>) -> Result<Dataset> {
        Dataset::new(self.x.clone(), y, self.names.clone())
    }
}

/// Reads a CSV file with a header row. The target column is `target`
/// (default `y`); every other column becomes a covariate, in file order.
pub fn load_csv(path: impl AsRef<Path>, target: Option<&str>) -> Result<Dataset> {
    let target = target.unwrap_or("y");
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(File::open(path.as_ref())?);
    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::invalid("CSV file is empty"));
    }
    let target_col = headers
        .iter()
        .position(|h| h.trim() == target)
        .ok_or_else(|| Error::invalid(format!("CSV has no target column named `{target}`")))?;
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != target_col)
        .map(|(_, h)| h.trim().to_string())
        .collect();

    let p = names.len();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        // header is line 1; data rows are reported 1-based
        let row = i + 1;
        if record.len() != headers.len() {
            return Err(Error::CsvValue {
                row,
                column: record.len().min(headers.len()) + 1,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for (j, field) in record.iter().enumerate() {
            let column = j + 1;
            let v: f64 = field.trim().parse().map_err(|_| Error::CsvValue {
                row,
                column,
                message: format!("cannot parse `{field}` as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::CsvValue {
                    row,
                    column,
                    message: format!("non-finite value `{field}`"),
                });
            }
            if j == target_col {
                ys.push(v);
            } else {
                xs.push(v);
            }
        }
    }
    if ys.is_empty() {
        return Err(Error::invalid("CSV file has no data rows"));
    }
    let x = Array2::from_shape_vec((ys.len(), p), xs)
        .map_err(|e| Error::invalid(format!("malformed CSV table: {e}")))?;
    Dataset::new(x, Array1::from(ys), Some(names))
}

/// Writes `ds` with covariate columns first and `y` last. Values use the
/// shortest decimal form that parses back to the identical `f64`.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    if ds.p() == 0 {
        return Err(Error::invalid("refusing to write a dataset without covariates"));
    }
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = ds.column_names();
    header.push("y".to_string());
    writer.write_record(&header)?;
    let mut row = Vec::with_capacity(ds.p() + 1);
    for (xi, yi) in ds.x.rows().into_iter().zip(ds.y.iter()) {
        row.clear();
        row.extend(xi.iter().map(|v| format_f64(*v)));
        row.push(format_f64(*yi));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Shortest round-trip decimal representation.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Knobs for empirical whitening.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WhitenOptions {
    pub eig_floor: EigFloor,
    /// Added to the diagonal of the covariance before inversion.
    pub ridge: f64,
}

/// Whitened covariates `z_i = Σ̂^{-1/2}(x_i − m̂)`.
#[derive(Debug, Clone)]
pub struct StandardizedDataset {
    pub z: Array2<f64>,
    pub mean: Array1<f64>,
    pub covariance: SymMatrix,
    pub whitener: SymMatrix,
    pub source: String,
}

impl StandardizedDataset {
    /// Whitens new rows with this dataset's mean and whitener.
    pub fn transform(&self, x: ArrayView2<f64>) -> Array2<f64> {
        (&x - &self.mean.view().insert_axis(Axis(0))).dot(self.whitener.as_array())
    }
}

/// Column means and the divide-by-`n` covariance.
pub fn mean_and_covariance(x: ArrayView2<f64>) -> (Array1<f64>, SymMatrix) {
    let n = x.nrows() as f64;
    let mean = x.sum_axis(Axis(0)) / n;
    let centered = &x - &mean.view().insert_axis(Axis(0));
    let cov = centered.t().dot(&centered) / n;
    (mean, SymMatrix::symmetrized(cov))
}

pub fn standardize(ds: &Dataset, opts: &WhitenOptions) -> Result<StandardizedDataset> {
    if ds.n() < 2 {
        return Err(Error::invalid("standardization needs at least two rows"));
    }
    if !(opts.ridge >= 0.0 && opts.ridge.is_finite()) {
        return Err(Error::invalid(format!("ridge must be non-negative, got {}", opts.ridge)));
    }
    let (mean, covariance) = mean_and_covariance(ds.x());
    let regularized = if opts.ridge > 0.0 {
        covariance.add_ridge(opts.ridge)
    } else {
        covariance.clone()
    };
    let whitener = inv_sqrt(&regularized, opts.eig_floor)?;
    let z = (&ds.x - &mean.view().insert_axis(Axis(0))).dot(whitener.as_array());
    Ok(StandardizedDataset {
        z,
        mean,
        covariance,
        whitener,
        source: format!("dataset n={} p={} ridge={}", ds.n(), ds.p(), opts.ridge),
    })
}

/// `⌈n·u⌉` with `n·u` snapped to the nearest integer when it is within
/// rounding error of one, so that `u = j/n` selects exactly `j`.
pub(crate) fn ceil_count(n: usize, u: f64) -> usize {
    let t = n as f64 * u;
    let r = t.round();
    if (t - r).abs() <= 1e-9 * t.abs().max(1.0) {
        r as usize
    } else {
        t.ceil() as usize
    }
}

/// Left-continuous inverse of the empirical cdf: the `⌈n·u⌉`-th smallest value.
pub fn empirical_quantile(values: &[f64], u: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("quantile of an empty sample"));
    }
    if !(u > 0.0 && u <= 1.0) {
        return Err(Error::invalid(format!("quantile level must lie in (0, 1], got {u}")));
    }
    let idx = ceil_count(values.len(), u).clamp(1, values.len()) - 1;
    let mut sorted = values.to_vec();
    let (_, nth, _) = sorted.select_nth_unstable_by(idx, f64::total_cmp);
    Ok(*nth)
}

/// Row indices sorted by decreasing target, ties in original index order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankView {
    order: Vec<usize>,
}

impl RankView {
    pub fn from_values(y: ArrayView1<f64>) -> Self {
        let mut order: Vec<usize> = (0..y.len()).collect();
        // stable sort keeps ascending index within ties
        order.sort_by(|&a, &b| y[b].total_cmp(&y[a]));
        RankView { order }
    }

    /// 0-based indices; `order()[0]` is the row with the largest target.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

pub fn rank_view(ds: &Dataset) -> RankView {
    RankView::from_values(ds.y())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_small_csv() {
        let f = write_tmp("x1,y\n1,2\n3,4\n5,6\n");
        let ds = load_csv(f.path(), None).unwrap();
        assert_eq!((ds.n(), ds.p()), (3, 1));
        assert_eq!(ds.y().to_vec(), vec![2.0, 4.0, 6.0]);
        assert_eq!(ds.names().unwrap(), &["x1".to_string()]);
    }

    #[test]
    fn nan_cell_is_located() {
        let f = write_tmp("a,b,y\n1,2,3\n4,NaN,6\n");
        match load_csv(f.path(), None) {
            Err(Error::CsvValue { row, column, .. }) => assert_eq!((row, column), (2, 2)),
            other => panic!("expected located error, got {other:?}"),
        }
        let f = write_tmp("a,y\n1,oops\n");
        assert!(matches!(
            load_csv(f.path(), None),
            Err(Error::CsvValue { row: 1, column: 2, .. })
        ));
    }

    #[test]
    fn empty_and_header_only_files() {
        assert!(load_csv(write_tmp("").path(), None).is_err());
        assert!(load_csv(write_tmp("x,y\n").path(), None).is_err());
        assert!(load_csv(write_tmp("x,z\n1,2\n").path(), None).is_err());
    }

    #[test]
    fn target_override() {
        let f = write_tmp("price,a,b\n10,1,2\n20,3,4\n");
        let ds = load_csv(f.path(), Some("price")).unwrap();
        assert_eq!(ds.p(), 2);
        assert_eq!(ds.y().to_vec(), vec![10.0, 20.0]);
        assert_eq!(ds.x(), array![[1.0, 2.0], [3.0, 4.0]]);
    }

    #[test]
    fn no_covariates_rejected() {
        assert!(Dataset::new(Array2::zeros((3, 0)), Array1::zeros(3), None).is_err());
        assert!(load_csv(write_tmp("y\n1\n").path(), None).is_err());
    }

    #[test]
    fn single_row_round_trips() {
        let ds = Dataset::new(array![[0.1, -2.5e-300]], array![1.0 / 3.0], None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.csv");
        write_csv(&ds, &path).unwrap();
        let back = load_csv(&path, None).unwrap();
        assert_eq!(back.x(), ds.x());
        assert_eq!(back.y(), ds.y());
    }

    #[test]
    fn large_table_round_trips() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(5, 0);
        let x = Array2::from_shape_fn((10_000, 30), |_| rng.random::<f64>() * 1e3 - 500.0);
        let y = Array1::from_shape_fn(10_000, |_| rng.random::<f64>());
        let ds = Dataset::new(x, y, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("big.csv");
        write_csv(&ds, &path).unwrap();
        let back = load_csv(&path, None).unwrap();
        assert_eq!(back.x(), ds.x());
        assert_eq!(back.y(), ds.y());
    }

    #[test]
    fn standardize_two_points() {
        let ds = Dataset::new(array![[0.0], [2.0]], array![0.0, 1.0], None).unwrap();
        let s = standardize(&ds, &WhitenOptions::default()).unwrap();
        assert_eq!(s.mean.to_vec(), vec![1.0]);
        assert_eq!(s.covariance.as_array(), &array![[1.0]]);
        assert_eq!(s.z, array![[-1.0], [1.0]]);
    }

    #[test]
    fn standardize_constant_rows_is_rank_deficient() {
        let ds = Dataset::new(array![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]], array![0.0, 1.0, 2.0], None)
            .unwrap();
        assert!(matches!(
            standardize(&ds, &WhitenOptions::default()),
            Err(Error::RankDeficient { .. })
        ));
        // a ridge makes it invertible
        let opts = WhitenOptions { ridge: 1e-3, ..Default::default() };
        assert!(standardize(&ds, &opts).is_ok());
        assert!(standardize(&ds.select_rows(&[0]), &WhitenOptions::default()).is_err());
    }

    #[test]
    fn standardize_hand_computed_covariance() {
        // Points (0,0), (2,0), (0,1), (2,3): mean (1,1);
        // centered (-1,-1), (1,-1), (-1,0), (1,2);
        // Σ̂ = [[4, 2], [2, 6]] / 4 = [[1, .5], [.5, 1.5]].
        let x = array![[0.0, 0.0], [2.0, 0.0], [0.0, 1.0], [2.0, 3.0]];
        let ds = Dataset::new(x, array![1.0, 2.0, 3.0, 4.0], None).unwrap();
        let s = standardize(&ds, &WhitenOptions::default()).unwrap();
        assert_eq!(s.mean.to_vec(), vec![1.0, 1.0]);
        assert_abs_diff_eq!(s.covariance.as_array(), &array![[1.0, 0.5], [0.5, 1.5]], epsilon = 1e-15);
        let gram = s.z.t().dot(&s.z) / 4.0;
        assert_abs_diff_eq!(gram, Array2::<f64>::eye(2), epsilon = 1e-10);
        assert_abs_diff_eq!(s.z.sum_axis(Axis(0)), Array1::<f64>::zeros(2), epsilon = 1e-12);
        assert_abs_diff_eq!(s.transform(ds.x()), s.z, epsilon = 1e-15);
    }

    #[test]
    fn quantile_examples() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(empirical_quantile(&v, 0.5).unwrap(), 5.0);
        assert_eq!(empirical_quantile(&v, 1.0).unwrap(), 10.0);
        assert_eq!(empirical_quantile(&[3.0, 1.0, 2.0], 0.34).unwrap(), 2.0);
        assert_eq!(empirical_quantile(&[3.0, 1.0, 2.0], 1.0 / 3.0).unwrap(), 1.0);
        assert!(empirical_quantile(&v, 0.0).is_err());
        assert!(empirical_quantile(&v, 1.5).is_err());
        assert!(empirical_quantile(&[], 0.5).is_err());
    }

    #[test]
    fn ceil_count_snaps_exact_fractions() {
        for k in 1..200 {
            for j in 0..=k {
                assert_eq!(ceil_count(k, j as f64 / k as f64), j);
            }
        }
        assert_eq!(ceil_count(4, 0.3), 2);
        assert_eq!(ceil_count(10_000, 0.98), 9_800);
    }

    #[test]
    fn rank_view_examples() {
        let order = |y: Vec<f64>| RankView::from_values(Array1::from(y).view()).order().to_vec();
        assert_eq!(order(vec![1.0, 3.0, 2.0]), vec![1, 2, 0]);
        assert_eq!(order(vec![2.0, 2.0, 1.0]), vec![0, 1, 2]);
        assert_eq!(order((0..6).map(f64::from).collect()), vec![5, 4, 3, 2, 1, 0]);
    }

    // brute force: smallest sample value t with #{T_i <= t} >= n·u
    fn brute_quantile(values: &[f64], u: f64) -> f64 {
        let n = values.len() as f64;
        let mut best = f64::INFINITY;
        for &t in values {
            let count = values.iter().filter(|&&v| v <= t).count() as f64;
            if count >= n * u && t < best {
                best = t;
            }
        }
        best
    }

    proptest! {
        #[test]
        fn quantile_matches_brute_force(
            values in prop::collection::vec(-100.0f64..100.0, 1..50),
            u in 0.001f64..1.0,
        ) {
            prop_assert_eq!(empirical_quantile(&values, u).unwrap(), brute_quantile(&values, u));
        }

        #[test]
        fn rank_view_invariant_under_increasing_maps(
            y in prop::collection::vec(-5.0f64..5.0, 1..60),
        ) {
            let y = Array1::from(y);
            let a = RankView::from_values(y.view());
            let b = RankView::from_values(y.mapv(|v| v.exp() * 3.0 + 1.0).view());
            prop_assert_eq!(&a, &b);
            for w in a.order().windows(2) {
                prop_assert!(y[w[0]] > y[w[1]] || (y[w[0]] == y[w[1]] && w[0] < w[1]));
            }
        }
    }
}
