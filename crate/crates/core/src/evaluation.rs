//! Benchmark harnesses: the bias/variance/MSE sweep over `k` for subspace
//! recovery, and the tail-event classification pipeline (reduce, then
//! k-nearest-neighbours) scored by AM risk and AUC.
//!
//! Replications and grid cells are independent jobs. They run on the rayon
//! pool of the caller and are always reduced in `(method, k, rep)` order, so
//! results do not depend on the number of threads.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{empirical_quantile, format_f64, Dataset, WhitenOptions};
use crate::error::{Error, Result};
use crate::estimators::{fit, Method};
use crate::linalg::{frobenius_dist_sq_matrices, Projector};
use crate::rng::{stream_rng, streams};
use crate::synthetic::{sample_stream, true_projector, MixtureSpec};

/// Bias², variance and MSE of the projector estimates at one `k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub k: usize,
    pub bias_sq: f64,
    pub variance: f64,
    pub mse: f64,
    /// Replications whose fit succeeded; only these enter the statistics.
    pub successes: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub label: String,
    pub n: usize,
    pub d: usize,
    pub reps: usize,
    pub seed: u64,
    pub cells: Vec<SweepCell>,
}

impl SweepReport {
    pub fn k_grid(&self) -> Vec<usize> {
        self.cells.iter().map(|c| c.k).collect()
    }

    pub fn cell(&self, k: usize) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.k == k)
    }

    /// One row per `k`: `k,bias_sq,variance,mse`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["k", "bias_sq", "variance", "mse"])?;
        for c in &self.cells {
            w.write_record([
                c.k.to_string(),
                format_f64(c.bias_sq),
                format_f64(c.variance),
                format_f64(c.mse),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Integer grid of `count` geometrically spaced values in `[lo, hi]`,
/// rounded and de-duplicated.
pub fn geometric_k_grid(lo: usize, hi: usize, count: usize) -> Result<Vec<usize>> {
    if lo == 0 || lo > hi || count == 0 {
        return Err(Error::invalid(format!(
            "k grid needs 1 <= lo <= hi and count >= 1, got {lo}:{hi}:{count}"
        )));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let ratio = (hi as f64 / lo as f64).ln();
    let mut grid: Vec<usize> = (0..count)
        .map(|i| {
            let t = i as f64 / (count - 1) as f64;
            ((lo as f64) * (ratio * t).exp()).round() as usize
        })
        .map(|k| k.clamp(lo, hi))
        .collect();
    grid.dedup();
    Ok(grid)
}

/// 30 geometric values spanning `[n/100, n]`.
pub fn default_k_grid(n: usize) -> Vec<usize> {
    geometric_k_grid((n / 100).max(1), n.max(1), 30).expect("n >= 1")
}

fn projector_stats(estimates: &[Array2<f64>], truth: &Array2<f64>) -> (f64, f64, f64) {
    let m = estimates.len() as f64;
    let mut mean = Array2::<f64>::zeros(truth.dim());
    for e in estimates {
        mean += e;
    }
    mean /= m;
    let dist = |a: &Array2<f64>, b: &Array2<f64>| frobenius_dist_sq_matrices(a, b).expect("same shape");
    let bias_sq = dist(truth, &mean);
    let variance = estimates.iter().map(|e| dist(e, &mean)).sum::<f64>() / m;
    let mse = estimates.iter().map(|e| dist(e, truth)).sum::<f64>() / m;
    (bias_sq, variance, mse)
}

/// Runs `estimator(dataset, k)` on `reps` fresh samples for every `k`.
///
/// Replication `r` uses the sample stream `(seed, r)` and the same sample is
/// shared by every `k`. Cells where every replication failed report `NaN`.
#[allow(clippy::too_many_arguments)]
pub fn sweep_with<F>(
    spec: &MixtureSpec,
    n: usize,
    label: &str,
    d: usize,
    k_grid: &[usize],
    reps: usize,
    seed: u64,
    estimator: F,
) -> Result<SweepReport>
where
    F: Fn(&Dataset, usize) -> Result<Projector> + Sync,
{
    if reps < 2 {
        return Err(Error::invalid(format!("a sweep needs at least 2 replications, got {reps}")));
    }
    if k_grid.is_empty() {
        return Err(Error::invalid("empty k grid"));
    }
    if let Some(k) = k_grid.iter().find(|&&k| k == 0 || k > n) {
        return Err(Error::invalid(format!("k = {k} outside 1..={n}")));
    }
    spec.validate()?;
    let truth = true_projector(spec);

    let per_rep: Vec<Vec<Option<Array2<f64>>>> = (0..reps)
        .into_par_iter()
        .map(|r| -> Result<Vec<Option<Array2<f64>>>> {
            let ds = sample_stream(spec, n, seed, r as u64)?;
            Ok(k_grid
                .iter()
                .map(|&k| estimator(&ds, k).ok().map(|p| p.matrix().clone()))
                .collect())
        })
        .collect::<Result<_>>()?;

    let cells = k_grid
        .iter()
        .enumerate()
        .map(|(ki, &k)| {
            let ok: Vec<Array2<f64>> = per_rep.iter().filter_map(|row| row[ki].clone()).collect();
            let (bias_sq, variance, mse) = if ok.is_empty() {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                projector_stats(&ok, truth.matrix())
            };
            SweepCell {
                k,
                bias_sq,
                variance,
                mse,
                successes: ok.len(),
                failures: reps - ok.len(),
            }
        })
        .collect();
    Ok(SweepReport {
        label: label.to_string(),
        n,
        d,
        reps,
        seed,
        cells,
    })
}

/// Bias/variance/MSE of `method`'s whitened projector against the true
/// extreme subspace of `spec`.
#[allow(clippy::too_many_arguments)]
pub fn sweep(
    spec: &MixtureSpec,
    n: usize,
    method: Method,
    d: usize,
    k_grid: &[usize],
    reps: usize,
    seed: u64,
    whiten: &WhitenOptions,
) -> Result<SweepReport> {
    sweep_with(spec, n, method.as_str(), d, k_grid, reps, seed, |ds, k| {
        Ok(fit(ds, method, Some(k), d, whiten)?.projector_whitened)
    })
}

fn class_counts(truth: &[bool]) -> Result<(usize, usize)> {
    let pos = truth.iter().filter(|&&t| t).count();
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "labels need both classes, got {pos} positive and {neg} negative"
        )));
    }
    Ok((pos, neg))
}

/// `½ (P(h = 1 | T = 0) + P(h = 0 | T = 1))`.
pub fn am_risk(predictions: &[bool], truth: &[bool]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} predictions", truth.len()),
            got: format!("{}", predictions.len()),
        });
    }
    let (pos, neg) = class_counts(truth)?;
    let false_pos = predictions.iter().zip(truth).filter(|(h, t)| **h && !**t).count();
    let false_neg = predictions.iter().zip(truth).filter(|(h, t)| !**h && **t).count();
    Ok(0.5 * (false_pos as f64 / neg as f64 + false_neg as f64 / pos as f64))
}

/// Mann–Whitney AUC, `P(s₊ > s₋) + ½ P(s₊ = s₋)`, from mid-ranks.
pub fn auc(scores: &[f64], truth: &[bool]) -> Result<f64> {
    if scores.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} scores", truth.len()),
            got: format!("{}", scores.len()),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("scores must be finite"));
    }
    let (pos, neg) = class_counts(truth)?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && scores[idx[end]] == scores[idx[start]] {
            end += 1;
        }
        // ranks start..end (1-based start+1..=end) share their mean
        let mid_rank = (start + 1 + end) as f64 / 2.0;
        let tied_pos = idx[start..end].iter().filter(|&&i| truth[i]).count();
        rank_sum_pos += mid_rank * tied_pos as f64;
        start = end;
    }
    let u = rank_sum_pos - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

#[derive(PartialEq)]
struct Neighbor {
    dist: f64,
    index: usize,
}

impl Eq for Neighbor {}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist.total_cmp(&other.dist).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Fraction of positive labels among the `n_neighbors` Euclidean-nearest
/// training points of each query. Distance ties go to the smaller index.
pub fn knn_scores(
    train: ArrayView2<f64>,
    labels: &[bool],
    query: ArrayView2<f64>,
    n_neighbors: usize,
) -> Result<Vec<f64>> {
    let m = train.nrows();
    if m == 0 {
        return Err(Error::invalid("empty training set"));
    }
    if labels.len() != m {
        return Err(Error::DimensionMismatch {
            expected: format!("{m} labels"),
            got: format!("{}", labels.len()),
        });
    }
    if train.ncols() != query.ncols() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} query columns", train.ncols()),
            got: format!("{}", query.ncols()),
        });
    }
    if n_neighbors == 0 || n_neighbors > m {
        return Err(Error::invalid(format!("n_neighbors must lie in 1..={m}, got {n_neighbors}")));
    }
    let rows: Vec<ArrayView1<f64>> = train.rows().into_iter().collect();
    let queries: Vec<ArrayView1<f64>> = query.rows().into_iter().collect();
    Ok(queries
        .par_iter()
        .map(|q| {
            let mut heap = BinaryHeap::with_capacity(n_neighbors + 1);
            for (index, row) in rows.iter().enumerate() {
                let dist: f64 = row.iter().zip(q.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                let cand = Neighbor { dist, index };
                if heap.len() < n_neighbors {
                    heap.push(cand);
                } else if cand < *heap.peek().expect("non-empty") {
                    heap.pop();
                    heap.push(cand);
                }
            }
            let hits = heap.iter().filter(|nb| labels[nb.index]).count();
            hits as f64 / n_neighbors as f64
        })
        .collect())
}

/// Hard k-NN decision: positive iff the score exceeds one half.
pub fn knn_predict(scores: &[f64]) -> Vec<bool> {
    scores.iter().map(|&s| s > 0.5).collect()
}

/// `T_i = 1{y_i > q}` with `q` the empirical `level`-quantile of `y`.
pub fn exceedance_labels(y: ArrayView1<f64>, level: f64) -> Result<(f64, Vec<bool>)> {
    let values = y.to_vec();
    let threshold = empirical_quantile(&values, level)?;
    Ok((threshold, values.iter().map(|&v| v > threshold).collect()))
}

/// Stratified `(train, test)` index split, both sorted ascending.
pub fn stratified_split(labels: &[bool], test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!("test fraction must lie in (0, 1), got {test_fraction}")));
    }
    let mut rng = stream_rng(seed, streams::SPLIT);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [true, false] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 examples of class {class} to split, got {}",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        let n_test = ((members.len() as f64 * test_fraction).round() as usize).clamp(1, members.len() - 1);
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Stratified fold assignment; each fold holds at least one positive.
pub fn stratified_folds(labels: &[bool], folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {folds}")));
    }
    let mut rng = stream_rng(seed, streams::FOLDS);
    let mut out = vec![Vec::new(); folds];
    for class in [true, false] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < folds {
            return Err(Error::invalid(format!(
                "too few {} examples ({}) to stratify {folds} folds",
                if class { "positive" } else { "negative" },
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for (j, i) in members.into_iter().enumerate() {
            out[j % folds].push(i);
        }
    }
    out.iter_mut().for_each(|f| f.sort_unstable());
    Ok(out)
}

/// Settings shared by the classification pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub n_neighbors: usize,
    pub whiten: WhitenOptions,
    /// Share of each class held out for testing.
    pub test_fraction: f64,
    /// Candidate `k` values; defaults to [`default_k_grid`] of the CV
    /// training-fold size. Values above the fitted sample size are clamped.
    pub k_grid: Option<Vec<usize>>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            n_neighbors: 5,
            whiten: WhitenOptions::default(),
            test_fraction: 0.2,
            k_grid: None,
        }
    }
}

/// Fits on `train`, then scores `test` with k-NN on the reduced coordinates.
#[allow(clippy::too_many_arguments)]
fn pipeline_scores(
    ds: &Dataset,
    labels: &[bool],
    train: &[usize],
    test: &[usize],
    method: Method,
    k: usize,
    d: usize,
    opts: &PipelineOptions,
) -> Result<Vec<f64>> {
    let train_ds = ds.select_rows(train);
    let k = k.min(train_ds.n());
    let f = fit(&train_ds, method, Some(k), d, &opts.whiten)?;
    let train_proj = f.project(train_ds.x());
    let test_proj = f.project(ds.select_rows(test).x());
    let train_labels: Vec<bool> = train.iter().map(|&i| labels[i]).collect();
    knn_scores(train_proj.view(), &train_labels, test_proj.view(), opts.n_neighbors)
}

/// Outcome of cross-validating `k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvResult {
    pub k: usize,
    pub auc: f64,
    /// Mean held-out AUC for every grid value, ascending in `k`.
    pub per_k: Vec<(usize, f64)>,
}

/// Picks the `k` maximizing the mean held-out AUC over stratified folds.
/// Ties go to the smallest `k`.
#[allow(clippy::too_many_arguments)]
pub fn cross_validate_k(
    ds: &Dataset,
    method: Method,
    d: usize,
    k_grid: &[usize],
    folds: usize,
    quantile_level: f64,
    seed: u64,
    opts: &PipelineOptions,
) -> Result<CvResult> {
    let (_, labels) = exceedance_labels(ds.y(), quantile_level)?;
    cross_validate_labeled(ds, &labels, method, d, k_grid, folds, seed, opts)
}

#[allow(clippy::too_many_arguments)]
fn cross_validate_labeled(
    ds: &Dataset,
    labels: &[bool],
    method: Method,
    d: usize,
    k_grid: &[usize],
    folds: usize,
    seed: u64,
    opts: &PipelineOptions,
) -> Result<CvResult> {
    let mut grid = k_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    if grid.is_empty() || grid[0] == 0 {
        return Err(Error::invalid("k grid must be non-empty and positive"));
    }
    let fold_sets = stratified_folds(labels, folds, seed)?;
    let splits: Vec<(Vec<usize>, &Vec<usize>)> = (0..folds)
        .map(|f| {
            let train = fold_sets
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, s)| s.iter().copied())
                .collect::<Vec<_>>();
            let mut train = train;
            train.sort_unstable();
            (train, &fold_sets[f])
        })
        .collect();

    let evaluate = |k: usize| -> Result<f64> {
        let mut total = 0.0;
        for (train, held) in &splits {
            let scores = pipeline_scores(ds, labels, train, held, method, k, d, opts)?;
            let truth: Vec<bool> = held.iter().map(|&i| labels[i]).collect();
            total += auc(&scores, &truth)?;
        }
        Ok(total / folds as f64)
    };

    let per_k: Vec<(usize, f64)> = if method.uses_k() {
        grid.par_iter()
            .map(|&k| evaluate(k).map(|a| (k, a)))
            .collect::<Result<_>>()?
    } else {
        let a = evaluate(grid[0])?;
        grid.iter().map(|&k| (k, a)).collect()
    };

    let (mut best_k, mut best_auc) = per_k[0];
    for &(k, a) in &per_k[1..] {
        if a > best_auc {
            best_k = k;
            best_auc = a;
        }
    }
    Ok(CvResult {
        k: best_k,
        auc: best_auc,
        per_k,
    })
}

/// Held-out performance of one method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodScore {
    pub method: Method,
    pub am_risk: f64,
    pub auc: f64,
    /// `k` used for the final fit (`None` for the PCA variants).
    pub chosen_k: Option<usize>,
    /// Cross-validated AUC at `chosen_k`, for methods that tune `k`.
    pub cv_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub quantile_level: f64,
    pub threshold: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub positives_train: usize,
    pub positives_test: usize,
    pub n_neighbors: usize,
    pub folds: usize,
    /// AM risk of the constant-negative classifier on the test set.
    pub constant_zero_am_risk: f64,
    pub rows: Vec<MethodScore>,
}

impl ClassificationReport {
    pub fn row(&self, method: Method) -> Option<&MethodScore> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// One row per method: `method,am_risk,auc,chosen_k`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["method", "am_risk", "auc", "chosen_k"])?;
        for r in &self.rows {
            w.write_record([
                r.method.as_str().to_string(),
                format_f64(r.am_risk),
                format_f64(r.auc),
                r.chosen_k.map(|k| k.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Exceedance classification: label `Y` above its `quantile_level`
/// quantile, split train/test, tune `k` by CV on the training part, fit,
/// reduce to `d` dimensions and score the test part with k-NN.
pub fn classify_experiment(
    ds: &Dataset,
    methods: &[Method],
    d: usize,
    quantile_level: f64,
    folds: usize,
    seed: u64,
    opts: &PipelineOptions,
) -> Result<ClassificationReport> {
    if methods.is_empty() {
        return Err(Error::invalid("no methods to compare"));
    }
    let (threshold, labels) = exceedance_labels(ds.y(), quantile_level)?;
    let (train, test) = stratified_split(&labels, opts.test_fraction, seed)?;
    let train_ds = ds.select_rows(&train);
    let train_labels: Vec<bool> = train.iter().map(|&i| labels[i]).collect();
    let test_labels: Vec<bool> = test.iter().map(|&i| labels[i]).collect();
    let fold_train_size = train.len() - train.len() / folds.max(1);
    let grid = opts
        .k_grid
        .clone()
        .unwrap_or_else(|| default_k_grid(fold_train_size));

    let mut rows = Vec::with_capacity(methods.len());
    for &method in methods {
        let (k, cv_auc) = if method.uses_k() {
            let cv = cross_validate_labeled(&train_ds, &train_labels, method, d, &grid, folds, seed, opts)?;
            (cv.k.min(train.len()), Some(cv.auc))
        } else {
            (train.len(), None)
        };
        let scores = pipeline_scores(ds, &labels, &train, &test, method, k, d, opts)?;
        rows.push(MethodScore {
            method,
            am_risk: am_risk(&knn_predict(&scores), &test_labels)?,
            auc: auc(&scores, &test_labels)?,
            chosen_k: matches!(method, Method::Pca | Method::SvdPca).then_some(()).map_or(Some(k), |_| None),
            cv_auc,
        });
    }
    Ok(ClassificationReport {
        quantile_level,
        threshold,
        n_train: train.len(),
        n_test: test.len(),
        positives_train: train_labels.iter().filter(|&&t| t).count(),
        positives_test: test_labels.iter().filter(|&&t| t).count(),
        n_neighbors: opts.n_neighbors,
        folds,
        constant_zero_am_risk: am_risk(&vec![false; test.len()], &test_labels)?,
        rows,
    })
}
