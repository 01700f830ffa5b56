use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::Serialize;

use tirex_core::data::{format_f64, load_csv, write_csv, Dataset};
use tirex_core::evaluation::{self, geometric_k_grid, PipelineOptions};
use tirex_core::linalg::EigFloor;
use tirex_core::process_verify::{self, IndependentGaussian, ProcessCheckConfig, ProcessStatistic};
use tirex_core::synthetic::{self, MixtureSpec, ModelPreset};
use tirex_core::{Method, WhitenOptions};

use crate::config::RunConfig;
use crate::{ClassifyArgs, FitArgs, Failure, ModelArgs, SimulateArgs, SweepArgs, TciArgs, VerifyArgs, WhitenArgs};

const VERSION: &str = env!("CARGO_PKG_VERSION");

fn user(msg: impl Into<String>) -> Failure {
    Failure::User(msg.into())
}

fn require<T>(value: Option<T>, flag: &str, command: &str) -> Result<T, Failure> {
    value.ok_or_else(|| user(format!("`{command}` needs --{flag}")))
}

fn parse_method(s: &str) -> Result<Method, Failure> {
    s.parse::<Method>().map_err(Failure::from)
}

/// `1e-10` is relative to the largest eigenvalue; `abs:1e-8` is absolute.
fn parse_eig_floor(s: &str) -> Result<EigFloor, Failure> {
    let (abs, num) = match s.strip_prefix("abs:") {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix("rel:").unwrap_or(s)),
    };
    let v: f64 = num.parse().map_err(|_| user(format!("invalid eigenvalue floor `{s}`")))?;
    Ok(if abs { EigFloor::Absolute(v) } else { EigFloor::Relative(v) })
}

fn whiten_options(a: &WhitenArgs, cfg: &RunConfig) -> Result<WhitenOptions, Failure> {
    let mut opts = WhitenOptions::default();
    if let Some(s) = a.eig_floor.as_ref().or(cfg.eig_floor.as_ref()) {
        opts.eig_floor = parse_eig_floor(s)?;
    }
    if let Some(r) = a.ridge.or(cfg.ridge) {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(user(format!("ridge must be non-negative, got {r}")));
        }
        opts.ridge = r;
    }
    Ok(opts)
}

fn eig_floor_label(f: EigFloor) -> String {
    match f {
        EigFloor::Relative(v) => format!("rel:{v:e}"),
        EigFloor::Absolute(v) => format!("abs:{v:e}"),
    }
}

/// `lo:hi:count` for a geometric grid, else a comma-separated list.
fn parse_k_grid(s: &str) -> Result<Vec<usize>, Failure> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|_| user(format!("invalid k grid `{s}`")))
    };
    if parts.len() == 3 {
        return Ok(geometric_k_grid(num(parts[0])?, num(parts[1])?, num(parts[2])?)?);
    }
    if parts.len() != 1 {
        return Err(user(format!("invalid k grid `{s}`; use lo:hi:count or a comma list")));
    }
    let mut grid = s.split(',').map(num).collect::<Result<Vec<_>, _>>()?;
    grid.sort_unstable();
    grid.dedup();
    Ok(grid)
}

fn load_dataset(path: &Path, target: &str) -> Result<Dataset, Failure> {
    load_csv(path, Some(target)).map_err(|e| match Failure::from(e) {
        Failure::User(m) => Failure::User(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn read_spec(path: &Path) -> Result<MixtureSpec, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| user(format!("cannot read spec {}: {e}", path.display())))?;
    let spec: MixtureSpec = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text)?
    } else {
        toml::from_str(&text).map_err(|e| user(format!("spec {}: {}", path.display(), e.message())))?
    };
    spec.validate()?;
    Ok(spec)
}

struct ModelChoice {
    preset: Option<ModelPreset>,
    spec: MixtureSpec,
}

impl ModelChoice {
    fn default_n(&self, n: Option<usize>, command: &str) -> Result<usize, Failure> {
        match (n, self.preset) {
            (Some(n), _) => Ok(n),
            (None, Some(p)) => Ok(p.n()),
            (None, None) => Err(user(format!("`{command}` with --spec needs --n"))),
        }
    }

    fn label(&self) -> Option<String> {
        self.preset.map(|p| format!("{p:?}"))
    }
}

fn model_choice(a: &ModelArgs, cfg: &RunConfig, command: &str) -> Result<ModelChoice, Failure> {
    // flags beat the config, and a flag of either kind shadows both keys
    let (model, spec) = if a.model.is_some() || a.spec.is_some() {
        (a.model.clone(), a.spec.clone())
    } else {
        (cfg.model.clone(), cfg.spec.clone())
    };
    match (model, spec) {
        (Some(_), Some(_)) => Err(user("give either --model or --spec, not both")),
        (Some(m), None) => {
            let preset: ModelPreset = m.parse()?;
            Ok(ModelChoice {
                preset: Some(preset),
                spec: preset.spec(),
            })
        }
        (None, Some(path)) => Ok(ModelChoice {
            preset: None,
            spec: read_spec(&path)?,
        }),
        (None, None) => Err(user(format!("`{command}` needs --model or --spec"))),
    }
}

fn emit_json(path: Option<&Path>, value: &impl Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| user(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_matrix_csv(path: &Path, header: &[String], m: &Array2<f64>) -> Result<(), Failure> {
    let mut text = header.join(",");
    text.push('\n');
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(|&v| format_f64(v)).collect();
        let _ = writeln!(text, "{}", cells.join(","));
    }
    std::fs::write(path, text).map_err(|e| user(format!("cannot write {}: {e}", path.display())))
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn sidecar_path(out: &Path) -> PathBuf {
    if out.extension().is_some_and(|e| e == "json") {
        let mut s = out.as_os_str().to_owned();
        s.push(".meta.json");
        PathBuf::from(s)
    } else {
        out.with_extension("json")
    }
}

#[derive(Serialize)]
struct SimulateMeta<'a> {
    version: &'a str,
    command: &'a str,
    model: Option<String>,
    spec: &'a MixtureSpec,
    n: usize,
    seed: u64,
    columns: Vec<String>,
}

pub fn simulate(a: SimulateArgs, cfg: &RunConfig) -> Result<(), Failure> {
    let choice = model_choice(&a.model, cfg, "simulate")?;
    let n = choice.default_n(a.n.or(cfg.n), "simulate")?;
    let seed = require(a.seed.or(cfg.seed), "seed", "simulate")?;
    let out = require(a.out.or_else(|| cfg.out.clone()), "out", "simulate")?;
    let ds = synthetic::sample(&choice.spec, n, seed)?;
    write_csv(&ds, &out)?;
    let mut columns = ds.column_names();
    columns.push("y".into());
    emit_json(
        Some(&sidecar_path(&out)),
        &SimulateMeta {
            version: VERSION,
            command: "simulate",
            model: choice.label(),
            spec: &choice.spec,
            n,
            seed,
            columns,
        },
    )
}

#[derive(Serialize)]
struct FitOutput<'a> {
    version: &'a str,
    command: &'a str,
    input: String,
    target: &'a str,
    method: Method,
    k: Option<usize>,
    d: usize,
    n: usize,
    p: usize,
    columns: Vec<String>,
    eig_floor: String,
    ridge: f64,
    /// `whitened` for inverse-regression methods, `raw` for PCA.
    frame: &'a str,
    eigenvalues: Vec<f64>,
    /// p × d, orthonormal columns, in the coordinates of the input CSV.
    basis_raw: Vec<Vec<f64>>,
    basis_whitened: Vec<Vec<f64>>,
    projector_raw: Vec<Vec<f64>>,
}

pub fn fit(a: FitArgs, cfg: &RunConfig) -> Result<(), Failure> {
    let input = require(a.input.or_else(|| cfg.input.clone()), "in", "fit")?;
    let target = a.target.or_else(|| cfg.target.clone()).unwrap_or_else(|| "y".into());
    let method = parse_method(&require(a.method.or_else(|| cfg.method.clone()), "method", "fit")?)?;
    let d = match a.d.or(cfg.d).or(method.default_d()) {
        Some(d) => d,
        None => return Err(user(format!("`fit` with {method} needs --d"))),
    };
    let k = a.k.or(cfg.k);
    let whiten = whiten_options(&a.whiten, cfg)?;
    let ds = load_dataset(&input, &target)?;
    let f = tirex_core::fit(&ds, method, k, d, &whiten)?;
    let projector = f.projector_raw()?;
    let columns = ds.column_names();

    if let Some(path) = a.basis_csv.or_else(|| cfg.basis_csv.clone()) {
        let header: Vec<String> = (1..=d).map(|j| format!("b{j}")).collect();
        write_matrix_csv(&path, &header, &f.basis_raw)?;
    }
    if let Some(path) = a.projector_csv.or_else(|| cfg.projector_csv.clone()) {
        write_matrix_csv(&path, &columns, projector.matrix())?;
    }
    let frame = match f.frame {
        tirex_core::estimators::Frame::Whitened { .. } => "whitened",
        tirex_core::estimators::Frame::Raw { .. } => "raw",
    };
    emit_json(
        a.out.or_else(|| cfg.out.clone()).as_deref(),
        &FitOutput {
            version: VERSION,
            command: "fit",
            input: input.display().to_string(),
            target: &target,
            method,
            k: method.uses_k().then_some(f.k),
            d,
            n: ds.n(),
            p: ds.p(),
            columns,
            eig_floor: eig_floor_label(whiten.eig_floor),
            ridge: whiten.ridge,
            frame,
            eigenvalues: f.eigen.eigenvalues.to_vec(),
            basis_raw: rows(&f.basis_raw),
            basis_whitened: rows(&f.basis_whitened),
            projector_raw: rows(projector.matrix()),
        },
    )
}

#[derive(Serialize)]
struct SweepOutput<'a> {
    version: &'a str,
    command: &'a str,
    model: Option<String>,
    spec: &'a MixtureSpec,
    method: Method,
    eig_floor: String,
    ridge: f64,
    report: &'a evaluation::SweepReport,
}

pub fn sweep(a: SweepArgs, cfg: &RunConfig) -> Result<(), Failure> {
    let choice = model_choice(&a.model, cfg, "sweep")?;
    let n = choice.default_n(a.n.or(cfg.n), "sweep")?;
    let method = parse_method(&require(a.method.or_else(|| cfg.method.clone()), "method", "sweep")?)?;
    let d = a.d.or(cfg.d).unwrap_or(choice.spec.d);
    let k_grid = match a.k_grid.or_else(|| cfg.k_grid.clone()) {
        Some(s) => parse_k_grid(&s)?,
        None => evaluation::default_k_grid(n),
    };
    let reps = a.reps.or(cfg.reps).unwrap_or(100);
    let seed = require(a.seed.or(cfg.seed), "seed", "sweep")?;
    let out = require(a.out.or_else(|| cfg.out.clone()), "out", "sweep")?;
    let whiten = whiten_options(&a.whiten, cfg)?;

    let report = evaluation::sweep(&choice.spec, n, method, d, &k_grid, reps, seed, &whiten)?;
    report.write_csv(&out)?;
    let failed: usize = report.cells.iter().map(|c| c.failures).sum();
    if failed > 0 {
        eprintln!("warning: {failed} (k, replication) fits failed and were left out");
    }
    if let Some(path) = a.json.or_else(|| cfg.json.clone()) {
        emit_json(
            Some(&path),
            &SweepOutput {
                version: VERSION,
                command: "sweep",
                model: choice.label(),
                spec: &choice.spec,
                method,
                eig_floor: eig_floor_label(whiten.eig_floor),
                ridge: whiten.ridge,
                report: &report,
            },
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ClassifyOutput<'a> {
    version: &'a str,
    command: &'a str,
    input: Option<String>,
    model: Option<String>,
    spec: Option<&'a MixtureSpec>,
    n: usize,
    d: usize,
    seed: u64,
    test_fraction: f64,
    report: &'a evaluation::ClassificationReport,
}

pub fn classify(a: ClassifyArgs, cfg: &RunConfig) -> Result<(), Failure> {
    let seed = require(a.seed.or(cfg.seed), "seed", "classify")?;
    let flag_model = a.model.model.is_some() || a.model.spec.is_some();
    let input = if flag_model { None } else { a.input.or_else(|| cfg.input.clone()) };
    let (ds, choice): (Dataset, Option<ModelChoice>) = match &input {
        Some(path) => {
            let target = a.target.or_else(|| cfg.target.clone()).unwrap_or_else(|| "y".into());
            (load_dataset(path, &target)?, None)
        }
        None => {
            let choice = model_choice(&a.model, cfg, "classify")?;
            let n = choice.default_n(a.n.or(cfg.n), "classify")?;
            (synthetic::sample(&choice.spec, n, seed)?, Some(choice))
        }
    };
    let methods: Vec<Method> = match a.methods.or_else(|| cfg.methods.clone()) {
        Some(list) => list.iter().map(|s| parse_method(s.trim())).collect::<Result<_, _>>()?,
        None => Method::ALL.to_vec(),
    };
    let d = match (a.d.or(cfg.d), &choice) {
        (Some(d), _) => d,
        (None, Some(c)) => c.spec.d,
        (None, None) => return Err(user("`classify` on a CSV input needs --d")),
    };
    let mut opts = PipelineOptions {
        whiten: whiten_options(&a.whiten, cfg)?,
        ..PipelineOptions::default()
    };
    if let Some(v) = a.n_neighbors.or(cfg.n_neighbors) {
        opts.n_neighbors = v;
    }
    if let Some(v) = a.test_fraction.or(cfg.test_fraction) {
        opts.test_fraction = v;
    }
    if let Some(s) = a.k_grid.or_else(|| cfg.k_grid.clone()) {
        opts.k_grid = Some(parse_k_grid(&s)?);
    }
    let level = a.quantile_level.or(cfg.quantile_level).unwrap_or(0.98);
    let folds = a.folds.or(cfg.folds).unwrap_or(5);

    let report = evaluation::classify_experiment(&ds, &methods, d, level, folds, seed, &opts)?;
    let out = a.out.or_else(|| cfg.out.clone());
    if let Some(path) = &out {
        report.write_csv(path)?;
    }
    let json = a.json.or_else(|| cfg.json.clone());
    if json.is_some() || out.is_none() {
        emit_json(
            json.as_deref(),
            &ClassifyOutput {
                version: VERSION,
                command: "classify",
                input: input.map(|p| p.display().to_string()),
                model: choice.as_ref().and_then(ModelChoice::label),
                spec: choice.as_ref().map(|c| &c.spec),
                n: ds.n(),
                d,
                seed,
                test_fraction: opts.test_fraction,
                report: &report,
            },
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct VerifyOutput<'a> {
    version: &'a str,
    command: &'a str,
    model: String,
    report: &'a process_verify::ProcessCheckReport,
}

pub fn verify_process(a: VerifyArgs, cfg: &RunConfig) -> Result<(), Failure> {
    let seed = require(a.seed.or(cfg.seed), "seed", "verify-process")?;
    let mut pc = ProcessCheckConfig::new(
        a.n.or(cfg.n).unwrap_or(5000),
        a.k.or(cfg.k).unwrap_or(500),
        a.reps.or(cfg.reps).unwrap_or(2000),
        seed,
    );
    if let Some(g) = a.u_grid.or_else(|| cfg.u_grid.clone()) {
        pc.u_grid = g;
    }
    pc.statistic = match a.statistic.or_else(|| cfg.statistic.clone()).as_deref() {
        None | Some("c") | Some("C") => ProcessStatistic::C,
        Some("b") | Some("B") => ProcessStatistic::B,
        Some(other) => return Err(user(format!("unknown statistic `{other}` (expected c or b)"))),
    };
    let p = a.p.or(cfg.p).unwrap_or(3);
    if p == 0 {
        return Err(user("--p must be at least 1"));
    }
    let model = IndependentGaussian { p };
    let report = process_verify::covariance_check(&model, &pc)?;
    if let Some(path) = a.csv.or_else(|| cfg.csv.clone()) {
        report.write_csv(path)?;
    }
    eprintln!(
        "{}: {} of {} checks outside {} SE (about {:.2} expected by chance)",
        if report.passed { "pass" } else { "FAIL" },
        report.failed,
        report.covariance.len() + report.means.len(),
        report.tolerance_se,
        report.expected_false_alarms
    );
    emit_json(
        a.out.or_else(|| cfg.out.clone()).as_deref(),
        &VerifyOutput {
            version: VERSION,
            command: "verify-process",
            model: format!("independent gaussian, p = {p}"),
            report: &report,
        },
    )
}

#[derive(Serialize)]
struct TciRow {
    y: f64,
    mean_abs_r: f64,
    se_abs_r: f64,
    mean_r: f64,
    se_r: f64,
    /// Pointwise ratios at (--v, --w), when given; non-finite values are null.
    r: Option<f64>,
    r_tilde: Option<f64>,
}

#[derive(Serialize)]
struct TciOutput<'a> {
    version: &'a str,
    command: &'a str,
    model: Option<String>,
    spec: &'a MixtureSpec,
    seed: u64,
    n_mc: usize,
    v: Option<Vec<f64>>,
    w: Option<Vec<f64>>,
    rows: Vec<TciRow>,
}

pub fn tci_ratio(a: TciArgs, cfg: &RunConfig) -> Result<(), Failure> {
    let choice = model_choice(&a.model, cfg, "tci-ratio")?;
    let seed = require(a.seed.or(cfg.seed), "seed", "tci-ratio")?;
    let n_mc = a.n_mc.or(cfg.n_mc).unwrap_or(100_000);
    let y_grid = a.y_grid.or_else(|| cfg.y_grid.clone()).unwrap_or_else(|| vec![20.0, 50.0, 100.0, 200.0]);
    let v = a.v.or_else(|| cfg.v.clone());
    let w = a.w.or_else(|| cfg.w.clone());
    if v.is_some() != w.is_some() {
        return Err(user("--v and --w go together"));
    }
    let mut rows = Vec::with_capacity(y_grid.len());
    for &y in &y_grid {
        let m = synthetic::expected_abs_r(&choice.spec, y, n_mc, seed)?;
        let (r, r_tilde) = match (&v, &w) {
            (Some(v), Some(w)) => {
                let t = synthetic::tci_ratios(&choice.spec, y, v, w)?;
                (Some(t.r), Some(t.r_tilde))
            }
            _ => (None, None),
        };
        rows.push(TciRow {
            y,
            mean_abs_r: m.mean_abs,
            se_abs_r: m.se_abs,
            mean_r: m.mean,
            se_r: m.se,
            r,
            r_tilde,
        });
    }
    emit_json(
        a.out.or_else(|| cfg.out.clone()).as_deref(),
        &TciOutput {
            version: VERSION,
            command: "tci-ratio",
            model: choice.label(),
            spec: &choice.spec,
            seed,
            n_mc,
            v,
            w,
            rows,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_grid_syntax() {
        assert_eq!(parse_k_grid("100:10000:30").unwrap().len(), 30);
        assert_eq!(parse_k_grid("5,3,5,10").unwrap(), vec![3, 5, 10]);
        assert_eq!(parse_k_grid("7").unwrap(), vec![7]);
        assert!(parse_k_grid("1:2").is_err());
        assert!(parse_k_grid("a:b:c").is_err());
        assert!(parse_k_grid("10:1:3").is_err());
    }

    #[test]
    fn eig_floor_syntax() {
        assert_eq!(parse_eig_floor("1e-8").unwrap(), EigFloor::Relative(1e-8));
        assert_eq!(parse_eig_floor("rel:1e-8").unwrap(), EigFloor::Relative(1e-8));
        assert_eq!(parse_eig_floor("abs:0.5").unwrap(), EigFloor::Absolute(0.5));
        assert!(parse_eig_floor("abs:x").is_err());
        assert_eq!(eig_floor_label(EigFloor::Relative(1e-10)), "rel:1e-10");
    }

    #[test]
    fn sidecar_names() {
        assert_eq!(sidecar_path(Path::new("a.csv")), PathBuf::from("a.json"));
        assert_eq!(sidecar_path(Path::new("a")), PathBuf::from("a.json"));
        assert_eq!(sidecar_path(Path::new("a.json")), PathBuf::from("a.json.meta.json"));
    }
}
