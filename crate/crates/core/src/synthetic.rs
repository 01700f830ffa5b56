//! Seeded generators for the two-component mixture models with a known
//! extreme subspace, and analytic tail-conditional-independence ratios.
//!
//! A row is drawn as `Y = B·Y₁ + (1 − B)·Y₂` with `B ~ Bernoulli(θ)` and
//!
//! ```text
//! Y₁ = Σ_i M¹_i V_i ε_i   (light, exponential noise ε with rate α₁)
//! Y₂ = Σ_j M²_j W_j ζ_j   (heavy, Pareto noise ζ with index α₂)
//! ```
//!
//! where `M¹`, `M²` are one-hot multinomial selectors. The covariates are
//! `X = (V, W)`; large values of `Y` are driven by `W` alone, so the extreme
//! subspace is spanned by the last `d` canonical vectors.

use ndarray::{Array1, Array2};
use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Exp, Pareto, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Projector;
use crate::quadrature::integrate;
use crate::rng::{stream_rng, streams};

const WEIGHT_TOL: f64 = 1e-12;
const QUAD_REL_TOL: f64 = 1e-10;

/// Marginal law shared by every covariate `V_i`, `W_j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum CovariateLaw {
    Uniform { a: f64, b: f64 },
    Bernoulli { tau: f64 },
}

impl CovariateLaw {
    /// Targets above this value are in the range where the closed-form
    /// conditional survival functions hold.
    pub fn validity_threshold(&self) -> f64 {
        match *self {
            CovariateLaw::Uniform { b, .. } => b,
            CovariateLaw::Bernoulli { .. } => 1.0,
        }
    }
}

/// Parameters of the multiplicative mixture model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub p: usize,
    /// Dimension of the heavy-tailed block `W`.
    pub d: usize,
    /// Probability of drawing from the light component.
    pub theta: f64,
    /// Exponential rate of the light noise.
    pub alpha1: f64,
    /// Pareto index of the heavy noise.
    pub alpha2: f64,
    pub pi1: Vec<f64>,
    pub pi2: Vec<f64>,
    pub covariate_law: CovariateLaw,
}

impl MixtureSpec {
    /// Spec with uniform multinomial weights `1/(p−d)` and `1/d`.
    pub fn with_uniform_weights(
        p: usize,
        d: usize,
        theta: f64,
        alpha1: f64,
        alpha2: f64,
        covariate_law: CovariateLaw,
    ) -> Result<Self> {
        if d == 0 || d >= p {
            return Err(Error::invalid(format!("need 1 <= d < p, got p={p}, d={d}")));
        }
        let spec = MixtureSpec {
            p,
            d,
            theta,
            alpha1,
            alpha2,
            pi1: vec![1.0 / (p - d) as f64; p - d],
            pi2: vec![1.0 / d as f64; d],
            covariate_law,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(msg));
        if self.d == 0 || self.d >= self.p {
            return bad(format!("need 1 <= d < p, got p={}, d={}", self.p, self.d));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return bad(format!("theta must lie in [0, 1], got {}", self.theta));
        }
        if !(self.alpha1 > 0.0 && self.alpha1.is_finite()) || !(self.alpha2 > 0.0 && self.alpha2.is_finite()) {
            return bad(format!(
                "noise parameters must be positive, got alpha1={}, alpha2={}",
                self.alpha1, self.alpha2
            ));
        }
        for (name, w, len) in [("pi1", &self.pi1, self.p - self.d), ("pi2", &self.pi2, self.d)] {
            if w.len() != len {
                return bad(format!("{name} must have {len} weights, got {}", w.len()));
            }
            if w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return bad(format!("{name} has a negative or non-finite weight"));
            }
            if (w.iter().sum::<f64>() - 1.0).abs() > WEIGHT_TOL {
                return bad(format!("{name} weights must sum to 1"));
            }
        }
        match self.covariate_law {
            CovariateLaw::Uniform { a, b } => {
                if !(a >= 0.0 && a < b && b.is_finite()) {
                    return bad(format!("uniform law needs 0 <= a < b, got a={a}, b={b}"));
                }
            }
            CovariateLaw::Bernoulli { tau } => {
                if !(tau > 0.0 && tau <= 1.0) {
                    return bad(format!("bernoulli law needs 0 < tau <= 1, got {tau}"));
                }
            }
        }
        Ok(())
    }

    fn light_dim(&self) -> usize {
        self.p - self.d
    }
}

/// The three benchmark models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelPreset {
    A,
    B,
    C,
}

impl ModelPreset {
    pub fn spec(self) -> MixtureSpec {
        let uniform = CovariateLaw::Uniform { a: 1.0, b: 10.0 };
        let (p, d, law) = match self {
            ModelPreset::A => (2, 1, uniform),
            ModelPreset::B => (30, 5, uniform),
            ModelPreset::C => (2, 1, CovariateLaw::Bernoulli { tau: 0.5 }),
        };
        MixtureSpec::with_uniform_weights(p, d, 0.5, 10.0, 10.0, law).expect("preset is valid")
    }

    /// Reference sample size.
    pub fn n(self) -> usize {
        match self {
            ModelPreset::A | ModelPreset::C => 10_000,
            ModelPreset::B => 100_000,
        }
    }

    pub fn true_d(self) -> usize {
        self.spec().d
    }
}

impl std::str::FromStr for ModelPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(ModelPreset::A),
            "B" | "b" => Ok(ModelPreset::B),
            "C" | "c" => Ok(ModelPreset::C),
            other => Err(Error::invalid(format!("unknown model `{other}` (expected A, B or C)"))),
        }
    }
}

enum CovariateSampler {
    Uniform(Uniform<f64>),
    Bernoulli(Bernoulli),
}

impl CovariateSampler {
    fn new(law: CovariateLaw) -> Result<Self> {
        Ok(match law {
            CovariateLaw::Uniform { a, b } => CovariateSampler::Uniform(
                Uniform::new(a, b).map_err(|e| Error::invalid(format!("uniform law: {e}")))?,
            ),
            CovariateLaw::Bernoulli { tau } => CovariateSampler::Bernoulli(
                Bernoulli::new(tau).map_err(|e| Error::invalid(format!("bernoulli law: {e}")))?,
            ),
        })
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            CovariateSampler::Uniform(u) => u.sample(rng),
            CovariateSampler::Bernoulli(b) => {
                if b.sample(rng) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// `n` rows from `spec`, drawn from stream `(seed, 0)`.
pub fn sample(spec: &MixtureSpec, n: usize, seed: u64) -> Result<Dataset> {
    sample_stream(spec, n, seed, streams::SAMPLE)
}

/// `n` rows from `spec`, drawn from the stream `(seed, stream)`.
pub fn sample_stream(spec: &MixtureSpec, n: usize, seed: u64, stream: u64) -> Result<Dataset> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::invalid("sample size must be positive"));
    }
    let mut rng = stream_rng(seed, stream);
    let (p, d, q) = (spec.p, spec.d, spec.light_dim());
    let mixing = Bernoulli::new(spec.theta).map_err(|e| Error::invalid(e.to_string()))?;
    let pick1 = WeightedIndex::new(&spec.pi1).map_err(|e| Error::invalid(format!("pi1: {e}")))?;
    let pick2 = WeightedIndex::new(&spec.pi2).map_err(|e| Error::invalid(format!("pi2: {e}")))?;
    let light = Exp::new(spec.alpha1).map_err(|e| Error::invalid(e.to_string()))?;
    let heavy = Pareto::new(1.0, spec.alpha2).map_err(|e| Error::invalid(e.to_string()))?;
    let covariate = CovariateSampler::new(spec.covariate_law)?;

    let mut x = Array2::zeros((n, p));
    let mut y = Array1::zeros(n);
    let mut eps = vec![0.0; q];
    let mut zeta = vec![0.0; d];
    for i in 0..n {
        let b = mixing.sample(&mut rng);
        let m1 = pick1.sample(&mut rng);
        let m2 = pick2.sample(&mut rng);
        eps.iter_mut().for_each(|e| *e = light.sample(&mut rng));
        zeta.iter_mut().for_each(|z| *z = heavy.sample(&mut rng));
        for j in 0..p {
            x[[i, j]] = covariate.draw(&mut rng);
        }
        y[i] = if b {
            x[[i, m1]] * eps[m1]
        } else {
            x[[i, q + m2]] * zeta[m2]
        };
    }
    let names = (1..=q)
        .map(|i| format!("v{i}"))
        .chain((1..=d).map(|j| format!("w{j}")))
        .collect();
    Dataset::new(x, y, Some(names))
}

/// Projector onto `span(e_{p−d+1}, …, e_p)`.
pub fn true_projector(spec: &MixtureSpec) -> Projector {
    Projector::coordinate(spec.p, spec.p - spec.d..spec.p)
}

/// Survival function of the light noise, `e^{−α₁t}`.
fn light_survival(alpha1: f64, t: f64) -> f64 {
    (-alpha1 * t).exp()
}

/// Survival function of the unit Pareto noise, `t^{−α₂}` for `t ≥ 1`.
fn heavy_survival(alpha2: f64, t: f64) -> f64 {
    if t <= 1.0 {
        1.0
    } else {
        t.powf(-alpha2)
    }
}

/// Conditional and marginal survival functions of the two components at `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurvivalComponents {
    /// `S₁(y, v) = P(Y₁ > y | V = v)`.
    pub s1_given_v: f64,
    /// `S₂(y, w) = P(Y₂ > y | W = w)`.
    pub s2_given_w: f64,
    /// `S₁(y) = P(Y₁ > y)`.
    pub s1: f64,
    /// `S₂(y) = P(Y₂ > y)`.
    pub s2: f64,
}

fn conditional_s1(spec: &MixtureSpec, y: f64, v: &[f64]) -> f64 {
    spec.pi1
        .iter()
        .zip(v)
        .filter(|(_, vi)| **vi > 0.0)
        .map(|(pi, vi)| pi * light_survival(spec.alpha1, y / vi))
        .sum()
}

fn conditional_s2(spec: &MixtureSpec, y: f64, w: &[f64]) -> f64 {
    spec.pi2
        .iter()
        .zip(w)
        .filter(|(_, wj)| **wj > 0.0)
        .map(|(pi, wj)| pi * heavy_survival(spec.alpha2, y / wj))
        .sum()
}

/// `(S₁(y), S₂(y))` integrated over the covariate law.
fn marginals(spec: &MixtureSpec, y: f64) -> (f64, f64) {
    match spec.covariate_law {
        CovariateLaw::Bernoulli { tau } => (
            tau * light_survival(spec.alpha1, y),
            tau * heavy_survival(spec.alpha2, y),
        ),
        CovariateLaw::Uniform { a, b } => {
            // Every component shares the law, and the weights sum to one.
            let alpha1 = spec.alpha1;
            let s1 = integrate(|v| light_survival(alpha1, y / v), a, b, QUAD_REL_TOL) / (b - a);
            let e = spec.alpha2 + 1.0;
            let s2 = y.powf(-spec.alpha2) * (b.powf(e) - a.powf(e)) / (e * (b - a));
            (s1, s2)
        }
    }
}

fn check_point(spec: &MixtureSpec, y: f64, v: &[f64], w: &[f64]) -> Result<()> {
    spec.validate()?;
    let threshold = spec.covariate_law.validity_threshold();
    if !(y > threshold && y.is_finite()) {
        return Err(Error::invalid(format!(
            "closed-form survival functions need y > {threshold}, got {y}"
        )));
    }
    if v.len() != spec.light_dim() || w.len() != spec.d {
        return Err(Error::DimensionMismatch {
            expected: format!("v of length {} and w of length {}", spec.light_dim(), spec.d),
            got: format!("{} and {}", v.len(), w.len()),
        });
    }
    Ok(())
}

pub fn survival_components(spec: &MixtureSpec, y: f64, v: &[f64], w: &[f64]) -> Result<SurvivalComponents> {
    check_point(spec, y, v, w)?;
    let (s1, s2) = marginals(spec, y);
    Ok(SurvivalComponents {
        s1_given_v: conditional_s1(spec, y, v),
        s2_given_w: conditional_s2(spec, y, w),
        s1,
        s2,
    })
}

/// Deviation ratios of `P(Y > y | V, W)` from `P(Y > y | W)`: `r` is scaled
/// by `P(Y > y)`, `r_tilde` by `P(Y > y | W)`.
///
/// A zero denominator yields `±∞` when the numerator is non-zero and `NaN`
/// when both vanish.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TciRatios {
    pub r: f64,
    pub r_tilde: f64,
}

impl TciRatios {
    pub fn r_tilde_diverges(&self) -> bool {
        self.r_tilde.is_infinite()
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        if num == 0.0 {
            f64::NAN
        } else {
            f64::INFINITY.copysign(num)
        }
    } else {
        num / den
    }
}

fn ratios_from(spec: &MixtureSpec, s: &SurvivalComponents) -> TciRatios {
    let theta = spec.theta;
    let num = theta * (s.s1_given_v - s.s1);
    TciRatios {
        r: ratio(num, theta * s.s1 + (1.0 - theta) * s.s2),
        r_tilde: ratio(num, theta * s.s1 + (1.0 - theta) * s.s2_given_w),
    }
}

pub fn tci_ratios(spec: &MixtureSpec, y: f64, v: &[f64], w: &[f64]) -> Result<TciRatios> {
    Ok(ratios_from(spec, &survival_components(spec, y, v, w)?))
}

/// Monte-Carlo moments of `R(y, V, W)` over the covariate law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioMoments {
    pub y: f64,
    pub n_mc: usize,
    /// Estimate of `E|R|`.
    pub mean_abs: f64,
    pub se_abs: f64,
    /// Estimate of `E[R]`, zero in expectation.
    pub mean: f64,
    pub se: f64,
}

/// Estimates `E|R(y, V, W)|`, the quantity whose vanishing as `y` grows
/// defines tail conditional independence of `Y` and `V` given `W`.
pub fn expected_abs_r(spec: &MixtureSpec, y: f64, n_mc: usize, seed: u64) -> Result<RatioMoments> {
    let q = spec.light_dim();
    check_point(spec, y, &vec![0.0; q], &vec![0.0; spec.d])?;
    if n_mc == 0 {
        return Err(Error::invalid("n_mc must be positive"));
    }
    let (s1, s2) = marginals(spec, y);
    let covariate = CovariateSampler::new(spec.covariate_law)?;
    let mut rng = stream_rng(seed, streams::TCI_MC);
    let mut v = vec![0.0; q];
    let (mut sum, mut sum_sq, mut sum_abs, mut sum_abs_sq) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..n_mc {
        v.iter_mut().for_each(|vi| *vi = covariate.draw(&mut rng));
        // R does not depend on w, only its denominator's S₂(y) marginal.
        let comps = SurvivalComponents {
            s1_given_v: conditional_s1(spec, y, &v),
            s2_given_w: s2,
            s1,
            s2,
        };
        let r = ratios_from(spec, &comps).r;
        let r = if r.is_nan() { 0.0 } else { r };
        sum += r;
        sum_sq += r * r;
        sum_abs += r.abs();
        sum_abs_sq += r * r;
    }
    let nf = n_mc as f64;
    let se = |s: f64, s2: f64| {
        if n_mc < 2 {
            return f64::NAN;
        }
        let mean = s / nf;
        let var = ((s2 - nf * mean * mean) / (nf - 1.0)).max(0.0);
        (var / nf).sqrt()
    };
    Ok(RatioMoments {
        y,
        n_mc,
        mean_abs: sum_abs / nf,
        se_abs: se(sum_abs, sum_abs_sq),
        mean: sum / nf,
        se: se(sum, sum_sq),
    })
}
