//! Combination-forecast weights and combining forms.
//!
//! Errors are `e_j(t) = y(t) − ŷ_j(t)`. Every scheme returns a vector on the
//! probability simplex. Schemes that optimize over the simplex
//! (`lsm_exact`, `gro`) use a deterministic grid search: integer
//! compositions at step 0.01, then two local refinements at 0.001 and 1e−4.
//! Near-ties (1e−12 relative) go to the point closest to uniform weights,
//! so symmetric inputs yield symmetric weights.

use std::{fmt, str::FromStr};

use thiserror::Error;

use crate::par::{self, Execution};

#[derive(Debug, Error, PartialEq)]
pub enum CombineError {
    #[error("forecast matrix: {0}")]
    Shape(String),
    #[error("{scheme} needs at least {needed} methods, got {got}")]
    TooFewMethods { scheme: String, needed: usize, got: usize },
    #[error("zero actual value at t={t}")]
    ZeroActual { t: usize },
    #[error("nonpositive forecast {value} at t={t}, method {j}")]
    NonPositive { t: usize, j: usize, value: f64 },
    #[error("rough-set decision attribute collapses to a single class")]
    DegenerateDiscretization,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl CombineError {
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Self::Shape(_) | Self::ZeroActual { .. } | Self::NonPositive { .. } | Self::DegenerateDiscretization
        )
    }
}

type Result<T> = std::result::Result<T, CombineError>;

/// Actuals with `m` aligned competing forecasts.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastMatrix {
    actual: Vec<f64>,
    forecasts: Vec<Vec<f64>>,
    labels: Vec<String>,
}

impl ForecastMatrix {
    pub fn new(actual: Vec<f64>, forecasts: Vec<Vec<f64>>, labels: Vec<String>) -> Result<Self> {
        if forecasts.is_empty() {
            return Err(CombineError::Shape("no forecasts".into()));
        }
        if labels.len() != forecasts.len() {
            return Err(CombineError::Shape(format!(
                "{} labels for {} forecasts",
                labels.len(),
                forecasts.len()
            )));
        }
        if actual.is_empty() {
            return Err(CombineError::Shape("empty actual series".into()));
        }
        if let Some(f) = forecasts.iter().find(|f| f.len() != actual.len()) {
            return Err(CombineError::Shape(format!(
                "forecast of length {} against {} actuals",
                f.len(),
                actual.len()
            )));
        }
        if actual.iter().chain(forecasts.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(CombineError::Shape("non-finite value".into()));
        }
        Ok(Self {
            actual,
            forecasts,
            labels,
        })
    }

    /// Labels `1..=m`.
    pub fn unlabeled(actual: Vec<f64>, forecasts: Vec<Vec<f64>>) -> Result<Self> {
        let labels = (1..=forecasts.len()).map(|j| j.to_string()).collect();
        Self::new(actual, forecasts, labels)
    }

    pub fn actual(&self) -> &[f64] {
        &self.actual
    }

    pub fn forecasts(&self) -> &[Vec<f64>] {
        &self.forecasts
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn methods(&self) -> usize {
        self.forecasts.len()
    }

    pub fn len(&self) -> usize {
        self.actual.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actual.is_empty()
    }

    /// `e_j(t) = y(t) − ŷ_j(t)` per method.
    pub fn errors(&self) -> Vec<Vec<f64>> {
        self.forecasts
            .iter()
            .map(|f| self.actual.iter().zip(f).map(|(y, p)| y - p).collect())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeightScheme {
    Average,
    StdDev,
    DevCoef,
    /// Diagonal least squares: `w_j ∝ 1/Σ_t e_j(t)²`.
    Lsm,
    /// Full least squares `min WᵀHW` over the simplex.
    LsmExact,
    EffectiveDegree,
    GreyRelation,
    OptimalGrey,
    RoughSet,
}

impl WeightScheme {
    pub const ALL: [WeightScheme; 9] = [
        Self::Average,
        Self::StdDev,
        Self::DevCoef,
        Self::Lsm,
        Self::LsmExact,
        Self::EffectiveDegree,
        Self::GreyRelation,
        Self::OptimalGrey,
        Self::RoughSet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Average => "average",
            Self::StdDev => "stddev",
            Self::DevCoef => "devcoef",
            Self::Lsm => "lsm",
            Self::LsmExact => "lsm_exact",
            Self::EffectiveDegree => "ed",
            Self::GreyRelation => "grd",
            Self::OptimalGrey => "gro",
            Self::RoughSet => "rs",
        }
    }
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WeightScheme {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|w| w.name() == s)
            .ok_or_else(|| format!("unknown weight scheme `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    pub scheme: WeightScheme,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombineOptions {
    /// Identification coefficient ρ ∈ (0, 1).
    pub rho: f64,
    pub rough_set_classes: usize,
    pub exec: Execution,
}

impl Default for CombineOptions {
    fn default() -> Self {
        Self {
            rho: 0.5,
            rough_set_classes: 5,
            exec: Execution::default(),
        }
    }
}

fn uniform(m: usize) -> Vec<f64> {
    vec![1.0 / m as f64; m]
}

fn normalize(v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    if s > 0.0 && s.is_finite() {
        v.iter().map(|x| x / s).collect()
    } else {
        uniform(v.len())
    }
}

/// Weights under `scheme`.
pub fn weights(fm: &ForecastMatrix, scheme: WeightScheme, opts: &CombineOptions) -> Result<WeightVector> {
    let w = match scheme {
        WeightScheme::Average => weights_average(fm.methods()),
        WeightScheme::StdDev => weights_stddev(fm)?,
        WeightScheme::DevCoef => weights_devcoef(fm)?,
        WeightScheme::Lsm => weights_least_squares(fm),
        WeightScheme::LsmExact => weights_least_squares_exact(fm, opts.exec),
        WeightScheme::EffectiveDegree => weights_effective_degree(fm)?,
        WeightScheme::GreyRelation => weights_grey_relation(fm, opts.rho)?,
        WeightScheme::OptimalGrey => weights_optimal_grey(fm, opts.rho, opts.exec)?,
        WeightScheme::RoughSet => weights_rough_set(fm, opts.rough_set_classes)?,
    };
    Ok(WeightVector { weights: w, scheme })
}

pub fn weights_average(m: usize) -> Vec<f64> {
    uniform(m)
}

fn dispersion_weights(s: &[f64]) -> Vec<f64> {
    let m = s.len();
    let total: f64 = s.iter().sum();
    if total <= 0.0 {
        return uniform(m);
    }
    // S_j ≤ S, so every weight is nonnegative.
    normalize(s.iter().map(|sj| (total - sj) / total / (m - 1) as f64).collect())
}

fn require_methods(fm: &ForecastMatrix, scheme: WeightScheme, needed: usize) -> Result<()> {
    if fm.methods() < needed {
        return Err(CombineError::TooFewMethods {
            scheme: scheme.to_string(),
            needed,
            got: fm.methods(),
        });
    }
    Ok(())
}

/// `w_j = (S − S_j)/S · 1/(m−1)` with `S_j` the population standard
/// deviation of method `j`'s errors.
pub fn weights_stddev(fm: &ForecastMatrix) -> Result<Vec<f64>> {
    require_methods(fm, WeightScheme::StdDev, 2)?;
    let s: Vec<f64> = fm
        .errors()
        .iter()
        .map(|e| {
            let n = e.len() as f64;
            let mean = e.iter().sum::<f64>() / n;
            (e.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
        })
        .collect();
    Ok(dispersion_weights(&s))
}

/// As [`weights_stddev`] with the deviation from the cross-method mean
/// forecast, `d_j = (1/n)·sqrt(Σ_i (ŷ_j(i) − ȳ(i))²)`.
pub fn weights_devcoef(fm: &ForecastMatrix) -> Result<Vec<f64>> {
    require_methods(fm, WeightScheme::DevCoef, 2)?;
    let n = fm.len();
    let m = fm.methods() as f64;
    let mean: Vec<f64> = (0..n)
        .map(|i| fm.forecasts().iter().map(|f| f[i]).sum::<f64>() / m)
        .collect();
    let d: Vec<f64> = fm
        .forecasts()
        .iter()
        .map(|f| (f.iter().zip(&mean).map(|(p, a)| (p - a) * (p - a)).sum::<f64>()).sqrt() / n as f64)
        .collect();
    Ok(dispersion_weights(&d))
}

/// Error cross-product matrix `H_ij = Σ_t e_i(t)·e_j(t)`.
pub fn error_information_matrix(fm: &ForecastMatrix) -> Vec<Vec<f64>> {
    let e = fm.errors();
    let m = e.len();
    (0..m)
        .map(|i| (0..m).map(|j| e[i].iter().zip(&e[j]).map(|(a, b)| a * b).sum()).collect())
        .collect()
}

/// Closed form under the uncorrelated-errors approximation:
/// `w_j = (1/h_jj) / Σ_i (1/h_ii)`. Methods with zero error share all the
/// weight.
pub fn weights_least_squares(fm: &ForecastMatrix) -> Vec<f64> {
    let h: Vec<f64> = fm
        .errors()
        .iter()
        .map(|e| e.iter().map(|v| v * v).sum())
        .collect();
    let perfect: Vec<usize> = (0..h.len()).filter(|&j| h[j] == 0.0).collect();
    if !perfect.is_empty() {
        let mut w = vec![0.0; h.len()];
        for &j in &perfect {
            w[j] = 1.0 / perfect.len() as f64;
        }
        return w;
    }
    normalize(h.iter().map(|v| 1.0 / v).collect())
}

/// Minimizes `WᵀHW` over the simplex with the full error matrix.
pub fn weights_least_squares_exact(fm: &ForecastMatrix, exec: Execution) -> Vec<f64> {
    let h = error_information_matrix(fm);
    simplex_maximize(fm.methods(), exec, |w| {
        let mut q = 0.0;
        for i in 0..w.len() {
            for j in 0..w.len() {
                q += w[i] * h[i][j] * w[j];
            }
        }
        -q
    })
}

/// Effective degree `S_j = E_j(1 − σ_j)` of the per-point accuracy
/// `A_j(t) = 1 − |e_j(t)/y(t)|` (clamped to [0, 1]), normalized.
pub fn weights_effective_degree(fm: &ForecastMatrix) -> Result<Vec<f64>> {
    if let Some(t) = fm.actual().iter().position(|&y| y == 0.0) {
        return Err(CombineError::ZeroActual { t });
    }
    let n = fm.len() as f64;
    let s: Vec<f64> = fm
        .errors()
        .iter()
        .map(|e| {
            let a: Vec<f64> = e
                .iter()
                .zip(fm.actual())
                .map(|(err, y)| (1.0 - (err / y).abs()).clamp(0.0, 1.0))
                .collect();
            let mean = a.iter().sum::<f64>() / n;
            let sigma = a.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>().sqrt() / n;
            mean * (1.0 - sigma)
        })
        .collect();
    Ok(normalize(s))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreyRelationReport {
    /// `γ_0j` per method.
    pub gamma: Vec<f64>,
    /// Relation coefficient per method and time.
    pub coefficients: Vec<Vec<f64>>,
    pub rho: f64,
    /// Global `min |e|` and `max |e|` over all methods and times.
    pub min_abs: f64,
    pub max_abs: f64,
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho < 1.0 {
        Ok(())
    } else {
        Err(CombineError::InvalidParameter(format!("rho must lie in (0, 1), got {rho}")))
    }
}

fn grey_coefficient(abs_err: f64, min_abs: f64, max_abs: f64, rho: f64) -> f64 {
    if max_abs == 0.0 {
        1.0
    } else {
        (min_abs + rho * max_abs) / (abs_err + rho * max_abs)
    }
}

/// Grey relation degree of each method's forecast to the actuals.
pub fn grey_relation_degree(fm: &ForecastMatrix, rho: f64) -> Result<GreyRelationReport> {
    check_rho(rho)?;
    let abs: Vec<Vec<f64>> = fm
        .errors()
        .iter()
        .map(|e| e.iter().map(|v| v.abs()).collect())
        .collect();
    let min_abs = abs.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let max_abs = abs.iter().flatten().copied().fold(0.0, f64::max);
    let coefficients: Vec<Vec<f64>> = abs
        .iter()
        .map(|row| row.iter().map(|&d| grey_coefficient(d, min_abs, max_abs, rho)).collect())
        .collect();
    let gamma = coefficients
        .iter()
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    Ok(GreyRelationReport {
        gamma,
        coefficients,
        rho,
        min_abs,
        max_abs,
    })
}

pub fn weights_grey_relation(fm: &ForecastMatrix, rho: f64) -> Result<Vec<f64>> {
    Ok(normalize(grey_relation_degree(fm, rho)?.gamma))
}

/// `γ(W)` of the combined error `Σ_j w_j e_j(t)` with the reference
/// constants of the base methods.
pub fn combined_grey_degree(report: &GreyRelationReport, errors: &[Vec<f64>], w: &[f64]) -> f64 {
    let n = errors[0].len();
    (0..n)
        .map(|t| {
            let e: f64 = w.iter().zip(errors).map(|(wj, ej)| wj * ej[t]).sum();
            grey_coefficient(e.abs(), report.min_abs, report.max_abs, report.rho)
        })
        .sum::<f64>()
        / n as f64
}

/// Weights maximizing the grey relation degree of the combined forecast.
pub fn weights_optimal_grey(fm: &ForecastMatrix, rho: f64, exec: Execution) -> Result<Vec<f64>> {
    let report = grey_relation_degree(fm, rho)?;
    let errors = fm.errors();
    Ok(simplex_maximize(fm.methods(), exec, |w| combined_grey_degree(&report, &errors, w)))
}

/// Quantile classes: cut points at `sorted[⌊i·N/classes⌋]`, class of `v` is
/// the number of cut points `≤ v`.
pub fn discretize(values: &[f64], classes: usize) -> Vec<usize> {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let cuts: Vec<f64> = (1..classes).map(|i| s[(i * n / classes).min(n - 1)]).collect();
    values
        .iter()
        .map(|&v| cuts.iter().filter(|&&c| c <= v).count())
        .collect()
}

fn entropy(counts: impl Iterator<Item = usize>) -> f64 {
    let c: Vec<usize> = counts.filter(|&c| c > 0).collect();
    let n: usize = c.iter().sum();
    c.iter()
        .map(|&k| {
            let p = k as f64 / n as f64;
            -p * p.log2()
        })
        .sum()
}

/// `H(D | C)` where `C` is the joint class of the selected attributes.
fn conditional_entropy(decision: &[usize], attributes: &[&Vec<usize>]) -> f64 {
    use std::collections::BTreeMap;
    let n = decision.len();
    let mut groups: BTreeMap<Vec<usize>, BTreeMap<usize, usize>> = BTreeMap::new();
    for t in 0..n {
        let key: Vec<usize> = attributes.iter().map(|a| a[t]).collect();
        *groups.entry(key).or_default().entry(decision[t]).or_default() += 1;
    }
    groups
        .values()
        .map(|d| {
            let size: usize = d.values().sum();
            size as f64 / n as f64 * entropy(d.values().copied())
        })
        .sum()
}

/// Attribute significance `σ_a = H(D | C−{a}) − H(D | C)`, normalized.
pub fn weights_rough_set(fm: &ForecastMatrix, classes: usize) -> Result<Vec<f64>> {
    if classes < 2 {
        return Err(CombineError::InvalidParameter(format!("classes must be ≥ 2, got {classes}")));
    }
    if fm.len() < classes {
        return Err(CombineError::Shape(format!(
            "{} points cannot fill {classes} classes",
            fm.len()
        )));
    }
    let decision = discretize(fm.actual(), classes);
    if decision.iter().all(|&d| d == decision[0]) {
        return Err(CombineError::DegenerateDiscretization);
    }
    let attrs: Vec<Vec<usize>> = fm.forecasts().iter().map(|f| discretize(f, classes)).collect();
    let all: Vec<&Vec<usize>> = attrs.iter().collect();
    let h_full = conditional_entropy(&decision, &all);
    let sig: Vec<f64> = (0..attrs.len())
        .map(|a| {
            let rest: Vec<&Vec<usize>> = attrs.iter().enumerate().filter(|&(i, _)| i != a).map(|(_, v)| v).collect();
            (conditional_entropy(&decision, &rest) - h_full).max(0.0)
        })
        .collect();
    Ok(normalize(sig))
}

#[derive(Clone, Copy)]
struct Candidate {
    value: f64,
    dist: f64,
}

fn better(cand: Candidate, inc: Candidate) -> bool {
    let tol = 1e-12 * cand.value.abs().max(inc.value.abs());
    if cand.value > inc.value + tol {
        true
    } else if (cand.value - inc.value).abs() <= tol {
        cand.dist < inc.dist
    } else {
        false
    }
}

fn dist_to_center(w: &[f64]) -> f64 {
    let c = 1.0 / w.len() as f64;
    w.iter().map(|x| (x - c) * (x - c)).sum()
}

/// Integer compositions of `total` into `parts` with the first part fixed.
fn for_each_composition(parts: usize, total: i64, prefix: &mut Vec<i64>, f: &mut dyn FnMut(&[i64])) {
    if parts == 1 {
        prefix.push(total);
        f(prefix);
        prefix.pop();
        return;
    }
    for c in 0..=total {
        prefix.push(c);
        for_each_composition(parts - 1, total - c, prefix, f);
        prefix.pop();
    }
}

/// Box of `±radius` around `center` on the first `m−1` coordinates, last
/// coordinate completing the sum, infeasible points skipped.
fn for_each_near(center: &[i64], total: i64, radius: i64, first: i64, f: &mut dyn FnMut(&[i64])) {
    let m = center.len();
    let mut cur = vec![first];
    fn rec(center: &[i64], total: i64, radius: i64, cur: &mut Vec<i64>, f: &mut dyn FnMut(&[i64])) {
        let m = center.len();
        if cur.len() == m - 1 {
            let last = total - cur.iter().sum::<i64>();
            if last >= 0 {
                cur.push(last);
                f(cur);
                cur.pop();
            }
            return;
        }
        let k = cur.len();
        for c in (center[k] - radius).max(0)..=(center[k] + radius).min(total) {
            cur.push(c);
            rec(center, total, radius, cur, f);
            cur.pop();
        }
    }
    if m == 1 {
        f(&[total]);
        return;
    }
    if m == 2 {
        let last = total - first;
        if last >= 0 {
            f(&[first, last]);
        }
        return;
    }
    rec(center, total, radius, &mut cur, f);
}

/// Best point in `[lo, hi]` chunks over the first coordinate.
fn search_chunked<F>(
    first_values: Vec<i64>,
    exec: Execution,
    objective: &F,
    scale: f64,
    visit: &(dyn Fn(i64, &mut dyn FnMut(&[i64])) + Sync),
) -> Option<(Vec<f64>, Candidate)>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let partial = par::map_slice(&first_values, exec, |&c0| {
        let mut best: Option<(Vec<f64>, Candidate)> = None;
        let mut w = Vec::new();
        visit(c0, &mut |c: &[i64]| {
            w.clear();
            w.extend(c.iter().map(|&x| x as f64 / scale));
            let cand = Candidate {
                value: objective(&w),
                dist: dist_to_center(&w),
            };
            if cand.value.is_nan() {
                return;
            }
            if best.as_ref().is_none_or(|(_, b)| better(cand, *b)) {
                best = Some((w.clone(), cand));
            }
        });
        best
    });
    let mut best: Option<(Vec<f64>, Candidate)> = None;
    for p in partial.into_iter().flatten() {
        if best.as_ref().is_none_or(|(_, b)| better(p.1, *b)) {
            best = Some(p);
        }
    }
    best
}

fn golden_section<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

const COARSE_STEPS: i64 = 100;
const GRID_BUDGET: f64 = 5.0e6;
// Above this many methods the ±10-step box around the incumbent is too
// large to enumerate and refinement switches to pairwise descent.
const MAX_BOX_REFINE: usize = 5;

fn grid_points(steps: i64, m: usize) -> f64 {
    // C(steps + m − 1, m − 1)
    (1..m).map(|i| (steps as f64 + i as f64) / i as f64).product()
}

/// Finest coarse grid (at most 100 steps) whose size stays within budget.
fn coarse_resolution(m: usize) -> i64 {
    let mut steps = COARSE_STEPS;
    while steps > 1 && grid_points(steps, m) > GRID_BUDGET {
        steps -= 1;
    }
    steps
}

/// Moves mass between coordinate pairs while that improves the objective,
/// shrinking the step tenfold down to 1e-5.
fn pairwise_descent(
    mut w: Vec<f64>,
    mut best: Candidate,
    mut step: f64,
    eval: &dyn Fn(Vec<f64>) -> (Vec<f64>, Candidate),
) -> (Vec<f64>, Candidate) {
    let m = w.len();
    while step >= 1e-5 {
        for _ in 0..10_000 {
            let mut improved = false;
            for i in 0..m {
                for j in 0..m {
                    let d = step.min(w[j]);
                    if i == j || d <= 0.0 {
                        continue;
                    }
                    let mut c = w.clone();
                    c[i] += d;
                    c[j] -= d;
                    let (c, cand) = eval(c);
                    if better(cand, best) {
                        w = c;
                        best = cand;
                        improved = true;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        step /= 10.0;
    }
    (w, best)
}

/// Maximizes `objective` over the probability simplex in `m` dimensions.
pub fn simplex_maximize<F>(m: usize, exec: Execution, objective: F) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    assert!(m >= 1);
    if m == 1 {
        return vec![1.0];
    }
    let eval = |w: Vec<f64>| -> (Vec<f64>, Candidate) {
        let c = Candidate {
            value: objective(&w),
            dist: dist_to_center(&w),
        };
        (w, c)
    };

    let coarse_steps = coarse_resolution(m);
    let coarse = search_chunked(
        (0..=coarse_steps).collect(),
        exec,
        &objective,
        coarse_steps as f64,
        &|c0, f| {
            let mut prefix = vec![c0];
            if m == 2 {
                f(&[c0, coarse_steps - c0]);
            } else {
                for_each_composition(m - 1, coarse_steps - c0, &mut prefix, f);
            }
        },
    );
    let (mut best_w, mut best) = coarse.unwrap_or_else(|| eval(uniform(m)));

    if m == 2 {
        let lo = (best_w[0] - 0.01).max(0.0);
        let hi = (best_w[0] + 0.01).min(1.0);
        let w1 = golden_section(|x| objective(&[x, 1.0 - x]), lo, hi);
        let (w, c) = eval(vec![w1, 1.0 - w1]);
        if better(c, best) {
            best_w = w;
            best = c;
        }
    } else if m > MAX_BOX_REFINE {
        let (w, c) = pairwise_descent(best_w, best, 1.0 / coarse_steps as f64, &eval);
        best_w = w;
        best = c;
    } else {
        for scale in [1_000i64, 10_000] {
            let center: Vec<i64> = best_w.iter().map(|x| (x * scale as f64).round() as i64).collect();
            let firsts: Vec<i64> = ((center[0] - 10).max(0)..=(center[0] + 10).min(scale)).collect();
            let found = search_chunked(firsts, exec, &objective, scale as f64, &|c0, f| {
                for_each_near(&center, scale, 10, c0, f)
            });
            if let Some((w, c)) = found {
                if better(c, best) {
                    best_w = w;
                    best = c;
                }
            }
        }
    }

    // Vertices are always feasible; never return anything worse.
    for j in 0..m {
        let mut v = vec![0.0; m];
        v[j] = 1.0;
        let (v, c) = eval(v);
        if c.value > best.value {
            best_w = v;
            best = c;
        }
    }
    // The exact centre is off-grid for most m; it wins any tie.
    let (u, c) = eval(uniform(m));
    if better(c, best) {
        best_w = u;
    }
    best_w
}

pub fn combine_arithmetic(fm: &ForecastMatrix, w: &[f64]) -> Result<Vec<f64>> {
    combine_forecasts(fm.forecasts(), w)
}

/// `Σ_j w_j ŷ_j(t)` over raw forecast sequences.
pub fn combine_forecasts(forecasts: &[Vec<f64>], w: &[f64]) -> Result<Vec<f64>> {
    if forecasts.len() != w.len() {
        return Err(CombineError::Shape(format!(
            "{} weights for {} forecasts",
            w.len(),
            forecasts.len()
        )));
    }
    let n = forecasts.first().map_or(0, Vec::len);
    if forecasts.iter().any(|f| f.len() != n) {
        return Err(CombineError::Shape("forecasts differ in length".into()));
    }
    Ok((0..n)
        .map(|t| forecasts.iter().zip(w).map(|(f, wj)| wj * f[t]).sum())
        .collect())
}

fn check_positive(fm: &ForecastMatrix) -> Result<()> {
    for (j, f) in fm.forecasts().iter().enumerate() {
        if let Some(t) = f.iter().position(|&v| v <= 0.0) {
            return Err(CombineError::NonPositive { t, j, value: f[t] });
        }
    }
    Ok(())
}

/// `Π_j ŷ_j(t)^{w_j}`.
pub fn combine_geometric(fm: &ForecastMatrix, w: &[f64]) -> Result<Vec<f64>> {
    check_positive(fm)?;
    Ok((0..fm.len())
        .map(|t| fm.forecasts().iter().zip(w).map(|(f, wj)| f[t].powf(*wj)).product())
        .collect())
}

/// `1 / Σ_j (w_j / ŷ_j(t))`.
pub fn combine_harmonic(fm: &ForecastMatrix, w: &[f64]) -> Result<Vec<f64>> {
    check_positive(fm)?;
    Ok((0..fm.len())
        .map(|t| 1.0 / fm.forecasts().iter().zip(w).map(|(f, wj)| wj / f[t]).sum::<f64>())
        .collect())
}

/// Weights of a fitted two-stage combination.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageModel {
    /// One weight vector over the base forecasts per stage-1 scheme.
    pub stage1: Vec<WeightVector>,
    /// One weight vector over the stage-1 outputs per stage-2 scheme.
    pub stage2: Vec<WeightVector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageOutput {
    pub stage1: Vec<Vec<f64>>,
    pub stage2: Vec<Vec<f64>>,
}

impl TwoStageModel {
    /// Fits stage-1 weights on `fm`, combines in sample, then fits each
    /// stage-2 scheme on those combined sequences.
    pub fn fit(
        fm: &ForecastMatrix,
        stage1: &[WeightScheme],
        stage2: &[WeightScheme],
        opts: &CombineOptions,
    ) -> Result<Self> {
        require_methods(fm, WeightScheme::Average, 2)?;
        let s1 = stage1
            .iter()
            .map(|&s| weights(fm, s, opts))
            .collect::<Result<Vec<_>>>()?;
        let combined = s1
            .iter()
            .map(|w| combine_arithmetic(fm, &w.weights))
            .collect::<Result<Vec<_>>>()?;
        let labels = stage1.iter().map(|s| s.to_string()).collect();
        let inner = ForecastMatrix::new(fm.actual().to_vec(), combined, labels)?;
        let s2 = stage2
            .iter()
            .map(|&s| weights(&inner, s, opts))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { stage1: s1, stage2: s2 })
    }

    pub fn apply(&self, base: &[Vec<f64>]) -> Result<TwoStageOutput> {
        let stage1 = self
            .stage1
            .iter()
            .map(|w| combine_forecasts(base, &w.weights))
            .collect::<Result<Vec<_>>>()?;
        let stage2 = self
            .stage2
            .iter()
            .map(|w| combine_forecasts(&stage1, &w.weights))
            .collect::<Result<Vec<_>>>()?;
        Ok(TwoStageOutput { stage1, stage2 })
    }
}

/// In-sample two-stage combination with one stage-2 scheme.
pub fn two_stage_combine(
    fm: &ForecastMatrix,
    stage1: &[WeightScheme],
    stage2: WeightScheme,
    opts: &CombineOptions,
) -> Result<(Vec<f64>, TwoStageModel)> {
    let model = TwoStageModel::fit(fm, stage1, &[stage2], opts)?;
    let out = model.apply(fm.forecasts())?;
    Ok((out.stage2.into_iter().next().expect("one stage-2 scheme"), model))
}
