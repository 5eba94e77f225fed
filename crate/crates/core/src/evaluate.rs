//! Forecast performance measures and multi-criteria ranking.
//!
//! Ranking works on five criteria: accuracy, feasibility and consistency
//! (larger is better), MAE and RMSE (smaller is better). Cost criteria are
//! handled through the choice of ideal and anti-ideal values, not by
//! transforming the data.

use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvaluateError {
    #[error("length mismatch: {0} actuals vs {1} forecasts")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} points, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("zero actual value at index {0}")]
    ZeroActual(usize),
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("criterion column `{0}` has zero norm")]
    ZeroColumn(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl EvaluateError {
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Self::InvalidParameter(_))
    }
}

type Result<T> = std::result::Result<T, EvaluateError>;

pub const CRITERIA: [&str; 5] = ["accuracy", "feasibility", "consistency", "MAE", "RMSE"];
const BENEFIT: [bool; 5] = [true, true, true, false, false];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TheilVariant {
    /// `Σ(y − ŷ)² / Σŷ²`.
    #[default]
    ForecastDenominator,
    /// `Σ(y − ŷ)² / Σy²`.
    Classical,
}

impl FromStr for TheilVariant {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "forecast" | "as_printed" => Ok(Self::ForecastDenominator),
            "classical" => Ok(Self::Classical),
            other => Err(format!("unknown Theil variant `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvaluateConfig {
    pub feasibility_threshold: f64,
    /// Criterion weights in [`CRITERIA`] order; sum to 1.
    pub subjective_weights: [f64; 5],
    pub theil: TheilVariant,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            feasibility_threshold: 0.005,
            subjective_weights: [0.15, 0.2, 0.3, 0.2, 0.15],
            theil: TheilVariant::ForecastDenominator,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerformanceRecord {
    /// `(1 − mean|ε/y|)·100`.
    pub accuracy: f64,
    /// Share of points with `|ε| ≤ threshold`, in percent.
    pub feasibility: f64,
    /// Share of points whose predicted move has the actual move's sign, in
    /// percent.
    pub consistency: f64,
    pub mae: f64,
    pub rmse: f64,
    pub mse: f64,
    pub mape: f64,
    /// `S₁/S₂`: error spread over actual spread.
    pub c_ratio: f64,
    /// Share of points with `|ε − ε̄| < 0.6745·S₂`.
    pub small_error_p: f64,
    pub theil_u2: f64,
    pub mean_abs_rel_error: f64,
}

impl PerformanceRecord {
    /// The five ranking criteria in [`CRITERIA`] order.
    pub fn criteria(&self) -> [f64; 5] {
        [self.accuracy, self.feasibility, self.consistency, self.mae, self.rmse]
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Computes the measure battery. `y0` is the actual value just before the
/// window, needed for the direction of the first move.
pub fn performance(actual: &[f64], forecast: &[f64], y0: f64, config: &EvaluateConfig) -> Result<PerformanceRecord> {
    let l = actual.len();
    if l != forecast.len() {
        return Err(EvaluateError::LengthMismatch(l, forecast.len()));
    }
    if l < 2 {
        return Err(EvaluateError::TooShort { needed: 2, got: l });
    }
    if let Some(i) = actual.iter().chain(forecast).chain([&y0]).position(|v| !v.is_finite()) {
        return Err(EvaluateError::NonFinite(i % l));
    }
    if let Some(i) = actual.iter().position(|&y| y == 0.0) {
        return Err(EvaluateError::ZeroActual(i));
    }
    let lf = l as f64;
    let eps: Vec<f64> = actual.iter().zip(forecast).map(|(y, p)| y - p).collect();
    let mse = eps.iter().map(|e| e * e).sum::<f64>() / lf;
    let mae = eps.iter().map(|e| e.abs()).sum::<f64>() / lf;
    let q_bar = eps.iter().zip(actual).map(|(e, y)| (e / y).abs()).sum::<f64>() / lf;

    let feasible = eps.iter().filter(|e| e.abs() <= config.feasibility_threshold).count();
    let mut agree = 0;
    let mut prev = y0;
    for (y, p) in actual.iter().zip(forecast) {
        if (y - prev) * (p - prev) >= 0.0 {
            agree += 1;
        }
        prev = *y;
    }

    let eps_bar = eps.iter().sum::<f64>() / lf;
    let y_bar = actual.iter().sum::<f64>() / lf;
    let s1 = (eps.iter().map(|e| (e - eps_bar) * (e - eps_bar)).sum::<f64>() / lf).sqrt();
    let s2 = (actual.iter().map(|y| (y - y_bar) * (y - y_bar)).sum::<f64>() / lf).sqrt();
    let small = eps.iter().filter(|e| (*e - eps_bar).abs() < 0.6745 * s2).count();
    let sse = mse * lf;
    let theil_den = match config.theil {
        TheilVariant::ForecastDenominator => forecast.iter().map(|p| p * p).sum::<f64>(),
        TheilVariant::Classical => actual.iter().map(|y| y * y).sum::<f64>(),
    };

    Ok(PerformanceRecord {
        accuracy: (1.0 - q_bar) * 100.0,
        feasibility: feasible as f64 / lf * 100.0,
        consistency: agree as f64 / lf * 100.0,
        mae,
        rmse: mse.sqrt(),
        mse,
        mape: q_bar * 100.0,
        c_ratio: ratio(s1, s2),
        small_error_p: small as f64 / lf,
        theil_u2: ratio(sse, theil_den),
        mean_abs_rel_error: q_bar,
    })
}

/// Alternatives scored on the five criteria.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionMatrix {
    pub labels: Vec<String>,
    pub values: Vec<[f64; 5]>,
    pub weights: [f64; 5],
}

impl DecisionMatrix {
    pub fn new(labels: Vec<String>, values: Vec<[f64; 5]>, weights: [f64; 5]) -> Result<Self> {
        if labels.len() != values.len() {
            return Err(EvaluateError::LengthMismatch(labels.len(), values.len()));
        }
        if values.len() < 2 {
            return Err(EvaluateError::TooShort {
                needed: 2,
                got: values.len(),
            });
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || weights.iter().sum::<f64>() <= 0.0 {
            return Err(EvaluateError::InvalidParameter("weights must be nonnegative with a positive sum".into()));
        }
        if let Some(i) = values.iter().position(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(EvaluateError::NonFinite(i));
        }
        let s: f64 = weights.iter().sum();
        Ok(Self {
            labels,
            values,
            weights: weights.map(|w| w / s),
        })
    }

    pub fn from_records(labels: Vec<String>, records: &[PerformanceRecord], weights: [f64; 5]) -> Result<Self> {
        Self::new(labels, records.iter().map(PerformanceRecord::criteria).collect(), weights)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Column-wise vector normalization `x_ij / ‖x_·j‖`.
    pub fn normalized(&self) -> Result<Vec<[f64; 5]>> {
        let mut norms = [0.0; 5];
        for j in 0..5 {
            norms[j] = self.values.iter().map(|r| r[j] * r[j]).sum::<f64>().sqrt();
            if norms[j] == 0.0 {
                return Err(EvaluateError::ZeroColumn(CRITERIA[j]));
            }
        }
        Ok(self
            .values
            .iter()
            .map(|r| std::array::from_fn(|j| r[j] / norms[j]))
            .collect())
    }
}

fn ideal_rows(rows: &[[f64; 5]]) -> ([f64; 5], [f64; 5]) {
    let mut best = [0.0; 5];
    let mut worst = [0.0; 5];
    for j in 0..5 {
        let col = rows.iter().map(|r| r[j]);
        let (mn, mx) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        (best[j], worst[j]) = if BENEFIT[j] { (mx, mn) } else { (mn, mx) };
    }
    (best, worst)
}

/// 1-based ranks by descending score; equal scores keep input order.
pub fn ranks_from_scores(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut ranks = vec![0; scores.len()];
    for (pos, &i) in order.iter().enumerate() {
        ranks[i] = pos + 1;
    }
    ranks
}

/// Distance-based TOPSIS. Returns ranks and closeness `D⁻/(D⁺ + D⁻)`.
pub fn rank_rtopsis(m: &DecisionMatrix) -> Result<(Vec<usize>, Vec<f64>)> {
    let v: Vec<[f64; 5]> = m
        .normalized()?
        .iter()
        .map(|r| std::array::from_fn(|j| r[j] * m.weights[j]))
        .collect();
    let (best, worst) = ideal_rows(&v);
    let dist = |r: &[f64; 5], t: &[f64; 5]| (0..5).map(|j| (r[j] - t[j]).powi(2)).sum::<f64>().sqrt();
    let closeness: Vec<f64> = v
        .iter()
        .map(|r| {
            let (dp, dm) = (dist(r, &best), dist(r, &worst));
            if dp + dm == 0.0 {
                0.5
            } else {
                dm / (dp + dm)
            }
        })
        .collect();
    Ok((ranks_from_scores(&closeness), closeness))
}

/// Grey relation coefficients of every row against `reference`, with the
/// extreme differences taken over the whole matrix.
fn grey_coefficients(rows: &[[f64; 5]], reference: &[f64; 5], rho: f64) -> Vec<[f64; 5]> {
    let delta: Vec<[f64; 5]> = rows
        .iter()
        .map(|r| std::array::from_fn(|j| (r[j] - reference[j]).abs()))
        .collect();
    let mn = delta.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let mx = delta.iter().flatten().copied().fold(0.0, f64::max);
    delta
        .iter()
        .map(|d| {
            std::array::from_fn(|j| {
                if mx == 0.0 {
                    1.0
                } else {
                    (mn + rho * mx) / (d[j] + rho * mx)
                }
            })
        })
        .collect()
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho < 1.0 {
        Ok(())
    } else {
        Err(EvaluateError::InvalidParameter(format!("rho must lie in (0, 1), got {rho}")))
    }
}

/// Grey-relation TOPSIS. Closeness is `r⁺/(r⁺ + r⁻)`, where `r±` are the
/// weighted grey relation degrees to the ideal and anti-ideal rows.
pub fn rank_gctopsis(m: &DecisionMatrix, rho: f64) -> Result<(Vec<usize>, Vec<f64>)> {
    check_rho(rho)?;
    let r = m.normalized()?;
    let (best, worst) = ideal_rows(&r);
    let degree = |c: &[f64; 5]| (0..5).map(|j| m.weights[j] * c[j]).sum::<f64>();
    let plus: Vec<f64> = grey_coefficients(&r, &best, rho).iter().map(degree).collect();
    let minus: Vec<f64> = grey_coefficients(&r, &worst, rho).iter().map(degree).collect();
    let closeness: Vec<f64> = plus.iter().zip(&minus).map(|(p, q)| p / (p + q)).collect();
    Ok((ranks_from_scores(&closeness), closeness))
}

/// Weighted grey-relation projection: each row of weighted coefficients to
/// the ideal, `w_j·ξ⁺_ij`, projected on the ideal's weighted row `w`.
pub fn rank_protopsis(m: &DecisionMatrix, rho: f64) -> Result<(Vec<usize>, Vec<f64>)> {
    check_rho(rho)?;
    let r = m.normalized()?;
    let (best, _) = ideal_rows(&r);
    let wn = m.weights.iter().map(|w| w * w).sum::<f64>().sqrt();
    let scores: Vec<f64> = grey_coefficients(&r, &best, rho)
        .iter()
        .map(|c| (0..5).map(|j| m.weights[j] * c[j] * m.weights[j]).sum::<f64>() / wn)
        .collect();
    Ok((ranks_from_scores(&scores), scores))
}

/// Borda aggregation: ascending rank sums, ties by `r1`, then input order.
pub fn comprehensive_rank(r1: &[usize], r2: &[usize], r3: &[usize]) -> Vec<usize> {
    let n = r1.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (r1[i] + r2[i] + r3[i], r1[i], i));
    let mut ranks = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        ranks[i] = pos + 1;
    }
    ranks
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankReport {
    pub labels: Vec<String>,
    /// Grey-relation TOPSIS.
    pub r1: Vec<usize>,
    /// Grey-relation projection.
    pub r2: Vec<usize>,
    /// Distance TOPSIS.
    pub r3: Vec<usize>,
    pub comprehensive: Vec<usize>,
    pub closeness_grey: Vec<f64>,
    pub projection: Vec<f64>,
    pub closeness_distance: Vec<f64>,
}

pub fn rank_all(m: &DecisionMatrix, rho: f64) -> Result<RankReport> {
    let (r1, closeness_grey) = rank_gctopsis(m, rho)?;
    let (r2, projection) = rank_protopsis(m, rho)?;
    let (r3, closeness_distance) = rank_rtopsis(m)?;
    let comprehensive = comprehensive_rank(&r1, &r2, &r3);
    Ok(RankReport {
        labels: m.labels.clone(),
        r1,
        r2,
        r3,
        comprehensive,
        closeness_grey,
        projection,
        closeness_distance,
    })
}
