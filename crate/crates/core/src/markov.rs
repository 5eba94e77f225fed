//! Markov-chain correction of relative forecast residuals.
//!
//! The residual series `Z_t = (Y_t − X̂_t)/Y_{t−1}` is cut into `k` states.
//! Two corrections are built from it, a fuzzy chain (triangular memberships)
//! and an autocorrelation-weighted mixture of 1..m-step chains, and their
//! forecasts are averaged.
//!
//! States are 0-based here; state `i` is the interval `(m_i, m_{i+1}]`,
//! except that state 0 also takes everything at or below `m_1`, and the
//! last state everything above `m_{k−1}`.

use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MarkovError {
    #[error("{what} needs at least {needed} values, got {got}")]
    TooShort { what: String, needed: usize, got: usize },
    #[error("zero previous value Y[{index}] in residual denominator")]
    ZeroDenominator { index: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("quantile boundaries collapse (too few distinct values); use the equal_width partition")]
    DegenerateQuantile,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl MarkovError {
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Self::InvalidParameter(_))
    }
}

type Result<T> = std::result::Result<T, MarkovError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PartitionRule {
    EqualWidth,
    #[default]
    Quantile,
}

impl FromStr for PartitionRule {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "equal_width" => Ok(Self::EqualWidth),
            "quantile" => Ok(Self::Quantile),
            other => Err(format!("unknown partition rule `{other}`")),
        }
    }
}

/// Membership functions used by the fuzzy chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Membership {
    /// Peak 1 at each interval midpoint, 0 at the neighbouring midpoints,
    /// flat beyond the outermost midpoints.
    #[default]
    Triangular,
    /// Indicator of the crisp state.
    Crisp,
}

/// Which interval midpoint the fuzzy forecast weights by `P_ij`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MidpointReading {
    /// `Σ_j mid_j·P_ij`: expected destination residual.
    #[default]
    Destination,
    /// `mid_i·Σ_j P_ij = mid_i`.
    Source,
}

impl FromStr for MidpointReading {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "destination" => Ok(Self::Destination),
            "source" => Ok(Self::Source),
            other => Err(format!("unknown midpoint reading `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkovConfig {
    pub states: usize,
    pub partition: PartitionRule,
    pub order: usize,
    pub alpha: f64,
    pub membership: Membership,
    pub midpoint: MidpointReading,
}

impl Default for MarkovConfig {
    fn default() -> Self {
        Self {
            states: 5,
            partition: PartitionRule::Quantile,
            order: 3,
            alpha: 0.05,
            membership: Membership::Triangular,
            midpoint: MidpointReading::Destination,
        }
    }
}

/// `Z_t = (Y_t − X̂_t)/Y_{t−1}` for `t = 1..N−1`; `fitted[0]` is not used.
pub fn residual_series(actual: &[f64], fitted: &[f64]) -> Result<Vec<f64>> {
    if actual.len() != fitted.len() {
        return Err(MarkovError::LengthMismatch(actual.len(), fitted.len()));
    }
    if actual.len() < 3 {
        return Err(MarkovError::TooShort {
            what: "residual series".into(),
            needed: 3,
            got: actual.len(),
        });
    }
    (1..actual.len())
        .map(|t| {
            if actual[t - 1] == 0.0 {
                return Err(MarkovError::ZeroDenominator { index: t - 1 });
            }
            let z = (actual[t] - fitted[t]) / actual[t - 1];
            if z.is_finite() {
                Ok(z)
            } else {
                Err(MarkovError::NonFinite(t))
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatePartition {
    /// `m_0 < m_1 < … < m_k`.
    pub boundaries: Vec<f64>,
}

impl StatePartition {
    pub fn new(boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.len() < 3 {
            return Err(MarkovError::InvalidParameter("a partition needs k ≥ 2 states".into()));
        }
        if boundaries.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(MarkovError::InvalidParameter(
                "partition boundaries must be strictly increasing".into(),
            ));
        }
        Ok(Self { boundaries })
    }

    pub fn k(&self) -> usize {
        self.boundaries.len() - 1
    }

    /// State index of `z`; a value on a boundary goes to the lower state.
    pub fn state_of(&self, z: f64) -> usize {
        let k = self.k();
        (0..k - 1).find(|&i| z <= self.boundaries[i + 1]).unwrap_or(k - 1)
    }

    pub fn states(&self, z: &[f64]) -> Vec<usize> {
        z.iter().map(|&v| self.state_of(v)).collect()
    }

    pub fn midpoint(&self, i: usize) -> f64 {
        0.5 * (self.boundaries[i] + self.boundaries[i + 1])
    }

    pub fn midpoints(&self) -> Vec<f64> {
        (0..self.k()).map(|i| self.midpoint(i)).collect()
    }

    /// Membership degrees of `u` in every state.
    pub fn memberships(&self, u: f64, kind: Membership) -> Vec<f64> {
        let k = self.k();
        let mut mu = vec![0.0; k];
        if kind == Membership::Crisp {
            mu[self.state_of(u)] = 1.0;
            return mu;
        }
        let c = self.midpoints();
        if u <= c[0] {
            mu[0] = 1.0;
        } else if u >= c[k - 1] {
            mu[k - 1] = 1.0;
        } else {
            let i = (0..k - 1).find(|&i| u <= c[i + 1]).expect("u lies below the last midpoint");
            let left = (c[i + 1] - u) / (c[i + 1] - c[i]);
            mu[i] = left;
            mu[i + 1] = 1.0 - left;
        }
        mu
    }
}

fn outer_margin(lo: f64, hi: f64) -> f64 {
    1e-12 * lo.abs().max(hi.abs()).max(1.0)
}

/// Cuts the observed range into `k` states.
pub fn partition(z: &[f64], k: usize, rule: PartitionRule) -> Result<StatePartition> {
    if k < 2 {
        return Err(MarkovError::InvalidParameter(format!("k must be ≥ 2, got {k}")));
    }
    if z.is_empty() {
        return Err(MarkovError::TooShort {
            what: "partition".into(),
            needed: 1,
            got: 0,
        });
    }
    if let Some(i) = z.iter().position(|v| !v.is_finite()) {
        return Err(MarkovError::NonFinite(i));
    }
    let lo = z.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ext = outer_margin(lo, hi);
    let (lo, hi) = (lo - ext, hi + ext);
    let boundaries = match rule {
        PartitionRule::EqualWidth => {
            let w = (hi - lo) / k as f64;
            let mut b: Vec<f64> = (0..k).map(|i| lo + i as f64 * w).collect();
            b.push(hi);
            b
        }
        PartitionRule::Quantile => {
            let n = z.len();
            if n < k {
                return Err(MarkovError::TooShort {
                    what: format!("quantile partition into {k} states"),
                    needed: k,
                    got: n,
                });
            }
            let mut s = z.to_vec();
            s.sort_by(f64::total_cmp);
            let mut b = vec![lo];
            for i in 1..k {
                let j = i * n / k;
                b.push(0.5 * (s[j - 1] + s[j]));
            }
            b.push(hi);
            b
        }
    };
    StatePartition::new(boundaries).map_err(|e| match rule {
        PartitionRule::Quantile => MarkovError::DegenerateQuantile,
        PartitionRule::EqualWidth => e,
    })
}

/// Transition counts and row-normalized probabilities for one step size.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub step: usize,
    pub counts: Vec<Vec<f64>>,
    pub probabilities: Vec<Vec<f64>>,
}

impl TransitionMatrix {
    /// Normalizes rows; an all-zero row becomes uniform.
    pub fn from_counts(counts: Vec<Vec<f64>>, step: usize) -> Self {
        let k = counts.len();
        let probabilities = counts
            .iter()
            .map(|row| {
                let s: f64 = row.iter().sum();
                if s > 0.0 {
                    row.iter().map(|c| c / s).collect()
                } else {
                    vec![1.0 / k as f64; k]
                }
            })
            .collect();
        Self {
            step,
            counts,
            probabilities,
        }
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }
}

/// Counts pairs `(s_t, s_{t+step})`.
pub fn transition_matrix(states: &[usize], step: usize, k: usize) -> Result<TransitionMatrix> {
    if step == 0 {
        return Err(MarkovError::InvalidParameter("step must be ≥ 1".into()));
    }
    if states.len() <= step {
        return Err(MarkovError::TooShort {
            what: format!("{step}-step transition matrix"),
            needed: step + 1,
            got: states.len(),
        });
    }
    if let Some(&s) = states.iter().find(|&&s| s >= k) {
        return Err(MarkovError::InvalidParameter(format!("state {s} outside 0..{k}")));
    }
    let mut counts = vec![vec![0.0; k]; k];
    for t in 0..states.len() - step {
        counts[states[t]][states[t + step]] += 1.0;
    }
    Ok(TransitionMatrix::from_counts(counts, step))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkovTestResult {
    pub chi_square: f64,
    pub dof: usize,
    pub critical_value: f64,
    pub is_markov: bool,
}

/// Likelihood-ratio style test of the Markov property on one-step
/// transitions: `χ² = 2 ΣΣ n_ij |ln(P_ij / P_0j)|` against `χ²((k−1)²)`.
pub fn markov_property_test(states: &[usize], k: usize, alpha: f64) -> Result<MarkovTestResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MarkovError::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if states.len() < k + 1 {
        return Err(MarkovError::TooShort {
            what: "Markov property test".into(),
            needed: k + 1,
            got: states.len(),
        });
    }
    let tm = transition_matrix(states, 1, k)?;
    let total: f64 = tm.counts.iter().flatten().sum();
    let p0: Vec<f64> = (0..k)
        .map(|j| tm.counts.iter().map(|r| r[j]).sum::<f64>() / total)
        .collect();
    let mut chi = 0.0;
    for i in 0..k {
        for j in 0..k {
            let n = tm.counts[i][j];
            if n > 0.0 {
                chi += n * (tm.probabilities[i][j] / p0[j]).ln().abs();
            }
        }
    }
    let chi_square = 2.0 * chi;
    let dof = (k - 1) * (k - 1);
    let critical_value = chi_square_quantile(1.0 - alpha, dof as f64);
    Ok(MarkovTestResult {
        chi_square,
        dof,
        critical_value,
        is_markov: chi_square > critical_value,
    })
}

/// Fuzzy transition model.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyStateModel {
    pub partition: StatePartition,
    pub membership: Membership,
    /// `a_ij = Σ_t μ_i(Z_t)·μ_j(Z_{t+1})` and its row normalization.
    pub transitions: TransitionMatrix,
}

impl FuzzyStateModel {
    pub fn fit(z: &[f64], partition: &StatePartition, membership: Membership) -> Result<Self> {
        if z.len() < 2 {
            return Err(MarkovError::TooShort {
                what: "fuzzy transitions".into(),
                needed: 2,
                got: z.len(),
            });
        }
        let k = partition.k();
        let mu: Vec<Vec<f64>> = z.iter().map(|&u| partition.memberships(u, membership)).collect();
        let mut a = vec![vec![0.0; k]; k];
        for t in 0..z.len() - 1 {
            for i in 0..k {
                if mu[t][i] == 0.0 {
                    continue;
                }
                for j in 0..k {
                    a[i][j] += mu[t][i] * mu[t + 1][j];
                }
            }
        }
        Ok(Self {
            partition: partition.clone(),
            membership,
            transitions: TransitionMatrix::from_counts(a, 1),
        })
    }

    /// Expected relative residual following `z_last`.
    pub fn relative_correction(&self, z_last: f64, reading: MidpointReading) -> f64 {
        let mu = self.partition.memberships(z_last, self.membership);
        let mids = self.partition.midpoints();
        let p = &self.transitions.probabilities;
        (0..mids.len())
            .map(|i| {
                let inner = match reading {
                    MidpointReading::Destination => (0..mids.len()).map(|j| mids[j] * p[i][j]).sum::<f64>(),
                    MidpointReading::Source => mids[i] * p[i].iter().sum::<f64>(),
                };
                mu[i] * inner
            })
            .sum()
    }
}

/// `X̂_t + Σ_i μ_i(Z_{t−1}) Σ_j mid·P_ij·Y_{t−1}`.
pub fn fuzzy_markov_forecast(
    z: &[f64],
    partition: &StatePartition,
    fitted_next: f64,
    y_prev: f64,
    membership: Membership,
    reading: MidpointReading,
) -> Result<f64> {
    let model = FuzzyStateModel::fit(z, partition, membership)?;
    let z_last = *z.last().expect("fit checked length");
    Ok(fitted_next + model.relative_correction(z_last, reading) * y_prev)
}

/// Lag-`k` autocorrelation `Σ(x_t − x̄)(x_{t+k} − x̄) / Σ(x_t − x̄)²`.
pub fn autocorrelation(x: &[f64], k: usize) -> f64 {
    let n = x.len();
    if k >= n {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let den: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    if den == 0.0 {
        return 0.0;
    }
    let num: f64 = (0..n - k).map(|t| (x[t] - mean) * (x[t + k] - mean)).sum();
    num / den
}

/// `w_k = |r_k| / Σ|r_k|`, equal weights when every `r_k` is zero.
pub fn autocorrelation_weights(x: &[f64], order: usize) -> Vec<f64> {
    let r: Vec<f64> = (1..=order).map(|k| autocorrelation(x, k).abs()).collect();
    let s: f64 = r.iter().sum();
    if s > 0.0 {
        r.iter().map(|v| v / s).collect()
    } else {
        vec![1.0 / order as f64; order]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedMarkovModel {
    pub partition: StatePartition,
    pub order: usize,
    pub autocorrelations: Vec<f64>,
    pub weights: Vec<f64>,
    /// `P(1)..P(order)`.
    pub matrices: Vec<TransitionMatrix>,
}

impl WeightedMarkovModel {
    pub fn fit(z: &[f64], partition: &StatePartition, order: usize) -> Result<Self> {
        if order == 0 {
            return Err(MarkovError::InvalidParameter("order must be ≥ 1".into()));
        }
        if z.len() <= order {
            return Err(MarkovError::TooShort {
                what: format!("weighted Markov chain of order {order}"),
                needed: order + 1,
                got: z.len(),
            });
        }
        let states = partition.states(z);
        let matrices = (1..=order)
            .map(|s| transition_matrix(&states, s, partition.k()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            partition: partition.clone(),
            order,
            autocorrelations: (1..=order).map(|k| autocorrelation(z, k)).collect(),
            weights: autocorrelation_weights(z, order),
            matrices,
        })
    }

    /// Mixed next-state distribution given the observed states (oldest
    /// first); the `k`-step matrix is indexed by the state `k` steps back.
    pub fn state_distribution(&self, recent_states: &[usize]) -> Vec<f64> {
        let k = self.partition.k();
        let n = recent_states.len();
        let mut p = vec![0.0; k];
        for (step, (w, m)) in self.weights.iter().zip(&self.matrices).enumerate() {
            let Some(idx) = n.checked_sub(step + 1) else { continue };
            let row = &m.probabilities[recent_states[idx]];
            for i in 0..k {
                p[i] += w * row[i];
            }
        }
        p
    }

    /// Most probable next state; ties go to the lower index.
    pub fn predict_state(&self, recent_states: &[usize]) -> usize {
        let p = self.state_distribution(recent_states);
        (0..p.len()).fold(0, |b, i| if p[i] > p[b] { i } else { b })
    }

    pub fn relative_correction(&self, recent_states: &[usize]) -> f64 {
        self.partition.midpoint(self.predict_state(recent_states))
    }
}

/// `X̂_t + mid(argmax_i P_i)·Y_{t−1}`.
pub fn weighted_markov_forecast(
    z: &[f64],
    partition: &StatePartition,
    order: usize,
    fitted_next: f64,
    y_prev: f64,
) -> Result<f64> {
    let model = WeightedMarkovModel::fit(z, partition, order)?;
    let states = partition.states(z);
    Ok(fitted_next + model.relative_correction(&states) * y_prev)
}

pub fn comprehensive_correction(fuzzy: f64, weighted: f64) -> f64 {
    0.5 * (fuzzy + weighted)
}

/// One corrected forecast step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectionStep {
    pub svr: f64,
    pub fuzzy: f64,
    pub weighted: f64,
    pub comprehensive: f64,
}

/// Fuzzy and weighted chains fitted once on in-sample residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovCorrector {
    pub fuzzy: FuzzyStateModel,
    pub weighted: WeightedMarkovModel,
    pub midpoint: MidpointReading,
    z: Vec<f64>,
}

impl MarkovCorrector {
    pub fn fit(z: &[f64], config: &MarkovConfig) -> Result<Self> {
        let partition = partition(z, config.states, config.partition)?;
        Ok(Self {
            fuzzy: FuzzyStateModel::fit(z, &partition, config.membership)?,
            weighted: WeightedMarkovModel::fit(z, &partition, config.order)?,
            midpoint: config.midpoint,
            z: z.to_vec(),
        })
    }

    pub fn partition(&self) -> &StatePartition {
        &self.fuzzy.partition
    }

    /// Corrects a multi-step forecast path. Matrices stay fixed; after the
    /// first step the previous corrected forecast stands in for `Y_{t−1}`
    /// and its implied residual is appended to the history.
    pub fn correct_path(&self, svr_path: &[f64], last_actual: f64) -> Result<Vec<CorrectionStep>> {
        let mut z = self.z.clone();
        let mut states = self.partition().states(&z);
        let mut y_prev = last_actual;
        let mut out = Vec::with_capacity(svr_path.len());
        for (t, &svr) in svr_path.iter().enumerate() {
            if y_prev == 0.0 {
                return Err(MarkovError::ZeroDenominator { index: t });
            }
            let z_last = *z.last().expect("fitted on a nonempty series");
            let fuzzy = svr + self.fuzzy.relative_correction(z_last, self.midpoint) * y_prev;
            let weighted = svr + self.weighted.relative_correction(&states) * y_prev;
            let comprehensive = comprehensive_correction(fuzzy, weighted);
            let z_next = (comprehensive - svr) / y_prev;
            z.push(z_next);
            states.push(self.partition().state_of(z_next));
            out.push(CorrectionStep {
                svr,
                fuzzy,
                weighted,
                comprehensive,
            });
            y_prev = comprehensive;
        }
        Ok(out)
    }
}

// Lanczos approximation (g = 7, n = 9).
fn ln_gamma(x: f64) -> f64 {
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + 7.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn regularized_gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let gln = ln_gamma(a);
    if x < a + 1.0 {
        let (mut ap, mut sum) = (a, 1.0 / a);
        let mut del = sum;
        for _ in 0..1000 {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        (sum.ln() - x + a * x.ln() - gln).exp()
    } else {
        // Lentz continued fraction for Q(a, x).
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..1000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        1.0 - (-x + a * x.ln() - gln).exp() * h
    }
}

pub fn chi_square_cdf(x: f64, dof: f64) -> f64 {
    regularized_gamma_p(0.5 * dof, 0.5 * x)
}

/// Inverse χ² CDF by bracketing and bisection.
pub fn chi_square_quantile(p: f64, dof: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0 && dof > 0.0);
    let mut hi = dof.max(1.0);
    while chi_square_cdf(hi, dof) < p {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi_square_cdf(mid, dof) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}
