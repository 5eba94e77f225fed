//! Delay embedding with delay chosen by average mutual information and
//! dimension chosen by false nearest neighbours.
//!
//! State vectors look backwards: row `k` holds
//! `[y(t), y(t−τ), …, y(t−(D−1)τ)]` with `t = k + (D−1)τ`, and the
//! supervised target for that row is `y(t+1)`.

use std::str::FromStr;

use thiserror::Error;

use crate::{
    par::{self, Execution},
    svm::SupervisedSet,
};

#[derive(Debug, Error, PartialEq)]
pub enum PhaseSpaceError {
    #[error("series is constant; histogram range has zero width")]
    ConstantSeries,
    #[error("series of length {len} is too short: {what}")]
    TooShort { len: usize, what: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl PhaseSpaceError {
    pub fn is_data_error(&self) -> bool {
        matches!(self, Self::ConstantSeries | Self::TooShort { .. })
    }
}

type Result<T> = std::result::Result<T, PhaseSpaceError>;

/// Average mutual information per lag.
#[derive(Debug, Clone, PartialEq)]
pub struct AmiProfile {
    pub lags: Vec<usize>,
    /// I(τ) in bits.
    pub values: Vec<f64>,
    pub bins: usize,
}

/// How [`select_delay`] reads the AMI profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DelayRule {
    /// First interior local minimum, falling back to the global minimum.
    #[default]
    FirstLocalMinimum,
    GlobalMinimum,
}

impl FromStr for DelayRule {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "first_local_minimum" | "first_minimum" => Ok(Self::FirstLocalMinimum),
            "global_minimum" => Ok(Self::GlobalMinimum),
            other => Err(format!("unknown delay rule `{other}`")),
        }
    }
}

/// Percentage of false nearest neighbours per embedding dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FnnProfile {
    pub dims: Vec<usize>,
    pub false_percent: Vec<f64>,
    pub threshold_percent: f64,
    /// Set when the series ran out of points before `max_dim`.
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DimSelection {
    pub dim: usize,
    /// No dimension met the threshold; `dim` is the largest one tried.
    pub saturated: bool,
}

/// Delay-embedded state vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedMatrix {
    pub rows: Vec<Vec<f64>>,
    pub tau: usize,
    pub dim: usize,
    pub source_length: usize,
}

impl EmbeddedMatrix {
    /// Source index of the newest component of row `k`.
    pub fn source_index(&self, k: usize) -> usize {
        k + (self.dim - 1) * self.tau
    }
}

fn value_range(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

fn bin_indices(values: &[f64], bins: usize) -> Result<Vec<usize>> {
    let (lo, hi) = value_range(values);
    let width = hi - lo;
    if width <= 0.0 {
        return Err(PhaseSpaceError::ConstantSeries);
    }
    Ok(values
        .iter()
        .map(|&v| (((v - lo) / width * bins as f64) as usize).min(bins - 1))
        .collect())
}

fn mi_from_bins(idx: &[usize], lag: usize, bins: usize) -> f64 {
    let n = idx.len() - lag;
    let mut joint = vec![0usize; bins * bins];
    let mut pa = vec![0usize; bins];
    let mut pb = vec![0usize; bins];
    for k in lag..idx.len() {
        let (a, b) = (idx[k], idx[k - lag]);
        joint[a * bins + b] += 1;
        pa[a] += 1;
        pb[b] += 1;
    }
    let nf = n as f64;
    let mut mi = 0.0;
    for a in 0..bins {
        for b in 0..bins {
            let c = joint[a * bins + b];
            if c == 0 {
                continue;
            }
            let pab = c as f64 / nf;
            mi += pab * (pab * nf * nf / (pa[a] as f64 * pb[b] as f64)).log2();
        }
    }
    mi
}

/// Histogram mutual information between `y(k)` and `y(k−lag)`, in bits.
/// `lag = 0` gives the entropy of the marginal histogram.
pub fn mutual_information(values: &[f64], lag: usize, bins: usize) -> Result<f64> {
    if bins < 2 {
        return Err(PhaseSpaceError::InvalidParameter("bins must be ≥ 2".into()));
    }
    if values.len() <= lag + 1 {
        return Err(PhaseSpaceError::TooShort {
            len: values.len(),
            what: format!("lag {lag} needs more than {} points", lag + 1),
        });
    }
    let idx = bin_indices(values, bins)?;
    Ok(mi_from_bins(&idx, lag, bins))
}

/// AMI for lags `1..=max_lag` on an equal-width `bins`-bin grid over the
/// series range.
pub fn ami(values: &[f64], max_lag: usize, bins: usize) -> Result<AmiProfile> {
    if bins < 2 {
        return Err(PhaseSpaceError::InvalidParameter("bins must be ≥ 2".into()));
    }
    if max_lag == 0 {
        return Err(PhaseSpaceError::InvalidParameter("max_lag must be ≥ 1".into()));
    }
    if values.len() <= max_lag + 1 {
        return Err(PhaseSpaceError::TooShort {
            len: values.len(),
            what: format!("max_lag {max_lag} needs more than {} points", max_lag + 1),
        });
    }
    let idx = bin_indices(values, bins)?;
    let values = (1..=max_lag).map(|lag| mi_from_bins(&idx, lag, bins)).collect();
    Ok(AmiProfile {
        lags: (1..=max_lag).collect(),
        values,
        bins,
    })
}

/// Picks the delay from an AMI profile. Panics on an empty profile.
pub fn select_delay(profile: &AmiProfile, rule: DelayRule) -> usize {
    assert!(!profile.values.is_empty(), "empty AMI profile");
    let v = &profile.values;
    if rule == DelayRule::FirstLocalMinimum {
        if let Some(i) = (1..v.len().saturating_sub(1)).find(|&i| v[i] < v[i - 1] && v[i] <= v[i + 1]) {
            return profile.lags[i];
        }
    }
    let best = (0..v.len()).fold(0, |b, i| if v[i] < v[b] { i } else { b });
    profile.lags[best]
}

/// False-nearest-neighbour percentages for dims `1..=max_dim`.
///
/// A neighbour found at dimension `D` is false when the extra coordinate
/// `y(n − D·τ)` differs by more than `distance_threshold` times the
/// `D`-dimensional distance.
pub fn fnn(
    values: &[f64],
    tau: usize,
    max_dim: usize,
    ratio_threshold: f64,
    distance_threshold: f64,
) -> Result<FnnProfile> {
    fnn_with(
        values,
        tau,
        max_dim,
        ratio_threshold,
        distance_threshold,
        Execution::default(),
    )
}

pub fn fnn_with(
    values: &[f64],
    tau: usize,
    max_dim: usize,
    ratio_threshold: f64,
    distance_threshold: f64,
    exec: Execution,
) -> Result<FnnProfile> {
    if tau == 0 || max_dim == 0 {
        return Err(PhaseSpaceError::InvalidParameter(
            "tau and max_dim must be ≥ 1".into(),
        ));
    }
    if !(distance_threshold > 0.0) {
        return Err(PhaseSpaceError::InvalidParameter(
            "distance_threshold must be positive".into(),
        ));
    }
    let n = values.len();
    let (lo, hi) = value_range(values);
    // Distances below round-off of the series scale count as exact recurrences.
    let floor = 1e-9 * (hi - lo);
    let mut dims = Vec::new();
    let mut false_percent = Vec::new();
    let mut truncated = false;
    for d in 1..=max_dim {
        let first = d * tau;
        if n < first + 2 {
            truncated = true;
            break;
        }
        let points: Vec<usize> = (first..n).collect();
        let flags = par::map_slice(&points, exec, |&p| {
            let (q, dist) = nearest(values, &points, p, d, tau);
            let extra = (values[p - first] - values[q - first]).abs();
            extra > distance_threshold * dist.max(floor)
        });
        let count = flags.iter().filter(|&&f| f).count();
        dims.push(d);
        false_percent.push(100.0 * count as f64 / points.len() as f64);
    }
    if dims.is_empty() {
        return Err(PhaseSpaceError::TooShort {
            len: n,
            what: format!("FNN at dim 1 with tau {tau} needs {} points", tau + 2),
        });
    }
    Ok(FnnProfile {
        dims,
        false_percent,
        threshold_percent: ratio_threshold,
        truncated,
    })
}

// Exhaustive search; ties go to the smaller index.
fn nearest(values: &[f64], points: &[usize], p: usize, dim: usize, tau: usize) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for &q in points {
        if q == p {
            continue;
        }
        let d2: f64 = (0..dim)
            .map(|j| {
                let diff = values[p - j * tau] - values[q - j * tau];
                diff * diff
            })
            .sum();
        if d2 < best.1 {
            best = (q, d2);
        }
    }
    (best.0, best.1.sqrt())
}

/// Smallest dimension whose false percentage is within the profile's
/// threshold.
pub fn select_dim(profile: &FnnProfile) -> DimSelection {
    match profile
        .false_percent
        .iter()
        .position(|&p| p <= profile.threshold_percent)
    {
        Some(i) => DimSelection {
            dim: profile.dims[i],
            saturated: false,
        },
        None => DimSelection {
            dim: *profile.dims.last().expect("empty FNN profile"),
            saturated: true,
        },
    }
}

/// Backward delay embedding.
pub fn embed(values: &[f64], tau: usize, dim: usize) -> Result<EmbeddedMatrix> {
    if tau == 0 || dim == 0 {
        return Err(PhaseSpaceError::InvalidParameter(
            "tau and dim must be ≥ 1".into(),
        ));
    }
    let span = (dim - 1) * tau;
    if values.len() < span + 1 {
        return Err(PhaseSpaceError::TooShort {
            len: values.len(),
            what: format!("embedding at dim {dim}, tau {tau} needs {} points", span + 1),
        });
    }
    let rows = (span..values.len())
        .map(|t| (0..dim).map(|j| values[t - j * tau]).collect())
        .collect();
    Ok(EmbeddedMatrix {
        rows,
        tau,
        dim,
        source_length: values.len(),
    })
}

/// Embedded rows paired with their one-step-ahead targets.
pub fn supervised_pairs(values: &[f64], tau: usize, dim: usize) -> Result<SupervisedSet> {
    let m = embed(values, tau, dim)?;
    let pairs = m.rows.len() - 1;
    if pairs == 0 {
        return Err(PhaseSpaceError::TooShort {
            len: values.len(),
            what: "no row has a next-step target".into(),
        });
    }
    let inputs = m.rows[..pairs].to_vec();
    let targets = (0..pairs).map(|k| values[m.source_index(k) + 1]).collect();
    Ok(SupervisedSet::new(inputs, targets).expect("embedding rows are aligned and finite"))
}

/// The newest embedding window of `values`, i.e. the input that predicts
/// the point after the last one.
pub fn last_window(values: &[f64], tau: usize, dim: usize) -> Result<Vec<f64>> {
    let m = embed(values, tau, dim)?;
    Ok(m.rows.last().cloned().expect("embedding has at least one row"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embed_examples() {
        let ten: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(embed(&ten, 1, 4).unwrap().rows.len(), 7);

        let five = [1.0, 2.0, 3.0, 4.0, 5.0];
        let m = embed(&five, 2, 2).unwrap();
        assert_eq!(m.rows, vec![vec![3.0, 1.0], vec![4.0, 2.0], vec![5.0, 3.0]]);

        let m = embed(&five, 3, 1).unwrap();
        assert_eq!(m.rows.len(), 5);
        assert_eq!(m.rows[2], vec![3.0]);

        assert!(embed(&five, 2, 4).is_err());
    }

    #[test]
    fn supervised_targets_are_next_values() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let s = supervised_pairs(&v, 1, 3).unwrap();
        assert_eq!(s.inputs()[0], vec![3.0, 2.0, 1.0]);
        assert_eq!(s.targets(), &[4.0, 5.0, 6.0]);
        assert_eq!(last_window(&v, 1, 3).unwrap(), vec![6.0, 5.0, 4.0]);
    }

    #[test]
    fn delay_rules() {
        let p = |v: Vec<f64>| AmiProfile {
            lags: (1..=v.len()).collect(),
            values: v,
            bins: 16,
        };
        assert_eq!(select_delay(&p(vec![0.9, 0.3, 0.5, 0.2]), DelayRule::FirstLocalMinimum), 2);
        assert_eq!(select_delay(&p(vec![0.9, 0.3, 0.5, 0.2]), DelayRule::GlobalMinimum), 4);
        assert_eq!(select_delay(&p(vec![0.9, 0.7, 0.5, 0.2]), DelayRule::FirstLocalMinimum), 4);
        // Ties on the global minimum resolve to the smaller lag.
        assert_eq!(select_delay(&p(vec![0.1, 0.5, 0.1]), DelayRule::GlobalMinimum), 1);
    }

    #[test]
    fn dim_selection() {
        let p = |v: Vec<f64>, t: f64| FnnProfile {
            dims: (1..=v.len()).collect(),
            false_percent: v,
            threshold_percent: t,
            truncated: false,
        };
        assert_eq!(select_dim(&p(vec![40.0, 12.0, 0.5, 0.2], 1.0)).dim, 3);
        let s = select_dim(&p(vec![40.0, 12.0, 5.0], 1.0));
        assert_eq!((s.dim, s.saturated), (3, true));
        assert_eq!(select_dim(&p(vec![0.0, 0.0], 1.0)).dim, 1);
    }

    #[test]
    fn lag_zero_is_marginal_entropy() {
        // Four equally filled bins → 2 bits.
        let v: Vec<f64> = (0..400).map(|i| (i % 4) as f64).collect();
        let h = mutual_information(&v, 0, 4).unwrap();
        assert!((h - 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_series_is_rejected() {
        assert_eq!(ami(&[1.0; 50], 5, 16), Err(PhaseSpaceError::ConstantSeries));
    }

    #[test]
    fn fnn_truncates_short_series() {
        let v: Vec<f64> = (0..10).map(|i| (i as f64).sin()).collect();
        let p = fnn(&v, 3, 5, 1.0, 15.0).unwrap();
        assert!(p.truncated);
        assert_eq!(p.dims, vec![1, 2]);
    }
}
