//! Orthogonal discrete wavelet transform and universal-threshold denoising.
//!
//! Analysis is the correlation `a[n] = Σ_k h[k]·x[2n+k]` (and likewise for
//! `d` with the quadrature mirror `g[k] = (−1)^k h[F−1−k]`), synthesis is its
//! adjoint. Two boundary modes are supported:
//!
//! * `Symmetric`: half-point reflection. Every coefficient that touches the
//!   signal is kept, so band lengths grow to `⌊(N−1)/2⌋ + F/2` and inversion
//!   is exact. The frame is redundant, so coefficient energy exceeds signal
//!   energy.
//! * `Periodization`: circular wrap with `N/2` coefficients per band. The
//!   transform is orthogonal and preserves energy, but each level needs an
//!   even length.

use std::str::FromStr;

use thiserror::Error;

use crate::series::Series;

#[derive(Debug, Error, PartialEq)]
pub enum WaveletError {
    #[error("signal length {len} is shorter than the {taps}-tap filter")]
    TooShort { len: usize, taps: usize },
    #[error("level {level} is outside 1..={max} for length {len}")]
    InvalidLevel { level: usize, max: usize, len: usize },
    #[error("periodization needs a length divisible by 2^{level}, got {len}")]
    NotDyadic { len: usize, level: usize },
    #[error("decomposition was made with {made}, not {asked}")]
    SpecMismatch { made: String, asked: String },
    #[error("non-finite value in signal")]
    NonFinite,
}

impl WaveletError {
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Self::SpecMismatch { .. })
    }
}

type Result<T> = std::result::Result<T, WaveletError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Family {
    #[default]
    Coiflet3,
    Daubechies4,
}

impl Family {
    /// Scaling (low-pass synthesis) filter, normalized so `Σh = √2`.
    pub fn scaling_filter(self) -> &'static [f64] {
        match self {
            Family::Coiflet3 => &COIF3,
            Family::Daubechies4 => &DB4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Coiflet3 => "coif3",
            Family::Daubechies4 => "db4",
        }
    }
}

impl FromStr for Family {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "coif3" | "coiflet3" => Ok(Family::Coiflet3),
            "db4" | "daubechies4" => Ok(Family::Daubechies4),
            other => Err(format!("unknown wavelet family `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdRule {
    #[default]
    UniversalSoft,
    UniversalHard,
}

impl FromStr for ThresholdRule {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "universal_soft" | "soft" => Ok(Self::UniversalSoft),
            "universal_hard" | "hard" => Ok(Self::UniversalHard),
            other => Err(format!("unknown threshold rule `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Extension {
    #[default]
    Symmetric,
    Periodization,
}

impl FromStr for Extension {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "symmetric" => Ok(Self::Symmetric),
            "periodization" => Ok(Self::Periodization),
            other => Err(format!("unknown extension mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WaveletSpec {
    pub family: Family,
    pub level: usize,
    pub threshold_rule: ThresholdRule,
    pub extension: Extension,
}

impl Default for WaveletSpec {
    fn default() -> Self {
        Self {
            family: Family::Coiflet3,
            level: 3,
            threshold_rule: ThresholdRule::UniversalSoft,
            extension: Extension::Symmetric,
        }
    }
}

impl WaveletSpec {
    fn describe(&self) -> String {
        format!("{} level {} {:?}", self.family.name(), self.level, self.extension)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveletDecomposition {
    pub approx: Vec<f64>,
    /// Detail bands, finest (level 1) first.
    pub details: Vec<Vec<f64>>,
    pub original_length: usize,
    /// Input length at each level, level 1 first.
    pub level_lengths: Vec<usize>,
    pub family: Family,
    pub extension: Extension,
}

impl WaveletDecomposition {
    pub fn level(&self) -> usize {
        self.details.len()
    }

    /// All coefficients, approximation first.
    pub fn coefficients(&self) -> impl Iterator<Item = f64> + '_ {
        self.approx
            .iter()
            .chain(self.details.iter().flatten())
            .copied()
    }
}

fn highpass(h: &[f64]) -> Vec<f64> {
    let f = h.len();
    (0..f)
        .map(|k| if k % 2 == 0 { h[f - 1 - k] } else { -h[f - 1 - k] })
        .collect()
}

fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let r = i.rem_euclid(period) as usize;
    if r < n {
        r
    } else {
        2 * n - 1 - r
    }
}

fn first_index(taps: usize) -> isize {
    1 - (taps / 2) as isize
}

fn analyze(x: &[f64], h: &[f64], g: &[f64], ext: Extension) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let f = h.len();
    let (start, count) = match ext {
        Extension::Symmetric => (first_index(f), (n - 1) / 2 + f / 2),
        Extension::Periodization => (0, n / 2),
    };
    let mut a = Vec::with_capacity(count);
    let mut d = Vec::with_capacity(count);
    for i in 0..count {
        let base = 2 * (start + i as isize);
        let (mut sa, mut sd) = (0.0, 0.0);
        for k in 0..f {
            let pos = base + k as isize;
            let xv = match ext {
                Extension::Symmetric => x[reflect(pos, n)],
                Extension::Periodization => x[pos.rem_euclid(n as isize) as usize],
            };
            sa += h[k] * xv;
            sd += g[k] * xv;
        }
        a.push(sa);
        d.push(sd);
    }
    (a, d)
}

fn synthesize(a: &[f64], d: &[f64], h: &[f64], g: &[f64], n: usize, ext: Extension) -> Vec<f64> {
    let f = h.len();
    let start = match ext {
        Extension::Symmetric => first_index(f),
        Extension::Periodization => 0,
    };
    let mut out = vec![0.0; n];
    for i in 0..a.len() {
        let base = 2 * (start + i as isize);
        for k in 0..f {
            let pos = base + k as isize;
            let m = match ext {
                Extension::Symmetric if pos < 0 || pos >= n as isize => continue,
                Extension::Symmetric => pos as usize,
                Extension::Periodization => pos.rem_euclid(n as isize) as usize,
            };
            out[m] += h[k] * a[i] + g[k] * d[i];
        }
    }
    out
}

fn check_signal(x: &[f64], spec: &WaveletSpec) -> Result<()> {
    let taps = spec.family.scaling_filter().len();
    let n = x.len();
    if n < taps {
        return Err(WaveletError::TooShort { len: n, taps });
    }
    let max = (usize::BITS - 1 - n.leading_zeros()) as usize;
    if spec.level == 0 || spec.level > max {
        return Err(WaveletError::InvalidLevel {
            level: spec.level,
            max,
            len: n,
        });
    }
    if spec.extension == Extension::Periodization && n % (1 << spec.level) != 0 {
        return Err(WaveletError::NotDyadic {
            len: n,
            level: spec.level,
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(WaveletError::NonFinite);
    }
    Ok(())
}

/// Multilevel analysis.
pub fn dwt_forward(x: &[f64], spec: &WaveletSpec) -> Result<WaveletDecomposition> {
    check_signal(x, spec)?;
    let h = spec.family.scaling_filter();
    let g = highpass(h);
    let mut approx = x.to_vec();
    let mut details = Vec::with_capacity(spec.level);
    let mut level_lengths = Vec::with_capacity(spec.level);
    for _ in 0..spec.level {
        level_lengths.push(approx.len());
        let (a, d) = analyze(&approx, h, &g, spec.extension);
        details.push(d);
        approx = a;
    }
    Ok(WaveletDecomposition {
        approx,
        details,
        original_length: x.len(),
        level_lengths,
        family: spec.family,
        extension: spec.extension,
    })
}

/// Multilevel synthesis, trimmed to the original length.
pub fn dwt_inverse(decomp: &WaveletDecomposition, spec: &WaveletSpec) -> Result<Vec<f64>> {
    if decomp.family != spec.family || decomp.level() != spec.level || decomp.extension != spec.extension {
        let made = WaveletSpec {
            family: decomp.family,
            level: decomp.level(),
            extension: decomp.extension,
            ..*spec
        };
        return Err(WaveletError::SpecMismatch {
            made: made.describe(),
            asked: spec.describe(),
        });
    }
    let h = spec.family.scaling_filter();
    let g = highpass(h);
    let mut approx = decomp.approx.clone();
    for lvl in (0..decomp.level()).rev() {
        approx = synthesize(
            &approx,
            &decomp.details[lvl],
            h,
            &g,
            decomp.level_lengths[lvl],
            decomp.extension,
        );
    }
    Ok(approx)
}

/// `median(|d₁|) / 0.6745` from the finest detail band.
pub fn noise_sigma(decomp: &WaveletDecomposition) -> f64 {
    let mut abs: Vec<f64> = decomp.details[0].iter().map(|v| v.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let n = abs.len();
    let median = if n % 2 == 1 {
        abs[n / 2]
    } else {
        0.5 * (abs[n / 2 - 1] + abs[n / 2])
    };
    median / 0.6745
}

/// `σ̂·sqrt(2 ln N)`.
pub fn universal_threshold(decomp: &WaveletDecomposition) -> f64 {
    noise_sigma(decomp) * (2.0 * (decomp.original_length as f64).ln()).sqrt()
}

pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v.abs() <= t {
        0.0
    } else {
        v - t * v.signum()
    }
}

pub fn hard_threshold(v: f64, t: f64) -> f64 {
    if v.abs() <= t {
        0.0
    } else {
        v
    }
}

/// Thresholds every detail band with the universal threshold and
/// reconstructs.
pub fn denoise(x: &[f64], spec: &WaveletSpec) -> Result<Vec<f64>> {
    let decomp = dwt_forward(x, spec)?;
    let t = universal_threshold(&decomp);
    apply_threshold(decomp, spec, t)
}

/// As [`denoise`] with a caller-chosen threshold.
pub fn denoise_with_threshold(x: &[f64], spec: &WaveletSpec, threshold: f64) -> Result<Vec<f64>> {
    let decomp = dwt_forward(x, spec)?;
    apply_threshold(decomp, spec, threshold)
}

fn apply_threshold(mut decomp: WaveletDecomposition, spec: &WaveletSpec, t: f64) -> Result<Vec<f64>> {
    let rule = match spec.threshold_rule {
        ThresholdRule::UniversalSoft => soft_threshold,
        ThresholdRule::UniversalHard => hard_threshold,
    };
    for band in &mut decomp.details {
        for v in band.iter_mut() {
            *v = rule(*v, t);
        }
    }
    dwt_inverse(&decomp, spec)
}

/// Denoises a series, keeping its timestamps.
pub fn denoise_series(series: &Series, spec: &WaveletSpec) -> crate::Result<Series> {
    let values = denoise(series.values(), spec)?;
    Ok(series.with_values(values)?)
}

// Scaling filters (reconstruction low-pass), from the standard tables.
#[rustfmt::skip]
const COIF3: [f64; 18] = [
    -0.003793512864380802, 0.007782596425672746, 0.023452696142077168,
    -0.06577191128146936, -0.06112339000297255, 0.40517690240911824,
    0.7937772226260872, 0.42848347637737, -0.07179982161915484,
    -0.08230192710629983, 0.03455502757329774, 0.015880544863669452,
    -0.009007976136730624, -0.0025745176881367972, 0.0011175187708306303,
    0.0004662169598204029, -7.0983302506379e-05, -3.459977319727278e-05,
];

#[rustfmt::skip]
const DB4: [f64; 8] = [
    0.2303778133088965, 0.7148465705529157, 0.6308807679298589,
    -0.027983769416859854, -0.18703481171909309, 0.030841381835560764,
    0.0328830116668852, -0.010597401785069032,
];

#[cfg(test)]
mod tests {
    use super::*;

    fn filters_are_orthonormal(h: &[f64]) {
        let sum: f64 = h.iter().sum();
        assert!((sum - 2f64.sqrt()).abs() < 1e-12, "Σh = {sum}");
        for shift in (0..h.len()).step_by(2) {
            let ip: f64 = (0..h.len() - shift).map(|k| h[k] * h[k + shift]).sum();
            let want = if shift == 0 { 1.0 } else { 0.0 };
            assert!((ip - want).abs() < 1e-12, "shift {shift}: {ip}");
        }
        let g = highpass(h);
        for shift in (0..h.len()).step_by(2) {
            let ip: f64 = (0..h.len() - shift).map(|k| h[k] * g[k + shift]).sum();
            assert!(ip.abs() < 1e-12);
        }
    }

    #[test]
    fn coif3_and_db4_filters() {
        filters_are_orthonormal(&COIF3);
        filters_are_orthonormal(&DB4);
    }

    #[test]
    fn symmetric_band_lengths() {
        let x: Vec<f64> = (0..70).map(|i| (i as f64 * 0.3).sin()).collect();
        let d = dwt_forward(&x, &WaveletSpec::default()).unwrap();
        // ⌊(N−1)/2⌋ + F/2 at each level: 70 → 43 → 30 → 23.
        assert_eq!(d.level_lengths, vec![70, 43, 30]);
        assert_eq!(d.approx.len(), 23);
    }

    #[test]
    fn zero_and_constant_signals() {
        let spec = WaveletSpec::default();
        let z = dwt_forward(&[0.0; 64], &spec).unwrap();
        assert!(z.coefficients().all(|c| c == 0.0));

        let c = dwt_forward(&[3.5; 64], &spec).unwrap();
        assert!(c.details.iter().flatten().all(|v| v.abs() <= 1e-9));
        let mut flat = c.clone();
        flat.details.iter_mut().for_each(|b| b.fill(0.0));
        let back = dwt_inverse(&flat, &spec).unwrap();
        assert!(back.iter().all(|v| (v - 3.5).abs() <= 1e-9));
    }

    #[test]
    fn too_short_and_bad_level() {
        let spec = WaveletSpec::default();
        assert!(matches!(dwt_forward(&[1.0; 10], &spec), Err(WaveletError::TooShort { .. })));
        let deep = WaveletSpec { level: 7, ..spec };
        assert!(matches!(dwt_forward(&[1.0; 100], &deep), Err(WaveletError::InvalidLevel { .. })));
    }

    #[test]
    fn spec_mismatch_on_inverse() {
        let spec = WaveletSpec::default();
        let d = dwt_forward(&[1.0; 64], &spec).unwrap();
        let other = WaveletSpec { level: 2, ..spec };
        assert!(matches!(dwt_inverse(&d, &other), Err(WaveletError::SpecMismatch { .. })));
    }

    #[test]
    fn thresholds() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
        assert_eq!(hard_threshold(3.0, 1.0), 3.0);
        assert_eq!(hard_threshold(-0.5, 1.0), 0.0);
    }
}
