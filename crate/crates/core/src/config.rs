//! Run configuration in a flat `section.key = value` format.
//!
//! Blank lines and `#` comments are ignored. Unknown keys, repeated keys and
//! out-of-range values are errors. Missing keys keep their defaults.
//! [`RunConfig::snapshot`] writes every key back out in the same format.
//!
//! ```text
//! # two parameter couples for the close-price models
//! svm.params_primary = 0.1245, 639.559
//! combine.rho = 0.5
//! evaluate.subjective_weights = 0.15, 0.2, 0.3, 0.2, 0.15
//! ```

use std::{collections::HashSet, fmt::Display, path::Path, str::FromStr};

use thiserror::Error;

use crate::{
    combine::WeightScheme,
    evaluate::{EvaluateConfig, TheilVariant},
    ga::{GaBounds, GaConfig},
    markov::{MarkovConfig, Membership, MidpointReading, PartitionRule},
    phase_space::DelayRule,
    svm::{KernelKind, KernelSpec},
    wavelet::{Extension, Family, ThresholdRule, WaveletSpec},
};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("config line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("config line {line}: key `{key}` given twice")]
    DuplicateKey { line: usize, key: String },
    #[error("invalid value for `{key}`: {message}")]
    InvalidValue { key: String, message: String },
}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmbeddingMode {
    Auto,
    #[default]
    Fixed,
}

impl FromStr for EmbeddingMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "auto" => Ok(Self::Auto),
            "fixed" => Ok(Self::Fixed),
            other => Err(format!("unknown embedding mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingConfig {
    pub mode: EmbeddingMode,
    pub tau: usize,
    pub dim: usize,
    pub ami_bins: usize,
    pub max_lag: usize,
    pub max_dim: usize,
    pub fnn_threshold_percent: f64,
    pub fnn_distance_threshold: f64,
    pub delay_rule: DelayRule,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            mode: EmbeddingMode::Fixed,
            tau: 1,
            dim: 4,
            ami_bins: 16,
            max_lag: 20,
            max_dim: 8,
            fnn_threshold_percent: 1.0,
            fnn_distance_threshold: 15.0,
            delay_rule: DelayRule::FirstLocalMinimum,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveletConfig {
    pub spec: WaveletSpec,
    pub enabled: bool,
}

impl Default for WaveletConfig {
    fn default() -> Self {
        Self {
            spec: WaveletSpec::default(),
            enabled: true,
        }
    }
}

/// A kernel width and regularization pair.
pub type ParamCouple = (f64, f64);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmConfig {
    pub kernel: KernelKind,
    /// First close-price couple (also the single couple of method 3).
    pub params_primary: ParamCouple,
    /// Second close-price couple (also the plain model of method 4).
    pub params_secondary: ParamCouple,
    /// Couple for the OHLC-input model.
    pub params_ohlc: ParamCouple,
    /// Replace the configured couples by GA-tuned ones.
    pub tune: bool,
    pub poly_degree: u32,
    pub sigmoid_c: f64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            kernel: KernelKind::MexicanHat,
            params_primary: (0.1245, 639.559),
            params_secondary: (0.0241, 687.4275),
            params_ohlc: (0.0064, 591.9507),
            tune: false,
            poly_degree: 2,
            sigmoid_c: 0.0,
        }
    }
}

impl SvmConfig {
    /// Kernel of the configured kind with width parameter `a`.
    pub fn kernel_spec(&self, a: f64) -> KernelSpec {
        match self.kernel {
            KernelKind::MexicanHat => KernelSpec::MexicanHat { a },
            KernelKind::Rbf => KernelSpec::Rbf { sigma: a },
            KernelKind::Polynomial => KernelSpec::Polynomial {
                c: a,
                degree: self.poly_degree,
            },
            KernelKind::Sigmoid => KernelSpec::Sigmoid {
                b: a,
                c: self.sigmoid_c,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombineConfig {
    /// Stage-1 schemes of the two-stage protocol.
    pub methods: Vec<WeightScheme>,
    pub rho: f64,
    pub rough_set_classes: usize,
}

impl Default for CombineConfig {
    fn default() -> Self {
        Self {
            methods: vec![
                WeightScheme::RoughSet,
                WeightScheme::GreyRelation,
                WeightScheme::Lsm,
                WeightScheme::EffectiveDegree,
                WeightScheme::OptimalGrey,
            ],
            rho: 0.5,
            rough_set_classes: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub embedding: EmbeddingConfig,
    pub wavelet: WaveletConfig,
    pub svm: SvmConfig,
    pub ga: GaConfig,
    pub markov: MarkovConfig,
    pub combine: CombineConfig,
    pub evaluate: EvaluateConfig,
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    RunConfig::parse(&text)
}

fn invalid(key: &str, message: impl Display) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        message: message.to_string(),
    }
}

fn scalar<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: Display,
{
    v.parse::<T>().map_err(|e| invalid(key, format!("`{v}`: {e}")))
}

fn list(v: &str) -> Vec<&str> {
    v.trim_start_matches(['[', '('])
        .trim_end_matches([']', ')'])
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect()
}

fn floats(key: &str, v: &str) -> Result<Vec<f64>> {
    list(v).into_iter().map(|s| scalar::<f64>(key, s)).collect()
}

fn couple(key: &str, v: &str) -> Result<ParamCouple> {
    match floats(key, v)?.as_slice() {
        &[a, g] => Ok((a, g)),
        other => Err(invalid(key, format!("expected two numbers `a, gamma`, got {}", other.len()))),
    }
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        other => Err(invalid(key, format!("expected a boolean, got `{other}`"))),
    }
}

fn join<T: Display>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: line_no,
                message: format!("expected `section.key = value`, got `{line}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let canonical = if key == "combine.identification_coefficient" { "combine.rho" } else { key };
            if !seen.insert(canonical.to_string()) {
                return Err(ConfigError::DuplicateKey {
                    line: line_no,
                    key: key.to_string(),
                });
            }
            cfg.set(canonical, value).map_err(|e| match e {
                ConfigError::UnknownKey { key, .. } => ConfigError::UnknownKey { line: line_no, key },
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let e = &mut self.embedding;
        let w = &mut self.wavelet;
        let s = &mut self.svm;
        let g = &mut self.ga;
        let m = &mut self.markov;
        let c = &mut self.combine;
        let ev = &mut self.evaluate;
        match key {
            "embedding.mode" => e.mode = scalar(key, v)?,
            "embedding.tau" => e.tau = scalar(key, v)?,
            "embedding.dim" => e.dim = scalar(key, v)?,
            "embedding.ami_bins" => e.ami_bins = scalar(key, v)?,
            "embedding.max_lag" => e.max_lag = scalar(key, v)?,
            "embedding.max_dim" => e.max_dim = scalar(key, v)?,
            "embedding.fnn_threshold_percent" => e.fnn_threshold_percent = scalar(key, v)?,
            "embedding.fnn_distance_threshold" => e.fnn_distance_threshold = scalar(key, v)?,
            "embedding.delay_rule" => e.delay_rule = scalar(key, v)?,
            "wavelet.family" => w.spec.family = scalar::<Family>(key, v)?,
            "wavelet.level" => w.spec.level = scalar(key, v)?,
            "wavelet.threshold_rule" => w.spec.threshold_rule = scalar::<ThresholdRule>(key, v)?,
            "wavelet.extension" => w.spec.extension = scalar::<Extension>(key, v)?,
            "wavelet.enabled" => w.enabled = boolean(key, v)?,
            "svm.kernel" => s.kernel = scalar(key, v)?,
            "svm.params_primary" => s.params_primary = couple(key, v)?,
            "svm.params_secondary" => s.params_secondary = couple(key, v)?,
            "svm.params_ohlc" => s.params_ohlc = couple(key, v)?,
            "svm.tune" => s.tune = boolean(key, v)?,
            "svm.poly_degree" => s.poly_degree = scalar(key, v)?,
            "svm.sigmoid_c" => s.sigmoid_c = scalar(key, v)?,
            "ga.population" => g.population = scalar(key, v)?,
            "ga.generations" => g.generations = scalar(key, v)?,
            "ga.crossover_rate" => g.crossover_rate = scalar(key, v)?,
            "ga.mutation_rate" => g.mutation_rate = scalar(key, v)?,
            "ga.seed" => g.seed = scalar(key, v)?,
            "ga.eta1" => g.eta1 = scalar(key, v)?,
            "ga.eta2" => g.eta2 = scalar(key, v)?,
            "ga.a_min" => g.bounds.a_min = scalar(key, v)?,
            "ga.a_max" => g.bounds.a_max = scalar(key, v)?,
            "ga.gamma_min" => g.bounds.gamma_min = scalar(key, v)?,
            "ga.gamma_max" => g.bounds.gamma_max = scalar(key, v)?,
            "markov.states" => m.states = scalar(key, v)?,
            "markov.partition" => m.partition = scalar::<PartitionRule>(key, v)?,
            "markov.order" => m.order = scalar(key, v)?,
            "markov.alpha" => m.alpha = scalar(key, v)?,
            "markov.membership" => {
                m.membership = match v {
                    "triangular" => Membership::Triangular,
                    "crisp" => Membership::Crisp,
                    other => return Err(invalid(key, format!("unknown membership `{other}`"))),
                }
            }
            "markov.fuzzy_midpoint" => m.midpoint = scalar::<MidpointReading>(key, v)?,
            "combine.methods" => {
                c.methods = list(v)
                    .into_iter()
                    .map(|s| scalar::<WeightScheme>(key, s))
                    .collect::<Result<_>>()?
            }
            "combine.rho" => c.rho = scalar(key, v)?,
            "combine.rough_set_classes" => c.rough_set_classes = scalar(key, v)?,
            "evaluate.feasibility_threshold" => ev.feasibility_threshold = scalar(key, v)?,
            "evaluate.subjective_weights" => {
                let ws = floats(key, v)?;
                ev.subjective_weights = ws
                    .try_into()
                    .map_err(|ws: Vec<f64>| invalid(key, format!("expected 5 weights, got {}", ws.len())))?;
            }
            "evaluate.theil" => ev.theil = scalar::<TheilVariant>(key, v)?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    line: 0,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Range checks; normalizes the criterion weights and `η₁, η₂`.
    pub fn validate(&mut self) -> Result<()> {
        let e = &self.embedding;
        if e.tau == 0 || e.dim == 0 || e.max_lag == 0 || e.max_dim == 0 {
            return Err(invalid("embedding", "tau, dim, max_lag and max_dim must be ≥ 1"));
        }
        if e.ami_bins < 2 {
            return Err(invalid("embedding.ami_bins", "must be ≥ 2"));
        }
        if !(e.fnn_threshold_percent >= 0.0 && e.fnn_threshold_percent <= 100.0) {
            return Err(invalid("embedding.fnn_threshold_percent", "must lie in [0, 100]"));
        }
        if !(e.fnn_distance_threshold > 0.0) {
            return Err(invalid("embedding.fnn_distance_threshold", "must be > 0"));
        }
        if self.wavelet.spec.level == 0 {
            return Err(invalid("wavelet.level", "must be ≥ 1"));
        }
        for (key, (a, g)) in [
            ("svm.params_primary", self.svm.params_primary),
            ("svm.params_secondary", self.svm.params_secondary),
            ("svm.params_ohlc", self.svm.params_ohlc),
        ] {
            if !(a > 0.0 && g > 0.0 && a.is_finite() && g.is_finite()) {
                return Err(invalid(key, "kernel parameter and gamma must be > 0"));
            }
        }
        if self.svm.poly_degree == 0 {
            return Err(invalid("svm.poly_degree", "must be ≥ 1"));
        }
        self.ga = self.ga.validated().map_err(|e| invalid("ga", e))?;
        let m = &self.markov;
        if m.states < 2 {
            return Err(invalid("markov.states", "must be ≥ 2"));
        }
        if m.order == 0 {
            return Err(invalid("markov.order", "must be ≥ 1"));
        }
        if !(m.alpha > 0.0 && m.alpha < 1.0) {
            return Err(invalid("markov.alpha", "must lie in (0, 1)"));
        }
        let c = &self.combine;
        if !(c.rho > 0.0 && c.rho < 1.0) {
            return Err(invalid(
                "combine.rho",
                format!("identification_coefficient must lie in (0, 1), got {}", c.rho),
            ));
        }
        if c.rough_set_classes < 2 {
            return Err(invalid("combine.rough_set_classes", "must be ≥ 2"));
        }
        if c.methods.is_empty() {
            return Err(invalid("combine.methods", "at least one scheme is required"));
        }
        let ev = &mut self.evaluate;
        if !(ev.feasibility_threshold >= 0.0 && ev.feasibility_threshold.is_finite()) {
            return Err(invalid("evaluate.feasibility_threshold", "must be ≥ 0"));
        }
        let ws = ev.subjective_weights;
        let sum: f64 = ws.iter().sum();
        if ws.iter().any(|w| !(*w >= 0.0)) || !(sum > 0.0 && sum.is_finite()) {
            return Err(invalid(
                "evaluate.subjective_weights",
                "weights must be nonnegative with a positive sum",
            ));
        }
        if (sum - 1.0).abs() > 1e-12 {
            ev.subjective_weights = ws.map(|w| w / sum);
        }
        Ok(())
    }

    /// Every key with its effective value, one per line.
    pub fn snapshot(&self) -> String {
        let e = &self.embedding;
        let w = &self.wavelet;
        let s = &self.svm;
        let g = &self.ga;
        let m = &self.markov;
        let c = &self.combine;
        let ev = &self.evaluate;
        let lower = |x: &dyn std::fmt::Debug| {
            let name = format!("{x:?}");
            let mut out = String::new();
            for (i, ch) in name.chars().enumerate() {
                if ch.is_uppercase() && i > 0 {
                    out.push('_');
                }
                out.extend(ch.to_lowercase());
            }
            out
        };
        let theil = match ev.theil {
            TheilVariant::ForecastDenominator => "forecast",
            TheilVariant::Classical => "classical",
        };
        let threshold = match w.spec.threshold_rule {
            ThresholdRule::UniversalSoft => "universal_soft",
            ThresholdRule::UniversalHard => "universal_hard",
        };
        let lines = [
            ("embedding.mode", lower(&e.mode)),
            ("embedding.tau", e.tau.to_string()),
            ("embedding.dim", e.dim.to_string()),
            ("embedding.ami_bins", e.ami_bins.to_string()),
            ("embedding.max_lag", e.max_lag.to_string()),
            ("embedding.max_dim", e.max_dim.to_string()),
            ("embedding.fnn_threshold_percent", e.fnn_threshold_percent.to_string()),
            ("embedding.fnn_distance_threshold", e.fnn_distance_threshold.to_string()),
            ("embedding.delay_rule", lower(&e.delay_rule)),
            ("wavelet.family", w.spec.family.name().to_string()),
            ("wavelet.level", w.spec.level.to_string()),
            ("wavelet.threshold_rule", threshold.to_string()),
            ("wavelet.extension", lower(&w.spec.extension)),
            ("wavelet.enabled", w.enabled.to_string()),
            ("svm.kernel", s.kernel.to_string()),
            ("svm.params_primary", join([s.params_primary.0, s.params_primary.1])),
            ("svm.params_secondary", join([s.params_secondary.0, s.params_secondary.1])),
            ("svm.params_ohlc", join([s.params_ohlc.0, s.params_ohlc.1])),
            ("svm.tune", s.tune.to_string()),
            ("svm.poly_degree", s.poly_degree.to_string()),
            ("svm.sigmoid_c", s.sigmoid_c.to_string()),
            ("ga.population", g.population.to_string()),
            ("ga.generations", g.generations.to_string()),
            ("ga.crossover_rate", g.crossover_rate.to_string()),
            ("ga.mutation_rate", g.mutation_rate.to_string()),
            ("ga.seed", g.seed.to_string()),
            ("ga.eta1", g.eta1.to_string()),
            ("ga.eta2", g.eta2.to_string()),
            ("ga.a_min", g.bounds.a_min.to_string()),
            ("ga.a_max", g.bounds.a_max.to_string()),
            ("ga.gamma_min", g.bounds.gamma_min.to_string()),
            ("ga.gamma_max", g.bounds.gamma_max.to_string()),
            ("markov.states", m.states.to_string()),
            ("markov.partition", lower(&m.partition)),
            ("markov.order", m.order.to_string()),
            ("markov.alpha", m.alpha.to_string()),
            ("markov.membership", lower(&m.membership)),
            ("markov.fuzzy_midpoint", lower(&m.midpoint)),
            ("combine.methods", join(c.methods.iter())),
            ("combine.rho", c.rho.to_string()),
            ("combine.rough_set_classes", c.rough_set_classes.to_string()),
            ("evaluate.feasibility_threshold", ev.feasibility_threshold.to_string()),
            ("evaluate.subjective_weights", join(ev.subjective_weights)),
            ("evaluate.theil", theil.to_string()),
        ];
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// GA bounds in effect.
    pub fn ga_bounds(&self) -> GaBounds {
        self.ga.bounds
    }
}
