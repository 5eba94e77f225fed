//! Real-coded genetic algorithm over the kernel width `a` and the
//! regularization `γ`.
//!
//! Operators: size-2 tournament selection, BLX-0.5 crossover, Gaussian
//! mutation with σ at 10% of each range (clipped to bounds) and one elite.
//! Every individual of every generation draws from its own ChaCha8 stream
//! (`generation·P + index`), so serial and parallel runs agree bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::{
    par::{self, Execution},
    svm::{self, KernelSpec, SupervisedSet, SvmError},
};

#[derive(Debug, Error, PartialEq)]
pub enum GaError {
    #[error("invalid GA configuration: {0}")]
    InvalidConfig(String),
    #[error("no individual produced a finite fitness")]
    NoFeasibleIndividual,
    #[error(transparent)]
    Svm(#[from] SvmError),
}

type Result<T> = std::result::Result<T, GaError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaBounds {
    pub a_min: f64,
    pub a_max: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
}

impl Default for GaBounds {
    fn default() -> Self {
        Self {
            a_min: 1e-3,
            a_max: 10.0,
            gamma_min: 1.0,
            gamma_max: 2000.0,
        }
    }
}

impl GaBounds {
    pub fn contains(&self, (a, g): (f64, f64)) -> bool {
        (self.a_min..=self.a_max).contains(&a) && (self.gamma_min..=self.gamma_max).contains(&g)
    }

    fn lo(&self) -> [f64; 2] {
        [self.a_min, self.gamma_min]
    }

    fn hi(&self) -> [f64; 2] {
        [self.a_max, self.gamma_max]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub seed: u64,
    pub bounds: GaBounds,
    pub eta1: f64,
    pub eta2: f64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 20,
            generations: 30,
            crossover_rate: 0.9,
            mutation_rate: 0.1,
            seed: 1,
            bounds: GaBounds::default(),
            eta1: 0.3,
            eta2: 0.7,
        }
    }
}

impl GaConfig {
    /// Checks ranges and rescales `η₁ + η₂` to 1.
    pub fn validated(mut self) -> Result<Self> {
        let bad = |m: String| Err(GaError::InvalidConfig(m));
        if self.population < 2 {
            return bad(format!("population must be ≥ 2, got {}", self.population));
        }
        for (name, r) in [("crossover_rate", self.crossover_rate), ("mutation_rate", self.mutation_rate)] {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("{name} must lie in [0, 1], got {r}"));
            }
        }
        let b = self.bounds;
        if !(b.a_min > 0.0 && b.a_min < b.a_max && b.gamma_min > 0.0 && b.gamma_min < b.gamma_max)
            || !(b.a_max.is_finite() && b.gamma_max.is_finite())
        {
            return bad(format!("bounds must be positive with min < max, got {b:?}"));
        }
        let s = self.eta1 + self.eta2;
        if !(self.eta1 >= 0.0 && self.eta2 >= 0.0 && s > 0.0 && s.is_finite()) {
            return bad(format!("eta1/eta2 must be nonnegative with a positive sum, got {}/{}", self.eta1, self.eta2));
        }
        self.eta1 /= s;
        self.eta2 /= s;
        Ok(self)
    }
}

/// Result of a generic [`optimize`] run.
#[derive(Debug, Clone, PartialEq)]
pub struct GaOutcome {
    pub best_params: (f64, f64),
    pub best_fitness: f64,
    /// Best fitness seen so far, one entry per generation (index 0 is the
    /// initial population).
    pub history: Vec<f64>,
    /// Every individual evaluated, in order.
    pub evaluated: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitnessReport {
    pub best_params: (f64, f64),
    pub best_fitness: f64,
    pub history: Vec<f64>,
    pub rmse_calibration: f64,
    pub rmse_fitting: f64,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

// Higher fitness wins; ties keep the lower index.
fn argmax(f: &[f64]) -> usize {
    (0..f.len()).fold(0, |b, i| if f[i] > f[b] { i } else { b })
}

fn sanitize(f: f64) -> f64 {
    if f.is_nan() {
        f64::NEG_INFINITY
    } else {
        f
    }
}

/// Maximizes `objective(a, γ)` inside the configured bounds.
/// NaN is treated as −∞.
pub fn optimize<F>(config: &GaConfig, exec: Execution, objective: F) -> Result<GaOutcome>
where
    F: Fn(f64, f64) -> f64 + Sync + Send,
{
    let cfg = config.validated()?;
    let p = cfg.population;
    let (lo, hi) = (cfg.bounds.lo(), cfg.bounds.hi());
    let sd: Vec<f64> = (0..2).map(|k| 0.1 * (hi[k] - lo[k])).collect();

    let mut pop: Vec<[f64; 2]> = (0..p)
        .map(|i| {
            let mut rng = rng_for(cfg.seed, i as u64);
            [rng.random_range(lo[0]..=hi[0]), rng.random_range(lo[1]..=hi[1])]
        })
        .collect();
    let mut fit: Vec<f64> = par::map_slice(&pop, exec, |x| sanitize(objective(x[0], x[1])));
    let mut evaluated: Vec<(f64, f64)> = pop.iter().map(|x| (x[0], x[1])).collect();

    let i0 = argmax(&fit);
    let (mut best, mut best_fit) = (pop[i0], fit[i0]);
    let mut history = vec![best_fit];

    for g in 1..=cfg.generations {
        let elite = pop[argmax(&fit)];
        let children: Vec<[f64; 2]> = par::map_range(p - 1, exec, |i| {
            let mut rng = rng_for(cfg.seed, (g * p + i + 1) as u64);
            let mut pick = || {
                let (x, y) = (rng.random_range(0..p), rng.random_range(0..p));
                if fit[y] > fit[x] || (fit[y] == fit[x] && y < x) { y } else { x }
            };
            let (p1, p2) = (pick(), pick());
            let mut child = pop[p1];
            if rng.random::<f64>() < cfg.crossover_rate {
                for k in 0..2 {
                    let (u, v) = (pop[p1][k].min(pop[p2][k]), pop[p1][k].max(pop[p2][k]));
                    let d = 0.5 * (v - u);
                    child[k] = if d > 0.0 { rng.random_range((u - d)..=(v + d)) } else { u };
                }
            }
            for k in 0..2 {
                if rng.random::<f64>() < cfg.mutation_rate {
                    let n = Normal::new(0.0, sd[k]).expect("positive mutation width");
                    child[k] += n.sample(&mut rng);
                }
                child[k] = child[k].clamp(lo[k], hi[k]);
            }
            child
        });
        let child_fit = par::map_slice(&children, exec, |x| sanitize(objective(x[0], x[1])));
        evaluated.extend(children.iter().map(|x| (x[0], x[1])));

        pop = std::iter::once(elite).chain(children).collect();
        let elite_fit = fit[argmax(&fit)];
        fit = std::iter::once(elite_fit).chain(child_fit).collect();

        let gi = argmax(&fit);
        if fit[gi] > best_fit {
            best = pop[gi];
            best_fit = fit[gi];
        }
        history.push(best_fit);
    }

    if best_fit == f64::NEG_INFINITY {
        return Err(GaError::NoFeasibleIndividual);
    }
    Ok(GaOutcome {
        best_params: (best[0], best[1]),
        best_fitness: best_fit,
        history,
        evaluated,
    })
}

pub fn rmse(actual: &[f64], predicted: &[f64]) -> f64 {
    let n = actual.len().max(1) as f64;
    (actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| (a - p) * (a - p))
        .sum::<f64>()
        / n)
        .sqrt()
}

/// `(RMSE₁, RMSE₂)`: calibration and fitting errors of a model trained on
/// `fit`.
pub fn fitness_parts(
    fit: &SupervisedSet,
    cal: &SupervisedSet,
    spec: &KernelSpec,
    gamma: f64,
) -> std::result::Result<(f64, f64), SvmError> {
    let model = svm::train(fit, spec, gamma)?;
    let fit_pred = model.predict_many(fit.inputs())?;
    let cal_pred = model.predict_many(cal.inputs())?;
    Ok((rmse(cal.targets(), &cal_pred), rmse(fit.targets(), &fit_pred)))
}

/// `−(η₁·RMSE₁ + η₂·RMSE₂)`.
pub fn fitness(
    fit: &SupervisedSet,
    cal: &SupervisedSet,
    spec: &KernelSpec,
    gamma: f64,
    eta1: f64,
    eta2: f64,
) -> std::result::Result<f64, SvmError> {
    let (r1, r2) = fitness_parts(fit, cal, spec, gamma)?;
    Ok(-(eta1 * r1 + eta2 * r2))
}

/// Splits a supervised set into a fitting part and a calibration tail of
/// `⌈0.2·N⌉` pairs.
pub fn calibration_split(data: &SupervisedSet) -> (SupervisedSet, SupervisedSet) {
    let tail = (data.len() as f64 * 0.2).ceil() as usize;
    data.split_tail(tail.min(data.len().saturating_sub(1)))
}

/// Tunes `(a, γ)` for `kernel` (its width is replaced by the GA's `a`).
pub fn tune(
    fit: &SupervisedSet,
    cal: &SupervisedSet,
    kernel: KernelSpec,
    config: &GaConfig,
    exec: Execution,
) -> Result<FitnessReport> {
    if fit.is_empty() || cal.is_empty() {
        return Err(GaError::InvalidConfig("fit and calibration sets must be nonempty".into()));
    }
    let cfg = config.validated()?;
    let outcome = optimize(&cfg, exec, |a, g| {
        fitness(fit, cal, &kernel.with_width(a), g, cfg.eta1, cfg.eta2).unwrap_or(f64::NEG_INFINITY)
    })?;
    let (a, g) = outcome.best_params;
    let (rmse_calibration, rmse_fitting) = fitness_parts(fit, cal, &kernel.with_width(a), g)?;
    Ok(FitnessReport {
        best_params: outcome.best_params,
        best_fitness: outcome.best_fitness,
        history: outcome.history,
        rmse_calibration,
        rmse_fitting,
    })
}
