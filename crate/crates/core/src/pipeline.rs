//! Forecasting methods 1–7, the rolling two-stage protocol and report files.
//!
//! A method forecasts the `horizon` closes after a fit window of
//! `fit_length` rows. Every base model runs the same chain: optional
//! wavelet smoothing of the window, embedding (OHLC bars or delay vectors
//! of the close), LS-SVM training, recursive forecasting and an optional
//! Markov correction of the path. Methods with two base models merge them
//! with a weight scheme. Schemes other than the plain average are fitted on
//! the out-of-sample forecasts of the previous window, so a method that
//! needs them requires `fit_length + 2·horizon` rows.

use std::{
    fmt::Write as _,
    fs,
    path::{Path, PathBuf},
};

use chrono::NaiveDate;

use crate::{
    combine::{self, CombineOptions, ForecastMatrix, TwoStageModel, TwoStageOutput, WeightScheme, WeightVector},
    config::{ConfigError, EmbeddingMode, ParamCouple, RunConfig},
    error::{Error, Result},
    evaluate::{self, DecisionMatrix, PerformanceRecord, RankReport, CRITERIA},
    ga,
    markov::{self, CorrectionStep, MarkovCorrector},
    par::{self, Execution},
    phase_space,
    series::{Channel, DataError, OhlcFrame, SplitSpec},
    svm::{self, SupervisedSet},
    wavelet,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputMode {
    /// Same-day `(open, high, low, close)` rows predict the next close.
    OhlcVector,
    /// Delay vectors of the close predict the next close.
    CloseEmbedded,
}

/// Which configured `(a, γ)` couple a base model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamSlot {
    Primary,
    Secondary,
    Ohlc,
}

impl ParamSlot {
    fn couple(self, config: &RunConfig) -> ParamCouple {
        match self {
            ParamSlot::Primary => config.svm.params_primary,
            ParamSlot::Secondary => config.svm.params_secondary,
            ParamSlot::Ohlc => config.svm.params_ohlc,
        }
    }

    fn seed_offset(self) -> u64 {
        match self {
            ParamSlot::Primary => 0,
            ParamSlot::Secondary => 1,
            ParamSlot::Ohlc => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSpec {
    pub id: u8,
    pub input_mode: InputMode,
    pub denoise: bool,
    pub markov_correct: bool,
    /// `None` for single-model methods.
    pub combination: Option<WeightScheme>,
    pub base_params: Vec<ParamSlot>,
}

impl MethodSpec {
    pub fn from_id(id: u8) -> Result<Self> {
        use ParamSlot::*;
        let close = |combination, base_params| MethodSpec {
            id,
            input_mode: InputMode::CloseEmbedded,
            denoise: true,
            markov_correct: true,
            combination,
            base_params,
        };
        Ok(match id {
            1 => MethodSpec {
                input_mode: InputMode::OhlcVector,
                ..close(None, vec![Ohlc])
            },
            2 => close(Some(WeightScheme::Average), vec![Primary, Secondary]),
            3 => close(None, vec![Primary]),
            4 => MethodSpec {
                denoise: false,
                markov_correct: false,
                ..close(None, vec![Secondary])
            },
            5 => close(Some(WeightScheme::GreyRelation), vec![Primary, Secondary]),
            6 => close(Some(WeightScheme::Lsm), vec![Primary, Secondary]),
            7 => close(Some(WeightScheme::OptimalGrey), vec![Primary, Secondary]),
            other => {
                return Err(ConfigError::InvalidValue {
                    key: "methods".into(),
                    message: format!("method ids run from 1 to 7, got {other}"),
                }
                .into())
            }
        })
    }

    pub fn label(&self) -> String {
        format!("M{}", self.id)
    }

    /// True when the weights come from the previous window.
    pub fn needs_history(&self) -> bool {
        matches!(self.combination, Some(s) if s != WeightScheme::Average)
    }
}

/// Parses `1,2,5`, `1..7` or `1-7` into method ids.
pub fn parse_methods(text: &str) -> Result<Vec<u8>> {
    let bad = |m: String| -> Error {
        ConfigError::InvalidValue {
            key: "methods".into(),
            message: m,
        }
        .into()
    };
    let mut ids = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let range = part.split_once("..").or_else(|| part.split_once('-'));
        let parse = |s: &str| s.trim().parse::<u8>().map_err(|_| bad(format!("`{part}` is not a method id")));
        match range {
            Some((a, b)) => {
                let (a, b) = (parse(a)?, parse(b.trim_start_matches('='))?);
                if a > b {
                    return Err(bad(format!("empty range `{part}`")));
                }
                ids.extend(a..=b);
            }
            None => ids.push(parse(part)?),
        }
    }
    for &id in &ids {
        MethodSpec::from_id(id)?;
    }
    Ok(ids)
}

/// One trained base model and its forecast path.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseRun {
    pub slot: ParamSlot,
    pub params: ParamCouple,
    pub tau: usize,
    pub dim: usize,
    pub svr: Vec<f64>,
    /// Present when the method applies the Markov correction.
    pub correction: Option<Vec<CorrectionStep>>,
    pub forecast: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub spec: MethodSpec,
    pub bases: Vec<BaseRun>,
    /// Weights over `bases`; `[1.0]` for single-model methods.
    pub weights: Vec<f64>,
    pub forecast: Vec<f64>,
}

fn staged<T, E: Into<Error>>(r: std::result::Result<T, E>, stage: impl FnOnce() -> String) -> Result<T> {
    r.map_err(|e| e.into().in_stage(stage()))
}

/// Delay and dimension used for a fit window.
pub fn choose_embedding(values: &[f64], config: &RunConfig, exec: Execution) -> Result<(usize, usize)> {
    let e = &config.embedding;
    if e.mode == EmbeddingMode::Fixed {
        return Ok((e.tau, e.dim));
    }
    let max_lag = e.max_lag.min(values.len().saturating_sub(2) / 2).max(1);
    let profile = phase_space::ami(values, max_lag, e.ami_bins)?;
    let tau = phase_space::select_delay(&profile, e.delay_rule);
    let fnn = phase_space::fnn_with(
        values,
        tau,
        e.max_dim,
        e.fnn_threshold_percent,
        e.fnn_distance_threshold,
        exec,
    )?;
    Ok((tau, phase_space::select_dim(&fnn).dim))
}

fn smooth(values: &[f64], on: bool, config: &RunConfig) -> Result<Vec<f64>> {
    if on && config.wavelet.enabled {
        Ok(wavelet::denoise(values, &config.wavelet.spec)?)
    } else {
        Ok(values.to_vec())
    }
}

struct Prepared {
    data: SupervisedSet,
    tau: usize,
    dim: usize,
    /// Index in the window of the first target.
    first_target: usize,
    forecast: Box<dyn Fn(&svm::LsSvmModel, usize) -> std::result::Result<Vec<f64>, svm::SvmError> + Send + Sync>,
}

fn prepare(frame: &OhlcFrame, mode: InputMode, start: usize, end: usize, denoise: bool, config: &RunConfig, exec: Execution) -> Result<Prepared> {
    match mode {
        InputMode::CloseEmbedded => {
            let x = smooth(&frame.values(Channel::Close)[start..end], denoise, config)?;
            let (tau, dim) = choose_embedding(&x, config, exec)?;
            let data = phase_space::supervised_pairs(&x, tau, dim)?;
            Ok(Prepared {
                data,
                tau,
                dim,
                first_target: (dim - 1) * tau + 1,
                forecast: Box::new(move |model, h| model.forecast_recursive(&x, h)),
            })
        }
        InputMode::OhlcVector => {
            let ch: Vec<Vec<f64>> = Channel::ALL
                .iter()
                .map(|&c| smooth(&frame.values(c)[start..end], denoise, config))
                .collect::<Result<_>>()?;
            let n = end - start;
            let bar = |t: usize| ch.iter().map(|c| c[t]).collect::<Vec<f64>>();
            let inputs = (0..n - 1).map(bar).collect();
            let targets = ch[3][1..].to_vec();
            let data = SupervisedSet::new(inputs, targets)?;
            let last = bar(n - 1);
            Ok(Prepared {
                data,
                tau: 1,
                dim: 4,
                first_target: 1,
                // Later steps have no observed bar; the predicted close stands
                // in for all four prices.
                forecast: Box::new(move |model, h| {
                    let mut out = Vec::with_capacity(h);
                    let mut x = last.clone();
                    for _ in 0..h {
                        let p = model.predict(&x)?;
                        out.push(p);
                        x = vec![p; 4];
                    }
                    Ok(out)
                }),
            })
        }
    }
}

/// Runs one base model on the fit window `[end − fit_length, end)`.
pub fn base_forecast(
    frame: &OhlcFrame,
    spec: &MethodSpec,
    slot: ParamSlot,
    end: usize,
    split: SplitSpec,
    config: &RunConfig,
    exec: Execution,
) -> Result<BaseRun> {
    let label = spec.label();
    let start = end - split.fit_length;
    let prep = staged(
        prepare(frame, spec.input_mode, start, end, spec.denoise, config, exec),
        || format!("{label} prepare"),
    )?;
    let mut params = slot.couple(config);
    if config.svm.tune {
        let (fit, cal) = ga::calibration_split(&prep.data);
        let mut ga_cfg = config.ga;
        ga_cfg.seed = ga_cfg.seed.wrapping_add(slot.seed_offset());
        let report = staged(
            ga::tune(&fit, &cal, config.svm.kernel_spec(params.0), &ga_cfg, exec),
            || format!("{label} tune"),
        )?;
        params = report.best_params;
    }
    let kernel = config.svm.kernel_spec(params.0);
    let model = staged(svm::train(&prep.data, &kernel, params.1), || format!("{label} train"))?.with_tau(prep.tau);
    let svr = staged((prep.forecast)(&model, split.horizon), || format!("{label} forecast"))?;
    let (correction, forecast) = if spec.markov_correct {
        let raw = &frame.values(Channel::Close)[start..end];
        let fitted_in = staged(model.predict_many(prep.data.inputs()), || format!("{label} forecast"))?;
        let t0 = prep.first_target;
        let actual = &raw[t0 - 1..];
        let fitted: Vec<f64> = std::iter::once(raw[t0 - 1]).chain(fitted_in).collect();
        let steps = staged(
            markov::residual_series(actual, &fitted)
                .and_then(|z| MarkovCorrector::fit(&z, &config.markov))
                .and_then(|c| c.correct_path(&svr, raw[raw.len() - 1])),
            || format!("{label} markov"),
        )?;
        let forecast = steps.iter().map(|s| s.comprehensive).collect();
        (Some(steps), forecast)
    } else {
        (None, svr.clone())
    };
    Ok(BaseRun {
        slot,
        params,
        tau: prep.tau,
        dim: prep.dim,
        svr,
        correction,
        forecast,
    })
}

fn combine_options(config: &RunConfig, exec: Execution) -> CombineOptions {
    CombineOptions {
        rho: config.combine.rho,
        rough_set_classes: config.combine.rough_set_classes,
        exec,
    }
}

fn bases_at(frame: &OhlcFrame, spec: &MethodSpec, end: usize, split: SplitSpec, config: &RunConfig, exec: Execution) -> Result<Vec<BaseRun>> {
    spec.base_params
        .iter()
        .map(|&slot| base_forecast(frame, spec, slot, end, split, config, exec))
        .collect()
}

fn check_window(frame: &OhlcFrame, end: usize, split: SplitSpec, history: bool) -> Result<()> {
    let needed = split.fit_length + split.horizon * if history { 2 } else { 1 };
    let first = end.checked_sub(split.fit_length + if history { split.horizon } else { 0 });
    if first.is_none() || end + split.horizon > frame.len() {
        return Err(DataError::TooShort {
            needed,
            got: frame.len().min(end + split.horizon),
        }
        .into());
    }
    Ok(())
}

/// Runs a method whose forecast window starts at row `end`.
pub fn run_method_at(
    frame: &OhlcFrame,
    spec: &MethodSpec,
    split: SplitSpec,
    end: usize,
    config: &RunConfig,
    exec: Execution,
) -> Result<MethodResult> {
    check_window(frame, end, split, spec.needs_history())?;
    let bases = bases_at(frame, spec, end, split, config, exec)?;
    let weights = match spec.combination {
        None => vec![1.0],
        Some(WeightScheme::Average) => combine::weights_average(bases.len()),
        Some(scheme) => {
            let prev_end = end - split.horizon;
            let prev = bases_at(frame, spec, prev_end, split, config, exec)?;
            let actual = frame.values(Channel::Close)[prev_end..end].to_vec();
            let fm = ForecastMatrix::unlabeled(actual, prev.into_iter().map(|b| b.forecast).collect());
            let w = staged(
                fm.and_then(|fm| combine::weights(&fm, scheme, &combine_options(config, exec))),
                || format!("{} weights", spec.label()),
            )?;
            w.weights
        }
    };
    let paths: Vec<Vec<f64>> = bases.iter().map(|b| b.forecast.clone()).collect();
    let forecast = staged(combine::combine_forecasts(&paths, &weights), || format!("{} combine", spec.label()))?;
    Ok(MethodResult {
        spec: spec.clone(),
        bases,
        weights,
        forecast,
    })
}

/// Runs a method on the last `horizon` rows of the frame.
pub fn run_method(frame: &OhlcFrame, spec: &MethodSpec, split: SplitSpec, config: &RunConfig, exec: Execution) -> Result<MethodResult> {
    split.check(frame.len())?;
    run_method_at(frame, spec, split, frame.len() - split.horizon, config, exec)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageReport {
    pub base_methods: Vec<u8>,
    pub stage1_schemes: Vec<WeightScheme>,
    pub stage2_schemes: Vec<WeightScheme>,
    pub model: TwoStageModel,
    pub output: TwoStageOutput,
    pub stage1_performance: Vec<PerformanceRecord>,
    pub stage2_performance: Vec<PerformanceRecord>,
}

impl TwoStageReport {
    pub fn stage1_labels(&self) -> Vec<String> {
        self.stage1_schemes.iter().map(|s| format!("S1-{s}")).collect()
    }

    pub fn stage2_labels(&self) -> Vec<String> {
        self.stage2_schemes.iter().map(|s| format!("S2-{s}")).collect()
    }
}

/// Two-stage combination of `base_methods` with weights fitted on the
/// previous window and applied to the forecast window at the frame's end.
pub fn run_two_stage(
    frame: &OhlcFrame,
    split: SplitSpec,
    base_methods: &[u8],
    config: &RunConfig,
    exec: Execution,
) -> Result<TwoStageReport> {
    split.check(frame.len())?;
    let end = frame.len() - split.horizon;
    let specs = base_methods.iter().map(|&id| MethodSpec::from_id(id)).collect::<Result<Vec<_>>>()?;
    let history = specs.iter().any(MethodSpec::needs_history);
    check_window(frame, end - split.horizon, split, history)?;
    let close = frame.values(Channel::Close);
    let paths_at = |e: usize| -> Result<Vec<Vec<f64>>> {
        specs
            .iter()
            .map(|s| run_method_at(frame, s, split, e, config, exec).map(|r| r.forecast))
            .collect()
    };
    let prev = paths_at(end - split.horizon)?;
    let current = paths_at(end)?;
    let schemes = config.combine.methods.clone();
    let fm = ForecastMatrix::unlabeled(close[end - split.horizon..end].to_vec(), prev)?;
    let model = staged(
        TwoStageModel::fit(&fm, &schemes, &schemes, &combine_options(config, exec)),
        || "two-stage weights".to_string(),
    )?;
    let output = model.apply(&current)?;
    let actual = &close[end..];
    let y0 = close[end - 1];
    let perf = |paths: &[Vec<f64>]| -> Result<Vec<PerformanceRecord>> {
        paths
            .iter()
            .map(|p| Ok(evaluate::performance(actual, p, y0, &config.evaluate)?))
            .collect()
    };
    Ok(TwoStageReport {
        base_methods: base_methods.to_vec(),
        stage1_schemes: schemes.clone(),
        stage2_schemes: schemes,
        stage1_performance: perf(&output.stage1)?,
        stage2_performance: perf(&output.stage2)?,
        model,
        output,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub methods: Vec<u8>,
    pub split: SplitSpec,
    /// Base methods of the two-stage protocol, if it should run.
    pub two_stage: Option<Vec<u8>>,
    pub exec: Execution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub dates: Vec<NaiveDate>,
    pub actual: Vec<f64>,
    /// Last observed close before the forecast window.
    pub y0: f64,
    pub methods: Vec<MethodResult>,
    pub performance: Vec<PerformanceRecord>,
    /// Present when at least two methods ran.
    pub ranks: Option<RankReport>,
    pub two_stage: Option<TwoStageReport>,
    pub config_snapshot: String,
    pub seed: u64,
}

/// Runs the selected methods concurrently and evaluates them on the last
/// `horizon` rows.
pub fn run(frame: &OhlcFrame, options: &RunOptions, config: &RunConfig) -> Result<RunReport> {
    let split = options.split;
    split.check(frame.len())?;
    let specs = options
        .methods
        .iter()
        .map(|&id| MethodSpec::from_id(id))
        .collect::<Result<Vec<_>>>()?;
    let exec = options.exec;
    let methods = par::map_slice(&specs, exec, |s| run_method(frame, s, split, config, exec))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let end = frame.len() - split.horizon;
    let close = frame.values(Channel::Close);
    let actual = close[end..].to_vec();
    let y0 = close[end - 1];
    let performance = methods
        .iter()
        .map(|m| evaluate::performance(&actual, &m.forecast, y0, &config.evaluate))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let ranks = if methods.len() >= 2 {
        let labels = methods.iter().map(|m| m.spec.label()).collect();
        let dm = DecisionMatrix::from_records(labels, &performance, config.evaluate.subjective_weights)?;
        Some(staged(evaluate::rank_all(&dm, config.combine.rho), || "rank".to_string())?)
    } else {
        None
    };
    let two_stage = match &options.two_stage {
        Some(ids) => Some(run_two_stage(frame, split, ids, config, exec)?),
        None => None,
    };
    let mut snapshot = format!(
        "# sample = {}\n# horizon = {}\n# methods = {}\n",
        split.fit_length,
        split.horizon,
        options.methods.iter().map(u8::to_string).collect::<Vec<_>>().join(",")
    );
    snapshot.push_str(&config.snapshot());
    Ok(RunReport {
        dates: frame.timestamps()[end..].to_vec(),
        actual,
        y0,
        methods,
        performance,
        ranks,
        two_stage,
        config_snapshot: snapshot,
        seed: config.ga.seed,
    })
}

fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

fn fmt_raw(v: f64) -> String {
    v.to_string()
}

fn weight_rows(report: &RunReport) -> Vec<(String, String, String, f64)> {
    let mut rows = Vec::new();
    for m in &report.methods {
        let scheme = m.spec.combination.map_or("single".to_string(), |s| s.to_string());
        for (b, w) in m.bases.iter().zip(&m.weights) {
            rows.push((m.spec.label(), scheme.clone(), format!("{:?}", b.slot).to_lowercase(), *w));
        }
    }
    if let Some(ts) = &report.two_stage {
        let base: Vec<String> = ts.base_methods.iter().map(|id| format!("M{id}")).collect();
        for (label, wv) in ts.stage1_labels().iter().zip(&ts.model.stage1) {
            push_weights(&mut rows, label, wv, &base);
        }
        let s1 = ts.stage1_labels();
        for (label, wv) in ts.stage2_labels().iter().zip(&ts.model.stage2) {
            push_weights(&mut rows, label, wv, &s1);
        }
    }
    rows
}

fn push_weights(rows: &mut Vec<(String, String, String, f64)>, label: &str, wv: &WeightVector, components: &[String]) {
    for (c, w) in components.iter().zip(&wv.weights) {
        rows.push((label.to_string(), wv.scheme.to_string(), c.clone(), *w));
    }
}

fn performance_rows(report: &RunReport) -> Vec<(String, PerformanceRecord)> {
    let mut rows: Vec<_> = report
        .methods
        .iter()
        .zip(&report.performance)
        .map(|(m, p)| (m.spec.label(), *p))
        .collect();
    if let Some(ts) = &report.two_stage {
        rows.extend(ts.stage1_labels().into_iter().zip(ts.stage1_performance.iter().copied()));
        rows.extend(ts.stage2_labels().into_iter().zip(ts.stage2_performance.iter().copied()));
    }
    rows
}

fn render(report: &RunReport, fmt: fn(f64) -> String, raw: bool) -> [(String, String); 4] {
    let mut forecasts = String::from("date,actual");
    for m in &report.methods {
        write!(forecasts, ",{}", m.spec.label()).unwrap();
    }
    if let Some(ts) = &report.two_stage {
        for l in ts.stage1_labels().iter().chain(&ts.stage2_labels()) {
            write!(forecasts, ",{l}").unwrap();
        }
    }
    forecasts.push('\n');
    for (t, date) in report.dates.iter().enumerate() {
        write!(forecasts, "{date},{}", fmt(report.actual[t])).unwrap();
        for m in &report.methods {
            write!(forecasts, ",{}", fmt(m.forecast[t])).unwrap();
        }
        if let Some(ts) = &report.two_stage {
            for p in ts.output.stage1.iter().chain(&ts.output.stage2) {
                write!(forecasts, ",{}", fmt(p[t])).unwrap();
            }
        }
        forecasts.push('\n');
    }

    let mut weights = String::from("method,scheme,component,weight\n");
    for (m, s, c, w) in weight_rows(report) {
        writeln!(weights, "{m},{s},{c},{}", fmt(w)).unwrap();
    }

    let mut perf = format!("method,{}\n", CRITERIA.join(","));
    for (label, p) in performance_rows(report) {
        let cols: Vec<String> = p.criteria().iter().map(|v| fmt(*v)).collect();
        writeln!(perf, "{label},{}", cols.join(",")).unwrap();
    }

    let mut ranks = String::from(if raw {
        "method,R1,R2,R3,R,closeness_distance,closeness_grey,projection\n"
    } else {
        "method,R1,R2,R3,R\n"
    });
    if let Some(r) = &report.ranks {
        for i in 0..r.labels.len() {
            write!(ranks, "{},{},{},{},{}", r.labels[i], r.r1[i], r.r2[i], r.r3[i], r.comprehensive[i]).unwrap();
            if raw {
                write!(
                    ranks,
                    ",{},{},{}",
                    fmt(r.closeness_distance[i]),
                    fmt(r.closeness_grey[i]),
                    fmt(r.projection[i])
                )
                .unwrap();
            }
            ranks.push('\n');
        }
    }
    let suffix = if raw { ".raw.csv" } else { ".csv" };
    [
        (format!("forecasts{suffix}"), forecasts),
        (format!("weights{suffix}"), weights),
        (format!("performance{suffix}"), perf),
        (format!("ranks{suffix}"), ranks),
    ]
}

/// Writes the report files into `out_dir` and returns their paths. With no
/// methods only `config.snapshot` is written.
pub fn emit_report(report: &RunReport, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = vec![("config.snapshot".to_string(), report.config_snapshot.clone())];
    if !report.methods.is_empty() {
        for (name, body) in render(report, fmt4, false).into_iter().chain(render(report, fmt_raw, true)) {
            if name.starts_with("ranks") && report.ranks.is_none() {
                continue;
            }
            files.push((name, body));
        }
    }
    files
        .into_iter()
        .map(|(name, body)| {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}
