use std::{
    fmt::Write as _,
    fs,
    path::{Path, PathBuf},
    process::ExitCode,
};

use clap::{Args, Parser, Subcommand};
use hybridcast::{
    combine::{self, CombineOptions, ForecastMatrix, TwoStageModel, WeightScheme},
    config::{load_config, RunConfig},
    evaluate::{self, DecisionMatrix, CRITERIA},
    ga, markov,
    par::Execution,
    phase_space,
    pipeline::{self, RunOptions},
    series::{load_csv, Channel, DataError, OhlcFrame, SplitSpec},
    svm::{self, LsSvmModel},
    wavelet, Error, ErrorCategory,
};

#[derive(Parser)]
#[command(name = "hybridcast", version, about = "Wavelet/LS-SVM/Markov forecasting with combination weights and TOPSIS ranking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file in `section.key = value` format.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `ga.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Run every loop on the calling thread.
    #[arg(long)]
    sequential: bool,
}

impl Common {
    fn load(&self) -> Result<RunConfig, Failure> {
        let mut cfg = match &self.config {
            Some(p) => load_config(p).map_err(Error::from)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.ga.seed = seed;
        }
        Ok(cfg)
    }

    fn exec(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::default()
        }
    }
}

#[derive(Args)]
struct SeriesInput {
    /// CSV with `date,open,high,low,close` or `date,value`.
    #[arg(long, visible_alias = "in")]
    input: PathBuf,
    #[arg(long, default_value = "close")]
    channel: Channel,
    /// Use only the last N rows.
    #[arg(long)]
    sample: Option<usize>,
}

impl SeriesInput {
    fn frame(&self) -> Result<OhlcFrame, Failure> {
        let frame = load_csv(&self.input, None).map_err(Error::from)?;
        for w in frame.warnings() {
            eprintln!("warning: {w}");
        }
        Ok(frame)
    }

    fn values(&self) -> Result<Vec<f64>, Failure> {
        let frame = self.frame()?;
        let v = frame.values(self.channel);
        tail(v, self.sample)
    }
}

fn tail(v: &[f64], sample: Option<usize>) -> Result<Vec<f64>, Failure> {
    match sample {
        Some(n) if n > v.len() => Err(Error::from(DataError::TooShort { needed: n, got: v.len() }).into()),
        Some(n) => Ok(v[v.len() - n..].to_vec()),
        None => Ok(v.to_vec()),
    }
}

#[derive(Subcommand)]
enum Command {
    /// AMI and FNN profiles with the selected delay and dimension.
    Analyze {
        #[command(flatten)]
        series: SeriesInput,
        #[command(flatten)]
        common: Common,
    },
    /// Wavelet-denoise a channel and write `date,raw,denoised`.
    Denoise {
        #[command(flatten)]
        series: SeriesInput,
        #[command(flatten)]
        common: Common,
        #[arg(long, visible_alias = "out")]
        output: Option<PathBuf>,
    },
    /// Train an LS-SVM on delay vectors of a channel.
    Train {
        #[command(flatten)]
        series: SeriesInput,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        /// Where to write the model.
        #[arg(long)]
        model_out: PathBuf,
    },
    /// Tune `(a, γ)` with the genetic algorithm.
    Tune {
        #[command(flatten)]
        series: SeriesInput,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        denoise: bool,
    },
    /// Recursive multi-step forecast from a saved model.
    Forecast {
        #[command(flatten)]
        series: SeriesInput,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        horizon: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Markov-corrected forecast from a saved model and its training window.
    Correct {
        #[command(flatten)]
        series: SeriesInput,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        horizon: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// χ² test of the Markov property on the states of a series.
    MarkovTest {
        #[command(flatten)]
        series: SeriesInput,
        #[command(flatten)]
        common: Common,
    },
    /// Combination weights for a table of `actual` plus forecast columns.
    Combine {
        /// CSV with an `actual` column and one column per method.
        #[arg(long)]
        input: PathBuf,
        /// Comma-separated schemes; defaults to `combine.methods`.
        #[arg(long)]
        methods: Option<String>,
        /// Fit the two-stage combination instead.
        #[arg(long)]
        two_stage: bool,
        #[command(flatten)]
        common: Common,
        /// Weight table destination (stdout by default).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Write the combined forecasts, one column per scheme.
        #[arg(long)]
        combined: Option<PathBuf>,
    },
    /// Performance measures for each forecast column.
    Evaluate {
        #[arg(long)]
        input: PathBuf,
        /// Observation preceding the first row, for the direction measure.
        #[arg(long)]
        prev_actual: f64,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// TOPSIS ranks from a `method,accuracy,feasibility,consistency,MAE,RMSE` table.
    Rank {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run forecasting methods end to end and write the report files.
    Run {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "1..7")]
        methods: String,
        #[arg(long, default_value_t = 70)]
        sample: usize,
        #[arg(long, default_value_t = 22)]
        horizon: usize,
        /// Also run the two-stage combination of these base methods.
        #[arg(long, num_args = 0..=1, default_missing_value = "1,2")]
        two_stage: Option<String>,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// Kernel parameter; defaults to the first configured couple.
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    denoise: bool,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.category() {
            ErrorCategory::Config => 2,
            ErrorCategory::Data => 3,
            ErrorCategory::Numeric => 4,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn data_failure(message: impl Into<String>) -> Failure {
    Failure {
        code: 3,
        message: message.into(),
    }
}

fn config_failure(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

macro_rules! fail_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Error::from(e).into()
            }
        }
    )*};
}

fail_from!(
    DataError,
    hybridcast::config::ConfigError,
    hybridcast::phase_space::PhaseSpaceError,
    hybridcast::wavelet::WaveletError,
    hybridcast::svm::SvmError,
    hybridcast::ga::GaError,
    hybridcast::markov::MarkovError,
    hybridcast::combine::CombineError,
    hybridcast::evaluate::EvaluateError
);

fn emit(output: Option<&Path>, text: &str) -> Result<(), Failure> {
    match output {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e).into()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Reads a headed numeric table, skipping a `date` column.
fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>, Vec<String>), Failure> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| data_failure(format!("cannot open {}: {e}", path.display())))?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| data_failure(e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    let skip: Vec<bool> = headers.iter().map(|h| h == "date" || h == "method").collect();
    let names: Vec<String> = headers
        .iter()
        .zip(&skip)
        .filter(|(_, s)| !**s)
        .map(|(h, _)| h.clone())
        .collect();
    let mut cols = vec![Vec::new(); names.len()];
    let mut keys = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| data_failure(e.to_string()))?;
        let mut c = 0;
        for (i, field) in rec.iter().enumerate() {
            if skip.get(i).copied().unwrap_or(false) {
                if headers[i] == "method" {
                    keys.push(field.to_string());
                }
                continue;
            }
            let v: f64 = field
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| data_failure(format!("line {}: `{field}` is not a finite number", row + 2)))?;
            cols[c].push(v);
            c += 1;
        }
    }
    Ok((names, cols, keys))
}

fn forecast_table(path: &Path) -> Result<(Vec<f64>, Vec<Vec<f64>>, Vec<String>), Failure> {
    let (names, mut cols, _) = read_table(path)?;
    let i = names
        .iter()
        .position(|n| n == "actual")
        .ok_or_else(|| Failure::from(Error::from(DataError::MissingColumn("actual".into()))))?;
    let actual = cols.remove(i);
    let labels = names.into_iter().filter(|n| n != "actual").collect();
    Ok((actual, cols, labels))
}

fn parse_schemes(text: &str) -> Result<Vec<WeightScheme>, Failure> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<WeightScheme>().map_err(config_failure))
        .collect()
}

fn csv_line(label: &str, values: impl IntoIterator<Item = f64>) -> String {
    let mut s = label.to_string();
    for v in values {
        write!(s, ",{v}").unwrap();
    }
    s.push('\n');
    s
}

fn train_model(values: &[f64], cfg: &RunConfig, args: &ModelArgs, exec: Execution) -> Result<LsSvmModel, Failure> {
    let x = if args.denoise {
        wavelet::denoise(values, &cfg.wavelet.spec)?
    } else {
        values.to_vec()
    };
    let (tau, dim) = pipeline::choose_embedding(&x, cfg, exec)?;
    let data = phase_space::supervised_pairs(&x, tau, dim)?;
    let (a, g) = cfg.svm.params_primary;
    let (a, g) = (args.a.unwrap_or(a), args.gamma.unwrap_or(g));
    Ok(svm::train(&data, &cfg.svm.kernel_spec(a), g)?.with_tau(tau))
}

/// Weekdays following the frame's last date.
fn next_trading_days(frame: &OhlcFrame, n: usize) -> Vec<chrono::NaiveDate> {
    use chrono::Datelike;
    let mut d = *frame.timestamps().last().expect("frames are nonempty");
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        d = d.succ_opt().expect("date in range");
        if d.weekday().number_from_monday() <= 5 {
            out.push(d);
        }
    }
    out
}

fn load_model(path: &Path) -> Result<LsSvmModel, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(LsSvmModel::from_text(&text)?)
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Analyze { series, common } => {
            let cfg = common.load()?;
            let v = series.values()?;
            let e = &cfg.embedding;
            let profile = phase_space::ami(&v, e.max_lag.min(v.len().saturating_sub(2)).max(1), e.ami_bins)?;
            let tau = phase_space::select_delay(&profile, e.delay_rule);
            let fnn = phase_space::fnn_with(
                &v,
                tau,
                e.max_dim,
                e.fnn_threshold_percent,
                e.fnn_distance_threshold,
                common.exec(),
            )?;
            let dim = phase_space::select_dim(&fnn);
            let mut out = String::from("lag,I_bits\n");
            for (l, a) in profile.lags.iter().zip(&profile.values) {
                writeln!(out, "{l},{a}").unwrap();
            }
            out.push_str("dim,false_percent\n");
            for (d, p) in fnn.dims.iter().zip(&fnn.false_percent) {
                writeln!(out, "{d},{p}").unwrap();
            }
            writeln!(out, "tau = {tau}\ndim = {}", dim.dim).unwrap();
            if dim.saturated {
                out.push_str("# no dimension reached the FNN threshold\n");
            }
            if fnn.truncated {
                out.push_str("# series too short for the largest dimensions\n");
            }
            emit(None, &out)
        }
        Command::Denoise { series, common, output } => {
            let cfg = common.load()?;
            let frame = series.frame()?;
            let v = tail(frame.values(series.channel), series.sample)?;
            let dates = &frame.timestamps()[frame.len() - v.len()..];
            let smooth = wavelet::denoise(&v, &cfg.wavelet.spec)?;
            let mut out = String::from("date,raw,denoised\n");
            for ((d, r), y) in dates.iter().zip(&v).zip(smooth) {
                writeln!(out, "{d},{r},{y}").unwrap();
            }
            emit(output.as_deref(), &out)
        }
        Command::Train {
            series,
            common,
            model,
            model_out,
        } => {
            let cfg = common.load()?;
            let m = train_model(&series.values()?, &cfg, &model, common.exec())?;
            fs::write(&model_out, m.to_text()).map_err(|e| Error::io(&model_out, e))?;
            Ok(())
        }
        Command::Tune { series, common, denoise } => {
            if common.seed.is_none() {
                return Err(config_failure("tune needs an explicit --seed"));
            }
            let cfg = common.load()?;
            let mut v = series.values()?;
            if denoise {
                v = wavelet::denoise(&v, &cfg.wavelet.spec)?;
            }
            let (tau, dim) = pipeline::choose_embedding(&v, &cfg, common.exec())?;
            let data = phase_space::supervised_pairs(&v, tau, dim)?;
            let (fit, cal) = ga::calibration_split(&data);
            let kernel = cfg.svm.kernel_spec(cfg.svm.params_primary.0);
            let r = ga::tune(&fit, &cal, kernel, &cfg.ga, common.exec())?;
            let mut out = format!(
                "a = {}\ngamma = {}\nfitness = {}\nrmse_calibration = {}\nrmse_fitting = {}\ngeneration,best_fitness\n",
                r.best_params.0, r.best_params.1, r.best_fitness, r.rmse_calibration, r.rmse_fitting
            );
            for (g, f) in r.history.iter().enumerate() {
                writeln!(out, "{g},{f}").unwrap();
            }
            emit(None, &out)
        }
        Command::Forecast {
            series,
            model,
            horizon,
            output,
        } => {
            let m = load_model(&model)?;
            let frame = series.frame()?;
            let path = m.forecast_recursive(&tail(frame.values(series.channel), series.sample)?, horizon)?;
            let mut out = String::from("date,forecast\n");
            for (d, y) in next_trading_days(&frame, horizon).iter().zip(&path) {
                writeln!(out, "{d},{y}").unwrap();
            }
            emit(output.as_deref(), &out)
        }
        Command::Correct {
            series,
            common,
            model,
            horizon,
            output,
        } => {
            let cfg = common.load()?;
            let m = load_model(&model)?;
            let frame = series.frame()?;
            let v = tail(frame.values(series.channel), series.sample)?;
            let data = phase_space::supervised_pairs(&v, m.tau, m.dim())?;
            let fitted_in = m.predict_many(data.inputs())?;
            let t0 = (m.dim() - 1) * m.tau + 1;
            let fitted: Vec<f64> = std::iter::once(v[t0 - 1]).chain(fitted_in).collect();
            let z = markov::residual_series(&v[t0 - 1..], &fitted)?;
            let corrector = markov::MarkovCorrector::fit(&z, &cfg.markov)?;
            let svr = m.forecast_recursive(&v, horizon)?;
            let steps = corrector.correct_path(&svr, v[v.len() - 1])?;
            let mut out = String::from("date,svr,fuzzy,weighted,comprehensive\n");
            for (d, s) in next_trading_days(&frame, horizon).iter().zip(&steps) {
                out.push_str(&csv_line(&d.to_string(), [s.svr, s.fuzzy, s.weighted, s.comprehensive]));
            }
            emit(output.as_deref(), &out)
        }
        Command::MarkovTest { series, common } => {
            let cfg = common.load()?;
            let v = series.values()?;
            let p = markov::partition(&v, cfg.markov.states, cfg.markov.partition)?;
            let r = markov::markov_property_test(&p.states(&v), p.k(), cfg.markov.alpha)?;
            emit(
                None,
                &format!(
                    "chi_square = {}\ndof = {}\ncritical_value = {}\nmarkov = {}\n",
                    r.chi_square, r.dof, r.critical_value, r.is_markov
                ),
            )
        }
        Command::Combine {
            input,
            methods,
            two_stage,
            common,
            output,
            combined,
        } => {
            let cfg = common.load()?;
            let (actual, forecasts, labels) = forecast_table(&input)?;
            let fm = ForecastMatrix::new(actual, forecasts, labels.clone())?;
            let schemes = match methods {
                Some(m) => parse_schemes(&m)?,
                None => cfg.combine.methods.clone(),
            };
            let opts = CombineOptions {
                rho: cfg.combine.rho,
                rough_set_classes: cfg.combine.rough_set_classes,
                exec: common.exec(),
            };
            let mut out = format!("stage,scheme,{}\n", labels.join(","));
            let mut series: Vec<(String, Vec<f64>)> = Vec::new();
            if two_stage {
                let model = TwoStageModel::fit(&fm, &schemes, &schemes, &opts)?;
                let applied = model.apply(fm.forecasts())?;
                for (s, p) in schemes.iter().zip(&applied.stage1) {
                    series.push((format!("S1-{s}"), p.clone()));
                }
                for (s, p) in schemes.iter().zip(&applied.stage2) {
                    series.push((format!("S2-{s}"), p.clone()));
                }
                for w in &model.stage1 {
                    out.push_str(&csv_line(&format!("1,{}", w.scheme), w.weights.iter().copied()));
                }
                out.push_str(&format!(
                    "stage,scheme,{}\n",
                    schemes.iter().map(|s| format!("S1-{s}")).collect::<Vec<_>>().join(",")
                ));
                for w in &model.stage2 {
                    out.push_str(&csv_line(&format!("2,{}", w.scheme), w.weights.iter().copied()));
                }
            } else {
                for s in schemes {
                    let w = combine::weights(&fm, s, &opts)?;
                    series.push((s.to_string(), combine::combine_arithmetic(&fm, &w.weights)?));
                    out.push_str(&csv_line(&format!("1,{s}"), w.weights));
                }
            }
            if let Some(path) = combined {
                let mut text = String::from("actual");
                for (name, _) in &series {
                    write!(text, ",{name}").unwrap();
                }
                text.push('\n');
                for (t, y) in fm.actual().iter().enumerate() {
                    text.push_str(&csv_line(&y.to_string(), series.iter().map(|(_, p)| p[t])));
                }
                emit(Some(&path), &text)?;
            }
            emit(output.as_deref(), &out)
        }
        Command::Evaluate {
            input,
            prev_actual,
            common,
            output,
        } => {
            let cfg = common.load()?;
            let (actual, forecasts, labels) = forecast_table(&input)?;
            let mut out = String::from(
                "method,accuracy,feasibility,consistency,MAE,RMSE,MSE,MAPE,C,p,theil_u2\n",
            );
            for (label, f) in labels.iter().zip(&forecasts) {
                let p = evaluate::performance(&actual, f, prev_actual, &cfg.evaluate)?;
                out.push_str(&csv_line(
                    label,
                    [
                        p.accuracy,
                        p.feasibility,
                        p.consistency,
                        p.mae,
                        p.rmse,
                        p.mse,
                        p.mape,
                        p.c_ratio,
                        p.small_error_p,
                        p.theil_u2,
                    ],
                ));
            }
            emit(output.as_deref(), &out)
        }
        Command::Rank { input, common, output } => {
            let cfg = common.load()?;
            let (names, cols, keys) = read_table(&input)?;
            let idx: Vec<usize> = CRITERIA
                .iter()
                .map(|c| {
                    names
                        .iter()
                        .position(|n| n == c)
                        .ok_or_else(|| Failure::from(Error::from(DataError::MissingColumn(c.to_string()))))
                })
                .collect::<Result<_, _>>()?;
            let n = cols.first().map_or(0, Vec::len);
            let labels = if keys.len() == n {
                keys
            } else {
                (1..=n).map(|i| format!("A{i}")).collect()
            };
            let rows = (0..n).map(|i| std::array::from_fn(|k| cols[idx[k]][i])).collect();
            let dm = DecisionMatrix::new(labels, rows, cfg.evaluate.subjective_weights)?;
            let r = evaluate::rank_all(&dm, cfg.combine.rho)?;
            let mut out = format!("method,{},R1,R2,R3,R\n", CRITERIA.join(","));
            for i in 0..r.labels.len() {
                let row = csv_line(&r.labels[i], idx.iter().map(|&j| cols[j][i]));
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    row.trim_end(),
                    r.r1[i],
                    r.r2[i],
                    r.r3[i],
                    r.comprehensive[i]
                )
                .unwrap();
            }
            emit(output.as_deref(), &out)
        }
        Command::Run {
            input,
            methods,
            sample,
            horizon,
            two_stage,
            common,
            out,
        } => {
            let cfg = common.load()?;
            let methods = pipeline::parse_methods(&methods)?;
            let two_stage = two_stage.map(|s| pipeline::parse_methods(&s)).transpose()?;
            let split = SplitSpec::new(sample, horizon)?;
            let frame = load_csv(&input, None)?;
            let options = RunOptions {
                methods,
                split,
                two_stage,
                exec: common.exec(),
            };
            let report = pipeline::run(&frame, &options, &cfg)?;
            pipeline::emit_report(&report, &out)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
