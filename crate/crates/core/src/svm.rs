//! Least-squares SVM regression.
//!
//! Training solves the saddle-point system
//!
//! ```text
//! [ 0   1ᵀ       ] [b]   [0]
//! [ 1   Ω + I/γ  ] [α] = [y]
//! ```
//!
//! with `Ω_ij = K(x_i, x_j)`, and prediction is `ŷ(x) = Σ α_k K(x_k, x) + b`.

use std::{fmt, str::FromStr};

use thiserror::Error;

use crate::{
    linalg::{self, Matrix},
    par::{self, Execution},
};

/// Largest accepted relative residual of the training solve.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum SvmError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("empty training set")]
    Empty,
    #[error("non-finite value in training data")]
    NonFinite,
    #[error("singular training system (pivot ratio {pivot_ratio:.3e})")]
    Singular { pivot_ratio: f64 },
    #[error("training solve residual {residual:.3e} exceeds tolerance (pivot ratio {pivot_ratio:.3e})")]
    Inaccurate { residual: f64, pivot_ratio: f64 },
    #[error("model file line {line}: {message}")]
    Parse { line: usize, message: String },
}

type Result<T> = std::result::Result<T, SvmError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum KernelKind {
    Rbf,
    Polynomial,
    Sigmoid,
    #[default]
    MexicanHat,
}

impl FromStr for KernelKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "rbf" => Ok(Self::Rbf),
            "polynomial" | "poly" => Ok(Self::Polynomial),
            "sigmoid" => Ok(Self::Sigmoid),
            "mexican_hat" | "mexican_hat_wavelet" => Ok(Self::MexicanHat),
            other => Err(format!("unknown kernel `{other}`")),
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Rbf => "rbf",
            Self::Polynomial => "polynomial",
            Self::Sigmoid => "sigmoid",
            Self::MexicanHat => "mexican_hat",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    /// `exp(−‖x−x'‖² / 2σ²)`
    Rbf { sigma: f64 },
    /// `(x·x' + c)^degree`
    Polynomial { c: f64, degree: u32 },
    /// `tanh(b·x·x' − c)`; not positive semidefinite in general.
    Sigmoid { b: f64, c: f64 },
    /// `Π (1 − u²)·exp(−u²/2)`, `u = (x_i − x'_i)/a`
    MexicanHat { a: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SvmError::InvalidParameter(m.to_string()));
        match *self {
            KernelSpec::Rbf { sigma } if !(sigma > 0.0 && sigma.is_finite()) => bad("rbf sigma must be > 0"),
            KernelSpec::MexicanHat { a } if !(a > 0.0 && a.is_finite()) => bad("mexican hat width must be > 0"),
            KernelSpec::Polynomial { degree: 0, .. } => bad("polynomial degree must be ≥ 1"),
            KernelSpec::Polynomial { c, .. } if !c.is_finite() => bad("polynomial c must be finite"),
            KernelSpec::Sigmoid { b, c } if !(b.is_finite() && c.is_finite()) => bad("sigmoid parameters must be finite"),
            _ => Ok(()),
        }
    }

    pub fn kind(&self) -> KernelKind {
        match self {
            KernelSpec::Rbf { .. } => KernelKind::Rbf,
            KernelSpec::Polynomial { .. } => KernelKind::Polynomial,
            KernelSpec::Sigmoid { .. } => KernelKind::Sigmoid,
            KernelSpec::MexicanHat { .. } => KernelKind::MexicanHat,
        }
    }

    /// The parameter a tuner varies: σ, a, polynomial `c` or sigmoid `b`.
    pub fn width(&self) -> f64 {
        match *self {
            KernelSpec::Rbf { sigma } => sigma,
            KernelSpec::MexicanHat { a } => a,
            KernelSpec::Polynomial { c, .. } => c,
            KernelSpec::Sigmoid { b, .. } => b,
        }
    }

    pub fn with_width(self, w: f64) -> Self {
        match self {
            KernelSpec::Rbf { .. } => KernelSpec::Rbf { sigma: w },
            KernelSpec::MexicanHat { .. } => KernelSpec::MexicanHat { a: w },
            KernelSpec::Polynomial { degree, .. } => KernelSpec::Polynomial { c: w, degree },
            KernelSpec::Sigmoid { c, .. } => KernelSpec::Sigmoid { b: w, c },
        }
    }

    /// Whether Gram matrices are guaranteed positive semidefinite.
    pub fn is_mercer(&self) -> bool {
        !matches!(self, KernelSpec::Sigmoid { .. })
    }

    /// Kernel value. Callers guarantee equal lengths.
    pub fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            KernelSpec::Rbf { sigma } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * sigma * sigma)).exp()
            }
            KernelSpec::Polynomial { c, degree } => (linalg::dot(x, y) + c).powi(degree as i32),
            KernelSpec::Sigmoid { b, c } => (b * linalg::dot(x, y) - c).tanh(),
            KernelSpec::MexicanHat { a } => x
                .iter()
                .zip(y)
                .map(|(p, q)| {
                    let u = (p - q) / a;
                    let u2 = u * u;
                    (1.0 - u2) * (-0.5 * u2).exp()
                })
                .product(),
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(SvmError::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        Ok(self.eval_unchecked(x, y))
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Rbf { sigma } => write!(f, "rbf sigma={sigma}"),
            KernelSpec::Polynomial { c, degree } => write!(f, "polynomial c={c} degree={degree}"),
            KernelSpec::Sigmoid { b, c } => write!(f, "sigmoid b={b} c={c}"),
            KernelSpec::MexicanHat { a } => write!(f, "mexican_hat a={a}"),
        }
    }
}

impl FromStr for KernelSpec {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let mut parts = s.split_whitespace();
        let kind: KernelKind = parts.next().ok_or("empty kernel spec")?.parse()?;
        let mut params = std::collections::BTreeMap::new();
        for p in parts {
            let (k, v) = p.split_once('=').ok_or_else(|| format!("expected key=value, got `{p}`"))?;
            params.insert(k, v);
        }
        let num = |k: &str| -> std::result::Result<f64, String> {
            params
                .get(k)
                .ok_or_else(|| format!("kernel parameter `{k}` missing"))?
                .parse::<f64>()
                .map_err(|e| format!("kernel parameter `{k}`: {e}"))
        };
        Ok(match kind {
            KernelKind::Rbf => KernelSpec::Rbf { sigma: num("sigma")? },
            KernelKind::MexicanHat => KernelSpec::MexicanHat { a: num("a")? },
            KernelKind::Sigmoid => KernelSpec::Sigmoid {
                b: num("b")?,
                c: num("c")?,
            },
            KernelKind::Polynomial => KernelSpec::Polynomial {
                c: num("c")?,
                degree: params
                    .get("degree")
                    .ok_or("kernel parameter `degree` missing")?
                    .parse()
                    .map_err(|e| format!("kernel parameter `degree`: {e}"))?,
            },
        })
    }
}

/// Aligned input vectors and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedSet {
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
}

impl SupervisedSet {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(SvmError::DimensionMismatch {
                expected: inputs.len(),
                got: targets.len(),
            });
        }
        let d = inputs.first().map_or(0, Vec::len);
        if let Some(row) = inputs.iter().find(|r| r.len() != d) {
            return Err(SvmError::DimensionMismatch {
                expected: d,
                got: row.len(),
            });
        }
        if inputs.iter().flatten().chain(&targets).any(|v| !v.is_finite()) {
            return Err(SvmError::NonFinite);
        }
        Ok(Self { inputs, targets })
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    /// Splits into the first `len − tail` and the last `tail` pairs.
    pub fn split_tail(&self, tail: usize) -> (SupervisedSet, SupervisedSet) {
        let cut = self.len().saturating_sub(tail);
        (
            SupervisedSet {
                inputs: self.inputs[..cut].to_vec(),
                targets: self.targets[..cut].to_vec(),
            },
            SupervisedSet {
                inputs: self.inputs[cut..].to_vec(),
                targets: self.targets[cut..].to_vec(),
            },
        )
    }
}

/// Gram matrix, computed on the upper triangle and mirrored.
pub fn gram(spec: &KernelSpec, inputs: &[Vec<f64>]) -> Matrix {
    gram_with(spec, inputs, Execution::default())
}

pub fn gram_with(spec: &KernelSpec, inputs: &[Vec<f64>], exec: Execution) -> Matrix {
    let n = inputs.len();
    let upper: Vec<Vec<f64>> = par::map_range(n, exec, |i| {
        (i..n)
            .map(|j| spec.eval_unchecked(&inputs[i], &inputs[j]))
            .collect()
    });
    let mut m = Matrix::zeros(n, n);
    for (i, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            m[(i, i + off)] = v;
            m[(i + off, i)] = v;
        }
    }
    m
}

/// Smallest Gram eigenvalue, or `None` for kernels that are not
/// positive semidefinite in general.
pub fn min_gram_eigenvalue(spec: &KernelSpec, inputs: &[Vec<f64>]) -> Option<f64> {
    spec.is_mercer()
        .then(|| linalg::symmetric_eigenvalues(&gram(spec, inputs))[0])
}

/// The `(N+1)×(N+1)` training system and its right-hand side.
pub fn saddle_system(data: &SupervisedSet, spec: &KernelSpec, gamma: f64) -> (Matrix, Vec<f64>) {
    let n = data.len();
    let omega = gram(spec, data.inputs());
    let mut a = Matrix::zeros(n + 1, n + 1);
    for i in 0..n {
        a[(0, i + 1)] = 1.0;
        a[(i + 1, 0)] = 1.0;
        for j in 0..n {
            a[(i + 1, j + 1)] = omega[(i, j)];
        }
        a[(i + 1, i + 1)] += 1.0 / gamma;
    }
    let mut rhs = Vec::with_capacity(n + 1);
    rhs.push(0.0);
    rhs.extend_from_slice(data.targets());
    (a, rhs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsSvmModel {
    pub support_inputs: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub kernel: KernelSpec,
    /// Embedding delay the inputs were built with; used for recursion.
    pub tau: usize,
}

pub fn train(data: &SupervisedSet, spec: &KernelSpec, gamma: f64) -> Result<LsSvmModel> {
    spec.validate()?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(SvmError::InvalidParameter(format!("gamma must be > 0, got {gamma}")));
    }
    if data.is_empty() {
        return Err(SvmError::Empty);
    }
    let (a, rhs) = saddle_system(data, spec, gamma);
    let (x, pivot_ratio) =
        linalg::solve(&a, &rhs).map_err(|e| SvmError::Singular {
            pivot_ratio: e.pivot_ratio,
        })?;
    let residual = linalg::relative_residual(&a, &x, &rhs);
    if !(residual <= RESIDUAL_TOLERANCE) {
        return Err(SvmError::Inaccurate {
            residual,
            pivot_ratio,
        });
    }
    Ok(LsSvmModel {
        support_inputs: data.inputs().to_vec(),
        alphas: x[1..].to_vec(),
        bias: x[0],
        gamma,
        kernel: *spec,
        tau: 1,
    })
}

impl LsSvmModel {
    pub fn dim(&self) -> usize {
        self.support_inputs.first().map_or(0, Vec::len)
    }

    pub fn with_tau(mut self, tau: usize) -> Self {
        self.tau = tau;
        self
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(SvmError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self.predict_unchecked(x))
    }

    fn predict_unchecked(&self, x: &[f64]) -> f64 {
        self.support_inputs
            .iter()
            .zip(&self.alphas)
            .map(|(s, a)| a * self.kernel.eval_unchecked(s, x))
            .sum::<f64>()
            + self.bias
    }

    pub fn predict_many(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        xs.iter().map(|x| self.predict(x)).collect()
    }

    /// Recursive one-lag forecasting: each prediction is pushed onto the
    /// front of the window and the oldest component drops off.
    pub fn forecast_iterated(&self, seed_window: &[f64], steps: usize) -> Result<Vec<f64>> {
        let mut window = seed_window.to_vec();
        if window.len() != self.dim() {
            return Err(SvmError::DimensionMismatch {
                expected: self.dim(),
                got: window.len(),
            });
        }
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            let y = self.predict_unchecked(&window);
            out.push(y);
            window.rotate_right(1);
            window[0] = y;
        }
        Ok(out)
    }

    /// Recursive forecasting from a history for any delay: the window for
    /// each step is `[y(t), y(t−τ), …]` over the history extended with the
    /// predictions so far.
    pub fn forecast_recursive(&self, history: &[f64], steps: usize) -> Result<Vec<f64>> {
        let dim = self.dim();
        let tau = self.tau.max(1);
        let span = (dim.max(1) - 1) * tau;
        if history.len() < span + 1 {
            return Err(SvmError::DimensionMismatch {
                expected: span + 1,
                got: history.len(),
            });
        }
        let mut ext = history.to_vec();
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            let t = ext.len() - 1;
            let window: Vec<f64> = (0..dim).map(|j| ext[t - j * tau]).collect();
            let y = self.predict_unchecked(&window);
            out.push(y);
            ext.push(y);
        }
        Ok(out)
    }

    /// Writes the text model artifact. Floats use shortest round-trip
    /// formatting, so [`LsSvmModel::from_text`] restores the model exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("kernel {}\n", self.kernel));
        s.push_str(&format!("gamma {}\n", self.gamma));
        s.push_str(&format!("bias {}\n", self.bias));
        s.push_str(&format!("dim {}\n", self.dim()));
        s.push_str(&format!("tau {}\n", self.tau));
        s.push_str("alphas\n");
        for (i, a) in self.alphas.iter().enumerate() {
            s.push_str(&format!("{i},{a}\n"));
        }
        s.push_str("inputs\n");
        for x in &self.support_inputs {
            let row: Vec<String> = x.iter().map(f64::to_string).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut header = |key: &str| -> Result<(usize, String)> {
            let (n, line) = lines.next().ok_or(SvmError::Parse {
                line: 0,
                message: format!("missing `{key}` line"),
            })?;
            let rest = line.strip_prefix(key).and_then(|r| r.strip_prefix(' '));
            rest.map(|r| (n, r.to_string())).ok_or(SvmError::Parse {
                line: n,
                message: format!("expected `{key} …`"),
            })
        };
        let perr = |line: usize, e: &dyn fmt::Display| SvmError::Parse {
            line,
            message: e.to_string(),
        };
        let (n, k) = header("kernel")?;
        let kernel: KernelSpec = k.parse().map_err(|e: String| perr(n, &e))?;
        let (n, g) = header("gamma")?;
        let gamma: f64 = g.parse().map_err(|e| perr(n, &e))?;
        let (n, b) = header("bias")?;
        let bias: f64 = b.parse().map_err(|e| perr(n, &e))?;
        let (n, d) = header("dim")?;
        let dim: usize = d.parse().map_err(|e| perr(n, &e))?;
        let (n, t) = header("tau")?;
        let tau: usize = t.parse().map_err(|e| perr(n, &e))?;

        let mut alphas = Vec::new();
        let mut support_inputs = Vec::new();
        let mut section = "";
        for (n, line) in lines {
            match line {
                "" => continue,
                "alphas" | "inputs" => {
                    section = if line == "alphas" { "alphas" } else { "inputs" };
                    continue;
                }
                _ => {}
            }
            match section {
                "alphas" => {
                    let (idx, a) = line.split_once(',').ok_or_else(|| perr(n, &"expected index,alpha"))?;
                    let idx: usize = idx.parse().map_err(|e| perr(n, &e))?;
                    if idx != alphas.len() {
                        return Err(perr(n, &format!("alpha index {idx} out of order")));
                    }
                    alphas.push(a.parse::<f64>().map_err(|e| perr(n, &e))?);
                }
                "inputs" => {
                    let row = line
                        .split(',')
                        .map(|v| v.parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|e| perr(n, &e))?;
                    if row.len() != dim {
                        return Err(perr(n, &format!("input row has {} values, dim is {dim}", row.len())));
                    }
                    support_inputs.push(row);
                }
                _ => return Err(perr(n, &"data before `alphas` section")),
            }
        }
        if alphas.len() != support_inputs.len() {
            return Err(SvmError::Parse {
                line: 0,
                message: format!("{} alphas but {} inputs", alphas.len(), support_inputs.len()),
            });
        }
        Ok(LsSvmModel {
            support_inputs,
            alphas,
            bias,
            gamma,
            kernel,
            tau,
        })
    }
}
