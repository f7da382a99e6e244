//! The one-dimensional state diffusion `dY = mu(Y) dt + sigma(Y) dW` on an
//! open interval, the volatility map `b`, correlation schemes, and the drift
//! of `Y` under the price-numeraire measure.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{self, CompiledExpr, EvalError, Expr, Interval, ParamBindings, SyntaxError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiffusionError {
    #[error("invalid state interval ({lower}, {upper}): lower end must be below upper end")]
    InvalidInterval { lower: f64, upper: f64 },
    #[error("initial point {x0} is outside the state interval ({lower}, {upper})")]
    InitialPointOutside { x0: f64, lower: f64, upper: f64 },
    #[error("correlation {rho} outside [{min}, {max}] for the {scheme} scheme")]
    InvalidCorrelation {
        scheme: &'static str,
        rho: f64,
        min: f64,
        max: f64,
    },
    #[error("in `{field}`: {source}")]
    Syntax {
        field: &'static str,
        #[source]
        source: SyntaxError,
    },
    #[error("in `{field}`: {source}")]
    Eval {
        field: &'static str,
        #[source]
        source: EvalError,
    },
    #[error("model file: {0}")]
    ModelFile(String),
}

/// Open state interval `(lower, upper)`; either end may be infinite.
/// Both ends are absorbing if reached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateInterval {
    lower: f64,
    upper: f64,
}

impl StateInterval {
    pub fn new(lower: f64, upper: f64) -> Result<Self, DiffusionError> {
        let ok = !lower.is_nan()
            && !upper.is_nan()
            && lower < upper
            && lower != f64::INFINITY
            && upper != f64::NEG_INFINITY;
        if !ok {
            return Err(DiffusionError::InvalidInterval { lower, upper });
        }
        Ok(StateInterval { lower, upper })
    }

    pub fn positive_half_line() -> Self {
        StateInterval {
            lower: 0.0,
            upper: f64::INFINITY,
        }
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower < x && x < self.upper
    }

    pub fn end(&self, side: Boundary) -> f64 {
        match side {
            Boundary::Lower => self.lower,
            Boundary::Upper => self.upper,
        }
    }

    /// Clamp `x` into the interior, keeping a margin from finite ends.
    pub fn clamp_interior(&self, x: f64) -> f64 {
        if self.contains(x) {
            return x;
        }
        match (self.lower.is_finite(), self.upper.is_finite()) {
            (true, true) => {
                let w = self.upper - self.lower;
                x.clamp(self.lower + 1e-3 * w, self.upper - 1e-3 * w)
            }
            (true, false) => self.lower + 1.0,
            (false, true) => self.upper - 1.0,
            (false, false) => 0.0,
        }
    }

    pub fn as_interval(&self) -> Interval {
        Interval::new(self.lower, self.upper)
    }

    /// Interior probe points spaced logarithmically toward each end.
    pub fn probe_grid(&self, n: usize) -> Vec<f64> {
        let n = n.max(2);
        let lin = |a: f64, b: f64, i: usize| a + (b - a) * i as f64 / (n - 1) as f64;
        match (self.lower.is_finite(), self.upper.is_finite()) {
            (true, true) => {
                // logistic spacing clusters points toward both ends
                let w = self.upper - self.lower;
                (0..n)
                    .map(|i| {
                        let z = lin(-7.0, 7.0, i);
                        self.lower + w / (1.0 + (-z).exp())
                    })
                    .collect()
            }
            (true, false) => (0..n)
                .map(|i| self.lower + 10f64.powf(lin(-3.0, 2.0, i)))
                .collect(),
            (false, true) => (0..n)
                .rev()
                .map(|i| self.upper - 10f64.powf(lin(-3.0, 2.0, i)))
                .collect(),
            (false, false) => (0..n).map(|i| lin(-5.0, 5.0, i).sinh()).collect(),
        }
    }
}

impl fmt::Display for StateInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lower, self.upper)
    }
}

/// Which end of the state interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Lower,
    Upper,
}

impl Boundary {
    pub fn sign(self) -> f64 {
        match self {
            Boundary::Lower => -1.0,
            Boundary::Upper => 1.0,
        }
    }
}

/// How the asset's Brownian driver is built from the volatility driver `W`
/// and an independent `B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorrelationScheme {
    /// `T = rho W - sqrt(1 - rho^2) B`, `rho` in `[-1, 1]`.
    Cholesky { rho: f64 },
    /// `T_t = W_t - int_0^t ((1 - rho) W_s + sqrt(rho - rho^2) B_s) / s ds`,
    /// `rho` in `[0, 1]`.
    WuYor { rho: f64 },
}

impl CorrelationScheme {
    pub fn cholesky(rho: f64) -> Result<Self, DiffusionError> {
        if !(-1.0..=1.0).contains(&rho) {
            return Err(DiffusionError::InvalidCorrelation {
                scheme: "cholesky",
                rho,
                min: -1.0,
                max: 1.0,
            });
        }
        Ok(CorrelationScheme::Cholesky { rho })
    }

    pub fn wu_yor(rho: f64) -> Result<Self, DiffusionError> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(DiffusionError::InvalidCorrelation {
                scheme: "wu_yor",
                rho,
                min: 0.0,
                max: 1.0,
            });
        }
        Ok(CorrelationScheme::WuYor { rho })
    }

    pub fn rho(&self) -> f64 {
        match *self {
            CorrelationScheme::Cholesky { rho } | CorrelationScheme::WuYor { rho } => rho,
        }
    }

    /// Coefficient of `b * sigma` in the drift correction under the price
    /// numeraire. The Wu-Yor corrector is of finite variation and carries no
    /// covariation with `W`, so its coefficient is 1 whatever `rho` is.
    pub fn drift_lambda(&self) -> f64 {
        match *self {
            CorrelationScheme::Cholesky { rho } => rho,
            CorrelationScheme::WuYor { .. } => 1.0,
        }
    }

    pub fn kind(&self) -> SchemeKind {
        match self {
            CorrelationScheme::Cholesky { .. } => SchemeKind::Cholesky,
            CorrelationScheme::WuYor { .. } => SchemeKind::WuYor,
        }
    }

    pub fn with_rho(kind: SchemeKind, rho: f64) -> Result<Self, DiffusionError> {
        match kind {
            SchemeKind::Cholesky => Self::cholesky(rho),
            SchemeKind::WuYor => Self::wu_yor(rho),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Cholesky,
    WuYor,
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchemeKind::Cholesky => "cholesky",
            SchemeKind::WuYor => "wu_yor",
        })
    }
}

type FieldFn = dyn Fn(f64) -> Result<f64, EvalError> + Send + Sync;

/// A real function on the state interval.
#[derive(Clone)]
pub struct CoefficientField {
    f: Arc<FieldFn>,
    formula: Option<String>,
}

impl CoefficientField {
    pub fn new<F>(f: F, formula: Option<String>) -> Self
    where
        F: Fn(f64) -> Result<f64, EvalError> + Send + Sync + 'static,
    {
        CoefficientField {
            f: Arc::new(f),
            formula,
        }
    }

    pub fn from_expr(e: &Expr, params: &ParamBindings) -> Result<Self, EvalError> {
        let compiled = CompiledExpr::compile(e, params)?;
        Ok(Self::new(move |x| compiled.eval(x), Some(e.to_string())))
    }

    pub fn constant(v: f64) -> Self {
        Self::new(move |_| Ok(v), Some(format!("{v:?}")))
    }

    pub fn eval(&self, x: f64) -> Result<f64, EvalError> {
        (self.f)(x)
    }

    pub fn formula(&self) -> Option<&str> {
        self.formula.as_deref()
    }

    /// Pointwise square, used for the `b^2` weight.
    pub fn squared(&self) -> Self {
        let f = Arc::clone(&self.f);
        let formula = self.formula.as_ref().map(|s| format!("({s})^2"));
        Self::new(move |x| f(x).map(|v| v * v), formula)
    }
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("formula", &self.formula)
            .finish()
    }
}

/// The stochastic-volatility model: `dZ = Z b(Y) dW1`, `dY = mu(Y) dt + sigma(Y) dW`.
#[derive(Debug, Clone)]
pub struct DiffusionSpec {
    interval: StateInterval,
    mu: Expr,
    sigma: Expr,
    b: Expr,
    x0: f64,
    params: ParamBindings,
    mu_field: CoefficientField,
    sigma_field: CoefficientField,
    b_field: CoefficientField,
}

impl DiffusionSpec {
    pub fn new(
        interval: StateInterval,
        mu: Expr,
        sigma: Expr,
        b: Expr,
        x0: f64,
        params: ParamBindings,
    ) -> Result<Self, DiffusionError> {
        if !interval.contains(x0) {
            return Err(DiffusionError::InitialPointOutside {
                x0,
                lower: interval.lower(),
                upper: interval.upper(),
            });
        }
        let field = |name: &'static str, e: &Expr| {
            CoefficientField::from_expr(e, &params)
                .map_err(|source| DiffusionError::Eval { field: name, source })
        };
        let mu_field = field("mu", &mu)?;
        let sigma_field = field("sigma", &sigma)?;
        let b_field = field("b", &b)?;
        Ok(DiffusionSpec {
            interval,
            mu,
            sigma,
            b,
            x0,
            params,
            mu_field,
            sigma_field,
            b_field,
        })
    }

    /// Build from coefficient source text.
    pub fn parse(
        interval: StateInterval,
        mu: &str,
        sigma: &str,
        b: &str,
        x0: f64,
        params: ParamBindings,
    ) -> Result<Self, DiffusionError> {
        let p = |field: &'static str, text: &str| {
            expr::parse(text).map_err(|source| DiffusionError::Syntax { field, source })
        };
        Self::new(interval, p("mu", mu)?, p("sigma", sigma)?, p("b", b)?, x0, params)
    }

    pub fn interval(&self) -> StateInterval {
        self.interval
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn params(&self) -> &ParamBindings {
        &self.params
    }

    pub fn mu_expr(&self) -> &Expr {
        &self.mu
    }

    pub fn sigma_expr(&self) -> &Expr {
        &self.sigma
    }

    pub fn b_expr(&self) -> &Expr {
        &self.b
    }

    pub fn mu(&self) -> &CoefficientField {
        &self.mu_field
    }

    pub fn sigma(&self) -> &CoefficientField {
        &self.sigma_field
    }

    pub fn b(&self) -> &CoefficientField {
        &self.b_field
    }

    pub fn with_x0(&self, x0: f64) -> Result<Self, DiffusionError> {
        Self::new(
            self.interval,
            self.mu.clone(),
            self.sigma.clone(),
            self.b.clone(),
            x0,
            self.params.clone(),
        )
    }

    /// Default base point for scale and test functions.
    pub fn default_base_point(&self) -> f64 {
        self.interval.clamp_interior(self.x0)
    }
}

/// Drift of `Y` under the measure that uses the price as numeraire:
/// `mu(x) + lambda * b(x) * sigma(x)`, with `lambda = rho` for Cholesky and
/// `lambda = 1` for Wu-Yor.
pub fn q_drift(spec: &DiffusionSpec, scheme: &CorrelationScheme) -> CoefficientField {
    let lambda = scheme.drift_lambda();
    if lambda == 0.0 {
        return spec.mu().clone();
    }
    let (mu, b, sigma) = (spec.mu().clone(), spec.b().clone(), spec.sigma().clone());
    let formula = format!("{} + {lambda:?} * ({}) * ({})", spec.mu, spec.b, spec.sigma);
    CoefficientField::new(
        move |x| {
            let m = mu.eval(x)?;
            let bv = b.eval(x)?;
            let s = sigma.eval(x)?;
            Ok(m + lambda * bv * s)
        },
        Some(formula),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Warning {
    pub x: Option<f64>,
    pub message: String,
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.x {
            Some(x) => write!(f, "at x = {x}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Spot-check the regularity assumptions on a log-spaced probe grid.
///
/// Local integrability of `1/sigma^2`, `mu/sigma^2` and `b^2/sigma^2` is not
/// machine-checkable; this only reports vanishing `sigma` (including sign
/// changes between probes), non-finite ratios and evaluation errors.
/// Classification proceeds regardless.
pub fn check_assumption_h(spec: &DiffusionSpec, n_probe: usize) -> Vec<Warning> {
    let n_probe = n_probe.max(3);
    let grid = spec.interval.probe_grid(n_probe);
    let mut out: Vec<Warning> = Vec::new();
    let mut push = |w: Warning| {
        if !out.contains(&w) {
            out.push(w);
        }
    };
    let mut prev: Option<(f64, f64)> = None;
    for &x in &grid {
        let s = match spec.sigma().eval(x) {
            Ok(s) => s,
            Err(e) => {
                push(Warning {
                    x: Some(x),
                    message: format!("sigma: {e}"),
                });
                prev = None;
                continue;
            }
        };
        if s == 0.0 {
            push(Warning {
                x: Some(x),
                message: "sigma vanishes".into(),
            });
        } else if let Some((px, ps)) = prev {
            if ps.signum() != s.signum() && ps != 0.0 {
                let root = bisect_root(spec.sigma(), px, x, ps);
                push(Warning {
                    x: Some(root),
                    message: format!("sigma changes sign between {px} and {x}"),
                });
            }
        }
        prev = Some((x, s));
        let s2 = s * s;
        let checks: [(&str, Result<f64, EvalError>); 3] = [
            ("1/sigma^2", Ok(1.0 / s2)),
            ("mu/sigma^2", spec.mu().eval(x).map(|m| m / s2)),
            ("b^2/sigma^2", spec.b().eval(x).map(|b| b * b / s2)),
        ];
        for (name, v) in checks {
            match v {
                Ok(v) if v.is_finite() => {}
                Ok(v) => push(Warning {
                    x: Some(x),
                    message: format!("{name} is not finite ({v})"),
                }),
                Err(e) => push(Warning {
                    x: Some(x),
                    message: format!("{name}: {e}"),
                }),
            }
        }
    }
    out
}

fn bisect_root(f: &CoefficientField, mut a: f64, mut b: f64, fa: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        match f.eval(mid) {
            Ok(0.0) => return mid,
            Ok(v) if v.signum() == fa.signum() => a = mid,
            Ok(_) => b = mid,
            Err(_) => break,
        }
    }
    0.5 * (a + b)
}

/// JSON model description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub interval: IntervalRepr,
    pub mu: String,
    pub sigma: String,
    pub b: String,
    pub x0: f64,
    #[serde(default)]
    pub params: ParamBindings,
    pub scheme: SchemeRepr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRepr {
    pub lower: BoundRepr,
    pub upper: BoundRepr,
}

/// An interval end: a number, or the strings `"-inf"` / `"inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoundRepr {
    Number(f64),
    Text(String),
}

impl BoundRepr {
    fn value(&self) -> Result<f64, DiffusionError> {
        match self {
            BoundRepr::Number(v) => Ok(*v),
            BoundRepr::Text(t) => match t.as_str() {
                "-inf" => Ok(f64::NEG_INFINITY),
                "inf" | "+inf" => Ok(f64::INFINITY),
                other => Err(DiffusionError::ModelFile(format!(
                    "interval end must be a number, \"-inf\" or \"inf\", got {other:?}"
                ))),
            },
        }
    }

    fn from_value(v: f64) -> Self {
        if v == f64::INFINITY {
            BoundRepr::Text("inf".into())
        } else if v == f64::NEG_INFINITY {
            BoundRepr::Text("-inf".into())
        } else {
            BoundRepr::Number(v)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeRepr {
    pub kind: SchemeKind,
    pub rho: f64,
}

impl ModelFile {
    pub fn from_json(text: &str) -> Result<Self, DiffusionError> {
        serde_json::from_str(text).map_err(|e| DiffusionError::ModelFile(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model file serializes")
    }

    pub fn build(&self) -> Result<(DiffusionSpec, CorrelationScheme), DiffusionError> {
        let interval = StateInterval::new(self.interval.lower.value()?, self.interval.upper.value()?)?;
        let spec = DiffusionSpec::parse(
            interval,
            &self.mu,
            &self.sigma,
            &self.b,
            self.x0,
            self.params.clone(),
        )?;
        let scheme = CorrelationScheme::with_rho(self.scheme.kind, self.scheme.rho)?;
        Ok((spec, scheme))
    }

    pub fn describe(spec: &DiffusionSpec, scheme: &CorrelationScheme) -> Self {
        let j = spec.interval();
        ModelFile {
            interval: IntervalRepr {
                lower: BoundRepr::from_value(j.lower()),
                upper: BoundRepr::from_value(j.upper()),
            },
            mu: spec.mu_expr().to_string(),
            sigma: spec.sigma_expr().to_string(),
            b: spec.b_expr().to_string(),
            x0: spec.x0(),
            params: spec.params().clone(),
            scheme: SchemeRepr {
                kind: scheme.kind(),
                rho: scheme.rho(),
            },
        }
    }
}
