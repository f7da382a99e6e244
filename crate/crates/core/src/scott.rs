//! The Scott stochastic-volatility model: log-volatility follows an
//! Ornstein–Uhlenbeck process `dY = alpha (m - Y) dt + beta dW` on
//! `(0, inf)` and the price has volatility `exp(Y)`.
//!
//! Besides the model itself this module carries closed-form knowledge used
//! as oracles: the exact finiteness pattern of every boundary limit, the
//! asymptotic tail equivalents that sharpen the numeric limits, and the
//! expected answers to the four classification questions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{Finiteness, Profile, ProfileFlags, SideFlags};
use crate::diffusion::{
    Boundary, CoefficientField, CorrelationScheme, DiffusionError, DiffusionSpec, SchemeKind,
    StateInterval,
};
use crate::expr::ParamBindings;
use crate::quadrature::{Measure, TailAnnotation};

pub const PRESET_CHOLESKY: &str = "scott-cholesky";
pub const PRESET_WU_YOR: &str = "scott-wuyor";

/// Scheme family for a preset name.
pub fn preset_kind(name: &str) -> Option<SchemeKind> {
    match name {
        PRESET_CHOLESKY => Some(SchemeKind::Cholesky),
        PRESET_WU_YOR => Some(SchemeKind::WuYor),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScottError {
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
}

/// Model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScottParams {
    /// Mean-reversion rate.
    pub alpha: f64,
    /// Long-run log-volatility level.
    pub m: f64,
    /// Volatility of log-volatility.
    pub beta: f64,
    /// Initial log-volatility.
    pub x0: f64,
}

impl Default for ScottParams {
    fn default() -> Self {
        ScottParams {
            alpha: 1.0,
            m: 1.0,
            beta: 1.0,
            x0: 1.0,
        }
    }
}

impl ScottParams {
    pub fn new(alpha: f64, m: f64, beta: f64, x0: f64) -> Result<Self, ScottError> {
        let p = ScottParams { alpha, m, beta, x0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ScottError> {
        for (name, value) in [
            ("alpha", self.alpha),
            ("m", self.m),
            ("beta", self.beta),
            ("x0", self.x0),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ScottError::NonPositive { name, value });
            }
        }
        Ok(())
    }

    pub fn bindings(&self) -> ParamBindings {
        ParamBindings::from([("alpha", self.alpha), ("m", self.m), ("beta", self.beta)])
    }
}

pub const MU: &str = "alpha*(m-x)";
pub const SIGMA: &str = "beta";
pub const B: &str = "exp(x)";

/// The model as a generic diffusion on `(0, inf)`.
pub fn scott_spec(p: ScottParams) -> Result<DiffusionSpec, ScottError> {
    p.validate()?;
    Ok(DiffusionSpec::parse(
        StateInterval::positive_half_line(),
        MU,
        SIGMA,
        B,
        p.x0,
        p.bindings(),
    )?)
}

/// Exact finiteness of the twelve boundary limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalyticProfile {
    pub p: SideFlags,
    pub q: SideFlags,
}

impl Profile for AnalyticProfile {
    fn flags(&self) -> ProfileFlags {
        ProfileFlags {
            p: self.p,
            q: self.q,
            b_is_zero: false,
        }
    }
}

const fn row(s_upper: Finiteness, v_upper: Finiteness) -> SideFlags {
    SideFlags {
        s_lower: Finiteness::Finite,
        s_upper,
        v_lower: Finiteness::Finite,
        v_upper,
        vb_lower: Finiteness::Finite,
        vb_upper: Finiteness::Infinite,
    }
}

/// Everything diverges at infinity: the mean reversion dominates.
const DIVERGENT_ROW: SideFlags = row(Finiteness::Infinite, Finiteness::Infinite);
/// The drift correction `lambda beta e^x` pushes the process to infinity
/// fast enough for `s` and `v` to converge there; `v_b` still diverges.
const PUSHED_ROW: SideFlags = row(Finiteness::Finite, Finiteness::Finite);

/// Whether the price-numeraire drift carries a positive `e^x` term.
fn pushed(scheme: &CorrelationScheme) -> bool {
    scheme.drift_lambda() > 0.0
}

/// The exact profile. Parameter values do not enter; only the sign of the
/// drift correction does.
pub fn analytic_profile(_p: ScottParams, scheme: &CorrelationScheme) -> AnalyticProfile {
    AnalyticProfile {
        p: DIVERGENT_ROW,
        q: if pushed(scheme) {
            PUSHED_ROW
        } else {
            DIVERGENT_ROW
        },
    }
}

/// Tail equivalents for the numeric limits.
///
/// Near `0` the scale density is bounded and positive, so
/// `int_0^y s' ~ y s'(y)`. At infinity under a pushed drift,
/// `s'(y) = exp((alpha/beta^2)(y-m)^2 - (2 lambda/beta) e^y)` up to a constant
/// and `int_y^inf s' ~ (beta / (2 lambda)) e^-y s'(y)`. Divergent tails get
/// no annotation.
pub fn tail_annotations(p: ScottParams, scheme: &CorrelationScheme) -> Vec<TailAnnotation> {
    let near_zero = || CoefficientField::new(Ok, Some("x".into()));
    let mut out = vec![
        TailAnnotation {
            boundary: Boundary::Lower,
            measure: Measure::P,
            equivalent: near_zero(),
        },
        TailAnnotation {
            boundary: Boundary::Lower,
            measure: Measure::Q,
            equivalent: near_zero(),
        },
    ];
    if pushed(scheme) {
        let k = p.beta / (2.0 * scheme.drift_lambda());
        out.push(TailAnnotation {
            boundary: Boundary::Upper,
            measure: Measure::Q,
            equivalent: CoefficientField::new(
                move |y| Ok(k * (-y).exp()),
                Some(format!("{k}*exp(-x)")),
            ),
        });
    }
    out
}

/// Known answers to the classification questions.
///
/// `positive_at_infinity` is the known *conclusion* `P(S_inf > 0) < 1`
/// (hence `false`), which is not what the raw positivity conditions
/// report: condition 3 holds for every scheme. See [`crate::classifier`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedVerdicts {
    pub martingale: bool,
    pub uniformly_integrable: bool,
    pub positive_finite_t: bool,
    pub positive_at_infinity: bool,
}

pub fn theorem_verdict(scheme: &CorrelationScheme) -> ExpectedVerdicts {
    let true_martingale = match scheme.kind() {
        SchemeKind::Cholesky => scheme.rho() <= 0.0,
        SchemeKind::WuYor => false,
    };
    ExpectedVerdicts {
        martingale: true_martingale,
        uniformly_integrable: true_martingale,
        positive_finite_t: true,
        positive_at_infinity: false,
    }
}
