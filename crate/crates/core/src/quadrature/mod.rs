//! Scale functions, test functions, and their limits at the boundaries of
//! the state interval.
//!
//! Everything is evaluated in log space: the log scale density
//! `-P(y) = -int_c^y 2 drift / sigma^2` comes from a lazily built Chebyshev
//! antiderivative, outer integrals are accumulated with log-sum-exp, and the
//! nested test functions are computed through
//!
//! ```text
//! v(x) = 2 |int_c^x H(z) dz|,   H(z) = |int_c^z q(y) exp(P(y) - P(z)) dy|,   q = weight / sigma^2
//! ```
//!
//! which equals the textbook form `2 int_c^x (s(x) - s(y)) q(y) / s'(y) dy`
//! after exchanging the order of integration, and never forms `s(x) - s(y)`.

mod engine;
pub mod gk;
mod limit;
mod primitive;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffusion::{Boundary, CoefficientField, StateInterval};
use engine::Engine;
use engine::Target;
use limit::{annotated_verdict, combine, raw_verdict, Family, Magnitude, Mesh};

/// Tolerances and mesh parameters for limit evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub boundary_mesh_factor: f64,
    pub max_refinements: u32,
    pub divergence_threshold: f64,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            boundary_mesh_factor: 2.0,
            max_refinements: 60,
            divergence_threshold: 1e12,
        }
    }
}

impl QuadConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err("tolerances must be positive".into());
        }
        if !(self.boundary_mesh_factor > 1.0 && self.boundary_mesh_factor.is_finite()) {
            return Err("mesh factor must be a finite number above 1".into());
        }
        if !(self.divergence_threshold > 1.0) {
            return Err("divergence threshold must exceed 1".into());
        }
        if self.max_refinements < 3 {
            return Err("at least 3 refinements are needed".into());
        }
        Ok(())
    }
}

/// Value of an integral or improper limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntegralVerdict {
    Finite { value: f64, err: f64 },
    Infinite { sign: i8 },
    Inconclusive { reason: String },
}

impl IntegralVerdict {
    pub fn is_finite(&self) -> bool {
        matches!(self, IntegralVerdict::Finite { .. })
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, IntegralVerdict::Infinite { .. })
    }

    pub fn is_inconclusive(&self) -> bool {
        matches!(self, IntegralVerdict::Inconclusive { .. })
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            IntegralVerdict::Finite { value, .. } => Some(*value),
            _ => None,
        }
    }

    fn inconclusive(reason: impl Into<String>) -> Self {
        IntegralVerdict::Inconclusive {
            reason: reason.into(),
        }
    }
}

impl fmt::Display for IntegralVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntegralVerdict::Finite { value, .. } => write!(f, "finite ({value:.6e})"),
            IntegralVerdict::Infinite { sign } if *sign < 0 => f.write_str("-inf"),
            IntegralVerdict::Infinite { .. } => f.write_str("+inf"),
            IntegralVerdict::Inconclusive { reason } => write!(f, "inconclusive ({reason})"),
        }
    }
}

/// Which drift the scale function is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Measure {
    /// The original measure, drift `mu`.
    P,
    /// The price-numeraire measure, drift `mu + lambda b sigma`.
    Q,
}

/// Asymptotic form of the tail of the scale density at a boundary:
/// `|int_y^boundary s'| ~ equivalent(y) * s'(y)`.
#[derive(Debug, Clone)]
pub struct TailAnnotation {
    pub boundary: Boundary,
    pub measure: Measure,
    pub equivalent: CoefficientField,
}

/// A numerical failure; surfaces as [`IntegralVerdict::Inconclusive`].
#[derive(Debug, Clone, PartialEq, Error)]
pub struct QuadError {
    pub x: Option<f64>,
    pub reason: String,
}

impl QuadError {
    pub(crate) fn at(x: f64, reason: impl Into<String>) -> Self {
        QuadError {
            x: Some(x),
            reason: reason.into(),
        }
    }

    pub(crate) fn new(reason: impl Into<String>) -> Self {
        QuadError {
            x: None,
            reason: reason.into(),
        }
    }
}

impl fmt::Display for QuadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.x {
            Some(x) => write!(f, "{} at x = {x}", self.reason),
            None => f.write_str(&self.reason),
        }
    }
}

impl From<QuadError> for IntegralVerdict {
    fn from(e: QuadError) -> Self {
        IntegralVerdict::inconclusive(e.to_string())
    }
}

const INNER_ABS_TOL: f64 = 1e-13;

/// `log s'(y) = -int_c^y 2 drift / sigma^2`, by adaptive Gauss-Kronrod.
pub fn log_scale_density(
    drift: &CoefficientField,
    sigma: &CoefficientField,
    c: f64,
    y: f64,
) -> Result<f64, QuadError> {
    let g = |u: f64| -> Result<f64, QuadError> {
        let d = drift.eval(u).map_err(|e| QuadError::at(u, e.to_string()))?;
        let s = sigma.eval(u).map_err(|e| QuadError::at(u, e.to_string()))?;
        let v = 2.0 * d / (s * s);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(QuadError::at(u, "non-finite integrand"))
        }
    };
    let r = gk::integrate(g, c, y, INNER_ABS_TOL, 1e-13, 60)?;
    if !r.converged && r.abs_err > 1e-8 * r.value.abs().max(1.0) {
        return Err(QuadError::new(format!(
            "inner integral did not converge (error {:.2e})",
            r.abs_err
        )));
    }
    Ok(-r.value)
}

fn check_point(interval: &StateInterval, x: f64, what: &str) -> Result<(), QuadError> {
    if interval.contains(x) {
        Ok(())
    } else {
        Err(QuadError::at(x, format!("{what} outside the state interval")))
    }
}

fn finite_from_log(sign: f64, lq: gk::LogQuad) -> IntegralVerdict {
    if lq.log_value == f64::NEG_INFINITY {
        return IntegralVerdict::Finite {
            value: 0.0,
            err: 0.0,
        };
    }
    if lq.log_value > f64::MAX.ln() {
        return IntegralVerdict::inconclusive("value overflows a double");
    }
    if !lq.converged && lq.rel_err > 1e-4 {
        return IntegralVerdict::inconclusive(format!(
            "quadrature did not converge (relative error {:.2e})",
            lq.rel_err
        ));
    }
    let v = lq.log_value.exp();
    IntegralVerdict::Finite {
        value: sign * v,
        err: v * lq.rel_err,
    }
}

/// `s(x) = int_c^x s'(y) dy`; negative for `x < c`.
pub fn scale_at(
    drift: &CoefficientField,
    sigma: &CoefficientField,
    interval: StateInterval,
    c: f64,
    x: f64,
    cfg: &QuadConfig,
) -> IntegralVerdict {
    let run = || -> Result<IntegralVerdict, QuadError> {
        check_point(&interval, c, "base point")?;
        check_point(&interval, x, "evaluation point")?;
        if x == c {
            return Ok(IntegralVerdict::Finite {
                value: 0.0,
                err: 0.0,
            });
        }
        let mut eng = Engine::new(drift, sigma, None, interval, c, cfg);
        let lq = eng.scale_increment(c.min(x), c.max(x))?;
        Ok(finite_from_log(if x > c { 1.0 } else { -1.0 }, lq))
    };
    run().unwrap_or_else(Into::into)
}

/// `v(x) = 2 int_c^x (s(x) - s(y)) weight(y) / (s'(y) sigma(y)^2) dy >= 0`.
pub fn test_v_at(
    drift: &CoefficientField,
    sigma: &CoefficientField,
    weight: &CoefficientField,
    interval: StateInterval,
    c: f64,
    x: f64,
    cfg: &QuadConfig,
) -> IntegralVerdict {
    let run = || -> Result<IntegralVerdict, QuadError> {
        check_point(&interval, c, "base point")?;
        check_point(&interval, x, "evaluation point")?;
        if x == c {
            return Ok(IntegralVerdict::Finite {
                value: 0.0,
                err: 0.0,
            });
        }
        let mut eng = Engine::new(drift, sigma, Some(weight), interval, c, cfg);
        let lq = eng.v_increment(c.min(x), c.max(x))?;
        Ok(finite_from_log(1.0, lq))
    };
    run().unwrap_or_else(Into::into)
}

fn signed(m: Magnitude, sign: f64) -> IntegralVerdict {
    match m {
        Magnitude::Finite { value, err } => IntegralVerdict::Finite {
            value: sign * value,
            err,
        },
        Magnitude::Infinite => IntegralVerdict::Infinite {
            sign: if sign < 0.0 { -1 } else { 1 },
        },
        Magnitude::Inconclusive(reason) => IntegralVerdict::Inconclusive { reason },
    }
}

fn annotation_for(
    annotation: Option<&TailAnnotation>,
    boundary: Boundary,
) -> Result<Option<&TailAnnotation>, QuadError> {
    match annotation {
        Some(a) if a.boundary != boundary => Err(QuadError::new(format!(
            "annotation is for the {:?} boundary, not {:?}",
            a.boundary, boundary
        ))),
        other => Ok(other),
    }
}

/// `s(boundary) = lim s(x)`: evaluated along a geometric mesh toward the
/// boundary. Divergence is declared only when increments stop shrinking and
/// the running value passes `divergence_threshold`; convergence when
/// extrapolated values agree to tolerance.
///
/// With an annotation, the remainder `|s(boundary) - s(x)|` is estimated as
/// `equivalent(x) s'(x)` and the annotated sequence is run through the same
/// tests; if it reaches a different verdict than the raw one the result is
/// `Inconclusive("asymptotic mismatch")`.
pub fn scale_limit(
    drift: &CoefficientField,
    sigma: &CoefficientField,
    interval: StateInterval,
    c: f64,
    boundary: Boundary,
    annotation: Option<&TailAnnotation>,
    cfg: &QuadConfig,
) -> IntegralVerdict {
    scale_limit_scaled(drift, sigma, interval, c, boundary, annotation, cfg, 0.0)
}

/// [`scale_limit`] for the scale density multiplied by `exp(log_factor)`.
///
/// A positive constant factor never changes whether the limit is finite;
/// this entry point exists to check that the verdict logic respects that.
#[allow(clippy::too_many_arguments)]
pub fn scale_limit_scaled(
    drift: &CoefficientField,
    sigma: &CoefficientField,
    interval: StateInterval,
    c: f64,
    boundary: Boundary,
    annotation: Option<&TailAnnotation>,
    cfg: &QuadConfig,
    log_factor: f64,
) -> IntegralVerdict {
    let run = || -> Result<IntegralVerdict, QuadError> {
        check_point(&interval, c, "base point")?;
        cfg.validate().map_err(QuadError::new)?;
        let annotation = annotation_for(annotation, boundary)?;
        let mesh = Mesh::new(interval, c, boundary, cfg.boundary_mesh_factor);
        let mut eng = Engine::new(drift, sigma, None, interval, c, cfg).with_log_shift(log_factor);
        let mut fam = Family::new(mesh);
        let raw = raw_verdict(&mut fam, cfg, &mut eng.bind(Target::Scale));
        let out = match annotation {
            None => raw,
            Some(ann) => {
                let mut step = |k: usize| -> Result<limit::AnnotatedStep, QuadError> {
                    let st = fam.ensure(k, &mut eng.bind(Target::Scale))?;
                    let e = ann
                        .equivalent
                        .eval(st.x)
                        .map_err(|e| QuadError::at(st.x, e.to_string()))?;
                    if !(e > 0.0 && e.is_finite()) {
                        return Ok(None);
                    }
                    let log_rem = e.ln() + st.log_edge;
                    Ok(Some((gk::log_add(st.log_s, log_rem), fam.growing(k))))
                };
                let annotated = annotated_verdict(cfg, &mut step);
                combine(raw, annotated)
            }
        };
        Ok(signed(out, boundary.sign()))
    };
    run().unwrap_or_else(Into::into)
}

/// `v(boundary) = lim v(x)`, by the same protocol as [`scale_limit`].
///
/// With an annotation the remainder `v(boundary) - v(x)` is estimated as
/// `2 H(x) equivalent(x) + 2 int_x^boundary weight equivalent / sigma^2`;
/// the tail integral is itself a mesh limit, and its divergence implies
/// divergence of `v`.
#[allow(clippy::too_many_arguments)]
pub fn test_v_limit(
    drift: &CoefficientField,
    sigma: &CoefficientField,
    weight: &CoefficientField,
    interval: StateInterval,
    c: f64,
    boundary: Boundary,
    annotation: Option<&TailAnnotation>,
    cfg: &QuadConfig,
) -> IntegralVerdict {
    let run = || -> Result<IntegralVerdict, QuadError> {
        check_point(&interval, c, "base point")?;
        cfg.validate().map_err(QuadError::new)?;
        let annotation = annotation_for(annotation, boundary)?;
        let mesh = Mesh::new(interval, c, boundary, cfg.boundary_mesh_factor);
        let mut eng = Engine::new(drift, sigma, Some(weight), interval, c, cfg);
        let mut fam = Family::new(mesh);
        let raw = raw_verdict(&mut fam, cfg, &mut eng.bind(Target::V));
        let out = match annotation {
            None => raw,
            Some(ann) => {
                let equiv = &ann.equivalent;
                let mut tail_fam = Family::new(mesh);
                let tail = raw_verdict(&mut tail_fam, cfg, &mut eng.bind(Target::Tail(equiv)));
                let annotated = match tail {
                    Magnitude::Infinite => Magnitude::Infinite,
                    Magnitude::Inconclusive(r) => {
                        Magnitude::Inconclusive(format!("annotated tail: {r}"))
                    }
                    Magnitude::Finite { value: t_inf, .. } => {
                        let mut step = |k: usize| -> Result<limit::AnnotatedStep, QuadError> {
                            let st = fam.ensure(k, &mut eng.bind(Target::V))?;
                            let tt = tail_fam.ensure(k, &mut eng.bind(Target::Tail(equiv)))?;
                            let e = equiv
                                .eval(st.x)
                                .map_err(|e| QuadError::at(st.x, e.to_string()))?;
                            if !(e > 0.0 && e.is_finite()) {
                                return Ok(None);
                            }
                            // log_edge of the v family is ln 2H(x)
                            let log_near = st.log_edge + e.ln();
                            let far = (t_inf - tt.log_s.exp()).max(0.0);
                            let la = gk::log_add(gk::log_add(st.log_s, log_near), far.ln());
                            Ok(Some((la, fam.growing(k))))
                        };
                        annotated_verdict(cfg, &mut step)
                    }
                };
                combine(raw, annotated)
            }
        };
        Ok(signed(out, 1.0))
    };
    run().unwrap_or_else(Into::into)
}

#[cfg(test)]
mod tests;
