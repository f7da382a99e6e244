use std::f64::consts::LN_2;

use super::gk::{integrate_log, log_add, LogQuad, LogQuadError};
use super::limit::Integrand;
use super::primitive::Antiderivative;
use super::{QuadConfig, QuadError};
use crate::diffusion::{CoefficientField, StateInterval};

const MAX_DEPTH: u32 = 60;

fn lift(e: LogQuadError<QuadError>) -> QuadError {
    match e {
        LogQuadError::Integrand(e) => e,
        LogQuadError::NonFinite { x, value } => {
            QuadError::at(x, format!("non-finite log-integrand {value}"))
        }
    }
}

/// Per-call evaluation state: one antiderivative table, owned and dropped
/// with the call.
pub(super) struct Engine {
    prim: Antiderivative,
    sigma: CoefficientField,
    weight: Option<CoefficientField>,
    c: f64,
    /// Constant added to `ln s'`; rescales the scale density.
    log_shift: f64,
    rel_outer: f64,
    rel_inner: f64,
}

impl Engine {
    pub fn new(
        drift: &CoefficientField,
        sigma: &CoefficientField,
        weight: Option<&CoefficientField>,
        interval: StateInterval,
        c: f64,
        cfg: &QuadConfig,
    ) -> Self {
        Engine {
            prim: Antiderivative::new(drift, sigma, interval, c),
            sigma: sigma.clone(),
            weight: weight.cloned(),
            c,
            log_shift: 0.0,
            rel_outer: (0.1 * cfg.rel_tol).max(1e-13),
            rel_inner: (0.01 * cfg.rel_tol).max(1e-13),
        }
    }

    pub fn with_log_shift(mut self, shift: f64) -> Self {
        self.log_shift = shift;
        self
    }

    pub fn log_sprime(&mut self, y: f64) -> Result<f64, QuadError> {
        Ok(self.log_shift - self.prim.p(y)?)
    }

    /// `ln(weight(y) / sigma(y)^2)`.
    fn log_q(&self, y: f64) -> Result<f64, QuadError> {
        log_q_of(&self.sigma, self.weight.as_ref(), y)
    }

    /// `ln int_a^b s'(y) dy` for `a < b`.
    pub fn scale_increment(&mut self, a: f64, b: f64) -> Result<LogQuad, QuadError> {
        let rel = self.rel_outer;
        let (prim, shift) = (&mut self.prim, self.log_shift);
        integrate_log(|y| Ok(shift - prim.p(y)?), a, b, rel, MAX_DEPTH).map_err(lift)
    }

    /// `ln H(z)`, `H(z) = |int_c^z q(y) exp(P(y) - P(z)) dy|`.
    ///
    /// Integrates backward from `z` over geometrically growing segments so
    /// that a sharp peak at `z` is resolved, and stops once the integrand
    /// has decayed far below the accumulated total.
    pub fn log_h(&mut self, z: f64) -> Result<f64, QuadError> {
        if z == self.c {
            return Ok(f64::NEG_INFINITY);
        }
        let d = if z > self.c { 1.0 } else { -1.0 };
        let span = (z - self.c).abs();
        // offsets from c only pay off once rounding of z - t is visible
        // at the inner tolerance
        let c_frame = z.abs() * f64::EPSILON > 1e-3 * self.rel_inner * self.c.abs().max(1.0);
        let half = if c_frame { 0.5 * span } else { span };
        let gz = self.prim.g(z)?;
        let mut width = if d * gz > 0.0 {
            span.min(1.0 / (d * gz))
        } else {
            span
        };
        if !(width > 0.0) {
            width = span;
        }
        let mut total = f64::NEG_INFINITY;
        let mut near = 0.0;
        let mut prev_seg = f64::INFINITY;
        // integrate over the offset t = |z - y| from z back toward c
        loop {
            let mut far = near + width;
            let last = far >= span;
            if last {
                far = span;
            }
            let seg = if far <= half {
                self.segment_from_z(z, d, near, far)?
            } else if near >= half {
                self.segment_from_c(z, d, span - far, span - near)?
            } else {
                log_add(
                    self.segment_from_z(z, d, near, half)?,
                    self.segment_from_c(z, d, span - far, half)?,
                )
            };
            total = log_add(total, seg);
            if last {
                break;
            }
            let negligible = seg < total + (1e-3 * self.rel_inner).ln();
            let shrinking = seg < prev_seg - LN_2 * 3.0;
            if negligible && shrinking && d * self.prim.g(z - d * far)? > 0.0 {
                break;
            }
            prev_seg = seg;
            near = far;
            width *= 2.0;
        }
        Ok(total)
    }

    /// `ln` of the part of `H(z)` at offsets `t` in `[a, b]` from `z`.
    fn segment_from_z(&mut self, z: f64, d: f64, a: f64, b: f64) -> Result<f64, QuadError> {
        let prim = &mut self.prim;
        let (sigma, weight) = (&self.sigma, self.weight.as_ref());
        let r = integrate_log(
            |t| {
                let lq = log_q_of(sigma, weight, z - d * t)?;
                if lq == f64::NEG_INFINITY {
                    return Ok(f64::NEG_INFINITY);
                }
                Ok(lq - prim.delta_back(z, t, d)?)
            },
            a,
            b,
            self.rel_inner,
            MAX_DEPTH,
        );
        Ok(r.map_err(lift)?.log_value)
    }

    /// `ln` of the part of `H(z)` at offsets `u` in `[a, b]` from `c`.
    /// For distant `z`, `z - t` would carry rounding noise of order
    /// `ulp(z)` exactly where the integrand near `c` lives.
    fn segment_from_c(&mut self, z: f64, d: f64, a: f64, b: f64) -> Result<f64, QuadError> {
        let c = self.c;
        let prim = &mut self.prim;
        let (sigma, weight) = (&self.sigma, self.weight.as_ref());
        let r = integrate_log(
            |u| {
                let y = c + d * u;
                let lq = log_q_of(sigma, weight, y)?;
                if lq == f64::NEG_INFINITY {
                    return Ok(f64::NEG_INFINITY);
                }
                Ok(lq - prim.delta_to(z, y)?)
            },
            a,
            b,
            self.rel_inner,
            MAX_DEPTH,
        );
        Ok(r.map_err(lift)?.log_value)
    }

    /// `ln int_a^b 2 H(z) dz` for `a < b` on one side of `c`.
    pub fn v_increment(&mut self, a: f64, b: f64) -> Result<LogQuad, QuadError> {
        let rel = self.rel_outer;
        integrate_log(|z| Ok(LN_2 + self.log_h(z)?), a, b, rel, MAX_DEPTH).map_err(lift)
    }

    /// `ln int_a^b 2 q(y) equivalent(y) dy` for `a < b`.
    pub fn tail_increment(
        &mut self,
        equiv: &CoefficientField,
        a: f64,
        b: f64,
    ) -> Result<LogQuad, QuadError> {
        let rel = self.rel_outer;
        integrate_log(|y| self.log_tail_density(equiv, y), a, b, rel, MAX_DEPTH).map_err(lift)
    }
}

/// Which family an [`Engine`] integrates along a mesh.
#[derive(Clone, Copy)]
pub(super) enum Target<'a> {
    /// `s'`.
    Scale,
    /// `2 H`.
    V,
    /// `2 q equivalent`.
    Tail(&'a CoefficientField),
}

pub(super) struct Bound<'e, 'a> {
    eng: &'e mut Engine,
    target: Target<'a>,
}

impl Engine {
    pub fn bind<'e, 'a>(&'e mut self, target: Target<'a>) -> Bound<'e, 'a> {
        Bound { eng: self, target }
    }

    fn log_tail_density(&self, equiv: &CoefficientField, y: f64) -> Result<f64, QuadError> {
        let e = equiv
            .eval(y)
            .map_err(|e| QuadError::at(y, format!("annotation: {e}")))?;
        if !(e > 0.0) {
            return Err(QuadError::at(y, "annotation is not positive"));
        }
        Ok(LN_2 + self.log_q(y)? + e.ln())
    }
}

impl Integrand for Bound<'_, '_> {
    fn increment(&mut self, a: f64, b: f64) -> Result<LogQuad, QuadError> {
        match self.target {
            Target::Scale => self.eng.scale_increment(a, b),
            Target::V => self.eng.v_increment(a, b),
            Target::Tail(equiv) => self.eng.tail_increment(equiv, a, b),
        }
    }

    fn log_density(&mut self, x: f64) -> Result<f64, QuadError> {
        match self.target {
            Target::Scale => self.eng.log_sprime(x),
            Target::V => Ok(LN_2 + self.eng.log_h(x)?),
            Target::Tail(equiv) => self.eng.log_tail_density(equiv, x),
        }
    }
}

fn log_q_of(
    sigma: &CoefficientField,
    weight: Option<&CoefficientField>,
    y: f64,
) -> Result<f64, QuadError> {
    let s = sigma
        .eval(y)
        .map_err(|e| QuadError::at(y, format!("sigma: {e}")))?;
    let w = match weight {
        None => 1.0,
        Some(w) => w
            .eval(y)
            .map_err(|e| QuadError::at(y, format!("weight: {e}")))?,
    };
    if w < 0.0 || w.is_nan() {
        return Err(QuadError::at(y, "negative weight"));
    }
    let l = w.ln() - 2.0 * s.abs().ln();
    if l.is_nan() || l == f64::INFINITY {
        return Err(QuadError::at(y, "non-finite weight / sigma^2"));
    }
    Ok(l)
}
