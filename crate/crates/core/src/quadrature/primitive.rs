//! Lazily built piecewise-Chebyshev antiderivative
//! `P(y) = int_c^y 2 drift(u) / sigma(u)^2 du`, so that `log s'(y) = -P(y)`.
//!
//! Panels are fitted outward from `c` on demand. Differences `P(z) - P(y)`
//! are integrated directly when the table values are large enough for
//! subtraction to lose digits.

use std::sync::OnceLock;

use super::QuadError;
use crate::diffusion::{CoefficientField, StateInterval};

const N: usize = 24;

// Gauss-Legendre 12: exact for the degree-23 panel interpolants.
#[allow(clippy::excessive_precision)]
const GL_X: [f64; 6] = [
    0.125_233_408_511_468_915_472_441_4,
    0.367_831_498_998_180_193_752_691_5,
    0.587_317_954_286_617_447_296_702_4,
    0.769_902_674_194_304_687_036_893_8,
    0.904_117_256_370_474_856_678_465_9,
    0.981_560_634_246_719_250_690_549_1,
];
#[allow(clippy::excessive_precision)]
const GL_W: [f64; 6] = [
    0.249_147_045_813_402_785_000_562_4,
    0.233_492_536_538_354_808_760_849_9,
    0.203_167_426_723_065_921_749_064_5,
    0.160_078_328_543_346_226_334_652_5,
    0.106_939_325_995_318_430_960_254_7,
    0.047_175_336_386_511_827_194_616_0,
];

/// Above this magnitude of `|P(y)| + |P(z)|` differences are integrated
/// directly instead of subtracted.
const CANCELLATION_GUARD: f64 = 1e4;

fn cos_table() -> &'static [[f64; N]; N] {
    static T: OnceLock<[[f64; N]; N]> = OnceLock::new();
    T.get_or_init(|| {
        let mut t = [[0.0; N]; N];
        for (k, row) in t.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (std::f64::consts::PI * k as f64 * (j as f64 + 0.5) / N as f64).cos();
            }
        }
        t
    })
}

fn clenshaw(c: &[f64], t: f64) -> f64 {
    let (mut b1, mut b2) = (0.0, 0.0);
    for &ck in c[1..].iter().rev() {
        let b0 = ck + 2.0 * t * b1 - b2;
        b2 = b1;
        b1 = b0;
    }
    c[0] + t * b1 - b2
}

#[derive(Debug, Clone)]
struct Panel {
    a: f64,
    b: f64,
    /// `P(a)`.
    p_a: f64,
    coef: [f64; N],
    /// Antiderivative series on `[-1, 1]`, zero at `-1`.
    icoef: [f64; N + 1],
}

impl Panel {
    fn t(&self, y: f64) -> f64 {
        ((2.0 * y - self.a - self.b) / (self.b - self.a)).clamp(-1.0, 1.0)
    }

    fn p(&self, y: f64) -> f64 {
        self.p_a + 0.5 * (self.b - self.a) * clenshaw(&self.icoef, self.t(y))
    }

    fn g(&self, y: f64) -> f64 {
        clenshaw(&self.coef, self.t(y))
    }

    fn integral(&self) -> f64 {
        0.5 * (self.b - self.a) * clenshaw(&self.icoef, 1.0)
    }

    /// `int_{s0}^{s1} g(z - dir s) ds` by Gauss-Legendre on the interpolant.
    fn direct_offsets(&self, z: f64, dir: f64, s0: f64, s1: f64) -> f64 {
        let (m, h) = (0.5 * (s0 + s1), 0.5 * (s1 - s0));
        let mut s = 0.0;
        for (x, w) in GL_X.iter().zip(GL_W.iter()) {
            s += w * (self.g(z - dir * (m - h * x)) + self.g(z - dir * (m + h * x)));
        }
        s * h
    }
}

/// Fit `g` on `[a, b]`; `None` if the series has not converged.
/// Chebyshev coefficients and those of the antiderivative.
type Fit = ([f64; N], [f64; N + 1]);

fn fit(
    g: &mut impl FnMut(f64) -> Result<f64, QuadError>,
    a: f64,
    b: f64,
    p_scale: f64,
) -> Result<Option<Fit>, QuadError> {
    let tab = cos_table();
    let mut fv = [0.0; N];
    for (j, v) in fv.iter_mut().enumerate() {
        let t = tab[1][j];
        let y = 0.5 * (a + b) + 0.5 * (b - a) * t;
        *v = g(y)?;
    }
    let mut coef = [0.0; N];
    for (k, ck) in coef.iter_mut().enumerate() {
        let s: f64 = fv.iter().zip(tab[k].iter()).map(|(f, c)| f * c).sum();
        *ck = if k == 0 { s / N as f64 } else { 2.0 * s / N as f64 };
    }
    let cmax = coef.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let tail = coef[N - 1].abs().max(coef[N - 2].abs()).max(coef[N - 3].abs());
    let w = b - a;
    let ok = tail <= 1e-14 * cmax || tail * w <= 1e-14 * p_scale.max(1.0);
    if !ok {
        return Ok(None);
    }
    let mut ic = [0.0; N + 1];
    let at = |k: usize| if k < N { coef[k] } else { 0.0 };
    ic[1] = at(0) - 0.5 * at(2);
    for (k, slot) in ic.iter_mut().enumerate().skip(2) {
        *slot = (at(k - 1) - at(k + 1)) / (2.0 * k as f64);
    }
    ic[0] = -(1..=N)
        .map(|k| if k % 2 == 0 { ic[k] } else { -ic[k] })
        .sum::<f64>();
    Ok(Some((coef, ic)))
}

pub(crate) struct Antiderivative {
    drift: CoefficientField,
    sigma: CoefficientField,
    interval: StateInterval,
    c: f64,
    /// Panels on `[c, ...)` in increasing order.
    right: Vec<Panel>,
    /// Panels on `(..., c]` in decreasing order.
    left: Vec<Panel>,
    w_right: f64,
    w_left: f64,
}

const MAX_HALVINGS: u32 = 60;

impl Antiderivative {
    pub fn new(
        drift: &CoefficientField,
        sigma: &CoefficientField,
        interval: StateInterval,
        c: f64,
    ) -> Self {
        let w0 = 0.25 * c.abs().max(1.0);
        Antiderivative {
            drift: drift.clone(),
            sigma: sigma.clone(),
            interval,
            c,
            right: Vec::new(),
            left: Vec::new(),
            w_right: w0,
            w_left: w0,
        }
    }

    fn extend_right(&mut self) -> Result<(), QuadError> {
        let (start, p_start) = match self.right.last() {
            Some(p) => (p.b, p.p_a + p.integral()),
            None => (self.c, 0.0),
        };
        let upper = self.interval.upper();
        let mut w = self.w_right;
        if upper.is_finite() {
            w = w.min(0.5 * (upper - start));
        }
        for _ in 0..MAX_HALVINGS {
            if w <= 16.0 * f64::EPSILON * start.abs() || w < f64::MIN_POSITIVE {
                return Err(QuadError::at(start, "integrand is singular here"));
            }
            let b = start + w;
            if b <= start {
                break;
            }
            let drift = self.drift.clone();
            let sigma = self.sigma.clone();
            let mut g = |y: f64| integrand_of(&drift, &sigma, y);
            if let Some((coef, icoef)) = fit(&mut g, start, b, p_start.abs())? {
                self.right.push(Panel {
                    a: start,
                    b,
                    p_a: p_start,
                    coef,
                    icoef,
                });
                self.w_right = 2.0 * w;
                return Ok(());
            }
            w *= 0.5;
        }
        Err(QuadError::at(start, "antiderivative panel did not resolve"))
    }

    fn extend_left(&mut self) -> Result<(), QuadError> {
        let (end, p_end) = match self.left.last() {
            Some(p) => (p.a, p.p_a),
            None => (self.c, 0.0),
        };
        let lower = self.interval.lower();
        let mut w = self.w_left;
        if lower.is_finite() {
            w = w.min(0.5 * (end - lower));
        }
        for _ in 0..MAX_HALVINGS {
            if w <= 16.0 * f64::EPSILON * end.abs() || w < f64::MIN_POSITIVE {
                return Err(QuadError::at(end, "integrand is singular here"));
            }
            let a = end - w;
            if a >= end {
                break;
            }
            let drift = self.drift.clone();
            let sigma = self.sigma.clone();
            let mut g = |y: f64| integrand_of(&drift, &sigma, y);
            if let Some((coef, icoef)) = fit(&mut g, a, end, p_end.abs())? {
                let mut p = Panel {
                    a,
                    b: end,
                    p_a: 0.0,
                    coef,
                    icoef,
                };
                p.p_a = p_end - p.integral();
                self.left.push(p);
                self.w_left = 2.0 * w;
                return Ok(());
            }
            w *= 0.5;
        }
        Err(QuadError::at(end, "antiderivative panel did not resolve"))
    }

    fn panel(&mut self, y: f64) -> Result<&Panel, QuadError> {
        if !self.interval.contains(y) {
            return Err(QuadError::at(y, "point outside the state interval"));
        }
        if y >= self.c {
            while self.right.last().is_none_or(|p| p.b < y) {
                self.extend_right()?;
            }
            let i = self.right.partition_point(|p| p.b < y);
            Ok(&self.right[i])
        } else {
            while self.left.last().is_none_or(|p| p.a > y) {
                self.extend_left()?;
            }
            let i = self.left.partition_point(|p| p.a > y);
            Ok(&self.left[i])
        }
    }

    /// `P(y)`.
    pub fn p(&mut self, y: f64) -> Result<f64, QuadError> {
        if y == self.c {
            return Ok(0.0);
        }
        Ok(self.panel(y)?.p(y))
    }

    /// `P'(y)` from the interpolant.
    pub fn g(&mut self, y: f64) -> Result<f64, QuadError> {
        Ok(self.panel(y)?.g(y))
    }

    /// The panel covering `[x - eps, x]` (`dir > 0`) or `[x, x + eps]`
    /// (`dir < 0`); `x` must already be covered.
    fn panel_toward(&mut self, x: f64, dir: f64) -> Result<&Panel, QuadError> {
        self.panel(x)?;
        let i;
        let list = if (dir > 0.0 && x > self.c) || (dir < 0.0 && x >= self.c) {
            i = if dir > 0.0 {
                self.right.partition_point(|p| p.b < x)
            } else {
                self.right.partition_point(|p| p.b <= x)
            };
            &self.right
        } else {
            i = if dir > 0.0 {
                self.left.partition_point(|p| p.a >= x)
            } else {
                self.left.partition_point(|p| p.a > x)
            };
            &self.left
        };
        list.get(i)
            .ok_or_else(|| QuadError::at(x, "no antiderivative panel beyond this point"))
    }

    /// `P(z) - P(y)` for `y` on the `c` side of `z`, far enough from `z`
    /// that `y` is best given exactly rather than as an offset.
    pub fn delta_to(&mut self, z: f64, y: f64) -> Result<f64, QuadError> {
        let pz = self.p(z)?;
        let py = self.p(y)?;
        if pz.abs() + py.abs() <= CANCELLATION_GUARD {
            return Ok(pz - py);
        }
        let dir = if z > y { 1.0 } else { -1.0 };
        self.delta_back(z, (z - y).abs(), dir)
    }

    /// `P(z) - P(z - dir * t)` for `t >= 0`, `dir = ±1`.
    ///
    /// The offset `t` is kept exact: near a steep `z` the useful offsets can
    /// be far below the spacing of doubles around `z`. Large table values
    /// are not subtracted; the difference is integrated directly.
    pub fn delta_back(&mut self, z: f64, t: f64, dir: f64) -> Result<f64, QuadError> {
        if t == 0.0 {
            return Ok(0.0);
        }
        let y = z - dir * t;
        let pz = self.p(z)?;
        let py = self.p(y)?;
        if pz.abs() + py.abs() <= CANCELLATION_GUARD && t >= 1e-3 * z.abs().max(1.0) {
            return Ok(pz - py);
        }
        let mut acc = 0.0;
        let mut s0 = 0.0;
        while s0 < t {
            let x = z - dir * s0;
            let p = self.panel_toward(x, dir)?;
            let edge = if dir > 0.0 { p.a } else { p.b };
            let mut s1 = (dir * (z - edge)).min(t);
            if s1 <= s0 {
                // rounding put the edge behind us; finish within this panel
                s1 = t;
            }
            acc += p.direct_offsets(z, dir, s0, s1);
            s0 = s1;
        }
        Ok(dir * acc)
    }
}

fn integrand_of(
    drift: &CoefficientField,
    sigma: &CoefficientField,
    y: f64,
) -> Result<f64, QuadError> {
    let d = drift
        .eval(y)
        .map_err(|e| QuadError::at(y, format!("drift: {e}")))?;
    let s = sigma
        .eval(y)
        .map_err(|e| QuadError::at(y, format!("sigma: {e}")))?;
    let v = 2.0 * d / (s * s);
    if !v.is_finite() {
        return Err(QuadError::at(y, "non-finite 2 drift / sigma^2"));
    }
    Ok(v)
}
