//! Adaptive Gauss-Kronrod (G7/K15) integration, in linear space and in log
//! space for positive integrands whose magnitude over- or underflows.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Upper bound on the number of panels one adaptive integration may create.
pub const MAX_PANELS: usize = 4000;

/// The 15 Kronrod abscissae of `[a, b]`, center last.
fn nodes(a: f64, b: f64) -> [f64; 15] {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut x = [0.0; 15];
    for j in 0..7 {
        x[2 * j] = c - h * XGK[j];
        x[2 * j + 1] = c + h * XGK[j];
    }
    x[14] = c;
    x
}

/// QUADPACK-style error rescaling.
fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut e = err.abs();
    if res_asc != 0.0 && e != 0.0 {
        let scale = (200.0 * e / res_asc).powf(1.5);
        e = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        e = e.max(50.0 * f64::EPSILON * res_abs);
    }
    e
}

/// Kronrod estimate, Gauss estimate, and `(res_abs, res_asc)` on `[-1, 1]`
/// scale, given values at `nodes`.
fn rule(fv: &[f64; 15]) -> (f64, f64, f64, f64) {
    let mut k = WGK[7] * fv[14];
    let mut g = WG[3] * fv[14];
    let mut abs = (WGK[7] * fv[14]).abs();
    for j in 0..7 {
        let s = fv[2 * j] + fv[2 * j + 1];
        k += WGK[j] * s;
        abs += WGK[j] * (fv[2 * j].abs() + fv[2 * j + 1].abs());
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    let mean = 0.5 * k;
    let mut asc = WGK[7] * (fv[14] - mean).abs();
    for j in 0..7 {
        asc += WGK[j] * ((fv[2 * j] - mean).abs() + (fv[2 * j + 1] - mean).abs());
    }
    (k, g, abs, asc)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub abs_err: f64,
    pub converged: bool,
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
    depth: u32,
}

impl PartialEq for Panel {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Panel {
    fn cmp(&self, o: &Self) -> Ordering {
        self.err.total_cmp(&o.err)
    }
}

fn linear_panel<E>(
    f: &mut impl FnMut(f64) -> Result<f64, E>,
    a: f64,
    b: f64,
    depth: u32,
) -> Result<Panel, E> {
    let x = nodes(a, b);
    let mut fv = [0.0; 15];
    for (v, &xi) in fv.iter_mut().zip(x.iter()) {
        *v = f(xi)?;
    }
    let h = 0.5 * (b - a);
    let (k, g, abs, asc) = rule(&fv);
    let err = rescale_error((k - g) * h, abs * h.abs(), asc * h.abs());
    Ok(Panel {
        a,
        b,
        value: k * h,
        err,
        depth,
    })
}

/// Globally adaptive integration of `f` over `[a, b]`.
///
/// Bisects the panel with the largest error estimate until the total error
/// is below `max(abs_tol, rel_tol * |value|)`, a panel reaches `max_depth`
/// bisections, or [`MAX_PANELS`] is exhausted (`converged = false`).
pub fn integrate<E>(
    mut f: impl FnMut(f64) -> Result<f64, E>,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_depth: u32,
) -> Result<QuadResult, E> {
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            abs_err: 0.0,
            converged: true,
        });
    }
    let first = linear_panel(&mut f, a, b, 0)?;
    let (mut value, mut err) = (first.value, first.err);
    let mut heap = BinaryHeap::new();
    heap.push(first);
    let mut frozen_err = 0.0;
    let mut frozen_val = 0.0;
    while err + frozen_err > abs_tol.max(rel_tol * (value + frozen_val).abs()) {
        if heap.len() >= MAX_PANELS {
            return Ok(QuadResult {
                value: value + frozen_val,
                abs_err: err + frozen_err,
                converged: false,
            });
        }
        let Some(p) = heap.pop() else { break };
        let mid = 0.5 * (p.a + p.b);
        if p.depth >= max_depth || mid <= p.a.min(p.b) || mid >= p.a.max(p.b) {
            // cannot refine further; keep its contribution but stop trying
            frozen_err += p.err;
            frozen_val += p.value;
            value -= p.value;
            err -= p.err;
            if heap.is_empty() {
                break;
            }
            continue;
        }
        let l = linear_panel(&mut f, p.a, mid, p.depth + 1)?;
        let r = linear_panel(&mut f, mid, p.b, p.depth + 1)?;
        value += l.value + r.value - p.value;
        err += l.err + r.err - p.err;
        heap.push(l);
        heap.push(r);
    }
    // re-sum to limit drift from incremental updates
    let value_sum: f64 = heap.iter().map(|p| p.value).sum::<f64>() + frozen_val;
    let err_sum: f64 = heap.iter().map(|p| p.err).sum::<f64>() + frozen_err;
    Ok(QuadResult {
        value: value_sum,
        abs_err: err_sum,
        converged: err_sum <= abs_tol.max(rel_tol * value_sum.abs()) * 1.000_001,
    })
}

/// Log of a positive integral, with a relative error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogQuad {
    /// `ln` of the integral; `-inf` when the integrand vanishes.
    pub log_value: f64,
    pub rel_err: f64,
    pub converged: bool,
}

impl LogQuad {
    pub const ZERO: LogQuad = LogQuad {
        log_value: f64::NEG_INFINITY,
        rel_err: 0.0,
        converged: true,
    };

    pub fn value(&self) -> f64 {
        self.log_value.exp()
    }
}

/// `ln(e^a + e^b)` without overflow.
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

struct LogPanel {
    a: f64,
    b: f64,
    log_value: f64,
    rel_err: f64,
    depth: u32,
    // priority: absolute error on a common scale, filled in by the caller
    key: f64,
}

impl PartialEq for LogPanel {
    fn eq(&self, o: &Self) -> bool {
        self.key == o.key
    }
}
impl Eq for LogPanel {}
impl PartialOrd for LogPanel {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for LogPanel {
    fn cmp(&self, o: &Self) -> Ordering {
        self.key.total_cmp(&o.key)
    }
}

/// Errors from the log-space integrator.
#[derive(Debug, Clone, PartialEq)]
pub enum LogQuadError<E> {
    Integrand(E),
    NonFinite { x: f64, value: f64 },
}

fn log_panel<E>(
    f: &mut impl FnMut(f64) -> Result<f64, E>,
    a: f64,
    b: f64,
    depth: u32,
) -> Result<LogPanel, LogQuadError<E>> {
    let x = nodes(a, b);
    let mut lv = [0.0; 15];
    let mut shift = f64::NEG_INFINITY;
    for (v, &xi) in lv.iter_mut().zip(x.iter()) {
        let l = f(xi).map_err(LogQuadError::Integrand)?;
        if l.is_nan() || l == f64::INFINITY {
            return Err(LogQuadError::NonFinite { x: xi, value: l });
        }
        *v = l;
        shift = shift.max(l);
    }
    let h = 0.5 * (b - a).abs();
    if shift == f64::NEG_INFINITY {
        return Ok(LogPanel {
            a,
            b,
            log_value: f64::NEG_INFINITY,
            rel_err: 0.0,
            depth,
            key: 0.0,
        });
    }
    let mut fv = [0.0; 15];
    for (o, &l) in fv.iter_mut().zip(lv.iter()) {
        *o = (l - shift).exp();
    }
    let (k, g, abs, asc) = rule(&fv);
    let err = rescale_error((k - g) * h, abs * h, asc * h);
    let kv = k * h;
    Ok(LogPanel {
        a,
        b,
        log_value: shift + kv.ln(),
        rel_err: err / kv,
        depth,
        key: 0.0,
    })
}

/// Adaptive integration of `exp(log_f)` over `[a, b]` (`a < b`), returning
/// the log of the integral. `log_f` may return `-inf` where the integrand
/// vanishes; `+inf` or NaN is an error.
pub fn integrate_log<E>(
    mut log_f: impl FnMut(f64) -> Result<f64, E>,
    a: f64,
    b: f64,
    rel_tol: f64,
    max_depth: u32,
) -> Result<LogQuad, LogQuadError<E>> {
    debug_assert!(a <= b);
    if a == b {
        return Ok(LogQuad::ZERO);
    }
    let mut panels: Vec<LogPanel> = vec![log_panel(&mut log_f, a, b, 0)?];
    let mut frozen: Vec<LogPanel> = Vec::new();
    loop {
        let total = panels
            .iter()
            .chain(frozen.iter())
            .fold(f64::NEG_INFINITY, |acc, p| log_add(acc, p.log_value));
        if total == f64::NEG_INFINITY {
            return Ok(LogQuad::ZERO);
        }
        let mut rel_err = 0.0;
        for p in panels.iter_mut().chain(frozen.iter_mut()) {
            p.key = (p.log_value - total).exp() * p.rel_err;
            rel_err += p.key;
        }
        let done = rel_err <= rel_tol;
        if done || panels.is_empty() || panels.len() + frozen.len() >= MAX_PANELS {
            return Ok(LogQuad {
                log_value: total,
                rel_err,
                converged: done,
            });
        }
        // bisect the worst panel
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.key.total_cmp(&y.1.key))
            .expect("non-empty");
        let p = panels.swap_remove(idx);
        let mid = 0.5 * (p.a + p.b);
        if p.depth >= max_depth || mid <= p.a || mid >= p.b {
            frozen.push(p);
            continue;
        }
        panels.push(log_panel(&mut log_f, p.a, mid, p.depth + 1)?);
        panels.push(log_panel(&mut log_f, mid, p.b, p.depth + 1)?);
    }
}
