//! Mesh protocol for improper limits of monotone families.

use super::gk::{log_add, LogQuad};
use super::{QuadConfig, QuadError};
use crate::diffusion::{Boundary, StateInterval};

/// Geometric mesh from the base point toward one boundary.
#[derive(Debug, Clone, Copy)]
pub(super) struct Mesh {
    c: f64,
    end: f64,
    dir: f64,
    factor: f64,
}

impl Mesh {
    pub fn new(interval: StateInterval, c: f64, boundary: Boundary, factor: f64) -> Self {
        Mesh {
            c,
            end: interval.end(boundary),
            dir: boundary.sign(),
            factor,
        }
    }

    /// `c ± F^k` toward an infinite end; `end + (c - end) F^-(k+1)` toward a
    /// finite one.
    pub fn point(&self, k: usize) -> f64 {
        let f = self.factor.powi(k as i32);
        if self.end.is_finite() {
            self.end + (self.c - self.end) / (f * self.factor)
        } else {
            self.c + self.dir * f
        }
    }
}

/// A positive integrand evaluated panel-by-panel along a mesh.
pub(super) trait Integrand {
    /// `ln int_a^b f` for `a < b`.
    fn increment(&mut self, a: f64, b: f64) -> Result<LogQuad, QuadError>;
    /// `ln f(x)`.
    fn log_density(&mut self, x: f64) -> Result<f64, QuadError>;
}

#[derive(Debug, Clone, Copy)]
pub(super) struct Step {
    pub x: f64,
    /// Width of `[x_{k-1}, x_k]`.
    pub width: f64,
    /// `ln` of the increment over `[x_{k-1}, x_k]`.
    pub log_inc: f64,
    /// `ln f(x_k)`, the integrand at the boundary-side end of the panel.
    pub log_edge: f64,
    /// `ln` of the running value at `x_k`.
    pub log_s: f64,
    /// Accumulated relative quadrature error of the running value.
    pub rel_err: f64,
}

/// Lazily evaluated running values of a positive monotone family on a mesh.
pub(super) struct Family {
    mesh: Mesh,
    steps: Vec<Step>,
    failure: Option<QuadError>,
}

impl Family {
    pub fn new(mesh: Mesh) -> Self {
        Family {
            mesh,
            steps: Vec::new(),
            failure: None,
        }
    }

    pub fn ensure(&mut self, k: usize, f: &mut dyn Integrand) -> Result<Step, QuadError> {
        while self.steps.len() <= k {
            if let Some(e) = &self.failure {
                return Err(e.clone());
            }
            let j = self.steps.len();
            let prev = self.steps.last().map_or(self.mesh.c, |s| s.x);
            let x = self.mesh.point(j);
            if x == prev || !x.is_finite() {
                let e = QuadError::at(x, "mesh exhausted floating-point resolution");
                self.failure = Some(e.clone());
                return Err(e);
            }
            let r = if x > prev {
                f.increment(prev, x)
            } else {
                f.increment(x, prev)
            };
            let r = r.and_then(|q| Ok((q, f.log_density(x)?)));
            let (q, log_edge) = match r {
                Ok(q) => q,
                Err(e) => {
                    self.failure = Some(e.clone());
                    return Err(e);
                }
            };
            if !q.converged && q.rel_err > 1e-4 {
                let e = QuadError::at(
                    x,
                    format!("increment quadrature did not converge ({:.2e})", q.rel_err),
                );
                self.failure = Some(e.clone());
                return Err(e);
            }
            let (log_s, rel_err) = match self.steps.last() {
                None => (q.log_value, q.rel_err),
                Some(p) => {
                    let ls = log_add(p.log_s, q.log_value);
                    let w_prev = if ls == f64::NEG_INFINITY {
                        0.0
                    } else {
                        (p.log_s - ls).exp()
                    };
                    let w_inc = if ls == f64::NEG_INFINITY {
                        0.0
                    } else {
                        (q.log_value - ls).exp()
                    };
                    (ls, w_prev * p.rel_err + w_inc * q.rel_err)
                }
            };
            self.steps.push(Step {
                x,
                width: (x - prev).abs(),
                log_inc: q.log_value,
                log_edge,
                log_s,
                rel_err,
            });
        }
        Ok(self.steps[k])
    }

    /// Whether the family looks divergent at steps `k - 1` and `k` (already
    /// evaluated). At each, the last three increments are non-decreasing,
    /// their ratio is not falling off, and the integrand at the boundary
    /// side of the panel is not below half its panel average. The last two
    /// tests, and asking for two steps, rule out a density that rises
    /// steeply and then saturates or peaks.
    pub fn growing(&self, k: usize) -> bool {
        k >= 3 && self.growing_at(k - 1) && self.growing_at(k)
    }

    fn growing_at(&self, k: usize) -> bool {
        let (s0, s1, s2) = (self.steps[k - 2], self.steps[k - 1], self.steps[k]);
        let slack = 1e-12;
        if s2.log_inc == f64::NEG_INFINITY
            || s2.log_inc < s1.log_inc - slack
            || s1.log_inc < s0.log_inc - slack
        {
            return false;
        }
        let (lq1, lq2) = (s1.log_inc - s0.log_inc, s2.log_inc - s1.log_inc);
        if lq2 < RATIO_TREND * lq1 - slack {
            return false;
        }
        s2.log_edge >= s2.log_inc - s2.width.ln() - std::f64::consts::LN_2
    }
}

/// Minimal fraction of the previous log increment ratio kept by a
/// divergent family.
const RATIO_TREND: f64 = 0.9;

/// Unsigned outcome of a limit.
#[derive(Debug, Clone, PartialEq)]
pub(super) enum Magnitude {
    Finite { value: f64, err: f64 },
    Infinite,
    Inconclusive(String),
}

/// Ratio of consecutive increments; zero when the integrand has vanished.
fn ratio(log_inc: f64, log_prev: f64) -> f64 {
    if log_inc == f64::NEG_INFINITY {
        0.0
    } else if log_prev == f64::NEG_INFINITY {
        f64::INFINITY
    } else {
        (log_inc - log_prev).exp()
    }
}

const MAX_RATIO: f64 = 0.9;

/// Log growth of a running value over its first mesh value, so that the
/// divergence threshold is invariant under positive rescaling.
fn growth(log_s: f64, log_first: f64) -> f64 {
    if log_first.is_finite() {
        log_s - log_first
    } else {
        log_s
    }
}

/// Verdict for a non-decreasing family from its increments.
pub(super) fn raw_verdict(fam: &mut Family, cfg: &QuadConfig, f: &mut dyn Integrand) -> Magnitude {
    let log_threshold = cfg.divergence_threshold.ln();
    let mut prev_r: Option<f64> = None;
    let mut prev_q = f64::INFINITY;
    for k in 0..=cfg.max_refinements as usize {
        let st = match fam.ensure(k, f) {
            Ok(s) => s,
            Err(e) => return Magnitude::Inconclusive(e.to_string()),
        };
        if fam.growing(k) && growth(st.log_s, fam.steps[0].log_s) > log_threshold {
            return Magnitude::Infinite;
        }
        if k == 0 || st.log_s > f64::MAX.ln() - 1.0 {
            continue;
        }
        let q = ratio(st.log_inc, fam.steps[k - 1].log_inc);
        let s = st.log_s.exp();
        let r = if q < 1.0 {
            let inc = st.log_inc.exp();
            Some(s + inc * q / (1.0 - q))
        } else {
            None
        };
        if let (Some(r), Some(pr)) = (r, prev_r) {
            let tol = cfg.abs_tol.max(cfg.rel_tol * r.abs());
            if k >= 3 && q <= MAX_RATIO && prev_q <= MAX_RATIO && (r - pr).abs() <= tol {
                return Magnitude::Finite {
                    value: r,
                    err: (r - pr).abs() + s * st.rel_err,
                };
            }
        }
        prev_r = r;
        prev_q = q;
    }
    Magnitude::Inconclusive(format!(
        "no verdict after {} refinements",
        cfg.max_refinements
    ))
}

/// One term of an annotated sequence: `ln A_k`, and whether the underlying
/// raw family looks divergent at that step.
pub(super) type AnnotatedStep = Option<(f64, bool)>;

/// Verdict for an annotated sequence `A_k` (`None` where the annotation is
/// not yet usable): finite when two consecutive differences are within
/// tolerance, infinite when it keeps growing past the threshold (relative
/// to its first usable value) while the raw family looks divergent.
pub(super) fn annotated_verdict(
    cfg: &QuadConfig,
    step: &mut dyn FnMut(usize) -> Result<AnnotatedStep, QuadError>,
) -> Magnitude {
    let log_threshold = cfg.divergence_threshold.ln();
    let mut hist: Vec<f64> = Vec::new();
    let mut close_run = 0;
    for k in 0..=cfg.max_refinements as usize {
        let (la, growing) = match step(k) {
            Ok(Some(v)) => v,
            Ok(None) => {
                hist.clear();
                close_run = 0;
                continue;
            }
            Err(e) => return Magnitude::Inconclusive(e.to_string()),
        };
        if la.is_nan() {
            return Magnitude::Inconclusive("annotated estimate is undefined".into());
        }
        hist.push(la);
        let n = hist.len();
        let grown = growth(la, hist[0]);
        if n >= 3
            && growing
            && grown > log_threshold
            && hist[n - 1] > hist[n - 2]
            && hist[n - 2] > hist[n - 3]
        {
            return Magnitude::Infinite;
        }
        if n >= 2 && la < f64::MAX.ln() {
            let (a, b) = (la.exp(), hist[n - 2].exp());
            let tol = cfg.abs_tol.max(cfg.rel_tol * a.abs());
            if (a - b).abs() <= tol {
                close_run += 1;
                if close_run >= 2 {
                    return Magnitude::Finite {
                        value: a,
                        err: (a - b).abs(),
                    };
                }
            } else {
                close_run = 0;
            }
        }
    }
    Magnitude::Inconclusive(format!(
        "annotated estimate did not settle after {} refinements",
        cfg.max_refinements
    ))
}

/// Reconcile the raw and annotated verdicts.
pub(super) fn combine(raw: Magnitude, annotated: Magnitude) -> Magnitude {
    match (&raw, &annotated) {
        (Magnitude::Inconclusive(_), _) => annotated,
        (_, Magnitude::Inconclusive(_)) => raw,
        (Magnitude::Finite { .. }, Magnitude::Finite { .. })
        | (Magnitude::Infinite, Magnitude::Infinite) => raw,
        _ => Magnitude::Inconclusive("asymptotic mismatch".into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mesh_inf() -> Mesh {
        Mesh::new(StateInterval::positive_half_line(), 1.0, Boundary::Upper, 2.0)
    }

    #[test]
    fn mesh_points() {
        let m = mesh_inf();
        assert_eq!((m.point(0), m.point(1), m.point(3)), (2.0, 3.0, 9.0));
        let m = Mesh::new(StateInterval::positive_half_line(), 1.0, Boundary::Lower, 2.0);
        assert_eq!((m.point(0), m.point(1)), (0.5, 0.25));
    }

    /// Closed-form primitive `F` and log-density.
    struct Exact<F: Fn(f64, f64) -> f64, D: Fn(f64) -> f64>(F, D);

    impl<F: Fn(f64, f64) -> f64, D: Fn(f64) -> f64> Integrand for Exact<F, D> {
        fn increment(&mut self, a: f64, b: f64) -> Result<LogQuad, QuadError> {
            Ok(LogQuad {
                log_value: (self.0)(a, b),
                rel_err: 0.0,
                converged: true,
            })
        }
        fn log_density(&mut self, x: f64) -> Result<f64, QuadError> {
            Ok((self.1)(x))
        }
    }

    #[test]
    fn convergent_power_tail() {
        // int_1^x y^-2 dy -> 1
        let mut inc = Exact(|a, b| (1.0 / a - 1.0 / b).ln(), |x| -2.0 * x.ln());
        let mut fam = Family::new(mesh_inf());
        let v = raw_verdict(&mut fam, &QuadConfig::default(), &mut inc);
        match v {
            Magnitude::Finite { value, .. } => assert!((value - 1.0).abs() < 1e-8),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn divergent_and_slow() {
        let cfg = QuadConfig::default();
        let mut inc = Exact(|a, b| (b * b - a * a).ln(), |x| (2.0 * x).ln());
        let mut fam = Family::new(mesh_inf());
        assert_eq!(raw_verdict(&mut fam, &cfg, &mut inc), Magnitude::Infinite);
        // logarithmic growth never certifies within the refinement budget
        let mut inc = Exact(|a, b| (b / a).ln().ln(), |x| -x.ln());
        let mut fam = Family::new(mesh_inf());
        assert!(matches!(
            raw_verdict(&mut fam, &cfg, &mut inc),
            Magnitude::Inconclusive(_)
        ));
    }

    #[test]
    fn steep_but_finite_is_not_divergent() {
        let cfg = QuadConfig::default();
        // rises by ~e^40 to a peak near 4, then collapses
        let f = |y: f64| 8.0 * (y - 0.5) * (y - 0.5) - y.exp();
        let mut inc = Exact(
            move |a: f64, b: f64| {
                let n = 4000;
                let h = (b - a) / n as f64;
                let s: f64 = (0..n).map(|i| f(a + (i as f64 + 0.5) * h).exp()).sum();
                (s * h).ln()
            },
            f,
        );
        let mut fam = Family::new(mesh_inf());
        assert!(matches!(
            raw_verdict(&mut fam, &cfg, &mut inc),
            Magnitude::Finite { .. }
        ));
    }

    #[test]
    fn combine_rules() {
        let f = Magnitude::Finite { value: 1.0, err: 0.0 };
        let i = Magnitude::Inconclusive("x".into());
        assert_eq!(combine(i.clone(), f.clone()), f);
        assert_eq!(combine(f.clone(), i.clone()), f);
        assert_eq!(
            combine(f.clone(), Magnitude::Infinite),
            Magnitude::Inconclusive("asymptotic mismatch".into())
        );
    }
}
