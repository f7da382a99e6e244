use super::{BinOp, Expr, Func, ParamBindings};

/// Closed real interval, endpoints may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    fn contains_zero(&self) -> bool {
        self.lo <= 0.0 && self.hi >= 0.0
    }

    fn mul(self, o: Interval) -> Option<Interval> {
        let c = [self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi];
        if c.iter().any(|v| v.is_nan()) {
            return None;
        }
        Some(Interval {
            lo: c.iter().copied().fold(f64::INFINITY, f64::min),
            hi: c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }

    fn square(self) -> Interval {
        let (a, b) = (self.lo * self.lo, self.hi * self.hi);
        if self.contains_zero() {
            Interval::new(0.0, a.max(b))
        } else {
            Interval::new(a.min(b), a.max(b))
        }
    }
}

/// Conservative enclosure of `e(x)` for `x` in `dom`; `None` when some
/// operation is not supported or could leave its domain.
pub fn enclose(e: &Expr, dom: Interval, p: &ParamBindings) -> Option<Interval> {
    match e {
        Expr::Num(v) => Some(Interval::point(*v)),
        Expr::Var => Some(dom),
        Expr::Param(name) => p.get(name).map(Interval::point),
        Expr::Neg(inner) => enclose(inner, dom, p).map(|i| Interval::new(-i.hi, -i.lo)),
        Expr::Call(f, arg) => {
            let a = enclose(arg, dom, p)?;
            match f {
                Func::Exp => Some(Interval::new(a.lo.exp(), a.hi.exp())),
                Func::Log if a.lo > 0.0 => Some(Interval::new(a.lo.ln(), a.hi.ln())),
                Func::Sqrt if a.lo >= 0.0 => Some(Interval::new(a.lo.sqrt(), a.hi.sqrt())),
                Func::Abs => {
                    if a.contains_zero() {
                        Some(Interval::new(0.0, a.lo.abs().max(a.hi.abs())))
                    } else {
                        let (x, y) = (a.lo.abs(), a.hi.abs());
                        Some(Interval::new(x.min(y), x.max(y)))
                    }
                }
                _ => None,
            }
        }
        Expr::Binary(op, l, r) => {
            let a = enclose(l, dom, p)?;
            let b = enclose(r, dom, p)?;
            let out = match op {
                BinOp::Add => Interval::new(a.lo + b.lo, a.hi + b.hi),
                BinOp::Sub => Interval::new(a.lo - b.hi, a.hi - b.lo),
                BinOp::Mul => a.mul(b)?,
                BinOp::Div => {
                    if b.contains_zero() {
                        return None;
                    }
                    a.mul(Interval::new(1.0 / b.hi, 1.0 / b.lo))?
                }
                BinOp::Pow => {
                    // constant non-negative integer exponents only
                    if b.lo != b.hi || b.lo.fract() != 0.0 || b.lo < 0.0 {
                        return None;
                    }
                    let n = b.lo as u32;
                    if n == 0 {
                        Interval::point(1.0)
                    } else if n.is_multiple_of(2) {
                        let s = a.square();
                        Interval::new(s.lo.powi(n as i32 / 2), s.hi.powi(n as i32 / 2))
                    } else {
                        Interval::new(a.lo.powi(n as i32), a.hi.powi(n as i32))
                    }
                }
            };
            if out.lo.is_nan() || out.hi.is_nan() {
                None
            } else {
                Some(out)
            }
        }
    }
}

/// A certified positive lower bound of `e(x)^2` over `dom`, if one exists.
pub fn square_lower_bound(e: &Expr, dom: Interval, p: &ParamBindings) -> Option<f64> {
    let i = enclose(e, dom, p)?;
    let lb = i.square().lo;
    (lb > 0.0).then_some(lb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    #[test]
    fn exp_on_positive_half_line() {
        let e = parse("exp(x)").unwrap();
        let lb = square_lower_bound(&e, Interval::new(0.0, f64::INFINITY), &ParamBindings::new());
        assert_eq!(lb, Some(1.0));
    }

    #[test]
    fn no_bound_when_zero_reachable() {
        let e = parse("x - 1").unwrap();
        let lb = square_lower_bound(&e, Interval::new(0.0, f64::INFINITY), &ParamBindings::new());
        assert_eq!(lb, None);
        let e = parse("exp(x)").unwrap();
        let lb = square_lower_bound(
            &e,
            Interval::new(f64::NEG_INFINITY, f64::INFINITY),
            &ParamBindings::new(),
        );
        assert_eq!(lb, None);
    }

    #[test]
    fn constants() {
        let p = ParamBindings::from([("k", -0.5)]);
        let lb = square_lower_bound(&parse("k").unwrap(), Interval::new(0.0, 1.0), &p);
        assert_eq!(lb, Some(0.25));
    }
}
