use std::fmt;

use super::{BinOp, Expr};

const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Binary(BinOp::Add | BinOp::Sub, ..) => PREC_ADD,
        Expr::Binary(BinOp::Mul | BinOp::Div, ..) => PREC_MUL,
        Expr::Neg(_) => PREC_NEG,
        Expr::Binary(BinOp::Pow, ..) => PREC_POW,
        Expr::Num(_) | Expr::Var | Expr::Param(_) | Expr::Call(..) => PREC_ATOM,
    }
}

fn write_wrapped(e: &Expr, wrap: bool, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if wrap {
        f.write_str("(")?;
        write_expr(e, f)?;
        f.write_str(")")
    } else {
        write_expr(e, f)
    }
}

/// Minimal-parenthesis printer; the output re-parses to the same tree.
pub(super) fn write_expr(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e {
        Expr::Num(v) => write!(f, "{v:?}"),
        Expr::Var => f.write_str("x"),
        Expr::Param(p) => f.write_str(p),
        Expr::Neg(inner) => {
            f.write_str("-")?;
            write_wrapped(inner, prec(inner) < PREC_NEG, f)
        }
        Expr::Call(func, arg) => {
            write!(f, "{}(", func.name())?;
            write_expr(arg, f)?;
            f.write_str(")")
        }
        Expr::Binary(BinOp::Pow, base, exponent) => {
            write_wrapped(base, prec(base) < PREC_ATOM, f)?;
            f.write_str("^")?;
            write_wrapped(exponent, prec(exponent) < PREC_NEG, f)
        }
        Expr::Binary(op, l, r) => {
            let p = prec(e);
            write_wrapped(l, prec(l) < p, f)?;
            write!(f, " {} ", op.symbol())?;
            write_wrapped(r, prec(r) <= p, f)
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::expr::parse;

    #[test]
    fn normalizes_spacing_and_parens() {
        assert_eq!(parse("alpha*(m-x)").unwrap().to_string(), "alpha * (m - x)");
        assert_eq!(parse("((x))").unwrap().to_string(), "x");
        assert_eq!(parse("(2^3)^2").unwrap().to_string(), "(2.0^3.0)^2.0");
        assert_eq!(parse("a-(b-c)").unwrap().to_string(), "a - (b - c)");
        assert_eq!(parse("(-a)^2").unwrap().to_string(), "(-a)^2.0");
        assert_eq!(parse("x^-1").unwrap().to_string(), "x^-1.0");
    }
}
