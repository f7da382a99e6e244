use super::{BinOp, EvalError, Expr, Func, ParamBindings};

fn domain(msg: impl Into<String>) -> EvalError {
    EvalError::Domain(msg.into())
}

pub(super) fn apply_func(f: Func, a: f64) -> Result<f64, EvalError> {
    match f {
        Func::Exp => Ok(a.exp()),
        Func::Log => {
            if a > 0.0 {
                Ok(a.ln())
            } else {
                Err(domain(format!("log of non-positive value {a}")))
            }
        }
        Func::Sqrt => {
            if a >= 0.0 {
                Ok(a.sqrt())
            } else {
                Err(domain(format!("sqrt of negative value {a}")))
            }
        }
        Func::Abs => Ok(a.abs()),
    }
}

pub(super) fn apply_bin(op: BinOp, a: f64, b: f64) -> Result<f64, EvalError> {
    let v = match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div => {
            if b == 0.0 {
                return Err(domain(format!("division of {a} by zero")));
            }
            a / b
        }
        BinOp::Pow => {
            if a < 0.0 && b.fract() != 0.0 {
                return Err(domain(format!(
                    "negative base {a} raised to non-integer power {b}"
                )));
            }
            if a == 0.0 && b < 0.0 {
                return Err(domain(format!("zero raised to negative power {b}")));
            }
            a.powf(b)
        }
    };
    if v.is_nan() {
        return Err(domain(format!("{a} {} {b} is undefined", op.symbol())));
    }
    Ok(v)
}

pub(super) fn eval_tree(e: &Expr, x: f64, p: &ParamBindings) -> Result<f64, EvalError> {
    match e {
        Expr::Num(v) => Ok(*v),
        Expr::Var => Ok(x),
        Expr::Param(name) => p
            .get(name)
            .ok_or_else(|| EvalError::UnboundParameter(name.clone())),
        Expr::Neg(inner) => Ok(-eval_tree(inner, x, p)?),
        Expr::Call(f, arg) => apply_func(*f, eval_tree(arg, x, p)?),
        Expr::Binary(op, l, r) => {
            let a = eval_tree(l, x, p)?;
            let b = eval_tree(r, x, p)?;
            apply_bin(*op, a, b)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    Var,
    Neg,
    Bin(BinOp),
    Call(Func),
}

const INLINE_STACK: usize = 32;

/// An expression with parameters substituted and constant subtrees folded,
/// flattened to postfix for fast repeated evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledExpr {
    ops: Vec<Op>,
    depth: usize,
}

enum Folded {
    Const(f64),
    Tree(Vec<Op>, usize),
}

impl Folded {
    fn into_ops(self) -> (Vec<Op>, usize) {
        match self {
            Folded::Const(v) => (vec![Op::Const(v)], 1),
            Folded::Tree(ops, d) => (ops, d),
        }
    }
}

fn fold(e: &Expr, p: &ParamBindings) -> Result<Folded, EvalError> {
    Ok(match e {
        Expr::Num(v) => Folded::Const(*v),
        Expr::Var => Folded::Tree(vec![Op::Var], 1),
        Expr::Param(name) => Folded::Const(
            p.get(name)
                .ok_or_else(|| EvalError::UnboundParameter(name.clone()))?,
        ),
        Expr::Neg(inner) => match fold(inner, p)? {
            Folded::Const(v) => Folded::Const(-v),
            Folded::Tree(mut ops, d) => {
                ops.push(Op::Neg);
                Folded::Tree(ops, d)
            }
        },
        Expr::Call(f, arg) => match fold(arg, p)? {
            Folded::Const(v) => match apply_func(*f, v) {
                Ok(r) => Folded::Const(r),
                // keep the failing call so the error surfaces at evaluation time
                Err(_) => Folded::Tree(vec![Op::Const(v), Op::Call(*f)], 1),
            },
            Folded::Tree(mut ops, d) => {
                ops.push(Op::Call(*f));
                Folded::Tree(ops, d)
            }
        },
        Expr::Binary(op, l, r) => {
            let (fl, fr) = (fold(l, p)?, fold(r, p)?);
            if let (Folded::Const(a), Folded::Const(b)) = (&fl, &fr) {
                if let Ok(v) = apply_bin(*op, *a, *b) {
                    return Ok(Folded::Const(v));
                }
            }
            let (mut ops, dl) = fl.into_ops();
            let (rops, dr) = fr.into_ops();
            ops.extend(rops);
            ops.push(Op::Bin(*op));
            Folded::Tree(ops, dl.max(dr + 1))
        }
    })
}

impl CompiledExpr {
    /// Substitute `params` into `e` and fold constants.
    pub fn compile(e: &Expr, params: &ParamBindings) -> Result<Self, EvalError> {
        let (ops, depth) = fold(e, params)?.into_ops();
        Ok(CompiledExpr { ops, depth })
    }

    /// The folded value if the expression does not depend on `x`.
    pub fn as_constant(&self) -> Option<f64> {
        match self.ops.as_slice() {
            [Op::Const(v)] => Some(*v),
            _ => None,
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64, EvalError> {
        if self.depth <= INLINE_STACK {
            let mut stack = [0.0f64; INLINE_STACK];
            self.run(x, &mut stack)
        } else {
            let mut stack = vec![0.0f64; self.depth];
            self.run(x, &mut stack)
        }
    }

    fn run(&self, x: f64, stack: &mut [f64]) -> Result<f64, EvalError> {
        let mut sp = 0usize;
        for op in &self.ops {
            match *op {
                Op::Const(v) => {
                    stack[sp] = v;
                    sp += 1;
                }
                Op::Var => {
                    stack[sp] = x;
                    sp += 1;
                }
                Op::Neg => stack[sp - 1] = -stack[sp - 1],
                Op::Call(f) => stack[sp - 1] = apply_func(f, stack[sp - 1])?,
                Op::Bin(b) => {
                    let r = stack[sp - 1];
                    let l = stack[sp - 2];
                    sp -= 1;
                    stack[sp - 1] = apply_bin(b, l, r)?;
                }
            }
        }
        Ok(stack[0])
    }
}
