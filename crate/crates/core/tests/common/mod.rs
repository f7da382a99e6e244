#![allow(dead_code)]

//! Expression generators and an independent shunting-yard evaluator shared
//! by the parser suites.

use martcheck::expr::{BinOp, Expr, Func, ParamBindings};
use proptest::prelude::*;

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (0u32..2000).prop_map(|n| Expr::Num(n as f64 / 8.0)),
        (1e-6f64..1e6).prop_map(Expr::Num),
        Just(Expr::Var),
        prop::sample::select(vec!["alpha", "m", "beta"]).prop_map(Expr::param),
    ]
}

pub fn tree() -> impl Strategy<Value = Expr> {
    let ops = prop::sample::select(vec![
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::Div,
        BinOp::Pow,
    ]);
    let funcs = prop::sample::select(vec![Func::Exp, Func::Log, Func::Sqrt, Func::Abs]);
    leaf().prop_recursive(5, 40, 2, move |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| -e),
            (ops.clone(), inner.clone(), inner.clone()).prop_map(|(op, l, r)| Expr::bin(op, l, r)),
            (funcs.clone(), inner).prop_map(|(f, a)| Expr::call(f, a)),
        ]
    })
}

pub fn bindings() -> ParamBindings {
    ParamBindings::from([("alpha", 1.5), ("m", 0.75), ("beta", 2.25)])
}

// ---- reference evaluator: shunting-yard to postfix, then a stack machine ----

#[derive(Debug, Clone, PartialEq)]
enum RTok {
    Num(f64),
    Name(String),
    Op(char),
    Neg,
    Func(String),
    LParen,
}

fn prec(t: &RTok) -> (u8, bool) {
    // (precedence, right associative)
    match t {
        RTok::Op('+') | RTok::Op('-') => (1, false),
        RTok::Op('*') | RTok::Op('/') => (2, false),
        RTok::Neg => (3, true),
        RTok::Op('^') => (4, true),
        _ => (0, false),
    }
}

fn to_postfix(text: &str) -> Vec<RTok> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut stack: Vec<RTok> = Vec::new();
    let mut i = 0;
    let mut expect_operand = true;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && chars[i] == 'e' {
                i += 1;
                if chars[i] == '-' || chars[i] == '+' {
                    i += 1;
                }
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let s: String = chars[start..i].iter().collect();
            out.push(RTok::Num(s.parse().unwrap()));
            expect_operand = false;
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            if i < chars.len() && chars[i] == '(' {
                stack.push(RTok::Func(s));
            } else {
                out.push(RTok::Name(s));
                expect_operand = false;
            }
        } else if c == '(' {
            stack.push(RTok::LParen);
            expect_operand = true;
            i += 1;
        } else if c == ')' {
            while let Some(t) = stack.pop() {
                if t == RTok::LParen {
                    break;
                }
                out.push(t);
            }
            if let Some(RTok::Func(_)) = stack.last() {
                out.push(stack.pop().unwrap());
            }
            expect_operand = false;
            i += 1;
        } else {
            let tok = if c == '-' && expect_operand {
                RTok::Neg
            } else {
                RTok::Op(c)
            };
            if tok != RTok::Neg {
                let (p, right) = prec(&tok);
                while let Some(top) = stack.last() {
                    let (q, _) = prec(top);
                    if q > p || (q == p && !right && q > 0) {
                        out.push(stack.pop().unwrap());
                    } else {
                        break;
                    }
                }
            }
            stack.push(tok);
            expect_operand = true;
            i += 1;
        }
    }
    while let Some(t) = stack.pop() {
        out.push(t);
    }
    out
}

/// Plain IEEE evaluation.
pub fn reference_eval(text: &str, x: f64, p: &ParamBindings) -> f64 {
    reference_eval_checked(text, x, p).0
}

/// Value, and whether a real-domain violation occurred on the way
/// (division by zero, log/sqrt out of domain, invalid powers, NaN).
pub fn reference_eval_checked(text: &str, x: f64, p: &ParamBindings) -> (f64, bool) {
    let mut st: Vec<f64> = Vec::new();
    let mut domain = false;
    for t in to_postfix(text) {
        match t {
            RTok::Num(v) => st.push(v),
            RTok::Name(n) if n == "x" => st.push(x),
            RTok::Name(n) => st.push(p.get(&n).unwrap()),
            RTok::Neg => {
                let a = st.pop().unwrap();
                st.push(-a);
            }
            RTok::Func(f) => {
                let a = st.pop().unwrap();
                domain |= (f == "log" && a <= 0.0) || (f == "sqrt" && a < 0.0);
                st.push(match f.as_str() {
                    "exp" => a.exp(),
                    "log" => a.ln(),
                    "sqrt" => a.sqrt(),
                    "abs" => a.abs(),
                    other => panic!("unknown function {other}"),
                });
            }
            RTok::Op(o) => {
                let b = st.pop().unwrap();
                let a = st.pop().unwrap();
                domain |= match o {
                    '/' => b == 0.0,
                    '^' => (a < 0.0 && b.fract() != 0.0) || (a == 0.0 && b < 0.0),
                    _ => false,
                };
                st.push(match o {
                    '+' => a + b,
                    '-' => a - b,
                    '*' => a * b,
                    '/' => a / b,
                    '^' => {
                        if a < 0.0 && b.fract() != 0.0 {
                            f64::NAN
                        } else {
                            a.powf(b)
                        }
                    }
                    other => panic!("unknown operator {other}"),
                });
                domain |= st.last().unwrap().is_nan();
            }
            RTok::LParen => panic!("unbalanced"),
        }
    }
    assert_eq!(st.len(), 1);
    (st[0], domain)
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    a == b || (a - b).abs() <= rel * a.abs().max(b.abs())
}
