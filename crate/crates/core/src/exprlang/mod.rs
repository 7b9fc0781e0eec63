//! Smooth scalar expressions over chart coordinates.
//!
//! Every derivative used by the curvature pipeline is produced here by exact
//! symbolic differentiation. Expressions are immutable trees with shared
//! (`Arc`) children, so repeated differentiation reuses subtrees instead of
//! copying them, and [`Tape`] compiles a batch of expressions into a single
//! common-subexpression-eliminated instruction list for fast evaluation.

mod diff;
mod eval;
mod parse;

use std::fmt;
use std::sync::Arc;

pub use diff::{differentiate, DerivativeTable};
pub use eval::{evaluate, EvalError, Tape};
pub use parse::{line_col, parse_expr, parse_expr_with_names, ParseError, ParseErrorKind, SourceSpan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Exp,
    Ln,
    Sin,
    Cos,
    Tan,
    Sinh,
    Cosh,
    Tanh,
    Sqrt,
}

impl UnaryOp {
    /// Function-call name, `None` for prefix negation.
    pub fn name(self) -> Option<&'static str> {
        match self {
            UnaryOp::Neg => None,
            UnaryOp::Exp => Some("exp"),
            UnaryOp::Ln => Some("ln"),
            UnaryOp::Sin => Some("sin"),
            UnaryOp::Cos => Some("cos"),
            UnaryOp::Tan => Some("tan"),
            UnaryOp::Sinh => Some("sinh"),
            UnaryOp::Cosh => Some("cosh"),
            UnaryOp::Tanh => Some("tanh"),
            UnaryOp::Sqrt => Some("sqrt"),
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => UnaryOp::Exp,
            "ln" | "log" => UnaryOp::Ln,
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "tan" => UnaryOp::Tan,
            "sinh" => UnaryOp::Sinh,
            "cosh" => UnaryOp::Cosh,
            "tanh" => UnaryOp::Tanh,
            "sqrt" => UnaryOp::Sqrt,
            _ => return None,
        })
    }

    /// Applies the operation, returning `None` outside the real domain.
    pub fn apply(self, x: f64) -> Option<f64> {
        let v = match self {
            UnaryOp::Neg => -x,
            UnaryOp::Exp => x.exp(),
            UnaryOp::Ln => {
                if x <= 0.0 {
                    return None;
                }
                x.ln()
            }
            UnaryOp::Sin => x.sin(),
            UnaryOp::Cos => x.cos(),
            UnaryOp::Tan => x.tan(),
            UnaryOp::Sinh => x.sinh(),
            UnaryOp::Cosh => x.cosh(),
            UnaryOp::Tanh => x.tanh(),
            UnaryOp::Sqrt => {
                if x < 0.0 {
                    return None;
                }
                x.sqrt()
            }
        };
        v.is_finite().then_some(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    pub fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
        }
    }

    pub fn apply(self, a: f64, b: f64) -> Option<f64> {
        let v = match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => {
                if b == 0.0 {
                    return None;
                }
                a / b
            }
        };
        v.is_finite().then_some(v)
    }
}

/// Real power with a constant exponent, `None` outside the real domain.
pub(crate) fn apply_pow(base: f64, exponent: f64) -> Option<f64> {
    if base < 0.0 && exponent.fract() != 0.0 {
        return None;
    }
    if base == 0.0 && exponent < 0.0 {
        return None;
    }
    let v = if exponent.fract() == 0.0 && exponent.abs() <= i32::MAX as f64 {
        base.powi(exponent as i32)
    } else {
        base.powf(exponent)
    };
    v.is_finite().then_some(v)
}

/// Expression tree. Variables are 0-based coordinate indices and print as
/// `x1`, `x2`, ...
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Unary(UnaryOp, Arc<Expr>),
    Binary(BinaryOp, Arc<Expr>, Arc<Expr>),
    /// Power with a constant exponent.
    Pow(Arc<Expr>, f64),
}

pub(crate) fn as_const(e: &Expr) -> Option<f64> {
    match e {
        Expr::Const(c) => Some(*c),
        _ => None,
    }
}

// `add`, `mul`, ... build shared `Arc` nodes; the operator traits would not fit.
#[allow(clippy::should_implement_trait)]
impl Expr {
    pub fn constant(c: f64) -> Arc<Expr> {
        Arc::new(Expr::Const(c))
    }

    pub fn zero() -> Arc<Expr> {
        Self::constant(0.0)
    }

    pub fn one() -> Arc<Expr> {
        Self::constant(1.0)
    }

    pub fn var(index: usize) -> Arc<Expr> {
        Arc::new(Expr::Var(index))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    pub fn is_one(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 1.0)
    }

    pub fn as_const(&self) -> Option<f64> {
        as_const(self)
    }

    // Simplifying constructors: constant folding and 0/1 identities only.

    pub fn add(a: Arc<Expr>, b: Arc<Expr>) -> Arc<Expr> {
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            if let Some(v) = BinaryOp::Add.apply(x, y) {
                return Self::constant(v);
            }
        }
        if a.is_zero() {
            return b;
        }
        if b.is_zero() {
            return a;
        }
        Arc::new(Expr::Binary(BinaryOp::Add, a, b))
    }

    pub fn sub(a: Arc<Expr>, b: Arc<Expr>) -> Arc<Expr> {
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            if let Some(v) = BinaryOp::Sub.apply(x, y) {
                return Self::constant(v);
            }
        }
        if b.is_zero() {
            return a;
        }
        if a.is_zero() {
            return Self::neg(b);
        }
        Arc::new(Expr::Binary(BinaryOp::Sub, a, b))
    }

    pub fn mul(a: Arc<Expr>, b: Arc<Expr>) -> Arc<Expr> {
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            if let Some(v) = BinaryOp::Mul.apply(x, y) {
                return Self::constant(v);
            }
        }
        if a.is_zero() || b.is_zero() {
            return Self::zero();
        }
        if a.is_one() {
            return b;
        }
        if b.is_one() {
            return a;
        }
        if a.as_const() == Some(-1.0) {
            return Self::neg(b);
        }
        if b.as_const() == Some(-1.0) {
            return Self::neg(a);
        }
        Arc::new(Expr::Binary(BinaryOp::Mul, a, b))
    }

    pub fn div(a: Arc<Expr>, b: Arc<Expr>) -> Arc<Expr> {
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            if let Some(v) = BinaryOp::Div.apply(x, y) {
                return Self::constant(v);
            }
        }
        if a.is_zero() && !b.is_zero() {
            return Self::zero();
        }
        if b.is_one() {
            return a;
        }
        Arc::new(Expr::Binary(BinaryOp::Div, a, b))
    }

    pub fn neg(a: Arc<Expr>) -> Arc<Expr> {
        match &*a {
            Expr::Const(c) => Self::constant(-c),
            Expr::Unary(UnaryOp::Neg, inner) => inner.clone(),
            _ => Arc::new(Expr::Unary(UnaryOp::Neg, a)),
        }
    }

    pub fn unary(op: UnaryOp, a: Arc<Expr>) -> Arc<Expr> {
        if op == UnaryOp::Neg {
            return Self::neg(a);
        }
        if let Some(v) = a.as_const().and_then(|c| op.apply(c)) {
            return Self::constant(v);
        }
        Arc::new(Expr::Unary(op, a))
    }

    pub fn binary(op: BinaryOp, a: Arc<Expr>, b: Arc<Expr>) -> Arc<Expr> {
        match op {
            BinaryOp::Add => Self::add(a, b),
            BinaryOp::Sub => Self::sub(a, b),
            BinaryOp::Mul => Self::mul(a, b),
            BinaryOp::Div => Self::div(a, b),
        }
    }

    pub fn pow(a: Arc<Expr>, exponent: f64) -> Arc<Expr> {
        if exponent == 0.0 {
            return Self::one();
        }
        if exponent == 1.0 {
            return a;
        }
        if let Some(v) = a.as_const().and_then(|c| apply_pow(c, exponent)) {
            return Self::constant(v);
        }
        Arc::new(Expr::Pow(a, exponent))
    }

    /// Rebuilds the tree bottom-up through the simplifying constructors.
    pub fn normalize(self: &Arc<Self>) -> Arc<Expr> {
        match &**self {
            Expr::Const(_) | Expr::Var(_) => self.clone(),
            Expr::Unary(op, a) => Self::unary(*op, a.normalize()),
            Expr::Binary(op, a, b) => Self::binary(*op, a.normalize(), b.normalize()),
            Expr::Pow(a, k) => Self::pow(a.normalize(), *k),
        }
    }

    /// Largest variable index plus one (0 for closed expressions).
    pub fn min_dim(&self) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Unary(_, a) | Expr::Pow(a, _) => a.min_dim(),
            Expr::Binary(_, a, b) => a.min_dim().max(b.min_dim()),
        }
    }

    /// Node count of the tree, counting shared subtrees once per occurrence.
    pub fn tree_size(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Unary(_, a) | Expr::Pow(a, _) => 1 + a.tree_size(),
            Expr::Binary(_, a, b) => 1 + a.tree_size() + b.tree_size(),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => 1,
            Expr::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => 2,
            Expr::Unary(UnaryOp::Neg, _) => 3,
            Expr::Pow(..) => 4,
            _ => 5,
        }
    }

    fn fmt_at(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        let paren = self.precedence() < min_prec;
        if paren {
            f.write_str("(")?;
        }
        match self {
            Expr::Const(c) => write_number(f, *c)?,
            Expr::Var(i) => write!(f, "x{}", i + 1)?,
            Expr::Unary(UnaryOp::Neg, a) => {
                f.write_str("-")?;
                a.fmt_at(f, 3)?;
            }
            Expr::Unary(op, a) => {
                write!(f, "{}(", op.name().unwrap_or_default())?;
                a.fmt_at(f, 0)?;
                f.write_str(")")?;
            }
            Expr::Binary(op, a, b) => {
                let (lhs, rhs) = match op {
                    BinaryOp::Add | BinaryOp::Sub => (1, 2),
                    BinaryOp::Mul | BinaryOp::Div => (2, 3),
                };
                a.fmt_at(f, lhs)?;
                match op {
                    BinaryOp::Add | BinaryOp::Sub => write!(f, " {} ", op.symbol())?,
                    _ => write!(f, "{}", op.symbol())?,
                }
                b.fmt_at(f, rhs)?;
            }
            Expr::Pow(a, k) => {
                a.fmt_at(f, 5)?;
                f.write_str("^")?;
                write_number(f, *k)?;
            }
        }
        if paren {
            f.write_str(")")?;
        }
        Ok(())
    }
}

fn write_number(f: &mut fmt::Formatter<'_>, c: f64) -> fmt::Result {
    let negative = c < 0.0 || (c == 0.0 && c.is_sign_negative());
    if negative {
        f.write_str("(-")?;
    }
    let a = c.abs();
    if a.fract() == 0.0 && a < 1e15 {
        write!(f, "{}", a as u64)?;
    } else {
        write!(f, "{a:?}")?;
    }
    if negative {
        f.write_str(")")?;
    }
    Ok(())
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_at(f, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructors_fold_constants() {
        let e = Expr::add(Expr::constant(2.0), Expr::constant(3.0));
        assert_eq!(*e, Expr::Const(5.0));
        let x = Expr::var(0);
        assert_eq!(Expr::mul(Expr::one(), x.clone()), x);
        assert!(Expr::mul(Expr::zero(), x.clone()).is_zero());
        assert_eq!(Expr::neg(Expr::neg(x.clone())), x);
        assert!(Expr::pow(x.clone(), 0.0).is_one());
        // ln(-1) must stay symbolic so evaluation reports the domain error
        let bad = Expr::unary(UnaryOp::Ln, Expr::constant(-1.0));
        assert!(matches!(*bad, Expr::Unary(UnaryOp::Ln, _)));
    }

    #[test]
    fn printing_uses_minimal_parentheses() {
        let x = Expr::var(0);
        let y = Expr::var(1);
        let e = Expr::Binary(
            BinaryOp::Sub,
            x.clone(),
            Arc::new(Expr::Binary(BinaryOp::Sub, y.clone(), x.clone())),
        );
        assert_eq!(e.to_string(), "x1 - (x2 - x1)");
        let p = Expr::Pow(Arc::new(Expr::Unary(UnaryOp::Neg, x.clone())), -2.0);
        assert_eq!(p.to_string(), "(-x1)^(-2)");
        let m = Expr::Binary(BinaryOp::Mul, Expr::constant(0.5), Expr::unary(UnaryOp::Exp, y));
        assert_eq!(m.to_string(), "0.5*exp(x2)");
    }
}
