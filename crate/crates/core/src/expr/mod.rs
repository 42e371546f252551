//! Arithmetic expressions over coordinates and named parameters.
//!
//! Trees are immutable and shared through `Arc`, so cloning is cheap and
//! evaluation can run from many threads at once. Constructors fold constants
//! and the trivial `0`/`1` identities; nothing else is simplified.

mod diff;
mod parse;

use std::collections::BTreeMap;
use std::fmt;
use std::ops;
use std::sync::Arc;

pub use parse::{parse, ParseError, Symbols};

/// Parameter bindings used during evaluation.
pub type Params = BTreeMap<String, f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sqrt,
    Sin,
    Cos,
    Exp,
    Log,
}

impl UnaryOp {
    fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Const(f64),
    /// Zero-based coordinate axis.
    Coord(usize),
    Param(Arc<str>),
    Unary(UnaryOp, Expression),
    Binary(BinaryOp, Expression, Expression),
    /// Power with a constant exponent.
    Pow(Expression, f64),
}

#[derive(Clone, PartialEq)]
pub struct Expression(Arc<Node>);

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("division by zero in `{node}`")]
    DivisionByZero { node: String },
    #[error("logarithm of non-positive value {value} in `{node}`")]
    LogDomain { value: f64, node: String },
    #[error("square root of negative value {value} in `{node}`")]
    SqrtDomain { value: f64, node: String },
    #[error("negative base {value} raised to a fractional power in `{node}`")]
    PowDomain { value: f64, node: String },
    #[error("parameter `{name}` is not bound")]
    UnboundParameter { name: String },
    #[error("coordinate x{axis} is outside a point of dimension {dim}", axis = .axis + 1)]
    Dimension { axis: usize, dim: usize },
}

impl Expression {
    fn from_node(node: Node) -> Self {
        Expression(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn constant(value: f64) -> Self {
        Self::from_node(Node::Const(value))
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    /// Coordinate with a zero-based axis index.
    pub fn coord(axis: usize) -> Self {
        Self::from_node(Node::Coord(axis))
    }

    pub fn param(name: &str) -> Self {
        Self::from_node(Node::Param(Arc::from(name)))
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self.node() {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn as_coordinate(&self) -> Option<usize> {
        match self.node() {
            Node::Coord(a) => Some(*a),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_constant() == Some(0.0)
    }

    pub fn is_one(&self) -> bool {
        self.as_constant() == Some(1.0)
    }

    pub fn unary(op: UnaryOp, a: Expression) -> Self {
        if let Some(c) = a.as_constant() {
            let folded = match op {
                UnaryOp::Neg => Some(-c),
                UnaryOp::Sqrt if c >= 0.0 => Some(c.sqrt()),
                UnaryOp::Sin => Some(c.sin()),
                UnaryOp::Cos => Some(c.cos()),
                UnaryOp::Exp => Some(c.exp()),
                UnaryOp::Log if c > 0.0 => Some(c.ln()),
                _ => None,
            };
            if let Some(v) = folded.filter(|v| v.is_finite()) {
                return Self::constant(v);
            }
        }
        if op == UnaryOp::Neg {
            if let Node::Unary(UnaryOp::Neg, inner) = a.node() {
                return inner.clone();
            }
        }
        Self::from_node(Node::Unary(op, a))
    }

    pub fn binary(op: BinaryOp, a: Expression, b: Expression) -> Self {
        let (ca, cb) = (a.as_constant(), b.as_constant());
        if let (Some(x), Some(y)) = (ca, cb) {
            let v = match op {
                BinaryOp::Add => Some(x + y),
                BinaryOp::Sub => Some(x - y),
                BinaryOp::Mul => Some(x * y),
                BinaryOp::Div if y != 0.0 => Some(x / y),
                BinaryOp::Div => None,
            };
            if let Some(v) = v {
                return Self::constant(v);
            }
        }
        match op {
            BinaryOp::Add => {
                if a.is_zero() {
                    return b;
                }
                if b.is_zero() {
                    return a;
                }
            }
            BinaryOp::Sub => {
                if b.is_zero() {
                    return a;
                }
                if a.is_zero() {
                    return -b;
                }
            }
            BinaryOp::Mul => {
                if a.is_zero() || b.is_zero() {
                    return Self::zero();
                }
                if a.is_one() {
                    return b;
                }
                if b.is_one() {
                    return a;
                }
                if ca == Some(-1.0) {
                    return -b;
                }
                if cb == Some(-1.0) {
                    return -a;
                }
            }
            BinaryOp::Div => {
                if b.is_one() {
                    return a;
                }
                if a.is_zero() && cb != Some(0.0) {
                    return Self::zero();
                }
            }
        }
        Self::from_node(Node::Binary(op, a, b))
    }

    pub fn pow(self, exponent: f64) -> Self {
        if exponent == 0.0 {
            return Self::one();
        }
        if exponent == 1.0 {
            return self;
        }
        if let Some(c) = self.as_constant() {
            let v = c.powf(exponent);
            if v.is_finite() {
                return Self::constant(v);
            }
        }
        Self::from_node(Node::Pow(self, exponent))
    }

    pub fn sqrt(self) -> Self {
        Self::unary(UnaryOp::Sqrt, self)
    }

    pub fn sin(self) -> Self {
        Self::unary(UnaryOp::Sin, self)
    }

    pub fn cos(self) -> Self {
        Self::unary(UnaryOp::Cos, self)
    }

    pub fn exp(self) -> Self {
        Self::unary(UnaryOp::Exp, self)
    }

    pub fn ln(self) -> Self {
        Self::unary(UnaryOp::Log, self)
    }

    /// Evaluates at `point`; coordinates index into the slice.
    pub fn eval(&self, point: &[f64], params: &Params) -> Result<f64, EvalError> {
        match self.node() {
            Node::Const(c) => Ok(*c),
            Node::Coord(a) => point.get(*a).copied().ok_or(EvalError::Dimension {
                axis: *a,
                dim: point.len(),
            }),
            Node::Param(name) => {
                params
                    .get(name.as_ref())
                    .copied()
                    .ok_or_else(|| EvalError::UnboundParameter {
                        name: name.to_string(),
                    })
            }
            Node::Unary(op, a) => {
                let x = a.eval(point, params)?;
                match op {
                    UnaryOp::Neg => Ok(-x),
                    UnaryOp::Sqrt if x < 0.0 => Err(EvalError::SqrtDomain {
                        value: x,
                        node: self.to_string(),
                    }),
                    UnaryOp::Sqrt => Ok(x.sqrt()),
                    UnaryOp::Sin => Ok(x.sin()),
                    UnaryOp::Cos => Ok(x.cos()),
                    UnaryOp::Exp => Ok(x.exp()),
                    UnaryOp::Log if x <= 0.0 => Err(EvalError::LogDomain {
                        value: x,
                        node: self.to_string(),
                    }),
                    UnaryOp::Log => Ok(x.ln()),
                }
            }
            Node::Binary(op, a, b) => {
                let x = a.eval(point, params)?;
                let y = b.eval(point, params)?;
                match op {
                    BinaryOp::Add => Ok(x + y),
                    BinaryOp::Sub => Ok(x - y),
                    BinaryOp::Mul => Ok(x * y),
                    BinaryOp::Div if y == 0.0 => Err(EvalError::DivisionByZero {
                        node: self.to_string(),
                    }),
                    BinaryOp::Div => Ok(x / y),
                }
            }
            Node::Pow(a, e) => {
                let x = a.eval(point, params)?;
                if e.fract() == 0.0 && e.abs() <= i32::MAX as f64 {
                    if x == 0.0 && *e < 0.0 {
                        return Err(EvalError::DivisionByZero {
                            node: self.to_string(),
                        });
                    }
                    Ok(x.powi(*e as i32))
                } else if x < 0.0 {
                    Err(EvalError::PowDomain {
                        value: x,
                        node: self.to_string(),
                    })
                } else if x == 0.0 && *e < 0.0 {
                    Err(EvalError::DivisionByZero {
                        node: self.to_string(),
                    })
                } else {
                    Ok(x.powf(*e))
                }
            }
        }
    }

    /// Replaces every coordinate `x_a` with `f(a)`, refolding on the way up.
    pub fn substitute(&self, f: &dyn Fn(usize) -> Expression) -> Expression {
        match self.node() {
            Node::Const(_) | Node::Param(_) => self.clone(),
            Node::Coord(a) => f(*a),
            Node::Unary(op, a) => Self::unary(*op, a.substitute(f)),
            Node::Binary(op, a, b) => Self::binary(*op, a.substitute(f), b.substitute(f)),
            Node::Pow(a, e) => a.substitute(f).pow(*e),
        }
    }

    /// Replaces bound parameters by their values.
    pub fn bind(&self, params: &Params) -> Expression {
        match self.node() {
            Node::Const(_) | Node::Coord(_) => self.clone(),
            Node::Param(name) => match params.get(name.as_ref()) {
                Some(v) => Self::constant(*v),
                None => self.clone(),
            },
            Node::Unary(op, a) => Self::unary(*op, a.bind(params)),
            Node::Binary(op, a, b) => Self::binary(*op, a.bind(params), b.bind(params)),
            Node::Pow(a, e) => a.bind(params).pow(*e),
        }
    }

    /// Largest coordinate index used plus one (0 for coordinate-free trees).
    pub fn dimension_hint(&self) -> usize {
        match self.node() {
            Node::Const(_) | Node::Param(_) => 0,
            Node::Coord(a) => a + 1,
            Node::Unary(_, a) | Node::Pow(a, _) => a.dimension_hint(),
            Node::Binary(_, a, b) => a.dimension_hint().max(b.dimension_hint()),
        }
    }

    pub fn parameters(&self, out: &mut Vec<String>) {
        match self.node() {
            Node::Param(name) => {
                if !out.iter().any(|p| p == name.as_ref()) {
                    out.push(name.to_string());
                }
            }
            Node::Const(_) | Node::Coord(_) => {}
            Node::Unary(_, a) | Node::Pow(a, _) => a.parameters(out),
            Node::Binary(_, a, b) => {
                a.parameters(out);
                b.parameters(out);
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self.node() {
            Node::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => 1,
            Node::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => 2,
            Node::Unary(UnaryOp::Neg, _) => 3,
            Node::Const(c) if *c < 0.0 => 3,
            Node::Pow(..) => 4,
            _ => 5,
        }
    }

    fn write_child(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        if self.precedence() < min {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

fn write_number(f: &mut fmt::Formatter<'_>, x: f64) -> fmt::Result {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        write!(f, "{}", x as i64)
    } else {
        write!(f, "{x}")
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            Node::Const(c) => write_number(f, *c),
            Node::Coord(a) => write!(f, "x{}", a + 1),
            Node::Param(name) => write!(f, "{name}"),
            Node::Unary(UnaryOp::Neg, a) => {
                write!(f, "-")?;
                a.write_child(f, 4)
            }
            Node::Unary(op, a) => write!(f, "{}({a})", op.name()),
            Node::Binary(op, a, b) => {
                let (sym, p) = match op {
                    BinaryOp::Add => ('+', 1),
                    BinaryOp::Sub => ('-', 1),
                    BinaryOp::Mul => ('*', 2),
                    BinaryOp::Div => ('/', 2),
                };
                a.write_child(f, p)?;
                write!(f, "{sym}")?;
                let right_min = if matches!(op, BinaryOp::Add | BinaryOp::Mul) {
                    p
                } else {
                    p + 1
                };
                b.write_child(f, right_min)
            }
            Node::Pow(a, e) => {
                a.write_child(f, 5)?;
                write!(f, "^")?;
                if *e < 0.0 {
                    write!(f, "(")?;
                    write_number(f, *e)?;
                    write!(f, ")")
                } else {
                    write_number(f, *e)
                }
            }
        }
    }
}

impl fmt::Debug for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expression({self})")
    }
}

macro_rules! binary_impl {
    ($trait:ident, $method:ident, $op:expr) => {
        impl ops::$trait for Expression {
            type Output = Expression;
            fn $method(self, rhs: Expression) -> Expression {
                Expression::binary($op, self, rhs)
            }
        }
        impl ops::$trait<&Expression> for &Expression {
            type Output = Expression;
            fn $method(self, rhs: &Expression) -> Expression {
                Expression::binary($op, self.clone(), rhs.clone())
            }
        }
        impl ops::$trait<f64> for Expression {
            type Output = Expression;
            fn $method(self, rhs: f64) -> Expression {
                Expression::binary($op, self, Expression::constant(rhs))
            }
        }
    };
}

binary_impl!(Add, add, BinaryOp::Add);
binary_impl!(Sub, sub, BinaryOp::Sub);
binary_impl!(Mul, mul, BinaryOp::Mul);
binary_impl!(Div, div, BinaryOp::Div);

impl ops::Neg for Expression {
    type Output = Expression;
    fn neg(self) -> Expression {
        Expression::unary(UnaryOp::Neg, self)
    }
}

impl ops::Neg for &Expression {
    type Output = Expression;
    fn neg(self) -> Expression {
        Expression::unary(UnaryOp::Neg, self.clone())
    }
}

impl From<f64> for Expression {
    fn from(value: f64) -> Self {
        Expression::constant(value)
    }
}

/// A scalar function on ℝⁿ with its symbolic gradient precomputed.
#[derive(Clone, Debug)]
pub struct ScalarField {
    expr: Expression,
    n: usize,
    gradient: Vec<Expression>,
}

impl ScalarField {
    pub fn new(expr: Expression, n: usize) -> Self {
        let gradient = (0..n).map(|a| expr.differentiate(a)).collect();
        ScalarField { expr, n, gradient }
    }

    pub fn coordinate(axis: usize, n: usize) -> Self {
        Self::new(Expression::coord(axis), n)
    }

    pub fn parse(text: &str, symbols: &Symbols) -> Result<Self, ParseError> {
        Ok(Self::new(parse(text, symbols)?, symbols.dimension()))
    }

    pub fn expr(&self) -> &Expression {
        &self.expr
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn gradient(&self) -> &[Expression] {
        &self.gradient
    }

    pub fn eval(&self, point: &[f64], params: &Params) -> Result<f64, EvalError> {
        self.expr.eval(point, params)
    }

    pub fn gradient_at(&self, point: &[f64], params: &Params) -> Result<Vec<f64>, EvalError> {
        self.gradient
            .iter()
            .map(|g| g.eval(point, params))
            .collect()
    }
}

impl fmt::Display for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.expr.fmt(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> Params {
        Params::new()
    }

    #[test]
    fn folding_identities() {
        let x = Expression::coord(0);
        assert_eq!(&x * &Expression::one(), x);
        assert!((&x * &Expression::zero()).is_zero());
        assert_eq!(&x + &Expression::zero(), x);
        assert_eq!(-(-x.clone()), x);
        assert_eq!((Expression::constant(2.0) * 3.0).as_constant(), Some(6.0));
        let undivided = Expression::one() / Expression::zero();
        assert!(undivided.as_constant().is_none());
    }

    #[test]
    fn evaluation_errors_name_the_node() {
        let e = Expression::one() / Expression::coord(3);
        let err = e.eval(&[0.0; 4], &p()).unwrap_err();
        assert_eq!(
            err,
            EvalError::DivisionByZero {
                node: "1/x4".into()
            }
        );
        let l = Expression::coord(0).ln();
        assert!(matches!(
            l.eval(&[-1.0], &p()),
            Err(EvalError::LogDomain { .. })
        ));
        let q = Expression::param("lambda");
        assert!(matches!(
            q.eval(&[], &p()),
            Err(EvalError::UnboundParameter { .. })
        ));
    }

    #[test]
    fn display_parenthesizes_by_precedence() {
        let x = Expression::coord(0);
        let y = Expression::coord(1);
        let e = (&x - &(&y + &x)) / (&x * &y);
        assert_eq!(e.to_string(), "(x1-(x2+x1))/(x1*x2)");
        let n = (-x.clone()).pow(2.0);
        assert_eq!(n.to_string(), "(-x1)^2");
        assert_eq!(x.clone().pow(-0.5).to_string(), "x1^(-0.5)");
        assert_eq!((Expression::constant(-3.0) * y).to_string(), "-3*x2");
    }
}
