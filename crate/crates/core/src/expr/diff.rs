use super::{BinaryOp, Expression, Node, UnaryOp};

impl Expression {
    /// Exact partial derivative with respect to the zero-based `axis`.
    pub fn differentiate(&self, axis: usize) -> Expression {
        match self.node() {
            Node::Const(_) | Node::Param(_) => Expression::zero(),
            Node::Coord(a) => Expression::constant(if *a == axis { 1.0 } else { 0.0 }),
            Node::Unary(op, a) => {
                let da = a.differentiate(axis);
                if da.is_zero() {
                    return Expression::zero();
                }
                match op {
                    UnaryOp::Neg => -da,
                    UnaryOp::Sqrt => da / (Expression::constant(2.0) * self.clone()),
                    UnaryOp::Sin => a.clone().cos() * da,
                    UnaryOp::Cos => -(a.clone().sin() * da),
                    UnaryOp::Exp => self.clone() * da,
                    UnaryOp::Log => da / a.clone(),
                }
            }
            Node::Binary(op, a, b) => {
                let da = a.differentiate(axis);
                let db = b.differentiate(axis);
                match op {
                    BinaryOp::Add => da + db,
                    BinaryOp::Sub => da - db,
                    BinaryOp::Mul => &da * b + a * &db,
                    BinaryOp::Div => {
                        if db.is_zero() {
                            da / b.clone()
                        } else {
                            (&da * b - a * &db) / b.clone().pow(2.0)
                        }
                    }
                }
            }
            Node::Pow(a, e) => {
                let da = a.differentiate(axis);
                if da.is_zero() {
                    return Expression::zero();
                }
                Expression::constant(*e) * a.clone().pow(e - 1.0) * da
            }
        }
    }

    /// True when the tree contains no reference to `axis`.
    pub fn is_independent_of(&self, axis: usize) -> bool {
        match self.node() {
            Node::Const(_) | Node::Param(_) => true,
            Node::Coord(a) => *a != axis,
            Node::Unary(_, a) | Node::Pow(a, _) => a.is_independent_of(axis),
            Node::Binary(_, a, b) => a.is_independent_of(axis) && b.is_independent_of(axis),
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::expr::{parse, Params, Symbols};

    #[test]
    fn power_rule_prints_folded() {
        let e = parse("x1^2 + x2", &Symbols::new(2)).unwrap();
        assert_eq!(e.differentiate(0).to_string(), "2*x1");
        assert!(e.differentiate(1).is_one());
    }

    #[test]
    fn sqrt_chain_rule() {
        let e = parse("sqrt(x3+x4)", &Symbols::new(4)).unwrap();
        assert_eq!(e.differentiate(2).to_string(), "1/(2*sqrt(x3+x4))");
        let v = e
            .differentiate(2)
            .eval(&[0.0, 0.0, 1.0, 1.0], &Params::new())
            .unwrap();
        assert!((v - 0.5 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn independent_axes_fold_to_zero() {
        let e = parse("x1*x2 + sin(x2)", &Symbols::new(3)).unwrap();
        assert!(e.differentiate(2).is_zero());
        assert!(e.is_independent_of(2));
        assert!(!e.is_independent_of(1));
    }
}
