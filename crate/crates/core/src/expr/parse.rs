use std::collections::BTreeSet;

use super::{Expression, UnaryOp};

/// Names the parser resolves: coordinates (canonical `x1..xn` plus optional
/// aliases) and parameters.
#[derive(Clone, Debug, Default)]
pub struct Symbols {
    n: usize,
    aliases: Vec<String>,
    params: BTreeSet<String>,
}

impl Symbols {
    pub fn new(n: usize) -> Self {
        Symbols {
            n,
            aliases: Vec::new(),
            params: BTreeSet::new(),
        }
    }

    /// Display names for the coordinates, in axis order.
    pub fn with_aliases<S: AsRef<str>>(mut self, aliases: &[S]) -> Self {
        self.aliases = aliases.iter().map(|s| s.as_ref().to_string()).collect();
        self
    }

    pub fn with_params<I, S>(mut self, names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.params
            .extend(names.into_iter().map(|s| s.as_ref().to_string()));
        self
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn aliases(&self) -> &[String] {
        &self.aliases
    }

    fn resolve(&self, name: &str) -> Option<Expression> {
        if let Some(a) = self.aliases.iter().position(|s| s == name) {
            return Some(Expression::coord(a));
        }
        if self.params.contains(name) {
            return Some(Expression::param(name));
        }
        let digits = name.strip_prefix('x')?;
        if digits.is_empty()
            || digits.starts_with('0')
            || !digits.bytes().all(|b| b.is_ascii_digit())
        {
            return None;
        }
        let axis: usize = digits.parse().ok()?;
        (1..=self.n)
            .contains(&axis)
            .then(|| Expression::coord(axis - 1))
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("function `{name}` at byte {offset} takes {expected} argument(s), found {found}")]
    Arity {
        name: String,
        offset: usize,
        expected: usize,
        found: usize,
    },
    #[error("exponent at byte {offset} is not a constant")]
    NonConstantExponent { offset: usize },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. }
            | ParseError::UnknownIdentifier { offset, .. }
            | ParseError::Arity { offset, .. }
            | ParseError::NonConstantExponent { offset } => *offset,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    End,
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == b'.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let lit = &text[start..i];
            let v = lit.parse::<f64>().map_err(|_| ParseError::Syntax {
                offset: start,
                message: format!("malformed number `{lit}`"),
            })?;
            out.push((Tok::Num(v), start));
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(text[start..i].to_string()), start));
        } else if b"+-*/^(),".contains(&c) {
            out.push((Tok::Op(c as char), i));
            i += 1;
        } else {
            let ch = text[i..].chars().next().unwrap_or('?');
            return Err(ParseError::Syntax {
                offset: i,
                message: format!("unexpected character `{ch}`"),
            });
        }
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    symbols: &'a Symbols,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, op: char) -> bool {
        if *self.peek() == Tok::Op(op) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, op: char) -> Result<(), ParseError> {
        if self.eat(op) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("expected `{op}`")))
        }
    }

    fn unexpected(&self, message: &str) -> ParseError {
        let found = match self.peek() {
            Tok::End => "end of input".to_string(),
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Op(c) => format!("`{c}`"),
        };
        ParseError::Syntax {
            offset: self.offset(),
            message: format!("{message}, found {found}"),
        }
    }

    fn expr(&mut self) -> Result<Expression, ParseError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = lhs + self.term()?;
            } else if self.eat('-') {
                lhs = lhs - self.term()?;
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expression, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = lhs * self.unary()?;
            } else if self.eat('/') {
                lhs = lhs / self.unary()?;
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expression, ParseError> {
        if self.eat('-') {
            return Ok(-self.unary()?);
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expression, ParseError> {
        let base = self.atom()?;
        if self.eat('^') {
            let at = self.offset();
            let exponent = self.unary()?;
            let value = exponent
                .bind(&Default::default())
                .as_constant()
                .ok_or(ParseError::NonConstantExponent { offset: at })?;
            return Ok(base.pow(value));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expression, ParseError> {
        let at = self.offset();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expression::constant(v))
            }
            Tok::Op('(') => {
                self.bump();
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if *self.peek() == Tok::Op('(') {
                    self.call(&name, at)
                } else {
                    self.symbols
                        .resolve(&name)
                        .ok_or(ParseError::UnknownIdentifier { name, offset: at })
                }
            }
            _ => Err(self.unexpected("expected an operand")),
        }
    }

    fn call(&mut self, name: &str, at: usize) -> Result<Expression, ParseError> {
        let op = match name {
            "sqrt" => UnaryOp::Sqrt,
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "exp" => UnaryOp::Exp,
            "log" | "ln" => UnaryOp::Log,
            _ => {
                return Err(ParseError::UnknownIdentifier {
                    name: name.to_string(),
                    offset: at,
                })
            }
        };
        self.expect('(')?;
        let mut args = Vec::new();
        if !self.eat(')') {
            loop {
                args.push(self.expr()?);
                if self.eat(')') {
                    break;
                }
                self.expect(',')?;
            }
        }
        if args.len() != 1 {
            return Err(ParseError::Arity {
                name: name.to_string(),
                offset: at,
                expected: 1,
                found: args.len(),
            });
        }
        Ok(Expression::unary(op, args.pop().unwrap()))
    }
}

/// Parses infix text. Precedence, tightest first: `^`, unary minus, `* /`, `+ -`.
/// `^` is right-associative and needs a constant exponent.
pub fn parse(text: &str, symbols: &Symbols) -> Result<Expression, ParseError> {
    let mut p = Parser {
        toks: tokenize(text)?,
        pos: 0,
        symbols,
    };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.unexpected("expected an operator"));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{BinaryOp, Node, Params};

    #[test]
    fn tree_shape() {
        let e = parse("x1^2 + x2", &Symbols::new(2)).unwrap();
        let expected = Expression::binary(
            BinaryOp::Add,
            Expression::coord(0).pow(2.0),
            Expression::coord(1),
        );
        assert_eq!(e, expected);
        assert_eq!(e.eval(&[2.0, 1.0], &Params::new()).unwrap(), 5.0);
    }

    #[test]
    fn precedence_and_associativity() {
        let s = Symbols::new(1);
        let v = |t: &str| parse(t, &s).unwrap().eval(&[3.0], &Params::new()).unwrap();
        assert_eq!(v("-x1^2"), -9.0);
        assert_eq!(v("2^3^2"), 512.0);
        assert_eq!(v("8/2/2"), 2.0);
        assert_eq!(v("1 - 2 - 3"), -4.0);
        assert_eq!(v("x1^-1"), 1.0 / 3.0);
        assert_eq!(v("2*-x1"), -6.0);
        assert_eq!(v("  ( x1 ) "), 3.0);
        assert_eq!(v("1.5e1"), 15.0);
    }

    #[test]
    fn aliases_and_params() {
        let s = Symbols::new(6)
            .with_aliases(&["p1", "q1", "xi1", "p2", "q2", "xi2"])
            .with_params(["lambda"]);
        let e = parse("-q1 - lambda*xi2", &s).unwrap();
        let hand = Expression::binary(
            BinaryOp::Sub,
            -Expression::coord(1),
            Expression::binary(
                BinaryOp::Mul,
                Expression::param("lambda"),
                Expression::coord(5),
            ),
        );
        assert_eq!(e, hand);
        let params: Params = [("lambda".to_string(), 0.1)].into();
        let v = e.eval(&[0.0, 1.0, 1.0, 0.0, 0.0, 2.0], &params).unwrap();
        assert!((v + 1.2).abs() < 1e-15);
        // canonical names stay available next to aliases
        assert_eq!(parse("x2", &s).unwrap(), Expression::coord(1));
    }

    #[test]
    fn errors_carry_offsets() {
        let s = Symbols::new(2);
        assert_eq!(parse("x1 +* x2", &s).unwrap_err().offset(), 4);
        assert!(matches!(
            parse("x1 + x3", &s),
            Err(ParseError::UnknownIdentifier { offset: 5, .. })
        ));
        assert!(matches!(
            parse("x0", &s),
            Err(ParseError::UnknownIdentifier { .. })
        ));
        assert!(matches!(
            parse("sqrt(x1, x2)", &s),
            Err(ParseError::Arity { found: 2, .. })
        ));
        assert!(matches!(
            parse("sqrt()", &s),
            Err(ParseError::Arity { found: 0, .. })
        ));
        assert!(matches!(
            parse("tan(x1)", &s),
            Err(ParseError::UnknownIdentifier { .. })
        ));
        assert!(matches!(
            parse("x1^x2", &s),
            Err(ParseError::NonConstantExponent { offset: 3 })
        ));
        assert!(matches!(
            parse("(x1", &s),
            Err(ParseError::Syntax { offset: 3, .. })
        ));
        assert!(matches!(
            parse("x1 x2", &s),
            Err(ParseError::Syntax { offset: 3, .. })
        ));
        assert!(matches!(
            parse("x1 # 2", &s),
            Err(ParseError::Syntax { offset: 3, .. })
        ));
        assert!(matches!(
            parse("", &s),
            Err(ParseError::Syntax { offset: 0, .. })
        ));
    }

    #[test]
    fn rational_exponent_stays_a_pow_node() {
        let e = parse("x1^(1/2)", &Symbols::new(1)).unwrap();
        assert!(matches!(e.node(), Node::Pow(_, p) if *p == 0.5));
    }
}
