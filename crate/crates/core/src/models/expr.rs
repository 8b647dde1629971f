//! Scalar expressions in `x` and `y` with symbolic differentiation.
//!
//! Grammar (usual precedence, `^` binds tighter than unary minus and is right
//! associative):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | 'x' | 'y' | 'pi' | name | func '(' expr ')' | '(' expr ')'
//! func  := 'sin' | 'cos' | 'exp'
//! ```
//!
//! `name` refers to a caller-supplied constant. Exponents must not depend on
//! `x` or `y`.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    /// Base raised to a constant exponent.
    Pow(Box<Expr>, f64),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
}

use Expr::*;

impl Expr {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Num(c) => *c,
            Var(Var::X) => x,
            Var(Var::Y) => y,
            Neg(a) => -a.eval(x, y),
            Add(a, b) => a.eval(x, y) + b.eval(x, y),
            Sub(a, b) => a.eval(x, y) - b.eval(x, y),
            Mul(a, b) => a.eval(x, y) * b.eval(x, y),
            Div(a, b) => a.eval(x, y) / b.eval(x, y),
            Pow(a, e) => {
                let base = a.eval(x, y);
                if e.fract() == 0.0 && e.abs() < 1e9 {
                    base.powi(*e as i32)
                } else {
                    base.powf(*e)
                }
            }
            Sin(a) => a.eval(x, y).sin(),
            Cos(a) => a.eval(x, y).cos(),
            Exp(a) => a.eval(x, y).exp(),
        }
    }

    pub fn depends_on(&self, v: Var) -> bool {
        match self {
            Num(_) => false,
            Var(w) => *w == v,
            Neg(a) | Pow(a, _) | Sin(a) | Cos(a) | Exp(a) => a.depends_on(v),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => a.depends_on(v) || b.depends_on(v),
        }
    }

    pub fn is_constant(&self) -> bool {
        !self.depends_on(Var::X) && !self.depends_on(Var::Y)
    }

    /// Partial derivative with respect to `v`, lightly simplified.
    pub fn derivative(&self, v: Var) -> Expr {
        if !self.depends_on(v) {
            return Num(0.0);
        }
        match self {
            Num(_) => Num(0.0),
            Var(w) => Num(if *w == v { 1.0 } else { 0.0 }),
            Neg(a) => neg(a.derivative(v)),
            Add(a, b) => add(a.derivative(v), b.derivative(v)),
            Sub(a, b) => sub(a.derivative(v), b.derivative(v)),
            Mul(a, b) => add(mul(a.derivative(v), (**b).clone()), mul((**a).clone(), b.derivative(v))),
            Div(a, b) => div(
                sub(mul(a.derivative(v), (**b).clone()), mul((**a).clone(), b.derivative(v))),
                pow((**b).clone(), 2.0),
            ),
            Pow(a, e) => mul(mul(Num(*e), pow((**a).clone(), e - 1.0)), a.derivative(v)),
            Sin(a) => mul(Cos(a.clone()), a.derivative(v)),
            Cos(a) => mul(neg(Sin(a.clone())), a.derivative(v)),
            Exp(a) => mul(Exp(a.clone()), a.derivative(v)),
        }
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Num(c) => Num(-c),
        Neg(inner) => *inner,
        other => Neg(Box::new(other)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Num(x), Num(y)) => Num(x + y),
        (Num(z), e) | (e, Num(z)) if z == 0.0 => e,
        (a, b) => Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Num(x), Num(y)) => Num(x - y),
        (e, Num(z)) if z == 0.0 => e,
        (Num(z), e) if z == 0.0 => neg(e),
        (a, b) => Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Num(x), Num(y)) => Num(x * y),
        (Num(z), _) | (_, Num(z)) if z == 0.0 => Num(0.0),
        (Num(o), e) | (e, Num(o)) if o == 1.0 => e,
        (a, b) => Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Num(z), _) if z == 0.0 => Num(0.0),
        (e, Num(o)) if o == 1.0 => e,
        (a, b) => Div(Box::new(a), Box::new(b)),
    }
}

fn pow(a: Expr, e: f64) -> Expr {
    if e == 0.0 {
        Num(1.0)
    } else if e == 1.0 {
        a
    } else if let Num(c) = a {
        Num(c.powf(e))
    } else {
        Pow(Box::new(a), e)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Num(c) => write!(f, "{c}"),
            Var(Var::X) => write!(f, "x"),
            Var(Var::Y) => write!(f, "y"),
            Neg(a) => write!(f, "(-{a})"),
            Add(a, b) => write!(f, "({a} + {b})"),
            Sub(a, b) => write!(f, "({a} - {b})"),
            Mul(a, b) => write!(f, "({a} * {b})"),
            Div(a, b) => write!(f, "({a} / {b})"),
            Pow(a, e) => write!(f, "({a}^{e})"),
            Sin(a) => write!(f, "sin({a})"),
            Cos(a) => write!(f, "cos({a})"),
            Exp(a) => write!(f, "exp({a})"),
        }
    }
}

/// Parse `src`, resolving free names from `constants`.
pub fn parse(src: &str, constants: &BTreeMap<String, f64>) -> Result<Expr> {
    let mut p = Parser { src, bytes: src.as_bytes(), pos: 0, constants };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.bytes.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    constants: &'a BTreeMap<String, f64>,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> Error {
        Error::ExpressionParse { offset: self.pos, message: message.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            return Ok(Neg(Box::new(self.unary()?)));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let at = self.pos;
            let exponent = self.unary()?;
            if !exponent.is_constant() {
                return Err(Error::ExpressionParse { offset: at, message: "exponent must be constant".into() });
            }
            return Ok(Pow(Box::new(base), exponent.eval(0.0, 0.0)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected ')'"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            Some(_) => Err(self.error("unexpected character")),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let b = self.bytes;
        while self.pos < b.len() && (b[self.pos].is_ascii_digit() || b[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < b.len() && (b[self.pos] == b'e' || b[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < b.len() && (b[self.pos] == b'+' || b[self.pos] == b'-') {
                self.pos += 1;
            }
            if self.pos < b.len() && b[self.pos].is_ascii_digit() {
                while self.pos < b.len() && b[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        self.src[start..self.pos]
            .parse::<f64>()
            .map(Num)
            .map_err(|_| Error::ExpressionParse { offset: start, message: "malformed number".into() })
    }

    fn identifier(&mut self) -> Result<Expr> {
        let start = self.pos;
        let b = self.bytes;
        while self.pos < b.len() && (b[self.pos].is_ascii_alphanumeric() || b[self.pos] == b'_') {
            self.pos += 1;
        }
        let name = &self.src[start..self.pos];
        let func = |p: &mut Self, wrap: fn(Box<Expr>) -> Expr| -> Result<Expr> {
            if !p.eat(b'(') {
                return Err(p.error("expected '(' after function name"));
            }
            let arg = p.expr()?;
            if !p.eat(b')') {
                return Err(p.error("expected ')'"));
            }
            Ok(wrap(Box::new(arg)))
        };
        match name {
            "x" => Ok(Var(Var::X)),
            "y" => Ok(Var(Var::Y)),
            "pi" => Ok(Num(std::f64::consts::PI)),
            "sin" => func(self, Sin),
            "cos" => func(self, Cos),
            "exp" => func(self, Exp),
            other => self.constants.get(other).map(|&c| Num(c)).ok_or(Error::ExpressionParse {
                offset: start,
                message: format!("unknown identifier '{other}'"),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Expr {
        parse(s, &BTreeMap::new()).unwrap()
    }

    #[test]
    fn precedence() {
        assert_eq!(p("1 + 2 * 3").eval(0.0, 0.0), 7.0);
        assert_eq!(p("-x^2").eval(3.0, 0.0), -9.0);
        assert_eq!(p("2^3^2").eval(0.0, 0.0), 512.0);
        assert_eq!(p("(1 + 2) * 3 - 4 / 2").eval(0.0, 0.0), 7.0);
        assert_eq!(p("1.5e1 - y").eval(0.0, 5.0), 10.0);
    }

    #[test]
    fn pendulum_drift() {
        let e = p("-0.5*y - sin(x)");
        assert!((e.eval(1.0, 2.0) - (-1.0 - 1f64.sin())).abs() < 1e-15);
        let dx = e.derivative(Var::X);
        assert!((dx.eval(1.0, 2.0) + 1f64.cos()).abs() < 1e-15);
        assert_eq!(e.derivative(Var::Y).eval(1.0, 2.0), -0.5);
    }

    #[test]
    fn derivatives_match_differences() {
        let e = p("exp(x*y)/(1 + x^2) + cos(y)^3 - x/y");
        let (x, y, h) = (0.4, 1.3, 1e-6);
        for v in [Var::X, Var::Y] {
            let (xp, yp, xm, ym) = match v {
                Var::X => (x + h, y, x - h, y),
                Var::Y => (x, y + h, x, y - h),
            };
            let fd = (e.eval(xp, yp) - e.eval(xm, ym)) / (2.0 * h);
            assert!((e.derivative(v).eval(x, y) - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn constants_and_errors() {
        let mut c = BTreeMap::new();
        c.insert("k".to_string(), 2.0);
        assert_eq!(parse("k*x", &c).unwrap().eval(3.0, 0.0), 6.0);
        assert!(matches!(parse("q*x", &c), Err(Error::ExpressionParse { offset: 0, .. })));
        assert!(matches!(parse("x^y", &c), Err(Error::ExpressionParse { offset: 2, .. })));
        assert!(matches!(parse("sin x", &c), Err(Error::ExpressionParse { .. })));
        assert!(matches!(parse("(x + 1", &c), Err(Error::ExpressionParse { offset: 6, .. })));
        assert!(matches!(parse("x + ", &c), Err(Error::ExpressionParse { .. })));
    }

    #[test]
    fn constant_detection() {
        assert!(p("2*pi").is_constant());
        assert!(p("1 + 0*y").derivative(Var::Y).is_constant());
        assert!(!p("x*y").derivative(Var::Y).depends_on(Var::Y));
    }
}
