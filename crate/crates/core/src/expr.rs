//! Coordinate expression language.
//!
//! Chart data (metric and product-structure entries) is written as small
//! arithmetic expressions over the coordinates `x1..x{dim}`:
//!
//! ```text
//! expr   := sum
//! sum    := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | '+' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 'pi' | x<k> | func '(' expr (',' expr)* ')' | '(' expr ')'
//! func   := exp | log | sin | cos | sqrt | pow
//! ```
//!
//! `^` is right associative and binds tighter than unary minus, so `-x1^2`
//! is `-(x1^2)`. Derivatives are exact and symbolic; the constructors below
//! fold constants so derivative trees stay small.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Unary operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
}

/// Binary operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Supported elementary functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
        }
    }
}

/// Expression tree. Coordinates are stored 0-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Coord(usize),
    Unary(UnaryOp, Arc<Expr>),
    Binary(BinaryOp, Arc<Expr>, Arc<Expr>),
    Call(Func, Arc<Expr>),
}

/// Failure while evaluating an expression at a point.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("log of non-positive value {0}")]
    LogDomain(f64),
    #[error("sqrt of negative value {0}")]
    SqrtDomain(f64),
    #[error("power {base}^{exponent} is undefined")]
    PowDomain { base: f64, exponent: f64 },
    #[error("non-finite result")]
    NonFinite,
    #[error("point has {got} coordinates, expected {expected}")]
    PointDimension { expected: usize, got: usize },
}

/// Failure while parsing expression text.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("coordinate x{index} at offset {offset} is out of range 1..={dim}")]
    CoordinateOutOfRange {
        offset: usize,
        index: usize,
        dim: usize,
    },
    #[error("dimension must be a positive even integer, got {0}")]
    BadDimension(usize),
}

impl ParseError {
    pub fn offset(&self) -> Option<usize> {
        match self {
            ParseError::Syntax { offset, .. }
            | ParseError::UnknownIdentifier { offset, .. }
            | ParseError::CoordinateOutOfRange { offset, .. } => Some(*offset),
            ParseError::BadDimension(_) => None,
        }
    }
}

fn finite(v: f64) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite)
    }
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn coord(axis: usize) -> Expr {
        Expr::Coord(axis)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    fn is_one(&self) -> bool {
        self.as_const() == Some(1.0)
    }

    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Const(c) => Expr::Const(-c),
            Expr::Unary(UnaryOp::Neg, inner) => Arc::unwrap_or_clone(inner),
            other => Expr::Unary(UnaryOp::Neg, Arc::new(other)),
        }
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x + y),
            (Some(x), _) if x == 0.0 => b,
            (_, Some(y)) if y == 0.0 => a,
            _ => Expr::Binary(BinaryOp::Add, Arc::new(a), Arc::new(b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x - y),
            (Some(x), _) if x == 0.0 => Expr::neg(b),
            (_, Some(y)) if y == 0.0 => a,
            _ => Expr::Binary(BinaryOp::Sub, Arc::new(a), Arc::new(b)),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        if a.is_zero() || b.is_zero() {
            return Expr::Const(0.0);
        }
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x * y),
            (Some(x), _) if x == 1.0 => b,
            (_, Some(y)) if y == 1.0 => a,
            (Some(x), _) if x == -1.0 => Expr::neg(b),
            (_, Some(y)) if y == -1.0 => Expr::neg(a),
            _ => Expr::Binary(BinaryOp::Mul, Arc::new(a), Arc::new(b)),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        if a.is_zero() && !b.is_zero() {
            return Expr::Const(0.0);
        }
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) if y != 0.0 => Expr::Const(x / y),
            (_, Some(y)) if y == 1.0 => a,
            _ => Expr::Binary(BinaryOp::Div, Arc::new(a), Arc::new(b)),
        }
    }

    pub fn pow(a: Expr, b: Expr) -> Expr {
        if b.is_zero() {
            return Expr::Const(1.0);
        }
        if b.is_one() {
            return a;
        }
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) if x.powf(y).is_finite() => Expr::Const(x.powf(y)),
            _ => Expr::Binary(BinaryOp::Pow, Arc::new(a), Arc::new(b)),
        }
    }

    pub fn call(f: Func, a: Expr) -> Expr {
        if let Some(c) = a.as_const() {
            if let Ok(v) = apply_func(f, c) {
                return Expr::Const(v);
            }
        }
        Expr::Call(f, Arc::new(a))
    }

    /// Largest coordinate index used, 0-based.
    pub fn max_coord(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Coord(i) => Some(*i),
            Expr::Unary(_, a) | Expr::Call(_, a) => a.max_coord(),
            Expr::Binary(_, a, b) => match (a.max_coord(), b.max_coord()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }

    pub fn depends_on(&self, axis: usize) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Coord(i) => *i == axis,
            Expr::Unary(_, a) | Expr::Call(_, a) => a.depends_on(axis),
            Expr::Binary(_, a, b) => a.depends_on(axis) || b.depends_on(axis),
        }
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64, EvalError> {
        match self {
            Expr::Const(c) => Ok(*c),
            Expr::Coord(i) => point.get(*i).copied().ok_or(EvalError::PointDimension {
                expected: i + 1,
                got: point.len(),
            }),
            Expr::Unary(UnaryOp::Neg, a) => Ok(-a.eval(point)?),
            Expr::Binary(op, a, b) => {
                let x = a.eval(point)?;
                let y = b.eval(point)?;
                match op {
                    BinaryOp::Add => finite(x + y),
                    BinaryOp::Sub => finite(x - y),
                    BinaryOp::Mul => finite(x * y),
                    BinaryOp::Div => {
                        if y == 0.0 {
                            Err(EvalError::DivisionByZero)
                        } else {
                            finite(x / y)
                        }
                    }
                    BinaryOp::Pow => eval_pow(x, y, b.as_const().is_some()),
                }
            }
            Expr::Call(f, a) => apply_func(*f, a.eval(point)?),
        }
    }

    /// Exact partial derivative along a 0-based axis.
    pub fn diff(&self, axis: usize) -> Expr {
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Coord(i) => Expr::Const(if *i == axis { 1.0 } else { 0.0 }),
            Expr::Unary(UnaryOp::Neg, a) => Expr::neg(a.diff(axis)),
            Expr::Binary(op, a, b) => {
                let (a, b) = (a.as_ref(), b.as_ref());
                match op {
                    BinaryOp::Add => Expr::add(a.diff(axis), b.diff(axis)),
                    BinaryOp::Sub => Expr::sub(a.diff(axis), b.diff(axis)),
                    BinaryOp::Mul => Expr::add(
                        Expr::mul(a.diff(axis), b.clone()),
                        Expr::mul(a.clone(), b.diff(axis)),
                    ),
                    BinaryOp::Div => {
                        // (a'b - ab') / b^2
                        let num = Expr::sub(
                            Expr::mul(a.diff(axis), b.clone()),
                            Expr::mul(a.clone(), b.diff(axis)),
                        );
                        Expr::div(num, Expr::pow(b.clone(), Expr::Const(2.0)))
                    }
                    BinaryOp::Pow => diff_pow(a, b, axis),
                }
            }
            Expr::Call(f, a) => {
                let inner = a.diff(axis);
                if inner.is_zero() {
                    return Expr::Const(0.0);
                }
                let a = a.as_ref().clone();
                let outer = match f {
                    Func::Exp => Expr::call(Func::Exp, a),
                    Func::Log => Expr::div(Expr::Const(1.0), a),
                    Func::Sin => Expr::call(Func::Cos, a),
                    Func::Cos => Expr::neg(Expr::call(Func::Sin, a)),
                    Func::Sqrt => Expr::div(Expr::Const(0.5), Expr::call(Func::Sqrt, a)),
                };
                Expr::mul(outer, inner)
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Const(c) if *c < 0.0 => 2,
            Expr::Const(_) | Expr::Coord(_) | Expr::Call(..) => 5,
            Expr::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => 1,
            Expr::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => 2,
            Expr::Unary(..) => 3,
            Expr::Binary(BinaryOp::Pow, ..) => 4,
        }
    }
}

fn diff_pow(base: &Expr, exponent: &Expr, axis: usize) -> Expr {
    let db = base.diff(axis);
    if let Some(c) = exponent.as_const() {
        // c * a^(c-1) * a'
        if db.is_zero() {
            return Expr::Const(0.0);
        }
        let lowered = Expr::pow(base.clone(), Expr::Const(c - 1.0));
        return Expr::mul(Expr::mul(Expr::Const(c), lowered), db);
    }
    // a^b * (b' ln a + b a'/a)
    let de = exponent.diff(axis);
    let log_term = Expr::mul(de, Expr::call(Func::Log, base.clone()));
    let base_term = Expr::mul(exponent.clone(), Expr::div(db, base.clone()));
    Expr::mul(
        Expr::pow(base.clone(), exponent.clone()),
        Expr::add(log_term, base_term),
    )
}

fn eval_pow(x: f64, y: f64, constant_exponent: bool) -> Result<f64, EvalError> {
    let integral = y.fract() == 0.0 && y.abs() < 1e9;
    if x < 0.0 && !(constant_exponent && integral) {
        return Err(EvalError::PowDomain {
            base: x,
            exponent: y,
        });
    }
    if x == 0.0 && y < 0.0 {
        return Err(EvalError::DivisionByZero);
    }
    let v = if integral { x.powi(y as i32) } else { x.powf(y) };
    finite(v)
}

fn apply_func(f: Func, v: f64) -> Result<f64, EvalError> {
    match f {
        Func::Exp => finite(v.exp()),
        Func::Log => {
            if v <= 0.0 {
                Err(EvalError::LogDomain(v))
            } else {
                Ok(v.ln())
            }
        }
        Func::Sin => Ok(v.sin()),
        Func::Cos => Ok(v.cos()),
        Func::Sqrt => {
            if v < 0.0 {
                Err(EvalError::SqrtDomain(v))
            } else {
                Ok(v.sqrt())
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn child(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
            if e.precedence() < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            // `{:?}` keeps a round-trippable representation of every f64.
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Coord(i) => write!(f, "x{}", i + 1),
            Expr::Unary(UnaryOp::Neg, a) => {
                write!(f, "-")?;
                child(f, a, 4)
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Binary(op, a, b) => {
                let (sym, lmin, rmin) = match op {
                    BinaryOp::Add => ("+", 1, 2),
                    BinaryOp::Sub => ("-", 1, 2),
                    BinaryOp::Mul => ("*", 2, 3),
                    BinaryOp::Div => ("/", 2, 3),
                    BinaryOp::Pow => ("^", 5, 4),
                };
                child(f, a, lmin)?;
                write!(f, " {sym} ")?;
                child(f, b, rmin)
            }
        }
    }
}

/// A parsed expression bound to a chart dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    expr: Expr,
    dim: usize,
}

impl ScalarField {
    pub fn parse(source: &str, dim: usize) -> Result<Self, ParseError> {
        check_dim(dim)?;
        let expr = Parser::new(source, dim).parse()?;
        Ok(ScalarField { expr, dim })
    }

    /// Wraps an expression; fails if it references a coordinate beyond `dim`.
    pub fn from_expr(expr: Expr, dim: usize) -> Result<Self, ParseError> {
        check_dim(dim)?;
        if let Some(i) = expr.max_coord() {
            if i >= dim {
                return Err(ParseError::CoordinateOutOfRange {
                    offset: 0,
                    index: i + 1,
                    dim,
                });
            }
        }
        Ok(ScalarField { expr, dim })
    }

    pub fn constant(c: f64, dim: usize) -> Self {
        ScalarField {
            expr: Expr::Const(c),
            dim,
        }
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.expr.is_zero()
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64, EvalError> {
        if point.len() != self.dim {
            return Err(EvalError::PointDimension {
                expected: self.dim,
                got: point.len(),
            });
        }
        self.expr.eval(point)
    }

    /// Partial derivative with respect to `x{coord}`, 1-based.
    ///
    /// Panics if `coord` is outside `1..=dim`.
    pub fn derivative(&self, coord: usize) -> ScalarField {
        assert!(
            (1..=self.dim).contains(&coord),
            "coordinate x{coord} outside 1..={}",
            self.dim
        );
        ScalarField {
            expr: self.expr.diff(coord - 1),
            dim: self.dim,
        }
    }

    /// `true` when the field does not vary along `x{coord}` (1-based).
    pub fn independent_of(&self, coord: usize) -> bool {
        self.derivative(coord).is_zero() || !self.expr.depends_on(coord - 1)
    }
}

impl fmt::Display for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.expr.fmt(f)
    }
}

fn check_dim(dim: usize) -> Result<(), ParseError> {
    if dim == 0 || !dim.is_multiple_of(2) {
        Err(ParseError::BadDimension(dim))
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    dim: usize,
    peeked: Option<(Token, usize)>,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str, dim: usize) -> Self {
        Parser {
            src,
            pos: 0,
            dim,
            peeked: None,
        }
    }

    fn parse(mut self) -> Result<Expr, ParseError> {
        let e = self.sum()?;
        match self.next()? {
            (Token::End, _) => Ok(e),
            (_, at) => Err(self.syntax(at, "unexpected trailing input")),
        }
    }

    fn syntax(&self, offset: usize, message: &str) -> ParseError {
        ParseError::Syntax {
            offset,
            message: message.to_string(),
        }
    }

    fn lex(&mut self) -> Result<(Token, usize), ParseError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = bytes.get(start) else {
            return Ok((Token::End, start));
        };
        if c.is_ascii_digit() || c == b'.' {
            let mut end = start;
            while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
                end += 1;
            }
            if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
                let mut exp_end = end + 1;
                if exp_end < bytes.len() && (bytes[exp_end] == b'+' || bytes[exp_end] == b'-') {
                    exp_end += 1;
                }
                if exp_end < bytes.len() && bytes[exp_end].is_ascii_digit() {
                    while exp_end < bytes.len() && bytes[exp_end].is_ascii_digit() {
                        exp_end += 1;
                    }
                    end = exp_end;
                }
            }
            let text = &self.src[start..end];
            let value = text
                .parse::<f64>()
                .map_err(|_| self.syntax(start, &format!("malformed number `{text}`")))?;
            self.pos = end;
            return Ok((Token::Num(value), start));
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let mut end = start;
            while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
                end += 1;
            }
            self.pos = end;
            return Ok((Token::Ident(self.src[start..end].to_string()), start));
        }
        self.pos += 1;
        let tok = match c {
            b'+' | b'-' | b'*' | b'/' | b'^' => Token::Op(c as char),
            b'(' => Token::LParen,
            b')' => Token::RParen,
            b',' => Token::Comma,
            _ => {
                let ch = self.src[start..].chars().next().unwrap_or('?');
                return Err(self.syntax(start, &format!("unexpected character `{ch}`")));
            }
        };
        Ok((tok, start))
    }

    fn peek(&mut self) -> Result<&(Token, usize), ParseError> {
        if self.peeked.is_none() {
            self.peeked = Some(self.lex()?);
        }
        Ok(self.peeked.as_ref().unwrap())
    }

    fn next(&mut self) -> Result<(Token, usize), ParseError> {
        match self.peeked.take() {
            Some(t) => Ok(t),
            None => self.lex(),
        }
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek()?.0 {
                Token::Op('+') => {
                    self.next()?;
                    lhs = Expr::add(lhs, self.term()?);
                }
                Token::Op('-') => {
                    self.next()?;
                    lhs = Expr::sub(lhs, self.term()?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek()?.0 {
                Token::Op('*') => {
                    self.next()?;
                    lhs = Expr::mul(lhs, self.unary()?);
                }
                Token::Op('/') => {
                    self.next()?;
                    lhs = Expr::div(lhs, self.unary()?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek()?.0 {
            Token::Op('-') => {
                self.next()?;
                Ok(Expr::neg(self.unary()?))
            }
            Token::Op('+') => {
                self.next()?;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.peek()?.0 == Token::Op('^') {
            self.next()?;
            let exponent = self.unary()?;
            return Ok(Expr::pow(base, exponent));
        }
        Ok(base)
    }

    fn expect(&mut self, want: Token, what: &str) -> Result<(), ParseError> {
        let (tok, at) = self.next()?;
        if tok == want {
            Ok(())
        } else {
            Err(self.syntax(at, &format!("expected {what}")))
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let (tok, at) = self.next()?;
        match tok {
            Token::Num(v) => Ok(Expr::Const(v)),
            Token::LParen => {
                let e = self.sum()?;
                self.expect(Token::RParen, "`)`")?;
                Ok(e)
            }
            Token::Ident(name) => self.identifier(name, at),
            Token::End => Err(self.syntax(at, "unexpected end of input")),
            _ => Err(self.syntax(at, "expected an operand")),
        }
    }

    fn identifier(&mut self, name: String, at: usize) -> Result<Expr, ParseError> {
        if name == "pi" {
            return Ok(Expr::Const(std::f64::consts::PI));
        }
        if let Some(digits) = name.strip_prefix('x') {
            if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
                let index: usize = digits.parse().unwrap_or(usize::MAX);
                if index == 0 || index > self.dim {
                    return Err(ParseError::CoordinateOutOfRange {
                        offset: at,
                        index,
                        dim: self.dim,
                    });
                }
                return Ok(Expr::Coord(index - 1));
            }
        }
        let func = match name.as_str() {
            "exp" => Some(Func::Exp),
            "log" => Some(Func::Log),
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "sqrt" => Some(Func::Sqrt),
            "pow" => None,
            _ => return Err(ParseError::UnknownIdentifier { offset: at, name }),
        };
        self.expect(Token::LParen, &format!("`(` after `{name}`"))?;
        let first = self.sum()?;
        let e = match func {
            Some(f) => Expr::call(f, first),
            None => {
                self.expect(Token::Comma, "`,` in pow(base, exponent)")?;
                let exponent = self.sum()?;
                Expr::pow(first, exponent)
            }
        };
        self.expect(Token::RParen, "`)`")?;
        Ok(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(s: &str) -> ScalarField {
        ScalarField::parse(s, 4).unwrap()
    }

    #[test]
    fn polynomial_evaluation() {
        assert_eq!(field("x1*x3^2").eval(&[2.0, 0.0, 3.0, 0.0]).unwrap(), 18.0);
    }

    #[test]
    fn exponential_evaluation() {
        let v = field("exp(2*0.1*x3)").eval(&[0.0, 0.0, 1.0, 0.0]).unwrap();
        assert!((v - 0.2f64.exp()).abs() < 1e-15);
        assert!((v - 1.221402758).abs() < 1e-9);
    }

    #[test]
    fn truncated_input_reports_offset() {
        let err = ScalarField::parse("2*", 4).unwrap_err();
        assert_eq!(err.offset(), Some(2));
        assert!(matches!(err, ParseError::Syntax { .. }));
    }

    #[test]
    fn identifier_errors() {
        assert!(matches!(
            ScalarField::parse("x5 + 1", 4),
            Err(ParseError::CoordinateOutOfRange { index: 5, offset: 0, .. })
        ));
        assert!(matches!(
            ScalarField::parse("1 + tan(x1)", 4),
            Err(ParseError::UnknownIdentifier { offset: 4, .. })
        ));
        assert!(matches!(ScalarField::parse("x0", 4), Err(ParseError::CoordinateOutOfRange { .. })));
        assert!(matches!(ScalarField::parse("x1", 3), Err(ParseError::BadDimension(3))));
        assert!(ScalarField::parse("(x1", 4).is_err());
        assert!(ScalarField::parse("x1 x2", 4).is_err());
        assert!(ScalarField::parse("x1 # 2", 4).is_err());
    }

    #[test]
    fn first_derivative() {
        let d = field("x1*x3^2").derivative(3);
        assert_eq!(d.eval(&[2.0, 0.0, 3.0, 0.0]).unwrap(), 12.0);
    }

    #[test]
    fn second_derivative_of_exponential() {
        let d2 = field("exp(0.2*x3)").derivative(3).derivative(3);
        assert!((d2.eval(&[0.0; 4]).unwrap() - 0.04).abs() < 1e-15);
    }

    #[test]
    fn derivative_of_independent_variable_is_zero() {
        assert!(field("x1").derivative(2).is_zero());
        assert!(field("sin(x1)*exp(x3)").derivative(4).is_zero());
    }

    #[test]
    fn unary_minus_binds_looser_than_power() {
        assert_eq!(field("-x1^2").eval(&[3.0, 0.0, 0.0, 0.0]).unwrap(), -9.0);
        assert_eq!(field("2^3^2").eval(&[0.0; 4]).unwrap(), 512.0);
        assert_eq!(field("x1^-1").eval(&[4.0, 0.0, 0.0, 0.0]).unwrap(), 0.25);
    }

    #[test]
    fn domain_errors() {
        let p = [0.0, -1.0, 0.0, 0.0];
        assert!(matches!(field("log(x1)").eval(&p), Err(EvalError::LogDomain(_))));
        assert!(matches!(field("1/x1").eval(&p), Err(EvalError::DivisionByZero)));
        assert!(matches!(field("sqrt(x2)").eval(&p), Err(EvalError::SqrtDomain(_))));
        assert!(matches!(field("x2^0.5").eval(&p), Err(EvalError::PowDomain { .. })));
        assert_eq!(field("x2^3").eval(&p).unwrap(), -1.0);
        assert!(matches!(field("x2^x3").eval(&p), Err(EvalError::PowDomain { .. })));
    }

    #[test]
    fn pow_function_and_constants() {
        let f = field("pow(x1, 3) + pi");
        let v = f.eval(&[2.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((v - (8.0 + std::f64::consts::PI)).abs() < 1e-14);
        let d = field("x1^x2").derivative(2);
        let v = d.eval(&[2.0, 3.0, 0.0, 0.0]).unwrap();
        assert!((v - 8.0 * 2f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn scientific_literals() {
        assert_eq!(field("1.5e2 + 2E-1").eval(&[0.0; 4]).unwrap(), 150.2);
    }

    #[test]
    fn display_reparses() {
        for src in ["-x1^2 * (x2 - 3)", "exp(-x3) / (1 + x4^2)", "(x1 - x2) - (x3 - x4)", "2^(x1 - 1)", "(-2)^2"] {
            let f = field(src);
            let again = field(&f.to_string());
            let p = [0.3, -0.7, 0.2, 0.9];
            assert_eq!(f.eval(&p).unwrap(), again.eval(&p).unwrap(), "{src} -> {f}");
        }
    }

    #[test]
    fn constant_folding() {
        assert!(field("0*x1 + 0").is_zero());
        assert_eq!(field("2*3 + 1").expr().as_const(), Some(7.0));
        assert!(field("x1 * 0").derivative(1).is_zero());
    }
}
