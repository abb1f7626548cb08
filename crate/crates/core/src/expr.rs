//! Scalar expressions in the two phase variables `x` and `y`.
//!
//! Grammar accepted by [`parse`]:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := atom ('^' factor)?
//! atom   := number | 'x' | 'y' | func '(' expr ')' | '(' expr ')' | '-' atom
//! func   := sin | cos | exp | sqrt | abs
//! ```
//!
//! `^` is right-associative and a leading minus belongs to the atom, so `-x^2`
//! is `(-x)^2`. Write `-(x^2)` for the other reading.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::scalar::Scalar;

const MAX_NESTING: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("expression evaluated to a non-finite value")]
    NonFinite,
    #[error("expression is not differentiable: {0}")]
    NotDifferentiable(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
    /// Natural logarithm. Only produced by differentiating `a^b` with a
    /// non-constant exponent; the parser does not accept it.
    Ln,
}

impl UnaryOp {
    fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Exp => "exp",
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Abs => "abs",
            UnaryOp::Ln => "ln",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "exp" => UnaryOp::Exp,
            "sqrt" => UnaryOp::Sqrt,
            "abs" => UnaryOp::Abs,
            _ => return None,
        })
    }

    fn apply<T: Scalar>(self, a: T) -> T {
        match self {
            UnaryOp::Neg => -a,
            UnaryOp::Sin => a.sin(),
            UnaryOp::Cos => a.cos(),
            UnaryOp::Exp => a.exp(),
            UnaryOp::Sqrt => a.sqrt(),
            UnaryOp::Abs => a.abs(),
            UnaryOp::Ln => a.ln(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
            BinaryOp::Pow => '^',
        }
    }

    fn apply<T: Scalar>(self, a: T, b: T) -> T {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => a / b,
            BinaryOp::Pow => pow(a, b),
        }
    }
}

/// Integer exponents go through `powi` so negative bases work; anything else
/// is `exp(b ln a)` and only defined for positive bases.
fn pow<T: Scalar>(a: T, b: T) -> T {
    if b.fract() == T::zero() && b.abs() <= T::lit(i32::MAX as f64) {
        a.powi(b.to_i32().unwrap_or(0))
    } else {
        a.powf(b)
    }
}

/// Expression tree over `x` and `y`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn x() -> Self {
        Expr::Var(Var::X)
    }

    pub fn y() -> Self {
        Expr::Var(Var::Y)
    }

    pub fn constant(c: f64) -> Self {
        Expr::Const(c)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    /// True when no variable occurs in the tree.
    pub fn is_literal(&self) -> bool {
        match self {
            Expr::Const(_) => true,
            Expr::Var(_) => false,
            Expr::Unary(_, a) => a.is_literal(),
            Expr::Binary(_, a, b) => a.is_literal() && b.is_literal(),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Unary(_, a) => 1 + a.node_count(),
            Expr::Binary(_, a, b) => 1 + a.node_count() + b.node_count(),
        }
    }

    pub fn contains_abs(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Var(_) => false,
            Expr::Unary(op, a) => *op == UnaryOp::Abs || a.contains_abs(),
            Expr::Binary(_, a, b) => a.contains_abs() || b.contains_abs(),
        }
    }

    /// Recursive evaluation. Every intermediate value must be finite.
    pub fn eval<T: Scalar>(&self, x: T, y: T) -> Result<T, ExprError> {
        let v = match self {
            Expr::Const(c) => T::lit(*c),
            Expr::Var(Var::X) => x,
            Expr::Var(Var::Y) => y,
            Expr::Unary(op, a) => op.apply(a.eval(x, y)?),
            Expr::Binary(op, a, b) => op.apply(a.eval(x, y)?, b.eval(x, y)?),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::NonFinite)
        }
    }

    /// Symbolic partial derivative. Literal-only subtrees are folded and the
    /// trivial identities `0·e`, `1·e`, `e + 0`, `e^1` are applied; nothing more.
    pub fn differentiate(&self, var: Var) -> Result<Expr, ExprError> {
        Ok(fold_literals(self.diff(var)?))
    }

    fn diff(&self, var: Var) -> Result<Expr, ExprError> {
        use BinaryOp::*;
        use UnaryOp::*;
        Ok(match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(v) => Expr::Const(if *v == var { 1.0 } else { 0.0 }),
            Expr::Unary(op, a) => {
                let da = a.diff(var)?;
                let a = (**a).clone();
                match op {
                    Neg => neg(da),
                    Sin => mul(unary(Cos, a), da),
                    Cos => mul(neg(unary(Sin, a)), da),
                    Exp => mul(unary(Exp, a), da),
                    Sqrt => div(da, mul(Expr::Const(2.0), unary(Sqrt, a))),
                    Ln => div(da, a),
                    Abs => return Err(ExprError::NotDifferentiable("abs")),
                }
            }
            Expr::Binary(op, a, b) => {
                let da = a.diff(var)?;
                let db = b.diff(var)?;
                let (a, b) = ((**a).clone(), (**b).clone());
                match op {
                    Add => add(da, db),
                    Sub => sub(da, db),
                    Mul => add(mul(da, b.clone()), mul(a, db)),
                    Div => div(sub(mul(da, b.clone()), mul(a, db)), binary(Pow, b, Expr::Const(2.0))),
                    Pow => match fold(&b) {
                        Some(c) => mul(mul(Expr::Const(c), binary(Pow, a, Expr::Const(c - 1.0))), da),
                        None => mul(
                            binary(Pow, a.clone(), b.clone()),
                            add(mul(db, unary(Ln, a.clone())), div(mul(b, da), a)),
                        ),
                    },
                }
            }
        })
    }

    /// Flattens the tree into a postfix program for repeated evaluation.
    pub fn compile(&self) -> Tape {
        let mut ops = Vec::with_capacity(self.node_count());
        let mut depth = 0usize;
        let mut max_depth = 0usize;
        self.emit(&mut ops, &mut depth, &mut max_depth);
        Tape { ops, max_depth }
    }

    fn emit(&self, ops: &mut Vec<TapeOp>, depth: &mut usize, max_depth: &mut usize) {
        match self {
            Expr::Const(c) => {
                ops.push(TapeOp::Const(*c));
                *depth += 1;
            }
            Expr::Var(Var::X) => {
                ops.push(TapeOp::X);
                *depth += 1;
            }
            Expr::Var(Var::Y) => {
                ops.push(TapeOp::Y);
                *depth += 1;
            }
            Expr::Unary(op, a) => {
                a.emit(ops, depth, max_depth);
                ops.push(TapeOp::Unary(*op));
            }
            Expr::Binary(op, a, b) => {
                a.emit(ops, depth, max_depth);
                b.emit(ops, depth, max_depth);
                ops.push(TapeOp::Binary(*op));
                *depth -= 1;
            }
        }
        *max_depth = (*max_depth).max(*depth);
    }
}

fn fold(e: &Expr) -> Option<f64> {
    if e.is_literal() {
        e.eval::<f64>(0.0, 0.0).ok()
    } else {
        None
    }
}

fn fold_literals(e: Expr) -> Expr {
    if let Some(c) = fold(&e) {
        return Expr::Const(c);
    }
    match e {
        Expr::Unary(op, a) => Expr::Unary(op, Box::new(fold_literals(*a))),
        Expr::Binary(op, a, b) => Expr::Binary(op, Box::new(fold_literals(*a)), Box::new(fold_literals(*b))),
        e => e,
    }
}

fn folded_or(e: Expr) -> Expr {
    match fold(&e) {
        Some(c) if !matches!(e, Expr::Const(_)) => Expr::Const(c),
        _ => e,
    }
}

fn unary(op: UnaryOp, a: Expr) -> Expr {
    folded_or(Expr::Unary(op, Box::new(a)))
}

fn binary(op: BinaryOp, a: Expr, b: Expr) -> Expr {
    if op == BinaryOp::Pow {
        match b.as_const() {
            Some(1.0) => return a,
            Some(0.0) => return Expr::Const(1.0),
            _ => {}
        }
    }
    folded_or(Expr::Binary(op, Box::new(a), Box::new(b)))
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Unary(UnaryOp::Neg, inner) => *inner,
        a => Expr::Unary(UnaryOp::Neg, Box::new(a)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(0.0), _) => b,
        (_, Some(0.0)) => a,
        _ => binary(BinaryOp::Add, a, b),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (_, Some(0.0)) => a,
        (Some(0.0), _) => neg(b),
        _ => binary(BinaryOp::Sub, a, b),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(0.0), _) | (_, Some(0.0)) => Expr::Const(0.0),
        (Some(1.0), _) => b,
        (_, Some(1.0)) => a,
        _ => binary(BinaryOp::Mul, a, b),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(0.0), _) => Expr::Const(0.0),
        (_, Some(1.0)) => a,
        _ => binary(BinaryOp::Div, a, b),
    }
}

impl fmt::Display for Expr {
    /// Canonical printer: every binary node is parenthesised, so the output
    /// parses back to the same tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => {
                write!(f, "(-{})", -c)
            }
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(Var::X) => f.write_str("x"),
            Expr::Var(Var::Y) => f.write_str("y"),
            Expr::Unary(UnaryOp::Neg, a) => write!(f, "-{a}"),
            Expr::Unary(op, a) => write!(f, "{}({a})", op.name()),
            Expr::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
        }
    }
}

impl FromStr for Expr {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

/// Parses an expression in `x` and `y`.
pub fn parse(source: &str) -> Result<Expr, ExprError> {
    let mut p = Parser {
        src: source.as_bytes(),
        pos: 0,
        depth: 0,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    depth: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> ExprError {
        ExprError::Syntax {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn enter(&mut self) -> Result<(), ExprError> {
        self.depth += 1;
        if self.depth > MAX_NESTING {
            Err(self.error("expression nested too deeply"))
        } else {
            Ok(())
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinaryOp::Add,
                Some(b'-') => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinaryOp::Mul,
                Some(b'/') => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.factor()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        self.enter()?;
        let base = self.atom()?;
        let e = if self.eat(b'^') {
            let exponent = self.factor()?;
            Expr::Binary(BinaryOp::Pow, Box::new(base), Box::new(exponent))
        } else {
            base
        };
        self.depth -= 1;
        Ok(e)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        self.enter()?;
        let e = match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'-') => {
                self.pos += 1;
                Ok(Expr::Unary(UnaryOp::Neg, Box::new(self.atom()?)))
            }
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            Some(_) => Err(self.error("unexpected character")),
        }?;
        self.depth -= 1;
        Ok(e)
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut n = digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            n += digits(self);
        }
        if n == 0 {
            self.pos = start;
            return Err(self.error("malformed number"));
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                // not an exponent after all
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits");
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Expr::Const(v)),
            _ => Err(ExprError::Syntax {
                offset: start,
                message: "number out of range".into(),
            }),
        }
    }

    fn identifier(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii identifier");
        match name {
            "x" => return Ok(Expr::x()),
            "y" => return Ok(Expr::y()),
            _ => {}
        }
        let Some(op) = UnaryOp::from_name(name) else {
            return Err(ExprError::UnknownIdentifier {
                name: name.to_string(),
                offset: start,
            });
        };
        if !self.eat(b'(') {
            return Err(self.error("expected `(` after function name"));
        }
        let arg = self.expr()?;
        if !self.eat(b')') {
            return Err(self.error("expected `)`"));
        }
        Ok(Expr::Unary(op, Box::new(arg)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum TapeOp {
    Const(f64),
    X,
    Y,
    Unary(UnaryOp),
    Binary(BinaryOp),
}

const INLINE_STACK: usize = 32;

/// Postfix form of an [`Expr`]; evaluates without recursion or allocation for
/// shallow trees.
#[derive(Debug, Clone, PartialEq)]
pub struct Tape {
    ops: Vec<TapeOp>,
    max_depth: usize,
}

impl Tape {
    pub fn eval<T: Scalar>(&self, x: T, y: T) -> Result<T, ExprError> {
        if self.max_depth <= INLINE_STACK {
            let mut stack = [T::zero(); INLINE_STACK];
            self.run(&mut stack, x, y)
        } else {
            let mut stack = vec![T::zero(); self.max_depth];
            self.run(&mut stack, x, y)
        }
    }

    fn run<T: Scalar>(&self, stack: &mut [T], x: T, y: T) -> Result<T, ExprError> {
        let mut sp = 0usize;
        for op in &self.ops {
            let v = match *op {
                TapeOp::Const(c) => {
                    stack[sp] = T::lit(c);
                    sp += 1;
                    continue;
                }
                TapeOp::X => {
                    stack[sp] = x;
                    sp += 1;
                    continue;
                }
                TapeOp::Y => {
                    stack[sp] = y;
                    sp += 1;
                    continue;
                }
                TapeOp::Unary(u) => {
                    let v = u.apply(stack[sp - 1]);
                    stack[sp - 1] = v;
                    v
                }
                TapeOp::Binary(b) => {
                    sp -= 1;
                    let v = b.apply(stack[sp - 1], stack[sp]);
                    stack[sp - 1] = v;
                    v
                }
            };
            if !v.is_finite() {
                return Err(ExprError::NonFinite);
            }
        }
        let v = stack[0];
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::NonFinite)
        }
    }
}
