//! Arithmetic expression trees over variables `x1..xN`.
//!
//! This is the concrete representation of every factor and constraint
//! function in the toolkit. Expressions are parsed from a small grammar,
//! evaluated by structural recursion, and differentiated numerically by
//! central differences with one Richardson refinement.

use std::fmt;

use thiserror::Error;

/// Default finite-difference step for [`Expression::gradient`] and
/// [`gradient_of`].
pub const DEFAULT_FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryFn {
    Exp,
    Ln,
    Abs,
    Sqrt,
}

impl UnaryFn {
    fn name(self) -> &'static str {
        match self {
            UnaryFn::Exp => "exp",
            UnaryFn::Ln => "ln",
            UnaryFn::Abs => "abs",
            UnaryFn::Sqrt => "sqrt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NaryFn {
    Min,
    Max,
}

impl NaryFn {
    fn name(self) -> &'static str {
        match self {
            NaryFn::Min => "min",
            NaryFn::Max => "max",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(usize),
    Neg(Box<Node>),
    Unary(UnaryFn, Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Nary(NaryFn, Vec<Node>),
}

/// A parsed expression together with the number of distinct variables it
/// may reference. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    root: Node,
    arity: usize,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown function `{name}` at offset {offset}")]
    UnknownFunction { offset: usize, name: String },
    #[error("function `{name}` at offset {offset} takes {expected} argument(s), got {got}")]
    WrongArity {
        offset: usize,
        name: String,
        expected: &'static str,
        got: usize,
    },
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: expression needs {needed} variables, point has {got}")]
    DimensionMismatch { needed: usize, got: usize },
}

impl Expression {
    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    /// True if the tree contains an `abs`, `min` or `max` node, i.e. the
    /// function may have kinks.
    pub fn has_kinks(&self) -> bool {
        fn walk(n: &Node) -> bool {
            match n {
                Node::Const(_) | Node::Var(_) => false,
                Node::Neg(a) => walk(a),
                Node::Unary(UnaryFn::Abs, _) => true,
                Node::Unary(_, a) => walk(a),
                Node::Binary(_, a, b) => walk(a) || walk(b),
                Node::Nary(_, _) => true,
            }
        }
        walk(&self.root)
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64, EvalError> {
        if point.len() < self.arity {
            return Err(EvalError::DimensionMismatch {
                needed: self.arity,
                got: point.len(),
            });
        }
        let v = eval_node(&self.root, point)?;
        if !v.is_finite() {
            return Err(EvalError::Domain(format!("non-finite value {v}")));
        }
        Ok(v)
    }

    /// Central finite-difference gradient with one Richardson refinement:
    /// D(h) and D(h/2) are combined as (4 D(h/2) - D(h)) / 3.
    pub fn gradient(&self, point: &[f64], step: f64) -> Result<Vec<f64>, EvalError> {
        gradient_of(&|x: &[f64]| self.eval(x), point, step)
    }
}

/// Anything that behaves like a real-valued function of a real vector.
///
/// Transformed and composed functions throughout the toolkit (powers,
/// logs, line restrictions, products) all go through this trait.
pub trait RealFn: Sync {
    fn value(&self, x: &[f64]) -> Result<f64, EvalError>;
}

impl RealFn for Expression {
    fn value(&self, x: &[f64]) -> Result<f64, EvalError> {
        self.eval(x)
    }
}

impl<F> RealFn for F
where
    F: Fn(&[f64]) -> Result<f64, EvalError> + Sync,
{
    fn value(&self, x: &[f64]) -> Result<f64, EvalError> {
        self(x)
    }
}

/// Richardson-refined central difference gradient of an arbitrary function.
pub fn gradient_of(f: &dyn RealFn, point: &[f64], step: f64) -> Result<Vec<f64>, EvalError> {
    let mut g = Vec::with_capacity(point.len());
    let mut xp = point.to_vec();
    for i in 0..point.len() {
        let central = |h: f64, xp: &mut Vec<f64>| -> Result<f64, EvalError> {
            xp[i] = point[i] + h;
            let fp = f.value(xp)?;
            xp[i] = point[i] - h;
            let fm = f.value(xp)?;
            xp[i] = point[i];
            Ok((fp - fm) / (2.0 * h))
        };
        let d1 = central(step, &mut xp)?;
        let d2 = central(step / 2.0, &mut xp)?;
        g.push((4.0 * d2 - d1) / 3.0);
    }
    Ok(g)
}

fn eval_node(n: &Node, x: &[f64]) -> Result<f64, EvalError> {
    match n {
        Node::Const(c) => Ok(*c),
        Node::Var(i) => Ok(x[*i]),
        Node::Neg(a) => Ok(-eval_node(a, x)?),
        Node::Unary(f, a) => {
            let v = eval_node(a, x)?;
            match f {
                UnaryFn::Exp => {
                    let r = v.exp();
                    if !r.is_finite() {
                        return Err(EvalError::Domain(format!("exp({v}) overflows")));
                    }
                    Ok(r)
                }
                UnaryFn::Ln => {
                    if v <= 0.0 {
                        Err(EvalError::Domain(format!("ln of non-positive value {v}")))
                    } else {
                        Ok(v.ln())
                    }
                }
                UnaryFn::Abs => Ok(v.abs()),
                UnaryFn::Sqrt => {
                    if v < 0.0 {
                        Err(EvalError::Domain(format!("sqrt of negative value {v}")))
                    } else {
                        Ok(v.sqrt())
                    }
                }
            }
        }
        Node::Binary(op, a, b) => {
            let u = eval_node(a, x)?;
            let w = eval_node(b, x)?;
            match op {
                BinOp::Add => Ok(u + w),
                BinOp::Sub => Ok(u - w),
                BinOp::Mul => Ok(u * w),
                BinOp::Div => {
                    if w == 0.0 {
                        Err(EvalError::Domain("division by zero".into()))
                    } else {
                        Ok(u / w)
                    }
                }
                BinOp::Pow => pow(u, w),
            }
        }
        Node::Nary(f, args) => {
            let mut acc = eval_node(&args[0], x)?;
            for a in &args[1..] {
                let v = eval_node(a, x)?;
                acc = match f {
                    NaryFn::Min => acc.min(v),
                    NaryFn::Max => acc.max(v),
                };
            }
            Ok(acc)
        }
    }
}

/// Power with real exponent. Non-integer exponents require a positive
/// base; 0^negative and 0^0-with-negative paths are domain errors.
fn pow(base: f64, exponent: f64) -> Result<f64, EvalError> {
    let is_int = exponent.fract() == 0.0 && exponent.abs() < 1e15;
    if base == 0.0 {
        if exponent > 0.0 {
            return Ok(0.0);
        }
        return Err(EvalError::Domain(format!("0^{exponent} undefined")));
    }
    if base < 0.0 && !is_int {
        return Err(EvalError::Domain(format!(
            "{base}^{exponent}: non-integer power of negative base"
        )));
    }
    let r = base.powf(exponent);
    if !r.is_finite() {
        return Err(EvalError::Domain(format!("{base}^{exponent} overflows")));
    }
    Ok(r)
}

pub fn parse(text: &str) -> Result<Expression, ParseError> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    p.skip_ws();
    if p.pos >= p.src.len() {
        return Err(ParseError::Syntax {
            offset: 0,
            message: "empty input".into(),
        });
    }
    let root = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(ParseError::Syntax {
            offset: p.pos,
            message: format!("unexpected trailing input `{}`", &text[p.pos..]),
        });
    }
    let mut max_var = None;
    collect_max_var(&root, &mut max_var);
    let arity = max_var.map_or(0, |m| m + 1);
    Ok(Expression { root, arity })
}

fn collect_max_var(n: &Node, max: &mut Option<usize>) {
    match n {
        Node::Const(_) => {}
        Node::Var(i) => {
            if max.is_none_or(|m| *i > m) {
                *max = Some(*i);
            }
        }
        Node::Neg(a) | Node::Unary(_, a) => collect_max_var(a, max),
        Node::Binary(_, a, b) => {
            collect_max_var(a, max);
            collect_max_var(b, max);
        }
        Node::Nary(_, args) => args.iter().for_each(|a| collect_max_var(a, max)),
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(ParseError::Syntax {
                offset: self.pos,
                message: format!("expected `{}`", c as char),
            })
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Node::Binary(BinOp::Add, Box::new(lhs), Box::new(rhs));
                }
                Some(b'-') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Node::Binary(BinOp::Sub, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    lhs = Node::Binary(BinOp::Mul, Box::new(lhs), Box::new(rhs));
                }
                Some(b'/') => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    lhs = Node::Binary(BinOp::Div, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    // Right-associative power.
    fn factor(&mut self) -> Result<Node, ParseError> {
        let base = self.base()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exp = self.factor()?;
            Ok(Node::Binary(BinOp::Pow, Box::new(base), Box::new(exp)))
        } else {
            Ok(base)
        }
    }

    fn base(&mut self) -> Result<Node, ParseError> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.base()?)))
            }
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(b')')?;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            _ => Err(ParseError::Syntax {
                offset: self.pos,
                message: "expected number, identifier, `(` or `-`".into(),
            }),
        }
    }

    fn number(&mut self) -> Result<Node, ParseError> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
        }
        if matches!(self.src.get(self.pos), Some(b'e') | Some(b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+') | Some(b'-')) {
                self.pos += 1;
            }
            if self.src.get(self.pos).is_some_and(|c| c.is_ascii_digit()) {
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                // `e` was the start of an identifier, not an exponent
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse::<f64>()
            .map(Node::Const)
            .map_err(|_| ParseError::Syntax {
                offset: start,
                message: format!("invalid number `{text}`"),
            })
    }

    fn ident(&mut self) -> Result<Node, ParseError> {
        let start = self.pos;
        while self
            .src
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_alphanumeric())
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        if self.peek() == Some(b'(') {
            self.pos += 1;
            let mut args = vec![self.expr()?];
            while self.peek() == Some(b',') {
                self.pos += 1;
                args.push(self.expr()?);
            }
            self.expect(b')')?;
            return match name {
                "exp" | "ln" | "abs" | "sqrt" => {
                    if args.len() != 1 {
                        return Err(ParseError::WrongArity {
                            offset: start,
                            name: name.into(),
                            expected: "1",
                            got: args.len(),
                        });
                    }
                    let f = match name {
                        "exp" => UnaryFn::Exp,
                        "ln" => UnaryFn::Ln,
                        "abs" => UnaryFn::Abs,
                        _ => UnaryFn::Sqrt,
                    };
                    Ok(Node::Unary(f, Box::new(args.pop().unwrap())))
                }
                "min" | "max" => {
                    if args.len() < 2 {
                        return Err(ParseError::WrongArity {
                            offset: start,
                            name: name.into(),
                            expected: "2 or more",
                            got: args.len(),
                        });
                    }
                    let f = if name == "min" {
                        NaryFn::Min
                    } else {
                        NaryFn::Max
                    };
                    Ok(Node::Nary(f, args))
                }
                _ => Err(ParseError::UnknownFunction {
                    offset: start,
                    name: name.into(),
                }),
            };
        }
        // Variable: x1..xN (1-based in the surface syntax, 0-based internally).
        if let Some(num) = name.strip_prefix('x') {
            if let Ok(k) = num.parse::<usize>() {
                if k >= 1 {
                    return Ok(Node::Var(k - 1));
                }
            }
        }
        Err(ParseError::Syntax {
            offset: start,
            message: format!("unknown identifier `{name}` (variables are x1..xN)"),
        })
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(&self.root, f)
    }
}

fn write_node(n: &Node, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match n {
        Node::Const(c) => write!(f, "{c}"),
        Node::Var(i) => write!(f, "x{}", i + 1),
        Node::Neg(a) => {
            write!(f, "-(")?;
            write_node(a, f)?;
            write!(f, ")")
        }
        Node::Unary(op, a) => {
            write!(f, "{}(", op.name())?;
            write_node(a, f)?;
            write!(f, ")")
        }
        Node::Binary(op, a, b) => {
            let sym = match op {
                BinOp::Add => "+",
                BinOp::Sub => "-",
                BinOp::Mul => "*",
                BinOp::Div => "/",
                BinOp::Pow => "^",
            };
            write!(f, "(")?;
            write_node(a, f)?;
            write!(f, " {sym} ")?;
            write_node(b, f)?;
            write!(f, ")")
        }
        Node::Nary(op, args) => {
            write!(f, "{}(", op.name())?;
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write_node(a, f)?;
            }
            write!(f, ")")
        }
    }
}
