//! Scalar-field expressions in chart coordinates.
//!
//! The grammar is small on purpose:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' ['-'] integer)*
//! primary := number | 'pi' | x<k> | func '(' expr ')' | '(' expr ')'
//! func    := sin | cos | exp | log | sqrt
//! ```
//!
//! Variables are `x1 .. xn`, 1-based in the text and 0-based in [`Expr::Var`].
//! Derivatives are symbolic, so second derivatives carry no step-size noise.

use std::fmt;

use thiserror::Error;

/// Elementary functions accepted by the parser.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "log" => Some(Func::Log),
            "sqrt" => Some(Func::Sqrt),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }
}

/// Abstract syntax tree of a scalar expression.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Pi,
    /// 0-based coordinate index.
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: expected {expected}")]
    Syntax { offset: usize, expected: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("variable x{index} exceeds dimension {dim}")]
    Dimension { index: usize, dim: usize },
}

#[derive(Clone, Debug, PartialEq, Error)]
#[error("domain error in `{subterm}` at {point:?}")]
pub struct EvalError {
    pub subterm: String,
    pub point: Vec<f64>,
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Int(i64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '^' => Tok::Caret,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            c if c.is_ascii_digit() || c == '.' => {
                let mut j = i;
                let mut is_int = true;
                while j < bytes.len() && (bytes[j].is_ascii_digit() || bytes[j] == b'.') {
                    if bytes[j] == b'.' {
                        is_int = false;
                    }
                    j += 1;
                }
                if j < bytes.len() && (bytes[j] == b'e' || bytes[j] == b'E') {
                    let mut k = j + 1;
                    if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                        k += 1;
                    }
                    if k < bytes.len() && bytes[k].is_ascii_digit() {
                        while k < bytes.len() && bytes[k].is_ascii_digit() {
                            k += 1;
                        }
                        j = k;
                        is_int = false;
                    }
                }
                let lit = &text[i..j];
                i = j;
                let tok = if is_int {
                    lit.parse::<i64>().map(Tok::Int).ok()
                } else {
                    None
                };
                let tok = match tok {
                    Some(t) => t,
                    None => Tok::Num(lit.parse::<f64>().map_err(|_| ParseError::Syntax {
                        offset: start,
                        expected: "a number".into(),
                    })?),
                };
                out.push((tok, start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                    j += 1;
                }
                out.push((Tok::Ident(text[i..j].to_string()), start));
                i = j;
                continue;
            }
            _ => {
                return Err(ParseError::Syntax {
                    offset: start,
                    expected: "an operator, number, identifier or parenthesis".into(),
                })
            }
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    dim: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &str) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            offset: self.offset(),
            expected: expected.to_string(),
        })
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Slash => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let mut base = self.primary()?;
        while *self.peek() == Tok::Caret {
            self.bump();
            let negative = if *self.peek() == Tok::Minus {
                self.bump();
                true
            } else {
                false
            };
            let k = match self.peek() {
                Tok::Int(k) if *k <= i32::MAX as i64 => *k as i32,
                _ => return self.fail("an integer exponent"),
            };
            self.bump();
            base = Expr::Pow(Box::new(base), if negative { -k } else { k });
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let offset = self.offset();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Const(v))
            }
            Tok::Int(v) => {
                self.bump();
                Ok(Expr::Const(v as f64))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                if *self.peek() != Tok::RParen {
                    return self.fail("`)`");
                }
                self.bump();
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if name == "pi" {
                    return Ok(Expr::Pi);
                }
                if let Some(func) = Func::from_name(&name) {
                    if *self.peek() != Tok::LParen {
                        return self.fail("`(` after function name");
                    }
                    self.bump();
                    let arg = self.expr()?;
                    if *self.peek() != Tok::RParen {
                        return self.fail("`)`");
                    }
                    self.bump();
                    return Ok(Expr::Call(func, Box::new(arg)));
                }
                if let Some(idx) = name.strip_prefix('x').and_then(|s| {
                    if s.starts_with('0') {
                        None
                    } else {
                        s.parse::<usize>().ok()
                    }
                }) {
                    if idx > self.dim {
                        return Err(ParseError::Dimension {
                            index: idx,
                            dim: self.dim,
                        });
                    }
                    return Ok(Expr::Var(idx - 1));
                }
                Err(ParseError::UnknownIdentifier { name, offset })
            }
            _ => self.fail("a number, variable, function or `(`"),
        }
    }
}

/// Parses `text` as an expression over `x1 .. x{dim}`.
pub fn parse(text: &str, dim: usize) -> Result<Expr, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, dim };
    if *p.peek() == Tok::End {
        return p.fail("an expression");
    }
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return p.fail("an operator or end of input");
    }
    Ok(e)
}

// ---------------------------------------------------------------------------
// Construction helpers with light constant folding
// ---------------------------------------------------------------------------

fn as_const(e: &Expr) -> Option<f64> {
    match e {
        Expr::Const(c) => Some(*c),
        _ => None,
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(inner) => *inner,
        a => Expr::Neg(Box::new(a)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) => Expr::Const(x + y),
        (Some(0.0), _) => b,
        (_, Some(0.0)) => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) => Expr::Const(x - y),
        (Some(0.0), _) => neg(b),
        (_, Some(0.0)) => a,
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (as_const(&a), as_const(&b)) {
        (Some(x), Some(y)) => Expr::Const(x * y),
        (Some(0.0), _) => Expr::Const(0.0),
        (_, Some(0.0)) => Expr::Const(0.0),
        (Some(1.0), _) => b,
        (_, Some(1.0)) => a,
        (Some(-1.0), _) => neg(b),
        (_, Some(-1.0)) => neg(a),
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (as_const(&a), as_const(&b)) {
        (Some(0.0), _) => Expr::Const(0.0),
        (_, Some(1.0)) => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

fn pow(a: Expr, k: i32) -> Expr {
    match k {
        0 => Expr::Const(1.0),
        1 => a,
        _ => Expr::Pow(Box::new(a), k),
    }
}

fn call(f: Func, a: Expr) -> Expr {
    Expr::Call(f, Box::new(a))
}

impl Expr {
    /// Largest 0-based variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) | Expr::Pi => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.max_var(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                match (a.max_var(), b.max_var()) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, y) => x.or(y),
                }
            }
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Pi | Expr::Var(_) => 1,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => 1 + a.node_count(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                1 + a.node_count() + b.node_count()
            }
        }
    }

    /// Evaluates the expression at `p`, reporting the offending subterm on a
    /// domain violation.
    pub fn eval(&self, p: &[f64]) -> Result<f64, EvalError> {
        let fail = |e: &Expr| EvalError {
            subterm: e.to_string(),
            point: p.to_vec(),
        };
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Pi => std::f64::consts::PI,
            Expr::Var(i) => *p.get(*i).ok_or_else(|| fail(self))?,
            Expr::Neg(a) => -a.eval(p)?,
            Expr::Add(a, b) => a.eval(p)? + b.eval(p)?,
            Expr::Sub(a, b) => a.eval(p)? - b.eval(p)?,
            Expr::Mul(a, b) => a.eval(p)? * b.eval(p)?,
            Expr::Div(a, b) => {
                let d = b.eval(p)?;
                if d == 0.0 {
                    return Err(fail(self));
                }
                a.eval(p)? / d
            }
            Expr::Pow(a, k) => {
                let base = a.eval(p)?;
                if base == 0.0 && *k < 0 {
                    return Err(fail(self));
                }
                base.powi(*k)
            }
            Expr::Call(f, a) => {
                let x = a.eval(p)?;
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                    Func::Log if x > 0.0 => x.ln(),
                    Func::Sqrt if x >= 0.0 => x.sqrt(),
                    _ => return Err(fail(self)),
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(fail(self))
        }
    }

    /// Symbolic partial derivative with respect to the 0-based variable `var`.
    pub fn differentiate(&self, var: usize) -> Expr {
        match self {
            Expr::Const(_) | Expr::Pi => Expr::Const(0.0),
            Expr::Var(i) => Expr::Const(if *i == var { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.differentiate(var)),
            Expr::Add(a, b) => add(a.differentiate(var), b.differentiate(var)),
            Expr::Sub(a, b) => sub(a.differentiate(var), b.differentiate(var)),
            Expr::Mul(a, b) => add(
                mul(a.differentiate(var), (**b).clone()),
                mul((**a).clone(), b.differentiate(var)),
            ),
            Expr::Div(a, b) => div(
                sub(
                    mul(a.differentiate(var), (**b).clone()),
                    mul((**a).clone(), b.differentiate(var)),
                ),
                pow((**b).clone(), 2),
            ),
            Expr::Pow(a, k) => mul(
                mul(Expr::Const(*k as f64), pow((**a).clone(), k - 1)),
                a.differentiate(var),
            ),
            Expr::Call(f, a) => {
                let da = a.differentiate(var);
                let inner = (**a).clone();
                let outer = match f {
                    Func::Sin => call(Func::Cos, inner),
                    Func::Cos => neg(call(Func::Sin, inner)),
                    Func::Exp => call(Func::Exp, inner),
                    Func::Log => return div(da, inner),
                    Func::Sqrt => {
                        return div(da, mul(Expr::Const(2.0), call(Func::Sqrt, inner)))
                    }
                };
                mul(outer, da)
            }
        }
    }

    /// Replaces every variable by the expression `map` assigns to it.
    pub fn substitute(&self, map: &dyn Fn(usize) -> Expr) -> Expr {
        match self {
            Expr::Const(_) | Expr::Pi => self.clone(),
            Expr::Var(i) => map(*i),
            Expr::Neg(a) => neg(a.substitute(map)),
            Expr::Add(a, b) => add(a.substitute(map), b.substitute(map)),
            Expr::Sub(a, b) => sub(a.substitute(map), b.substitute(map)),
            Expr::Mul(a, b) => mul(a.substitute(map), b.substitute(map)),
            Expr::Div(a, b) => div(a.substitute(map), b.substitute(map)),
            Expr::Pow(a, k) => pow(a.substitute(map), *k),
            Expr::Call(f, a) => call(*f, a.substitute(map)),
        }
    }
}

/// Prints with full parenthesisation so the output reparses to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) if *c < 0.0 => write!(f, "(-{})", -c),
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Pi => write!(f, "pi"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, k) => write!(f, "({a})^{k}"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

// ---------------------------------------------------------------------------
// Compiled evaluation
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
enum Op {
    Push(f64),
    Load(usize),
    Neg,
    Add,
    Sub,
    Mul,
    Div,
    Pow(i32),
    Call(Func),
}

/// Postfix program for fast repeated evaluation of one expression.
#[derive(Clone, Debug)]
pub struct Tape {
    ops: Vec<Op>,
    depth: usize,
}

impl Tape {
    pub fn compile(e: &Expr) -> Self {
        fn emit(e: &Expr, ops: &mut Vec<Op>, depth: usize, max: &mut usize) {
            *max = (*max).max(depth + 1);
            match e {
                Expr::Const(c) => ops.push(Op::Push(*c)),
                Expr::Pi => ops.push(Op::Push(std::f64::consts::PI)),
                Expr::Var(i) => ops.push(Op::Load(*i)),
                Expr::Neg(a) => {
                    emit(a, ops, depth, max);
                    ops.push(Op::Neg);
                }
                Expr::Pow(a, k) => {
                    emit(a, ops, depth, max);
                    ops.push(Op::Pow(*k));
                }
                Expr::Call(func, a) => {
                    emit(a, ops, depth, max);
                    ops.push(Op::Call(*func));
                }
                Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                    emit(a, ops, depth, max);
                    emit(b, ops, depth + 1, max);
                    ops.push(match e {
                        Expr::Add(..) => Op::Add,
                        Expr::Sub(..) => Op::Sub,
                        Expr::Mul(..) => Op::Mul,
                        _ => Op::Div,
                    });
                }
            }
        }
        let mut ops = Vec::new();
        let mut depth = 0;
        emit(e, &mut ops, 0, &mut depth);
        Tape { ops, depth }
    }

    /// Evaluates the tape; `None` signals a domain violation or a non-finite
    /// value.
    pub fn eval(&self, p: &[f64], stack: &mut Vec<f64>) -> Option<f64> {
        stack.clear();
        stack.reserve(self.depth);
        for op in &self.ops {
            match *op {
                Op::Push(c) => stack.push(c),
                Op::Load(i) => stack.push(*p.get(i)?),
                Op::Neg => {
                    let a = stack.last_mut()?;
                    *a = -*a;
                }
                Op::Pow(k) => {
                    let a = stack.last_mut()?;
                    if *a == 0.0 && k < 0 {
                        return None;
                    }
                    *a = a.powi(k);
                }
                Op::Call(f) => {
                    let a = stack.last_mut()?;
                    *a = match f {
                        Func::Sin => a.sin(),
                        Func::Cos => a.cos(),
                        Func::Exp => a.exp(),
                        Func::Log if *a > 0.0 => a.ln(),
                        Func::Sqrt if *a >= 0.0 => a.sqrt(),
                        _ => return None,
                    };
                }
                Op::Add | Op::Sub | Op::Mul | Op::Div => {
                    let b = stack.pop()?;
                    let a = stack.last_mut()?;
                    *a = match op {
                        Op::Add => *a + b,
                        Op::Sub => *a - b,
                        Op::Mul => *a * b,
                        _ => {
                            if b == 0.0 {
                                return None;
                            }
                            *a / b
                        }
                    };
                }
            }
        }
        let v = stack.pop()?;
        v.is_finite().then_some(v)
    }
}

/// A differentiable scalar field: value, gradient and Hessian expressions in
/// one coordinate system, each compiled for repeated evaluation.
#[derive(Clone, Debug)]
pub struct ScalarField {
    dim: usize,
    expr: Expr,
    value: Tape,
    gradient: Vec<Tape>,
    /// Upper triangle, row-major: (i, j) with j >= i.
    hessian: Vec<Tape>,
}

impl ScalarField {
    pub fn new(expr: Expr, dim: usize) -> Self {
        let grads: Vec<Expr> = (0..dim).map(|i| expr.differentiate(i)).collect();
        let mut hessian = Vec::with_capacity(dim * (dim + 1) / 2);
        for (i, g) in grads.iter().enumerate() {
            for j in i..dim {
                hessian.push(Tape::compile(&g.differentiate(j)));
            }
        }
        ScalarField {
            dim,
            value: Tape::compile(&expr),
            gradient: grads.iter().map(Tape::compile).collect(),
            hessian,
            expr,
        }
    }

    pub fn parse(text: &str, dim: usize) -> Result<Self, ParseError> {
        Ok(Self::new(parse(text, dim)?, dim))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn value(&self, p: &[f64]) -> Result<f64, EvalError> {
        let mut stack = Vec::new();
        self.value.eval(p, &mut stack).ok_or_else(|| self.domain_error(p))
    }

    pub fn gradient(&self, p: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut stack = Vec::new();
        self.gradient
            .iter()
            .map(|t| t.eval(p, &mut stack).ok_or_else(|| self.domain_error(p)))
            .collect()
    }

    /// Dense symmetric Hessian, row-major.
    #[allow(clippy::needless_range_loop)]
    pub fn hessian(&self, p: &[f64]) -> Result<Vec<Vec<f64>>, EvalError> {
        let mut stack = Vec::new();
        let n = self.dim;
        let mut h = vec![vec![0.0; n]; n];
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                let v = self.hessian[k]
                    .eval(p, &mut stack)
                    .ok_or_else(|| self.domain_error(p))?;
                h[i][j] = v;
                h[j][i] = v;
                k += 1;
            }
        }
        Ok(h)
    }

    fn domain_error(&self, p: &[f64]) -> EvalError {
        // Re-run the tree evaluator to name the failing subterm.
        match self.expr.eval(p) {
            Err(e) => e,
            Ok(_) => EvalError {
                subterm: self.expr.to_string(),
                point: p.to_vec(),
            },
        }
    }
}
