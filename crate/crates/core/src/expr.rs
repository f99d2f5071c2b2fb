//! Scalar coefficient expressions over the chart coordinates `x1..xn`.
//!
//! The grammar is LL(1) and whitespace-insensitive:
//!
//! ```text
//! expr  := term  { ("+" | "-") term }
//! term  := unary { ("*" | "/") unary }
//! unary := ("-" | "+") unary | power
//! power := atom [ "^" unary ]
//! atom  := NUMBER | IDENT | IDENT "(" expr ")" | "(" expr ")"
//! ```
//!
//! Identifiers are the coordinates `x1..xn`, the constants `pi` and `e`, and
//! the functions `sin`, `cos`, `tan`, `exp`, `ln`, `sqrt`. Exponentiation is
//! right-associative and binds tighter than unary minus (`-x1^2 = -(x1^2)`).
//!
//! Expressions evaluate either to plain values or, via forward-mode dual
//! numbers, to a value together with its exact gradient in `x`.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Eq,
    Eof,
}

impl Token {
    fn describe(&self) -> String {
        match self {
            Token::Num(v) => format!("number {v}"),
            Token::Ident(s) => format!("identifier `{s}`"),
            Token::Plus => "'+'".into(),
            Token::Minus => "'-'".into(),
            Token::Star => "'*'".into(),
            Token::Slash => "'/'".into(),
            Token::Caret => "'^'".into(),
            Token::LParen => "'('".into(),
            Token::RParen => "')'".into(),
            Token::LBracket => "'['".into(),
            Token::RBracket => "']'".into(),
            Token::Comma => "','".into(),
            Token::Semi => "';'".into(),
            Token::Eq => "'='".into(),
            Token::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Spanned {
    pub tok: Token,
    pub line: usize,
    pub column: usize,
}

/// Splits text into tokens; `#` starts a comment running to the end of the line.
pub(crate) fn tokenize(text: &str) -> Result<Vec<Spanned>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let (start_line, start_col) = (line, col);
        let push = |out: &mut Vec<Spanned>, tok| {
            out.push(Spanned {
                tok,
                line: start_line,
                column: start_col,
            })
        };
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i < chars.len() && chars[i] == '.' {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let lexeme: String = chars[start..i].iter().collect();
            let value: f64 = lexeme.parse().map_err(|_| Error::Syntax {
                line: start_line,
                column: start_col,
                message: format!("malformed number `{lexeme}`"),
            })?;
            if !value.is_finite() {
                return Err(Error::Syntax {
                    line: start_line,
                    column: start_col,
                    message: format!("number `{lexeme}` is not finite"),
                });
            }
            col += i - start;
            push(&mut out, Token::Num(value));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            push(&mut out, Token::Ident(chars[start..i].iter().collect()));
            continue;
        }
        let tok = match c {
            '+' => Token::Plus,
            '-' => Token::Minus,
            '*' => Token::Star,
            '/' => Token::Slash,
            '^' => Token::Caret,
            '(' => Token::LParen,
            ')' => Token::RParen,
            '[' => Token::LBracket,
            ']' => Token::RBracket,
            ',' => Token::Comma,
            ';' => Token::Semi,
            '=' => Token::Eq,
            other => {
                return Err(Error::Syntax {
                    line,
                    column: col,
                    message: format!("unexpected character `{other}`"),
                })
            }
        };
        i += 1;
        col += 1;
        push(&mut out, tok);
    }
    out.push(Spanned {
        tok: Token::Eof,
        line,
        column: col,
    });
    Ok(out)
}

/// Cursor over a token stream with one token of lookahead.
pub(crate) struct TokenStream {
    toks: Vec<Spanned>,
    pos: usize,
}

impl TokenStream {
    pub fn new(text: &str) -> Result<Self> {
        Ok(Self {
            toks: tokenize(text)?,
            pos: 0,
        })
    }

    pub fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    pub fn next(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    pub fn error_here(&self, message: impl Into<String>) -> Error {
        let t = self.peek();
        Error::Syntax {
            line: t.line,
            column: t.column,
            message: message.into(),
        }
    }

    pub fn expect(&mut self, tok: Token) -> Result<Spanned> {
        if self.peek().tok == tok {
            Ok(self.next())
        } else {
            Err(self.error_here(format!(
                "expected {}, found {}",
                tok.describe(),
                self.peek().tok.describe()
            )))
        }
    }

    pub fn unexpected(&self, wanted: &str) -> Error {
        self.error_here(format!("expected {wanted}, found {}", self.peek().tok.describe()))
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
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Tan => v.tan(),
            Func::Exp => v.exp(),
            Func::Ln => v.ln(),
            Func::Sqrt => v.sqrt(),
        }
    }

    fn derivative(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.cos(),
            Func::Cos => -v.sin(),
            Func::Tan => {
                let c = v.cos();
                1.0 / (c * c)
            }
            Func::Exp => v.exp(),
            Func::Ln => 1.0 / v,
            Func::Sqrt => 0.5 / v.sqrt(),
        }
    }
}

/// A parsed coefficient expression.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Zero-based coordinate index (`x1` is `Var(0)`).
    Var(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    /// Parses a standalone expression over `x1..x{dim}`.
    pub fn parse(text: &str, dim: usize) -> Result<Self> {
        let mut ts = TokenStream::new(text)?;
        let e = parse_expr(&mut ts, dim)?;
        if ts.peek().tok != Token::Eof {
            return Err(ts.unexpected("operator or end of input"));
        }
        Ok(e)
    }

    pub fn constant(v: f64) -> Self {
        Expr::Const(v)
    }

    /// True when the expression references some coordinate.
    pub fn depends_on_x(&self) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(_) => true,
            Expr::Neg(a) | Expr::Call(_, a) => a.depends_on_x(),
            Expr::Bin(_, a, b) => a.depends_on_x() || b.depends_on_x(),
        }
    }

    /// Largest coordinate index referenced plus one (0 for constants).
    pub fn arity(&self) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Neg(a) | Expr::Call(_, a) => a.arity(),
            Expr::Bin(_, a, b) => a.arity().max(b.arity()),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Const(v) => *v,
            Expr::Var(i) => x[*i],
            Expr::Neg(a) => -a.eval(x),
            Expr::Call(f, a) => f.apply(a.eval(x)),
            Expr::Bin(op, a, b) => {
                let (l, r) = (a.eval(x), b.eval(x));
                match op {
                    BinOp::Add => l + r,
                    BinOp::Sub => l - r,
                    BinOp::Mul => l * r,
                    BinOp::Div => l / r,
                    BinOp::Pow => pow_value(l, r, b),
                }
            }
        }
    }

    /// Value and exact gradient with respect to `x`.
    pub fn eval_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let d = self.dual(x);
        (d.v, d.d)
    }

    fn dual(&self, x: &[f64]) -> Dual {
        let n = x.len();
        match self {
            Expr::Const(v) => Dual::constant(*v, n),
            Expr::Var(i) => {
                let mut d = Dual::constant(x[*i], n);
                d.d[*i] = 1.0;
                d
            }
            Expr::Neg(a) => a.dual(x).scale(-1.0),
            Expr::Call(f, a) => {
                let inner = a.dual(x);
                let fp = f.derivative(inner.v);
                Dual {
                    v: f.apply(inner.v),
                    d: inner.d.iter().map(|g| fp * g).collect(),
                }
            }
            Expr::Bin(op, a, b) => {
                let l = a.dual(x);
                let r = b.dual(x);
                match op {
                    BinOp::Add => l.combine(&r, 1.0, 1.0, l.v + r.v),
                    BinOp::Sub => l.combine(&r, 1.0, -1.0, l.v - r.v),
                    BinOp::Mul => l.combine(&r, r.v, l.v, l.v * r.v),
                    BinOp::Div => {
                        let q = l.v / r.v;
                        l.combine(&r, 1.0 / r.v, -q / r.v, q)
                    }
                    BinOp::Pow => {
                        let v = pow_value(l.v, r.v, b);
                        if !b.depends_on_x() {
                            // d(a^k) = k a^(k-1) da
                            let k = r.v;
                            let dl = if k == 0.0 { 0.0 } else { k * pow_value(l.v, k - 1.0, b) };
                            l.combine(&r, dl, 0.0, v)
                        } else {
                            l.combine(&r, r.v * v / l.v, v * l.v.ln(), v)
                        }
                    }
                }
            }
        }
    }
}

fn pow_value(base: f64, exponent: f64, exponent_expr: &Expr) -> f64 {
    if !exponent_expr.depends_on_x() && exponent.fract() == 0.0 && exponent.abs() < i32::MAX as f64 {
        base.powi(exponent as i32)
    } else {
        base.powf(exponent)
    }
}

#[derive(Debug, Clone)]
struct Dual {
    v: f64,
    d: Vec<f64>,
}

impl Dual {
    fn constant(v: f64, n: usize) -> Self {
        Self { v, d: vec![0.0; n] }
    }

    fn scale(mut self, s: f64) -> Self {
        self.v *= s;
        self.d.iter_mut().for_each(|g| *g *= s);
        self
    }

    fn combine(&self, other: &Dual, ca: f64, cb: f64, v: f64) -> Dual {
        Dual {
            v,
            d: self
                .d
                .iter()
                .zip(&other.d)
                .map(|(a, b)| ca * a + cb * b)
                .collect(),
        }
    }
}

impl fmt::Display for Expr {
    /// Fully parenthesised form that re-parses to an identical tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(v) => {
                if *v < 0.0 {
                    write!(f, "(-{:?})", -v)
                } else {
                    write!(f, "{v:?}")
                }
            }
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Bin(op, a, b) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({a} {sym} {b})")
            }
        }
    }
}

pub(crate) fn parse_expr(ts: &mut TokenStream, dim: usize) -> Result<Expr> {
    let mut lhs = parse_term(ts, dim)?;
    loop {
        let op = match ts.peek().tok {
            Token::Plus => BinOp::Add,
            Token::Minus => BinOp::Sub,
            _ => return Ok(lhs),
        };
        ts.next();
        let rhs = parse_term(ts, dim)?;
        lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
    }
}

fn parse_term(ts: &mut TokenStream, dim: usize) -> Result<Expr> {
    let mut lhs = parse_unary(ts, dim)?;
    loop {
        let op = match ts.peek().tok {
            Token::Star => BinOp::Mul,
            Token::Slash => BinOp::Div,
            _ => return Ok(lhs),
        };
        ts.next();
        let rhs = parse_unary(ts, dim)?;
        lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
    }
}

fn parse_unary(ts: &mut TokenStream, dim: usize) -> Result<Expr> {
    match ts.peek().tok {
        Token::Minus => {
            ts.next();
            Ok(Expr::Neg(Box::new(parse_unary(ts, dim)?)))
        }
        Token::Plus => {
            ts.next();
            parse_unary(ts, dim)
        }
        _ => parse_power(ts, dim),
    }
}

fn parse_power(ts: &mut TokenStream, dim: usize) -> Result<Expr> {
    let base = parse_atom(ts, dim)?;
    if ts.peek().tok == Token::Caret {
        ts.next();
        let exponent = parse_unary(ts, dim)?;
        return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
    }
    Ok(base)
}

fn parse_atom(ts: &mut TokenStream, dim: usize) -> Result<Expr> {
    let here = ts.peek().clone();
    match here.tok {
        Token::Num(v) => {
            ts.next();
            Ok(Expr::Const(v))
        }
        Token::LParen => {
            ts.next();
            let e = parse_expr(ts, dim)?;
            ts.expect(Token::RParen)?;
            Ok(e)
        }
        Token::Ident(ref name) => {
            let syntax = |message: String| Error::Syntax {
                line: here.line,
                column: here.column,
                message,
            };
            ts.next();
            if let Some(func) = Func::from_name(name) {
                ts.expect(Token::LParen)?;
                let arg = parse_expr(ts, dim)?;
                ts.expect(Token::RParen)?;
                return Ok(Expr::Call(func, Box::new(arg)));
            }
            match name.as_str() {
                "pi" => Ok(Expr::Const(std::f64::consts::PI)),
                "e" => Ok(Expr::Const(std::f64::consts::E)),
                _ => {
                    let idx = name
                        .strip_prefix('x')
                        .and_then(|s| s.parse::<usize>().ok())
                        .filter(|&k| k >= 1 && !name[1..].starts_with('0'))
                        .ok_or_else(|| syntax(format!("unknown identifier `{name}`")))?;
                    if idx > dim {
                        return Err(syntax(format!("coordinate `{name}` exceeds dimension {dim}")));
                    }
                    Ok(Expr::Var(idx - 1))
                }
            }
        }
        _ => Err(ts.unexpected("number, identifier or '('")),
    }
}
