//! Closed-form models written as arithmetic expressions.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! expr    := expr ('+' | '-') expr
//!          | expr ('*' | '/') expr
//!          | '-' expr            (binds looser than '^': -x^2 == -(x^2))
//!          | expr '^' expr       (right associative)
//!          | primary
//! primary := number | variable | func '(' expr ')' | '(' expr ')'
//! func    := exp | log | sqrt | abs
//! ```
//!
//! Variables are `x1 .. xd` (1-based column positions) or, when names are
//! supplied, column names.

use std::fmt;

use ndarray::ArrayView2;
use rayon::prelude::*;
use thiserror::Error;

use crate::error::{Error, Result};
use crate::predictor::Predictor;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{kind} at offset {offset}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown identifier {0:?}")]
    UnknownIdentifier(String),
    #[error("{name} takes {expected} argument(s), got {got}")]
    Arity { name: String, expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl Func {
    fn from_name(s: &str) -> Option<Func> {
        match s {
            "exp" => Some(Func::Exp),
            "log" => Some(Func::Log),
            "sqrt" => Some(Func::Sqrt),
            "abs" => Some(Func::Abs),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// 0-based column index.
    Var(usize),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalFault {
    #[error("division by zero")]
    DivisionByZero,
    #[error("log of a nonpositive value")]
    LogDomain,
    #[error("sqrt of a negative value")]
    SqrtDomain,
    #[error("non-finite result")]
    NonFinite,
    #[error("row has no column x{0}")]
    MissingVariable(usize),
}

impl Expr {
    pub fn eval(&self, row: &[f64]) -> std::result::Result<f64, EvalFault> {
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => *row.get(*i).ok_or(EvalFault::MissingVariable(i + 1))?,
            Expr::Neg(e) => -e.eval(row)?,
            Expr::Binary(op, a, b) => {
                let (a, b) = (a.eval(row)?, b.eval(row)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(EvalFault::DivisionByZero);
                        }
                        a / b
                    }
                    BinOp::Pow => a.powf(b),
                }
            }
            Expr::Call(f, e) => {
                let x = e.eval(row)?;
                match f {
                    Func::Exp => x.exp(),
                    Func::Log => {
                        if x <= 0.0 {
                            return Err(EvalFault::LogDomain);
                        }
                        x.ln()
                    }
                    Func::Sqrt => {
                        if x < 0.0 {
                            return Err(EvalFault::SqrtDomain);
                        }
                        x.sqrt()
                    }
                    Func::Abs => x.abs(),
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalFault::NonFinite)
        }
    }

    /// Largest referenced column index plus one (0 for constant expressions).
    pub fn arity(&self) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Neg(e) | Expr::Call(_, e) => e.arity(),
            Expr::Binary(_, a, b) => a.arity().max(b.arity()),
        }
    }
}

/// Fully parenthesised, reparseable form.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

fn tokenize(src: &str) -> std::result::Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                i += 1;
                Tok::Op(c as char)
            }
            b'(' => {
                i += 1;
                Tok::LParen
            }
            b')' => {
                i += 1;
                Tok::RParen
            }
            b',' => {
                i += 1;
                Tok::Comma
            }
            b'0'..=b'9' | b'.' => {
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
                let text = &src[start..i];
                let v: f64 = text.parse().map_err(|_| ParseError {
                    offset: start,
                    kind: ParseErrorKind::Syntax(format!("malformed number {text:?}")),
                })?;
                Tok::Num(v)
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'.') {
                    i += 1;
                }
                Tok::Ident(src[start..i].to_owned())
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err(ParseError {
                    offset: start,
                    kind: ParseErrorKind::Syntax(format!("unexpected character {ch:?}")),
                });
            }
        };
        out.push((tok, start));
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    names: &'a [String],
}

const UNARY_PREC: u8 = 3;

fn binary_prec(op: char) -> Option<(u8, BinOp, bool)> {
    // (precedence, operator, right associative)
    match op {
        '+' => Some((1, BinOp::Add, false)),
        '-' => Some((1, BinOp::Sub, false)),
        '*' => Some((2, BinOp::Mul, false)),
        '/' => Some((2, BinOp::Div, false)),
        '^' => Some((4, BinOp::Pow, true)),
        _ => None,
    }
}

impl Parser<'_> {
    fn peek(&self) -> &(Tok, usize) {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if !matches!(t.0, Tok::End) {
            self.pos += 1;
        }
        t
    }

    fn syntax<T>(&self, offset: usize, msg: impl Into<String>) -> std::result::Result<T, ParseError> {
        Err(ParseError { offset, kind: ParseErrorKind::Syntax(msg.into()) })
    }

    fn expr(&mut self, min_prec: u8) -> std::result::Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Tok::Op(c) = self.peek().0 {
            let Some((prec, op, right)) = binary_prec(c) else { break };
            if prec < min_prec {
                break;
            }
            self.next();
            let rhs = self.expr(if right { prec } else { prec + 1 })?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> std::result::Result<Expr, ParseError> {
        if let (Tok::Op('-'), _) = self.peek() {
            self.next();
            let operand = self.expr(UNARY_PREC)?;
            return Ok(Expr::Neg(Box::new(operand)));
        }
        self.primary()
    }

    fn primary(&mut self) -> std::result::Result<Expr, ParseError> {
        let (tok, at) = self.next();
        match tok {
            Tok::Num(v) => Ok(Expr::Const(v)),
            Tok::LParen => {
                let e = self.expr(0)?;
                match self.next() {
                    (Tok::RParen, _) => Ok(e),
                    (_, off) => self.syntax(off, "expected ')'"),
                }
            }
            Tok::Ident(name) => {
                if matches!(self.peek().0, Tok::LParen) {
                    self.next();
                    let mut args = vec![self.expr(0)?];
                    loop {
                        match self.next() {
                            (Tok::Comma, _) => args.push(self.expr(0)?),
                            (Tok::RParen, _) => break,
                            (_, off) => return self.syntax(off, "expected ',' or ')'"),
                        }
                    }
                    let func = Func::from_name(&name).ok_or_else(|| ParseError {
                        offset: at,
                        kind: ParseErrorKind::UnknownIdentifier(name.clone()),
                    })?;
                    if args.len() != 1 {
                        return Err(ParseError {
                            offset: at,
                            kind: ParseErrorKind::Arity { name, expected: 1, got: args.len() },
                        });
                    }
                    Ok(Expr::Call(func, Box::new(args.pop().unwrap())))
                } else {
                    self.variable(&name, at)
                }
            }
            Tok::End => self.syntax(at, "unexpected end of input"),
            Tok::Op(c) => self.syntax(at, format!("unexpected operator '{c}'")),
            Tok::RParen => self.syntax(at, "unexpected ')'"),
            Tok::Comma => self.syntax(at, "unexpected ','"),
        }
    }

    fn variable(&self, name: &str, at: usize) -> std::result::Result<Expr, ParseError> {
        if let Some(i) = self.names.iter().position(|n| n == name) {
            return Ok(Expr::Var(i));
        }
        if let Some(digits) = name.strip_prefix('x') {
            if let Ok(k) = digits.parse::<usize>() {
                if k >= 1 && !digits.starts_with('0') {
                    return Ok(Expr::Var(k - 1));
                }
            }
        }
        Err(ParseError { offset: at, kind: ParseErrorKind::UnknownIdentifier(name.to_owned()) })
    }
}

pub fn parse(src: &str) -> std::result::Result<Expr, ParseError> {
    parse_with_names(src, &[])
}

/// Parses with column names as additional variable identifiers.
pub fn parse_with_names(src: &str, names: &[String]) -> std::result::Result<Expr, ParseError> {
    let toks = tokenize(src)?;
    let mut p = Parser { toks, pos: 0, names };
    let e = p.expr(0)?;
    match p.peek() {
        (Tok::End, _) => Ok(e),
        (_, off) => p.syntax(*off, "unexpected trailing input"),
    }
}

/// An expression usable as a black-box model.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprModel {
    source: String,
    expr: Expr,
}

/// Rows per parallel work unit during batch evaluation.
const EVAL_CHUNK: usize = 4096;

impl ExprModel {
    pub fn parse(src: &str) -> Result<Self> {
        Ok(ExprModel { source: src.to_owned(), expr: parse(src)? })
    }

    pub fn parse_with_names(src: &str, names: &[String]) -> Result<Self> {
        Ok(ExprModel { source: src.to_owned(), expr: parse_with_names(src, names)? })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn eval_row(&self, row: &[f64]) -> std::result::Result<f64, EvalFault> {
        self.expr.eval(row)
    }
}

pub fn parse_expression(src: &str) -> Result<ExprModel> {
    ExprModel::parse(src)
}

impl Predictor for ExprModel {
    fn predict(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let m = rows.nrows();
        let d = rows.ncols();
        let need = self.expr.arity();
        if need > d {
            return Err(Error::Predict { row: 0, message: EvalFault::MissingVariable(need).to_string() });
        }
        let flat: Vec<f64> = rows.iter().copied().collect();
        let mut out = vec![0.0; m];
        let faults: Vec<Option<(usize, EvalFault)>> = out
            .par_chunks_mut(EVAL_CHUNK)
            .enumerate()
            .map(|(c, chunk)| {
                for (o, slot) in chunk.iter_mut().enumerate() {
                    let i = c * EVAL_CHUNK + o;
                    match self.expr.eval(&flat[i * d..(i + 1) * d]) {
                        Ok(v) => *slot = v,
                        Err(e) => return Some((i, e)),
                    }
                }
                None
            })
            .collect();
        if let Some((row, fault)) = faults.into_iter().flatten().next() {
            return Err(Error::Predict { row, message: fault.to_string() });
        }
        Ok(out)
    }

    fn label(&self) -> String {
        format!("expr:{}", self.source)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn eval(src: &str, row: &[f64]) -> f64 {
        parse(src).unwrap().eval(row).unwrap()
    }

    #[test]
    fn basic_arithmetic() {
        assert!((eval("x1 + x2^2", &[0.3, 0.2]) - 0.34).abs() < 1e-15);
        assert_eq!(eval("x1*x2", &[2.0, 0.5]), 1.0);
        assert_eq!(eval("3*x1 + 5*x2^2", &[1.0, 2.0]), 23.0);
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval("-2^2", &[]), -4.0);
        assert_eq!(eval("2^3^2", &[]), 512.0);
        assert_eq!(eval("2^-1", &[]), 0.5);
        assert_eq!(eval("8/4/2", &[]), 1.0);
        assert_eq!(eval("1-2-3", &[]), -4.0);
        assert_eq!(eval("-x1*3", &[2.0]), -6.0);
        assert_eq!(eval("(1+2)*3", &[]), 9.0);
        assert_eq!(eval("2*-3", &[]), -6.0);
        assert_eq!(eval("1.5e2 + abs(-1)", &[]), 151.0);
        assert!((eval("exp(log(sqrt(4)))", &[]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn syntax_error_offset() {
        let e = parse("x1 + * x2").unwrap_err();
        assert_eq!(e.offset, 5);
        assert!(matches!(e.kind, ParseErrorKind::Syntax(_)));
        assert_eq!(parse("(x1 + 2").unwrap_err().offset, 7);
        assert_eq!(parse("x1 x2").unwrap_err().offset, 3);
        assert_eq!(parse("x1 # 2").unwrap_err().offset, 3);
    }

    #[test]
    fn unknown_identifiers_and_arity() {
        assert!(matches!(parse("y + 1").unwrap_err().kind, ParseErrorKind::UnknownIdentifier(_)));
        assert!(matches!(parse("x0").unwrap_err().kind, ParseErrorKind::UnknownIdentifier(_)));
        assert!(matches!(parse("sin(x1)").unwrap_err().kind, ParseErrorKind::UnknownIdentifier(_)));
        let e = parse("exp(x1, x2)").unwrap_err();
        assert_eq!(e.offset, 0);
        assert!(matches!(e.kind, ParseErrorKind::Arity { expected: 1, got: 2, .. }));
    }

    #[test]
    fn column_names_bind() {
        let names = vec!["age".to_string(), "hours".to_string()];
        let e = parse_with_names("age * 2 + hours", &names).unwrap();
        assert_eq!(e.eval(&[3.0, 1.0]).unwrap(), 7.0);
    }

    #[test]
    fn batch_eval_and_row_errors() {
        let m = ExprModel::parse("x1").unwrap();
        assert_eq!(m.predict(array![[1.0], [2.0], [3.0]].view()).unwrap(), vec![1.0, 2.0, 3.0]);

        let m = ExprModel::parse("1 / x1").unwrap();
        match m.predict(array![[1.0], [0.0], [2.0]].view()) {
            Err(Error::Predict { row, message }) => {
                assert_eq!(row, 1);
                assert!(message.contains("division"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let m = ExprModel::parse("log(x1)").unwrap();
        assert!(matches!(m.predict(array![[1.0], [-1.0]].view()), Err(Error::Predict { row: 1, .. })));
        let m = ExprModel::parse("x3").unwrap();
        assert!(m.predict(array![[1.0, 2.0]].view()).is_err());
    }

    #[test]
    fn display_reparses_to_same_tree() {
        let e = parse("-x1^2 + 3*(x2 - 1)/exp(x1)").unwrap();
        assert_eq!(parse(&e.to_string()).unwrap(), e);
    }
}
