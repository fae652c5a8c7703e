//! S-expressions sent in EXEC messages.
//!
//! ```text
//! expr   = "(" symbol expr* ")" | atom
//! atom   = "k:" digits            stored tensor or triple
//!        | "t:" base64            inline tensor in binary tensor format
//!        | number                 e.g. 32, -1.5e-3
//!        | symbol                 [A-Za-z_][A-Za-z0-9_+]*
//! ```
//!
//! Numbers keep their source text so 64-bit seeds survive unrounded.

use std::fmt;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use thiserror::Error;

use crate::tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("unexpected end of expression")]
    Eof,
    #[error("unexpected {found:?} at byte {pos}")]
    Unexpected { pos: usize, found: char },
    #[error("bad key at byte {0}")]
    BadKey(usize),
    #[error("bad inline tensor at byte {0}: {1}")]
    BadTensor(usize, String),
    #[error("bad number {0:?}")]
    BadNumber(String),
    #[error("trailing input at byte {0}")]
    Trailing(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Key(u64),
    Inline(Tensor),
    Num(String),
    Sym(String),
    Call(String, Vec<Expr>),
}

impl Expr {
    pub fn call(op: &str, args: Vec<Expr>) -> Expr {
        Expr::Call(op.to_string(), args)
    }

    pub fn num(v: impl fmt::Display) -> Expr {
        Expr::Num(v.to_string())
    }

    pub fn sym(s: &str) -> Expr {
        Expr::Sym(s.to_string())
    }

    pub fn as_u64(&self) -> Option<u64> {
        match self {
            Expr::Num(s) => s.parse().ok(),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Expr::Num(s) => s.parse().ok(),
            _ => None,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Key(k) => write!(f, "k:{k}"),
            Expr::Inline(t) => write!(f, "t:{}", STANDARD.encode(t.to_bytes())),
            Expr::Num(s) | Expr::Sym(s) => f.write_str(s),
            Expr::Call(op, args) => {
                write!(f, "({op}")?;
                for a in args {
                    write!(f, " {a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

pub fn parse(src: &str) -> Result<Expr, ExprError> {
    let mut p = Parser { src: src.as_bytes(), pos: 0 };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(ExprError::Trailing(p.pos));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

fn is_sym_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_'
}

fn is_sym(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_' || c == b'+'
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn unexpected(&self) -> ExprError {
        match self.peek() {
            Some(c) => ExprError::Unexpected {
                pos: self.pos,
                found: c as char,
            },
            None => ExprError::Eof,
        }
    }

    fn take_while(&mut self, f: impl Fn(u8) -> bool) -> &str {
        let start = self.pos;
        while self.peek().is_some_and(&f) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.src[start..self.pos]).expect("ascii")
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        self.skip_ws();
        match self.peek() {
            None => Err(ExprError::Eof),
            Some(b'(') => {
                self.pos += 1;
                self.skip_ws();
                if !self.peek().is_some_and(is_sym_start) {
                    return Err(self.unexpected());
                }
                let op = self.take_while(is_sym).to_string();
                let mut args = Vec::new();
                loop {
                    self.skip_ws();
                    match self.peek() {
                        Some(b')') => {
                            self.pos += 1;
                            return Ok(Expr::Call(op, args));
                        }
                        None => return Err(ExprError::Eof),
                        _ => args.push(self.expr()?),
                    }
                }
            }
            Some(_) => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        let rest = &self.src[self.pos..];
        if rest.starts_with(b"k:") {
            self.pos += 2;
            let digits = self.take_while(|c| c.is_ascii_digit());
            return digits.parse().map(Expr::Key).map_err(|_| ExprError::BadKey(start));
        }
        if rest.starts_with(b"t:") {
            self.pos += 2;
            let text = self.take_while(|c| c.is_ascii_alphanumeric() || matches!(c, b'+' | b'/' | b'='));
            let bytes = STANDARD
                .decode(text)
                .map_err(|e| ExprError::BadTensor(start, e.to_string()))?;
            let t = Tensor::from_bytes(&bytes).map_err(|e| ExprError::BadTensor(start, e.to_string()))?;
            return Ok(Expr::Inline(t));
        }
        let c = self.peek().ok_or(ExprError::Eof)?;
        if is_sym_start(c) {
            return Ok(Expr::Sym(self.take_while(is_sym).to_string()));
        }
        if c.is_ascii_digit() || c == b'-' || c == b'+' || c == b'.' {
            let text = self.take_while(|c| c.is_ascii_alphanumeric() || matches!(c, b'-' | b'+' | b'.'));
            if text.parse::<f64>().is_err() {
                return Err(ExprError::BadNumber(text.to_string()));
            }
            return Ok(Expr::Num(text.to_string()));
        }
        Err(self.unexpected())
    }
}
