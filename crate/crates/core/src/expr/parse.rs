use std::fmt;

use super::{Expr, Func};

/// Limit on both syntactic nesting and tree depth; deeper input is rejected
/// instead of exhausting the stack in the recursive evaluators.
pub const MAX_NESTING: usize = 200;

// Names that would need an `if` with a kink at the breakpoint.
const NONDIFFERENTIABLE: &[&str] = &["abs", "min", "max", "sign", "floor", "ceil", "round"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Empty,
    UnexpectedChar(char),
    UnexpectedToken(String),
    UnexpectedEnd,
    InvalidNumber(String),
    UnknownIdentifier(String),
    UnknownFunction(String),
    Unsupported(String),
    Arity { index: usize, arity: usize },
    TooDeep,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at byte {}: ", self.offset)?;
        match &self.kind {
            ParseErrorKind::Empty => write!(f, "empty expression"),
            ParseErrorKind::UnexpectedChar(c) => write!(f, "unexpected character {c:?}"),
            ParseErrorKind::UnexpectedToken(t) => write!(f, "unexpected {t}"),
            ParseErrorKind::UnexpectedEnd => write!(f, "unexpected end of input"),
            ParseErrorKind::InvalidNumber(s) => write!(f, "invalid number {s:?}"),
            ParseErrorKind::UnknownIdentifier(s) => write!(f, "unknown identifier {s:?}"),
            ParseErrorKind::UnknownFunction(s) => write!(f, "unknown function {s:?}"),
            ParseErrorKind::Unsupported(s) => write!(
                f,
                "unsupported: nondifferentiable branch `{s}` (its divided difference cannot \
                 be computed reliably when both points sit at the breakpoint)"
            ),
            ParseErrorKind::Arity { index, arity } => {
                write!(f, "variable x{index} out of range for arity {arity}")
            }
            ParseErrorKind::TooDeep => write!(f, "nesting deeper than {MAX_NESTING}"),
        }
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(v) => write!(f, "number {v}"),
            Tok::Ident(s) => write!(f, "identifier {s:?}"),
            Tok::Sym(c) => write!(f, "{c:?}"),
            Tok::End => write!(f, "end of input"),
        }
    }
}

fn err(offset: usize, kind: ParseErrorKind) -> ParseError {
    ParseError { offset, kind }
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = src.as_bytes();
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
            let text = &src[start..i];
            match text.parse::<f64>() {
                Ok(v) if v.is_finite() => out.push((start, Tok::Num(v))),
                _ => return Err(err(start, ParseErrorKind::InvalidNumber(text.to_string()))),
            }
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else if b"+-*/^()".contains(&c) {
            out.push((i, Tok::Sym(c as char)));
            i += 1;
        } else {
            let ch = src[i..].chars().next().unwrap_or('\u{fffd}');
            return Err(err(i, ParseErrorKind::UnexpectedChar(ch)));
        }
    }
    out.push((src.len(), Tok::End));
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    arity: usize,
    depth: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].0
    }

    fn bump(&mut self) -> (usize, Tok) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self) -> ParseError {
        match self.peek() {
            Tok::End => err(self.offset(), ParseErrorKind::UnexpectedEnd),
            t => err(self.offset(), ParseErrorKind::UnexpectedToken(t.to_string())),
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if *self.peek() == Tok::Sym(c) {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected())
        }
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_NESTING {
            return Err(err(self.offset(), ParseErrorKind::TooDeep));
        }
        Ok(())
    }

    fn grow(&self, e: Expr, depth: usize, offset: usize) -> Result<(Expr, usize), ParseError> {
        if depth > MAX_NESTING {
            return Err(err(offset, ParseErrorKind::TooDeep));
        }
        Ok((e, depth))
    }

    // expr := term (('+'|'-') term)*
    fn expr(&mut self) -> Result<(Expr, usize), ParseError> {
        let (mut lhs, mut depth) = self.term()?;
        loop {
            let offset = self.offset();
            let sub = match self.peek() {
                Tok::Sym('+') => false,
                Tok::Sym('-') => true,
                _ => return Ok((lhs, depth)),
            };
            self.bump();
            let (rhs, d) = self.term()?;
            let node = if sub {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            };
            (lhs, depth) = self.grow(node, 1 + depth.max(d), offset)?;
        }
    }

    // term := factor (('*'|'/') factor)*
    fn term(&mut self) -> Result<(Expr, usize), ParseError> {
        let (mut lhs, mut depth) = self.factor()?;
        loop {
            let offset = self.offset();
            let div = match self.peek() {
                Tok::Sym('*') => false,
                Tok::Sym('/') => true,
                _ => return Ok((lhs, depth)),
            };
            self.bump();
            let (rhs, d) = self.factor()?;
            let node = if div {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            };
            (lhs, depth) = self.grow(node, 1 + depth.max(d), offset)?;
        }
    }

    // factor := '-' factor | power
    fn factor(&mut self) -> Result<(Expr, usize), ParseError> {
        self.enter()?;
        let out = if *self.peek() == Tok::Sym('-') {
            let offset = self.offset();
            self.bump();
            self.factor().and_then(|(e, d)| self.grow(Expr::neg(e), d + 1, offset))
        } else {
            self.power()
        };
        self.depth -= 1;
        out
    }

    // power := atom ('^' factor)?
    fn power(&mut self) -> Result<(Expr, usize), ParseError> {
        let (base, bd) = self.atom()?;
        if *self.peek() == Tok::Sym('^') {
            let offset = self.offset();
            self.bump();
            let (exponent, ed) = self.factor()?;
            return self.grow(Expr::Pow(Box::new(base), Box::new(exponent)), 1 + bd.max(ed), offset);
        }
        Ok((base, bd))
    }

    // atom := number | ident | ident '(' expr ')' | '(' expr ')'
    fn atom(&mut self) -> Result<(Expr, usize), ParseError> {
        let (offset, tok) = self.bump();
        match tok {
            Tok::Num(v) => Ok((Expr::Literal(v), 1)),
            Tok::Sym('(') => {
                let inner = self.expr()?;
                self.expect(')')?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if *self.peek() == Tok::Sym('(') {
                    let func = match Func::from_name(&name) {
                        Some(f) => f,
                        None if NONDIFFERENTIABLE.contains(&name.as_str()) => {
                            return Err(err(offset, ParseErrorKind::Unsupported(name)))
                        }
                        None => return Err(err(offset, ParseErrorKind::UnknownFunction(name))),
                    };
                    self.bump();
                    let (arg, d) = self.expr()?;
                    self.expect(')')?;
                    return self.grow(Expr::call(func, arg), d + 1, offset);
                }
                if let Some(index) = variable_index(&name) {
                    if index >= self.arity {
                        return Err(err(
                            offset,
                            ParseErrorKind::Arity {
                                index,
                                arity: self.arity,
                            },
                        ));
                    }
                    return Ok((Expr::Var(index), 1));
                }
                if NONDIFFERENTIABLE.contains(&name.as_str()) {
                    return Err(err(offset, ParseErrorKind::Unsupported(name)));
                }
                if Func::from_name(&name).is_some() {
                    // A function name without its argument list.
                    return Err(self.unexpected());
                }
                Err(err(offset, ParseErrorKind::UnknownIdentifier(name)))
            }
            Tok::End => Err(err(offset, ParseErrorKind::UnexpectedEnd)),
            t => Err(err(offset, ParseErrorKind::UnexpectedToken(t.to_string()))),
        }
    }
}

fn variable_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('x')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if digits.len() > 1 && digits.starts_with('0') {
        return None;
    }
    digits.parse().ok()
}

/// Parses `src` over variables `x0 … x{arity-1}`.
pub fn parse(src: &str, arity: usize) -> Result<Expr, ParseError> {
    if src.trim().is_empty() {
        return Err(err(0, ParseErrorKind::Empty));
    }
    let toks = lex(src)?;
    let mut p = Parser {
        toks,
        pos: 0,
        arity,
        depth: 0,
    };
    let (e, _) = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.unexpected());
    }
    Ok(e)
}
