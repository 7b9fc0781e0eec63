use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use super::{BinaryOp, Expr, UnaryOp};

/// Byte range `[start, end)` into the parsed text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceSpan {
    pub start: usize,
    pub end: usize,
}

impl SourceSpan {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }
}

/// 1-based line and column (in characters) of a byte offset.
pub fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let col = match before.rfind('\n') {
        Some(nl) => before[nl + 1..].chars().count() + 1,
        None => before.chars().count() + 1,
    };
    (line, col)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("unexpected {found}, expected {expected}")]
    UnexpectedToken { found: String, expected: &'static str },
    #[error("unexpected character {0:?}")]
    UnexpectedChar(char),
    #[error("invalid number literal {0:?}")]
    InvalidNumber(String),
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("variable x{index} out of range for dimension {dim}")]
    VariableOutOfRange { index: usize, dim: usize },
    #[error("exponent of `^` must be constant")]
    NonConstantExponent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub span: SourceSpan,
}

impl ParseError {
    /// Message with line/column resolved against the original text.
    pub fn render(&self, text: &str) -> String {
        let (line, col) = line_col(text, self.span.start);
        format!("line {line}, column {col}: {}", self.kind)
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at bytes {}..{}", self.kind, self.span.start, self.span.end)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Op(c) => format!("`{c}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, SourceSpan)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'.' {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
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
            let v: f64 = lit.parse().map_err(|_| ParseError {
                kind: ParseErrorKind::InvalidNumber(lit.to_string()),
                span: SourceSpan::new(start, i),
            })?;
            out.push((Tok::Num(v), SourceSpan::new(start, i)));
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(text[start..i].to_string()), SourceSpan::new(start, i)));
            continue;
        }
        let tok = match c {
            b'+' | b'-' | b'*' | b'/' | b'^' => Tok::Op(c as char),
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(ParseError {
                    kind: ParseErrorKind::UnexpectedChar(ch),
                    span: SourceSpan::new(start, start + ch.len_utf8()),
                });
            }
        };
        i += 1;
        out.push((tok, SourceSpan::new(start, i)));
    }
    out.push((Tok::Eof, SourceSpan::new(text.len(), text.len())));
    Ok(out)
}

const ALIASES: [&str; 4] = ["x", "y", "z", "t"];

struct Parser<'a> {
    toks: Vec<(Tok, SourceSpan)>,
    pos: usize,
    dim: usize,
    names: &'a [String],
}

/// Parses `text` over coordinates `x1..x{dim}` (aliases `x, y, z, t` when
/// `dim <= 4`).
pub fn parse_expr(text: &str, dim: usize) -> Result<Arc<Expr>, ParseError> {
    parse_expr_with_names(text, dim, &[])
}

/// Like [`parse_expr`], additionally resolving the given coordinate names
/// positionally. Names take priority over the built-in aliases.
pub fn parse_expr_with_names(text: &str, dim: usize, names: &[String]) -> Result<Arc<Expr>, ParseError> {
    let mut p = Parser { toks: lex(text)?, pos: 0, dim, names };
    let e = p.expr()?;
    p.expect_eof()?;
    Ok(e)
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn span(&self) -> SourceSpan {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, SourceSpan) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, expected: &'static str) -> ParseError {
        ParseError {
            kind: ParseErrorKind::UnexpectedToken { found: self.peek().describe(), expected },
            span: self.span(),
        }
    }

    fn expect_eof(&self) -> Result<(), ParseError> {
        match self.peek() {
            Tok::Eof => Ok(()),
            _ => Err(self.unexpected("operator or end of input")),
        }
    }

    fn expr(&mut self) -> Result<Arc<Expr>, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinaryOp::Add,
                Tok::Op('-') => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Arc::new(Expr::Binary(op, lhs, rhs));
        }
    }

    fn term(&mut self) -> Result<Arc<Expr>, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinaryOp::Mul,
                Tok::Op('/') => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Arc::new(Expr::Binary(op, lhs, rhs));
        }
    }

    fn unary(&mut self) -> Result<Arc<Expr>, ParseError> {
        match self.peek() {
            Tok::Op('-') => {
                self.bump();
                Ok(Arc::new(Expr::Unary(UnaryOp::Neg, self.unary()?)))
            }
            Tok::Op('+') => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Arc<Expr>, ParseError> {
        let base = self.atom()?;
        if !matches!(self.peek(), Tok::Op('^')) {
            return Ok(base);
        }
        self.bump();
        let start = self.span().start;
        let exponent = self.unary()?;
        let end = self.toks[self.pos.saturating_sub(1)].1.end.max(start);
        match exponent.normalize().as_const() {
            Some(k) => Ok(Arc::new(Expr::Pow(base, k))),
            None => Err(ParseError {
                kind: ParseErrorKind::NonConstantExponent,
                span: SourceSpan::new(start, end),
            }),
        }
    }

    fn atom(&mut self) -> Result<Arc<Expr>, ParseError> {
        let (tok, span) = self.bump();
        match tok {
            Tok::Num(v) => Ok(Expr::constant(v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.close_paren()?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if matches!(self.peek(), Tok::LParen) {
                    let op = UnaryOp::from_name(&name).ok_or_else(|| ParseError {
                        kind: ParseErrorKind::UnknownIdentifier(name.clone()),
                        span,
                    })?;
                    self.bump();
                    let arg = self.expr()?;
                    self.close_paren()?;
                    return Ok(Arc::new(Expr::Unary(op, arg)));
                }
                self.identifier(&name, span)
            }
            _ => {
                self.pos -= usize::from(self.pos > 0 && !matches!(tok, Tok::Eof));
                Err(self.unexpected("number, identifier or `(`"))
            }
        }
    }

    fn close_paren(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            Tok::RParen => {
                self.bump();
                Ok(())
            }
            _ => Err(self.unexpected("`)`")),
        }
    }

    fn identifier(&self, name: &str, span: SourceSpan) -> Result<Arc<Expr>, ParseError> {
        let out_of_range = |index: usize| ParseError {
            kind: ParseErrorKind::VariableOutOfRange { index, dim: self.dim },
            span,
        };
        if let Some(i) = self.names.iter().position(|n| n == name) {
            if i >= self.dim {
                return Err(out_of_range(i + 1));
            }
            return Ok(Expr::var(i));
        }
        if name == "pi" {
            return Ok(Expr::constant(std::f64::consts::PI));
        }
        if let Some(digits) = name.strip_prefix('x') {
            if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
                return match digits.parse::<usize>() {
                    Ok(k) if k >= 1 && k <= self.dim => Ok(Expr::var(k - 1)),
                    Ok(k) => Err(out_of_range(k)),
                    Err(_) => Err(out_of_range(usize::MAX)),
                };
            }
        }
        if self.dim <= 4 {
            if let Some(i) = ALIASES.iter().position(|a| *a == name) {
                if i >= self.dim {
                    return Err(out_of_range(i + 1));
                }
                return Ok(Expr::var(i));
            }
        }
        Err(ParseError { kind: ParseErrorKind::UnknownIdentifier(name.to_string()), span })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pw(i: usize, k: f64) -> Arc<Expr> {
        Arc::new(Expr::Pow(Expr::var(i), k))
    }

    #[test]
    fn sum_of_squares() {
        let e = parse_expr("x1^2 + x2^2", 2).unwrap();
        assert_eq!(*e, Expr::Binary(BinaryOp::Add, pw(0, 2.0), pw(1, 2.0)));
    }

    #[test]
    fn exponential_of_product() {
        let e = parse_expr("exp(2*x1)", 1).unwrap();
        let inner = Arc::new(Expr::Binary(BinaryOp::Mul, Expr::constant(2.0), Expr::var(0)));
        assert_eq!(*e, Expr::Unary(UnaryOp::Exp, inner));
    }

    #[test]
    fn variable_out_of_range() {
        let err = parse_expr("x3", 2).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::VariableOutOfRange { index: 3, dim: 2 });
        assert_eq!(err.span, SourceSpan::new(0, 2));
        assert!(matches!(parse_expr("z", 2).unwrap_err().kind, ParseErrorKind::VariableOutOfRange { .. }));
    }

    #[test]
    fn precedence_and_associativity() {
        // -x^2 is -(x^2); a - b - c is (a - b) - c; 2^3^2 is 2^(3^2)
        let e = parse_expr("-x^2", 1).unwrap();
        assert_eq!(*e, Expr::Unary(UnaryOp::Neg, pw(0, 2.0)));
        let e = parse_expr("x - y - x", 2).unwrap();
        match &*e {
            Expr::Binary(BinaryOp::Sub, l, r) => {
                assert!(matches!(**l, Expr::Binary(BinaryOp::Sub, ..)));
                assert_eq!(**r, Expr::Var(0));
            }
            other => panic!("{other:?}"),
        }
        let e = parse_expr("x^3^2", 1).unwrap();
        assert_eq!(*e, Expr::Pow(Expr::var(0), 9.0));
        let e = parse_expr("x^-2", 1).unwrap();
        assert_eq!(*e, Expr::Pow(Expr::var(0), -2.0));
    }

    #[test]
    fn non_constant_exponent_is_rejected() {
        let err = parse_expr("2^x1", 1).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::NonConstantExponent);
        assert_eq!(err.span, SourceSpan::new(2, 4));
    }

    #[test]
    fn syntax_errors_carry_spans() {
        let err = parse_expr("x1 + * x2", 2).unwrap_err();
        assert_eq!(err.span, SourceSpan::new(5, 6));
        assert_eq!(err.render("x1 + * x2"), "line 1, column 6: unexpected `*`, expected number, identifier or `(`");
        let err = parse_expr("sin(x1", 1).unwrap_err();
        assert_eq!(err.span, SourceSpan::new(6, 6));
        let err = parse_expr("foo(x1)", 1).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownIdentifier("foo".into()));
        let err = parse_expr("x1 x2", 2).unwrap_err();
        assert_eq!(err.span, SourceSpan::new(3, 5));
        assert!(matches!(parse_expr("x1 $", 1).unwrap_err().kind, ParseErrorKind::UnexpectedChar('$')));
        assert!(parse_expr("", 1).is_err());
    }

    #[test]
    fn named_coordinates() {
        let names = vec!["u".to_string(), "v".to_string(), "t".to_string()];
        let e = parse_expr_with_names("t*u", 3, &names).unwrap();
        assert_eq!(*e, Expr::Binary(BinaryOp::Mul, Expr::var(2), Expr::var(0)));
    }

    #[test]
    fn line_col_counts_lines() {
        assert_eq!(line_col("ab\ncd", 4), (2, 2));
        assert_eq!(line_col("abc", 0), (1, 1));
    }
}
