//! Recursive-descent parser for the expression grammar
//!
//! ```text
//! expr   := term (("+" | "-") term)*
//! term   := unary (("*" | "/") unary)*
//! unary  := "-" unary | factor
//! factor := atom ("^" integer)?
//! atom   := rational | decimal | identifier | "(" expr ")" | func "(" expr ")"
//! func   := sin | cos | exp | ln | sqrt
//! ```
//!
//! Exponents are signed integers, optionally parenthesized.

use std::fmt;

use num_bigint::BigInt;
use num_traits::Zero;

use super::{Expr, Func, Rational, SymbolTable, SymbolicError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax(String),
    UnknownIdentifier(String),
    UnknownFunction(String),
    ZeroDenominator,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    /// Byte offset into the input.
    pub offset: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ParseErrorKind::Syntax(m) => write!(f, "syntax error at byte {}: {m}", self.offset),
            ParseErrorKind::UnknownIdentifier(n) => write!(f, "unknown identifier `{n}` at byte {}", self.offset),
            ParseErrorKind::UnknownFunction(n) => write!(f, "unknown function `{n}` at byte {}", self.offset),
            ParseErrorKind::ZeroDenominator => write!(f, "zero denominator at byte {}", self.offset),
        }
    }
}

/// Parses and canonicalizes.
pub fn parse_expr(text: &str, table: &SymbolTable) -> Result<Expr, ParseError> {
    let raw = parse_raw(text, table)?;
    raw.canonical().map_err(|SymbolicError::DivisionByZero| ParseError {
        offset: text.find('/').unwrap_or(0),
        kind: ParseErrorKind::ZeroDenominator,
    })
}

/// Parses into the tree as written, without canonicalization.
pub fn parse_raw(text: &str, table: &SymbolTable) -> Result<Expr, ParseError> {
    let mut p = Parser { src: text, bytes: text.as_bytes(), pos: 0, table };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.bytes.len() {
        return Err(p.err(format!("unexpected `{}`", p.rest_char())));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    table: &'a SymbolTable,
}

impl Parser<'_> {
    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError { offset: self.pos, kind: ParseErrorKind::Syntax(msg.into()) }
    }

    fn rest_char(&self) -> char {
        self.src[self.pos..].chars().next().unwrap_or(' ')
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

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else if self.pos >= self.bytes.len() {
            Err(self.err(format!("expected `{}`, found end of input", c as char)))
        } else {
            Err(self.err(format!("expected `{}`, found `{}`", c as char, self.rest_char())))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut terms = vec![self.term()?];
        loop {
            if self.eat(b'+') {
                terms.push(self.term()?);
            } else if self.eat(b'-') {
                let t = self.term()?;
                terms.push(Expr::Product(vec![Expr::int(-1), t]));
            } else {
                break;
            }
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { Expr::Sum(terms) })
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.unary()?;
        loop {
            if self.eat(b'*') {
                let f = self.unary()?;
                acc = match acc {
                    Expr::Product(mut fs) => {
                        fs.push(f);
                        Expr::Product(fs)
                    }
                    other => Expr::Product(vec![other, f]),
                };
            } else if self.peek() == Some(b'/') {
                let at = self.pos;
                self.pos += 1;
                let d = self.unary()?;
                if matches!(&d, Expr::Const(c) if c.is_zero()) {
                    return Err(ParseError { offset: at, kind: ParseErrorKind::ZeroDenominator });
                }
                acc = Expr::Quotient(Box::new(acc), Box::new(d));
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat(b'-') {
            let inner = self.unary()?;
            return Ok(match inner {
                Expr::Const(c) => Expr::Const(-c),
                other => Expr::Product(vec![Expr::int(-1), other]),
            });
        }
        self.factor()
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if !self.eat(b'^') {
            return Ok(base);
        }
        let k = if self.eat(b'(') {
            let k = self.integer()?;
            self.expect(b')')?;
            k
        } else {
            self.integer()?
        };
        if k < 0 && matches!(&base, Expr::Const(c) if c.is_zero()) {
            return Err(ParseError { offset: self.pos, kind: ParseErrorKind::ZeroDenominator });
        }
        Ok(Expr::Power(Box::new(base), k))
    }

    fn integer(&mut self) -> Result<i32, ParseError> {
        let neg = self.eat(b'-');
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected integer exponent"));
        }
        let v: i32 = self.src[start..self.pos]
            .parse()
            .map_err(|_| ParseError { offset: start, kind: ParseErrorKind::Syntax("exponent out of range".into()) })?;
        Ok(if neg { -v } else { v })
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            Some(_) => Err(self.err(format!("unexpected `{}`", self.rest_char()))),
            None => Err(self.err("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        let int_part = &self.src[start..self.pos];
        let mut frac_part = "";
        if self.pos < self.bytes.len() && self.bytes[self.pos] == b'.' {
            self.pos += 1;
            let fs = self.pos;
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            frac_part = &self.src[fs..self.pos];
            if int_part.is_empty() && frac_part.is_empty() {
                return Err(ParseError { offset: start, kind: ParseErrorKind::Syntax("malformed number".into()) });
            }
        }
        let digits = format!("{int_part}{frac_part}");
        let num: BigInt = digits.parse().unwrap_or_else(|_| BigInt::zero());
        let den = num_traits::pow(BigInt::from(10), frac_part.len());
        Ok(Expr::Const(Rational::new(num, den)))
    }

    fn identifier(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while self.pos < self.bytes.len() && (self.bytes[self.pos].is_ascii_alphanumeric() || self.bytes[self.pos] == b'_') {
            self.pos += 1;
        }
        let name = &self.src[start..self.pos];
        if self.peek() == Some(b'(') {
            let Some(f) = Func::from_name(name) else {
                return Err(ParseError { offset: start, kind: ParseErrorKind::UnknownFunction(name.to_string()) });
            };
            self.pos += 1;
            let arg = self.expr()?;
            self.expect(b')')?;
            return Ok(Expr::Apply(f, Box::new(arg)));
        }
        match self.table.lookup(name) {
            Some(id) => Ok(Expr::Var(id)),
            None => Err(ParseError { offset: start, kind: ParseErrorKind::UnknownIdentifier(name.to_string()) }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::rat;
    use super::*;

    fn t() -> SymbolTable {
        SymbolTable::new(&["x1", "x2"], &["u1"], 1, 0, 0).unwrap()
    }

    #[test]
    fn precedence_and_unary_minus() {
        let tb = t();
        assert_eq!(parse_expr("-x1^2", &tb), parse_expr("-(x1^2)", &tb));
        assert_eq!(parse_expr("1 - 2*3", &tb).unwrap(), Expr::int(-5));
        assert_eq!(parse_expr("2^-1", &tb).unwrap(), Expr::Const(rat(1, 2)));
        assert_eq!(parse_expr("x1^(-1)*x1", &tb).unwrap(), Expr::one());
        assert_eq!(parse_expr("8/4/2", &tb).unwrap(), Expr::one());
        assert_eq!(parse_expr("u1_d1 * 1.5", &tb), parse_expr("3*u1_d1/2", &tb));
    }

    #[test]
    fn errors_carry_offsets() {
        let tb = t();
        let e = parse_expr("x1 + y", &tb).unwrap_err();
        assert_eq!(e, ParseError { offset: 5, kind: ParseErrorKind::UnknownIdentifier("y".into()) });
        let e = parse_expr("x1 / 0", &tb).unwrap_err();
        assert_eq!(e, ParseError { offset: 3, kind: ParseErrorKind::ZeroDenominator });
        let e = parse_expr("tan(x1)", &tb).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnknownFunction("tan".into()));
        let e = parse_expr("(x1 + 1", &tb).unwrap_err();
        assert_eq!(e.offset, 7);
        assert!(matches!(parse_expr("x1 +", &tb).unwrap_err().kind, ParseErrorKind::Syntax(_)));
        assert!(matches!(parse_expr("x1 x2", &tb).unwrap_err().kind, ParseErrorKind::Syntax(_)));
        assert_eq!(parse_expr("1/(x1 - x1)", &tb).unwrap_err().kind, ParseErrorKind::ZeroDenominator);
    }
}
