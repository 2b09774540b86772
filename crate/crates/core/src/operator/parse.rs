//! Recursive-descent parser for the operator surface syntax:
//!
//! ```text
//! expression  := sign? term (('+' | '-') term)*
//! term        := coefficient? ('*'? factor)*
//! factor      := ('x' | 'p') index ('^' exponent)?
//! coefficient := decimal | decimal 'i' | '(' sign? decimal (('+' | '-') decimal 'i')? ')'
//! ```
//!
//! Whitespace is insignificant and indices are 1-based. Factors are
//! multiplied left to right, so `p1*x1` normal-orders to `x1*p1 - 1i`.

use std::collections::BTreeMap;

use thiserror::Error;

use super::OperatorPolynomial;
use crate::C64;

/// Largest exponent accepted on one site within a term.
pub const MAX_EXPONENT: u16 = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("empty expression")]
    EmptyExpression,
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("unexpected character {0:?}")]
    UnexpectedChar(char),
    #[error("expected a factor after '*'")]
    ExpectedFactor,
    #[error("expected a site index")]
    ExpectedIndex,
    #[error("site indices start at 1")]
    ZeroIndex,
    #[error("site index too large")]
    IndexOverflow,
    #[error("expected an exponent after '^'")]
    ExpectedExponent,
    #[error("exponent {0} exceeds {MAX_EXPONENT}")]
    ExponentOverflow(u64),
    #[error("malformed number")]
    InvalidNumber,
    #[error("expected 'i' after the imaginary part")]
    ExpectedImaginaryUnit,
    #[error("expected ')'")]
    UnclosedParen,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at byte {offset}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

/// Parses `text` into a normal-ordered polynomial.
pub fn parse_operator(text: &str) -> Result<OperatorPolynomial, ParseError> {
    Parser { text, pos: 0 }.expression()
}

struct Parser<'a> {
    text: &'a str,
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<u8> {
        self.text.as_bytes().get(self.pos).copied()
    }

    fn bump(&mut self) {
        self.pos += 1;
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b) if b.is_ascii_whitespace()) {
            self.bump();
        }
    }

    fn err<T>(&self, offset: usize, kind: ParseErrorKind) -> PResult<T> {
        Err(ParseError { offset, kind })
    }

    fn unexpected<T>(&self) -> PResult<T> {
        match self.text[self.pos..].chars().next() {
            Some(c) => self.err(self.pos, ParseErrorKind::UnexpectedChar(c)),
            None => self.err(self.pos, ParseErrorKind::UnexpectedEnd),
        }
    }

    fn expression(&mut self) -> PResult<OperatorPolynomial> {
        self.skip_ws();
        if self.peek().is_none() {
            return self.err(0, ParseErrorKind::EmptyExpression);
        }
        let mut negate = false;
        if let Some(c @ (b'+' | b'-')) = self.peek() {
            negate = c == b'-';
            self.bump();
        }
        let mut acc = OperatorPolynomial::zero();
        loop {
            let t = self.term()?;
            acc = if negate { &acc - &t } else { &acc + &t };
            self.skip_ws();
            match self.peek() {
                None => return Ok(acc),
                Some(b'+') => negate = false,
                Some(b'-') => negate = true,
                Some(_) => return self.unexpected(),
            }
            self.bump();
        }
    }

    fn term(&mut self) -> PResult<OperatorPolynomial> {
        self.skip_ws();
        let coefficient = match self.peek() {
            Some(b'0'..=b'9' | b'.' | b'(') => Some(self.coefficient()?),
            _ => None,
        };
        let mut poly = OperatorPolynomial::constant(coefficient.unwrap_or(C64::new(1.0, 0.0)));
        let mut exponents: BTreeMap<(u32, bool), u16> = BTreeMap::new();
        let mut factors = 0usize;
        loop {
            self.skip_ws();
            let star = self.peek() == Some(b'*');
            if star {
                self.bump();
                self.skip_ws();
            }
            match self.peek() {
                Some(b'x' | b'p') => {
                    let at = self.pos;
                    let (site, momentum, e) = self.factor()?;
                    let total = exponents.entry((site, momentum)).or_insert(0);
                    *total += e;
                    if *total > MAX_EXPONENT {
                        return self.err(at, ParseErrorKind::ExponentOverflow(u64::from(*total)));
                    }
                    poly = poly.mul_factor(site, momentum, e);
                    factors += 1;
                }
                _ if star => return self.err(self.pos, ParseErrorKind::ExpectedFactor),
                _ => break,
            }
        }
        if coefficient.is_none() && factors == 0 {
            return self.unexpected();
        }
        Ok(poly)
    }

    fn coefficient(&mut self) -> PResult<C64> {
        if self.peek() != Some(b'(') {
            let v = self.decimal()?;
            self.skip_ws();
            if self.peek() == Some(b'i') {
                self.bump();
                return Ok(C64::new(0.0, v));
            }
            return Ok(C64::new(v, 0.0));
        }
        self.bump();
        self.skip_ws();
        let first = self.signed_decimal()?;
        self.skip_ws();
        let mut value = if self.peek() == Some(b'i') {
            self.bump();
            self.skip_ws();
            C64::new(0.0, first)
        } else {
            C64::new(first, 0.0)
        };
        if value.im == 0.0 {
            if let Some(c @ (b'+' | b'-')) = self.peek() {
                self.bump();
                self.skip_ws();
                let im = self.decimal()?;
                self.skip_ws();
                if self.peek() != Some(b'i') {
                    return self.err(self.pos, ParseErrorKind::ExpectedImaginaryUnit);
                }
                self.bump();
                self.skip_ws();
                value.im = if c == b'-' { -im } else { im };
            }
        }
        if self.peek() != Some(b')') {
            return self.err(self.pos, ParseErrorKind::UnclosedParen);
        }
        self.bump();
        Ok(value)
    }

    fn signed_decimal(&mut self) -> PResult<f64> {
        let negative = match self.peek() {
            Some(b'-') => true,
            Some(b'+') => false,
            _ => return self.decimal(),
        };
        self.bump();
        self.skip_ws();
        let v = self.decimal()?;
        Ok(if negative { -v } else { v })
    }

    fn digits(&mut self) -> usize {
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.bump();
        }
        self.pos - start
    }

    fn decimal(&mut self) -> PResult<f64> {
        let start = self.pos;
        let mut count = self.digits();
        if self.peek() == Some(b'.') {
            self.bump();
            count += self.digits();
        }
        if count == 0 {
            return self.err(start, ParseErrorKind::InvalidNumber);
        }
        if let Some(b'e' | b'E') = self.peek() {
            let mark = self.pos;
            self.bump();
            if let Some(b'+' | b'-') = self.peek() {
                self.bump();
            }
            if self.digits() == 0 {
                self.pos = mark;
            }
        }
        match self.text[start..self.pos].parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => self.err(start, ParseErrorKind::InvalidNumber),
        }
    }

    fn factor(&mut self) -> PResult<(u32, bool, u16)> {
        let momentum = self.peek() == Some(b'p');
        self.bump();
        self.skip_ws();
        let at = self.pos;
        if self.digits() == 0 {
            return self.err(at, ParseErrorKind::ExpectedIndex);
        }
        let site: u32 = match self.text[at..self.pos].parse() {
            Ok(v) => v,
            Err(_) => return self.err(at, ParseErrorKind::IndexOverflow),
        };
        if site == 0 {
            return self.err(at, ParseErrorKind::ZeroIndex);
        }
        let mark = self.pos;
        self.skip_ws();
        if self.peek() != Some(b'^') {
            self.pos = mark;
            return Ok((site, momentum, 1));
        }
        self.bump();
        self.skip_ws();
        let at = self.pos;
        if self.digits() == 0 {
            return self.err(at, ParseErrorKind::ExpectedExponent);
        }
        let e: u64 = self.text[at..self.pos].parse().unwrap_or(u64::MAX);
        if e > u64::from(MAX_EXPONENT) {
            return self.err(at, ParseErrorKind::ExponentOverflow(e));
        }
        Ok((site, momentum, e as u16))
    }
}
