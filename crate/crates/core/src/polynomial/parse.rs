//! Literal syntax: a sum of terms, each a product of factors.
//!
//! ```text
//! poly   := ['+'|'-'] term (('+'|'-') term)*
//! term   := factor ('*' factor)*
//! factor := number | ident ['^' int]
//! ```
//!
//! Identifiers resolve first against named constants (which may carry negative
//! exponents, e.g. `dt^-1`) and then against registered variables.

use std::collections::HashMap;

use super::{Monomial, PolyError, Polynomial, Vars};
use crate::scalar::Scalar;

/// Named numeric constants usable inside literals.
pub type Constants = HashMap<String, f64>;

pub fn parse_poly<T: Scalar>(
    input: &str,
    vars: &Vars,
    constants: &Constants,
) -> Result<Polynomial<T>, PolyError> {
    let mut parser = Parser {
        input,
        bytes: input.as_bytes(),
        pos: 0,
        vars,
        constants,
    };
    let p = parser.poly()?;
    parser.skip_ws();
    if parser.pos != parser.bytes.len() {
        return Err(parser.error("unexpected trailing input"));
    }
    Ok(p)
}

struct Parser<'a> {
    input: &'a str,
    bytes: &'a [u8],
    pos: usize,
    vars: &'a Vars,
    constants: &'a Constants,
}

impl<'a> Parser<'a> {
    fn error(&self, msg: &str) -> PolyError {
        PolyError::Parse {
            input: self.input.to_string(),
            pos: self.pos,
            msg: msg.to_string(),
        }
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

    fn poly<T: Scalar>(&mut self) -> Result<Polynomial<T>, PolyError> {
        let mut acc = Polynomial::zero();
        let mut sign = 1.0;
        match self.peek() {
            Some(b'-') => {
                sign = -1.0;
                self.pos += 1;
            }
            Some(b'+') => self.pos += 1,
            None => return Err(self.error("empty polynomial")),
            _ => {}
        }
        loop {
            let (c, m) = self.term()?;
            acc += &Polynomial::term(T::lit(sign * c), m);
            match self.peek() {
                Some(b'+') => sign = 1.0,
                Some(b'-') => sign = -1.0,
                _ => break,
            }
            self.pos += 1;
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<(f64, Monomial), PolyError> {
        let mut coef = 1.0;
        let mut mono = Monomial::one();
        loop {
            match self.peek() {
                Some(b) if b.is_ascii_digit() || b == b'.' => coef *= self.number()?,
                Some(b) if b.is_ascii_alphabetic() || b == b'_' => {
                    let name = self.ident();
                    let exp = self.exponent()?;
                    if let Some(&value) = self.constants.get(name) {
                        coef *= value.powi(exp);
                    } else if let Some(v) = self.vars.get(name) {
                        if exp < 0 {
                            return Err(self.error("negative exponent on a variable"));
                        }
                        mono = mono.mul(&Monomial::power(v, exp as u32));
                    } else {
                        return Err(self.error(&format!("unknown identifier `{name}`")));
                    }
                }
                _ => return Err(self.error("expected a number or identifier")),
            }
            if self.peek() == Some(b'*') {
                self.pos += 1;
            } else {
                return Ok((coef, mono));
            }
        }
    }

    fn ident(&mut self) -> &'a str {
        let start = self.pos;
        while self.pos < self.bytes.len()
            && (self.bytes[self.pos].is_ascii_alphanumeric() || self.bytes[self.pos] == b'_')
        {
            self.pos += 1;
        }
        &self.input[start..self.pos]
    }

    fn exponent(&mut self) -> Result<i32, PolyError> {
        if self.peek() != Some(b'^') {
            return Ok(1);
        }
        self.pos += 1;
        self.skip_ws();
        let start = self.pos;
        if self.bytes.get(self.pos) == Some(&b'-') {
            self.pos += 1;
        }
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        self.input[start..self.pos]
            .parse::<i32>()
            .map_err(|_| self.error("expected an integer exponent"))
    }

    fn number(&mut self) -> Result<f64, PolyError> {
        let start = self.pos;
        let b = self.bytes;
        while self.pos < b.len() && (b[self.pos].is_ascii_digit() || b[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < b.len() && (b[self.pos] == b'e' || b[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < b.len() && (b[self.pos] == b'+' || b[self.pos] == b'-') {
                self.pos += 1;
            }
            if self.pos < b.len() && b[self.pos].is_ascii_digit() {
                while self.pos < b.len() && b[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        self.input[start..self.pos]
            .parse::<f64>()
            .map_err(|_| self.error("malformed number"))
    }
}
