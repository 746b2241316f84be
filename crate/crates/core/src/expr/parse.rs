use std::fmt;

use thiserror::Error;

use super::{Expr, Func, Var};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("at byte {offset}: {kind}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    UnexpectedChar(char),
    UnexpectedToken(String),
    UnexpectedEnd,
    InvalidNumber(String),
    UnknownIdentifier(String),
    IndexOutOfRange { name: String, n: usize },
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::UnexpectedChar(c) => write!(f, "unexpected character `{c}`"),
            ParseErrorKind::UnexpectedToken(t) => write!(f, "unexpected `{t}`"),
            ParseErrorKind::UnexpectedEnd => f.write_str("unexpected end of input"),
            ParseErrorKind::InvalidNumber(s) => write!(f, "invalid number `{s}`"),
            ParseErrorKind::UnknownIdentifier(s) => write!(f, "unknown identifier `{s}`"),
            ParseErrorKind::IndexOutOfRange { name, n } => {
                write!(f, "index of `{name}` out of range 1..={n}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Sym(char),
    End,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Num(x) => write!(f, "{x}"),
            Token::Ident(s) => f.write_str(s),
            Token::Sym(c) => write!(f, "{c}"),
            Token::End => f.write_str("<end>"),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token)>, ParseError> {
    let bytes = text.as_bytes();
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
            let s = &text[start..i];
            let x = s.parse::<f64>().map_err(|_| ParseError {
                offset: start,
                kind: ParseErrorKind::InvalidNumber(s.to_string()),
            })?;
            out.push((start, Token::Num(x)));
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphabetic() || bytes[i] == b'_') {
                i += 1;
            }
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            out.push((start, Token::Ident(text[start..i].to_string())));
        } else if b"+-*/^()".contains(&c) {
            out.push((i, Token::Sym(c as char)));
            i += 1;
        } else {
            let ch = text[i..].chars().next().unwrap_or('?');
            return Err(ParseError { offset: i, kind: ParseErrorKind::UnexpectedChar(ch) });
        }
    }
    out.push((text.len(), Token::End));
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    n: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos].1
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].0
    }

    fn next(&mut self) -> (usize, Token) {
        let tok = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        tok
    }

    fn unexpected(&self) -> ParseError {
        let kind = match self.peek() {
            Token::End => ParseErrorKind::UnexpectedEnd,
            t => ParseErrorKind::UnexpectedToken(t.to_string()),
        };
        ParseError { offset: self.offset(), kind }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if *self.peek() == Token::Sym(c) {
            self.next();
            Ok(())
        } else {
            Err(self.unexpected())
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Token::Sym('+') => {
                    self.next();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Token::Sym('-') => {
                    self.next();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Token::Sym('*') => {
                    self.next();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Token::Sym('/') => {
                    self.next();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Token::Sym('-') {
            self.next();
            return Ok(Expr::Neg(Box::new(self.factor()?)));
        }
        let base = self.base()?;
        if *self.peek() == Token::Sym('^') {
            self.next();
            return Ok(Expr::Pow(Box::new(base), Box::new(self.factor()?)));
        }
        Ok(base)
    }

    fn base(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Token::Num(x) => {
                self.next();
                Ok(Expr::Const(x))
            }
            Token::Sym('(') => {
                self.next();
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Token::Ident(name) => {
                let offset = self.offset();
                self.next();
                if let Some(func) = Func::from_name(&name) {
                    self.expect('(')?;
                    let arg = self.expr()?;
                    self.expect(')')?;
                    return Ok(Expr::Call(func, Box::new(arg)));
                }
                let var = Var::from_name(&name)
                    .ok_or(ParseError { offset, kind: ParseErrorKind::UnknownIdentifier(name.clone()) })?;
                if var.index().is_some_and(|i| i >= self.n) {
                    return Err(ParseError { offset, kind: ParseErrorKind::IndexOutOfRange { name, n: self.n } });
                }
                Ok(Expr::Var(var))
            }
            _ => Err(self.unexpected()),
        }
    }
}

pub(super) fn parse(text: &str, n: usize) -> Result<Expr, ParseError> {
    let mut p = Parser { tokens: tokenize(text)?, pos: 0, n };
    let e = p.expr()?;
    if *p.peek() != Token::End {
        return Err(p.unexpected());
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(name: &str) -> Box<Expr> {
        Box::new(Expr::Var(Var::from_name(name).unwrap()))
    }

    fn c(x: f64) -> Box<Expr> {
        Box::new(Expr::Const(x))
    }

    #[test]
    fn oscillator_lagrangian() {
        let e = parse("0.5*v1^2 - 0.5*q1^2", 1).unwrap();
        let want = Expr::Sub(
            Box::new(Expr::Mul(c(0.5), Box::new(Expr::Pow(v("v1"), c(2.0))))),
            Box::new(Expr::Mul(c(0.5), Box::new(Expr::Pow(v("q1"), c(2.0))))),
        );
        assert_eq!(e, want);
        assert!(parse("0.5*p1^2 + 0.5*q1^2", 1).is_ok());
    }

    #[test]
    fn precedence_and_associativity() {
        // unary minus binds looser than ^
        assert_eq!(parse("-q1^2", 1).unwrap(), Expr::Neg(Box::new(Expr::Pow(v("q1"), c(2.0)))));
        // ^ is right associative
        assert_eq!(
            parse("q1^2^3", 1).unwrap(),
            Expr::Pow(v("q1"), Box::new(Expr::Pow(c(2.0), c(3.0))))
        );
        // left associative within a tier
        assert_eq!(
            parse("q1 - t - 1", 1).unwrap(),
            Expr::Sub(Box::new(Expr::Sub(v("q1"), v("t"))), c(1.0))
        );
        assert_eq!(parse("q1/t*2", 1).unwrap(), Expr::Mul(Box::new(Expr::Div(v("q1"), v("t"))), c(2.0)));
        assert_eq!(parse("2^-1", 1).unwrap(), Expr::Pow(c(2.0), Box::new(Expr::Neg(c(1.0)))));
    }

    #[test]
    fn numbers() {
        assert_eq!(parse("1.5e-3", 1).unwrap(), Expr::Const(1.5e-3));
        assert_eq!(parse(".25", 1).unwrap(), Expr::Const(0.25));
        assert_eq!(parse("2E+2", 1).unwrap(), Expr::Const(200.0));
        assert!(matches!(parse("1.2.3", 1).unwrap_err().kind, ParseErrorKind::InvalidNumber(_)));
    }

    #[test]
    fn errors_carry_offsets() {
        let e = parse("q2 + sin(t)", 1).unwrap_err();
        assert_eq!(e.offset, 0);
        assert!(matches!(e.kind, ParseErrorKind::IndexOutOfRange { .. }));

        let e = parse("q1 + foo", 1).unwrap_err();
        assert_eq!(e.offset, 5);
        assert!(matches!(e.kind, ParseErrorKind::UnknownIdentifier(_)));

        let e = parse("q1 + ", 1).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnexpectedEnd);

        let e = parse("q1 $ 2", 1).unwrap_err();
        assert_eq!((e.offset, e.kind), (3, ParseErrorKind::UnexpectedChar('$')));

        assert!(parse("(q1", 1).is_err());
        assert!(parse("q1)", 1).is_err());
        assert!(parse("sin q1", 1).is_err());
        assert!(parse("q1 q1", 1).is_err());
    }

    #[test]
    fn functions_and_bar_variables() {
        let e = parse("sin(qbar1)*Qbar2 + log(P1)", 2).unwrap();
        assert_eq!(e.variables().len(), 3);
    }
}
