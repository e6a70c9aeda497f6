//! Minimal arithmetic expressions in one variable for user-supplied drift
//! and diffusion coefficients: literals, `x`, `pi`, `+ - * / ^`, unary
//! minus, and the functions `exp`, `ln`, `abs`, `sqrt`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Tok {
    Num(f64),
    Ident(usize, usize), // byte range into the source
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

#[derive(Debug, Clone)]
pub enum Expr {
    Num(f64),
    Var,
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Exp(Box<Expr>),
    Ln(Box<Expr>),
    Abs(Box<Expr>),
    Sqrt(Box<Expr>),
}

impl Expr {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var => x,
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Pow(a, b) => a.eval(x).powf(b.eval(x)),
            Expr::Neg(a) => -a.eval(x),
            Expr::Exp(a) => a.eval(x).exp(),
            Expr::Ln(a) => a.eval(x).ln(),
            Expr::Abs(a) => a.eval(x).abs(),
            Expr::Sqrt(a) => a.eval(x).sqrt(),
        }
    }
}

fn tokenize(src: &str) -> Result<Vec<Tok>> {
    let bytes = src.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                toks.push(Tok::Plus);
                i += 1;
            }
            '-' => {
                toks.push(Tok::Minus);
                i += 1;
            }
            '*' => {
                toks.push(Tok::Star);
                i += 1;
            }
            '/' => {
                toks.push(Tok::Slash);
                i += 1;
            }
            '^' => {
                toks.push(Tok::Caret);
                i += 1;
            }
            '(' => {
                toks.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                toks.push(Tok::RParen);
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && matches!(bytes[i] as char, '0'..='9' | '.') {
                    i += 1;
                }
                // Scientific notation: 1e-3, 2.5E+4.
                if i < bytes.len() && matches!(bytes[i] as char, 'e' | 'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && matches!(bytes[j] as char, '+' | '-') {
                        j += 1;
                    }
                    if j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &src[start..i];
                let v: f64 = text
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("bad number literal '{text}'")))?;
                toks.push(Tok::Num(v));
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len()
                    && matches!(bytes[i] as char, 'a'..='z' | 'A'..='Z' | '0'..='9' | '_')
                {
                    i += 1;
                }
                toks.push(Tok::Ident(start, i));
            }
            other => {
                return Err(Error::InvalidInput(format!(
                    "unexpected character '{other}' in expression"
                )))
            }
        }
    }
    Ok(toks)
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<Tok>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<Tok> {
        self.toks.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.peek();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<()> {
        match self.bump() {
            Some(got) if got == t => Ok(()),
            _ => Err(Error::InvalidInput(format!("expected {what} in expression"))),
        }
    }

    // sum := product (('+' | '-') product)*
    fn sum(&mut self) -> Result<Expr> {
        let mut acc = self.product()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    acc = Expr::Add(Box::new(acc), Box::new(self.product()?));
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    acc = Expr::Sub(Box::new(acc), Box::new(self.product()?));
                }
                _ => return Ok(acc),
            }
        }
    }

    // product := unary (('*' | '/') unary)*
    fn product(&mut self) -> Result<Expr> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    acc = Expr::Mul(Box::new(acc), Box::new(self.unary()?));
                }
                Some(Tok::Slash) => {
                    self.pos += 1;
                    acc = Expr::Div(Box::new(acc), Box::new(self.unary()?));
                }
                _ => return Ok(acc),
            }
        }
    }

    // unary := '-' unary | power; so -x^2 parses as -(x^2)
    fn unary(&mut self) -> Result<Expr> {
        if self.peek() == Some(Tok::Minus) {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    // power := atom ('^' unary)?; right-associative, exponent may be signed
    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek() == Some(Tok::Caret) {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.bump() {
            Some(Tok::Num(v)) => Ok(Expr::Num(v)),
            Some(Tok::LParen) => {
                let inner = self.sum()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            Some(Tok::Ident(s, e)) => {
                let name = &self.src[s..e];
                match name {
                    "x" => Ok(Expr::Var),
                    "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                    "e" => Ok(Expr::Num(std::f64::consts::E)),
                    "exp" | "ln" | "abs" | "sqrt" => {
                        self.expect(Tok::LParen, "'(' after function name")?;
                        let arg = Box::new(self.sum()?);
                        self.expect(Tok::RParen, "')'")?;
                        Ok(match name {
                            "exp" => Expr::Exp(arg),
                            "ln" => Expr::Ln(arg),
                            "abs" => Expr::Abs(arg),
                            _ => Expr::Sqrt(arg),
                        })
                    }
                    other => Err(Error::InvalidInput(format!(
                        "unknown identifier '{other}' in expression"
                    ))),
                }
            }
            _ => Err(Error::InvalidInput(
                "unexpected end of expression".to_string(),
            )),
        }
    }
}

/// Parse `src` into an expression tree.
pub fn parse(src: &str) -> Result<Expr> {
    let toks = tokenize(src)?;
    if toks.is_empty() {
        return Err(Error::InvalidInput("empty expression".to_string()));
    }
    let mut p = Parser { src, toks, pos: 0 };
    let expr = p.sum()?;
    if p.pos != p.toks.len() {
        return Err(Error::InvalidInput(format!(
            "trailing tokens after position {} in expression '{src}'",
            p.pos
        )));
    }
    Ok(expr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn eval(src: &str, x: f64) -> f64 {
        parse(src).unwrap().eval(x)
    }

    #[test]
    fn arithmetic_and_precedence() {
        assert_relative_eq!(eval("1+2*3", 0.0), 7.0);
        assert_relative_eq!(eval("(1+2)*3", 0.0), 9.0);
        assert_relative_eq!(eval("2^0.5", 0.0), 2.0_f64.sqrt());
        assert_relative_eq!(eval("2^3^2", 0.0), 512.0); // right-associative
        assert_relative_eq!(eval("-x^2", 3.0), -9.0);
        assert_relative_eq!(eval("2^-1", 0.0), 0.5);
        assert_relative_eq!(eval("6/3/2", 0.0), 1.0); // left-associative
    }

    #[test]
    fn drift_style_expressions() {
        assert_relative_eq!(eval("-x/(1+x^2)", 2.0), -0.4);
        assert_relative_eq!(eval("exp(-x^2/2)", 1.0), (-0.5_f64).exp());
        assert_relative_eq!(eval("sqrt(2)", 0.0), 2.0_f64.sqrt());
        assert_relative_eq!(eval("abs(x)^1.5", -4.0), 8.0);
        assert_relative_eq!(eval("2*pi", 0.0), 2.0 * std::f64::consts::PI);
        assert_relative_eq!(eval("1e-3*x", 2.0), 2e-3);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(parse("").is_err());
        assert!(parse("2+").is_err());
        assert!(parse("(1+2").is_err());
        assert!(parse("foo(3)").is_err());
        assert!(parse("1 2").is_err());
        assert!(parse("x$").is_err());
        assert!(parse("y + 1").is_err());
    }
}
