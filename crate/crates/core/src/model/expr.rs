//! Arithmetic expressions for coefficients in JSON model files.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 'pi' | 'e' | 'i' | 'gamma' | 'x' | 'x' '[' int ']'
//!         | func '(' expr ')' | '(' expr ')'
//! func   := sin | cos | exp | ln | abs
//! ```
//!
//! `x[k]` is one-based, bare `x` means `x[1]`, and `i` evaluates to the
//! one-based regime label.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// Zero-based state component.
    X(usize),
    Regime,
    Gamma,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0, src };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Expr(format!(
                "unexpected {:?} in {src:?}",
                p.tokens[p.pos]
            )));
        }
        Ok(e)
    }

    /// `regime` is the one-based regime label.
    pub fn eval(&self, x: &[f64], regime: f64, gamma: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::X(k) => x[*k],
            Expr::Regime => regime,
            Expr::Gamma => gamma,
            Expr::Neg(a) => -a.eval(x, regime, gamma),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(x, regime, gamma), b.eval(x, regime, gamma));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => pow(a, b),
                }
            }
            Expr::Call(f, a) => {
                let a = a.eval(x, regime, gamma);
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Ln => a.ln(),
                    Func::Abs => a.abs(),
                }
            }
        }
    }

    /// Largest zero-based state index referenced, if any.
    pub fn max_state_index(&self) -> Option<usize> {
        match self {
            Expr::X(k) => Some(*k),
            Expr::Num(_) | Expr::Regime | Expr::Gamma => None,
            Expr::Neg(a) | Expr::Call(_, a) => a.max_state_index(),
            Expr::Bin(_, a, b) => match (a.max_state_index(), b.max_state_index()) {
                (Some(u), Some(v)) => Some(u.max(v)),
                (u, v) => u.or(v),
            },
        }
    }

    pub fn uses_gamma(&self) -> bool {
        match self {
            Expr::Gamma => true,
            Expr::Num(_) | Expr::Regime | Expr::X(_) => false,
            Expr::Neg(a) | Expr::Call(_, a) => a.uses_gamma(),
            Expr::Bin(_, a, b) => a.uses_gamma() || b.uses_gamma(),
        }
    }
}

// Integer exponents go through powi so that (-2)^3 stays real.
fn pow(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut k = 0;
    while k < chars.len() {
        let c = chars[k];
        if c.is_whitespace() {
            k += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = k;
            while k < chars.len() && (chars[k].is_ascii_digit() || chars[k] == '.') {
                k += 1;
            }
            // Scientific suffix: 1e-5, 2.5E3.
            if k < chars.len() && (chars[k] == 'e' || chars[k] == 'E') {
                let mut j = k + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    k = j;
                    while k < chars.len() && chars[k].is_ascii_digit() {
                        k += 1;
                    }
                }
            }
            let text: String = chars[start..k].iter().collect();
            let v = text
                .parse::<f64>()
                .map_err(|_| Error::Expr(format!("bad number {text:?} in {src:?}")))?;
            out.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = k;
            while k < chars.len() && (chars[k].is_ascii_alphanumeric() || chars[k] == '_') {
                k += 1;
            }
            out.push(Tok::Ident(chars[start..k].iter().collect()));
        } else if "+-*/^()[]".contains(c) {
            out.push(Tok::Op(c));
            k += 1;
        } else {
            return Err(Error::Expr(format!("unexpected character {c:?} in {src:?}")));
        }
    }
    if out.is_empty() {
        return Err(Error::Expr("empty expression".into()));
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Tok>,
    pos: usize,
    src: &'a str,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn eat_op(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Op(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, c: char) -> Result<()> {
        if self.eat_op(c) {
            Ok(())
        } else {
            Err(Error::Expr(format!("expected '{c}' in {:?}", self.src)))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat_op('+') {
                BinOp::Add
            } else if self.eat_op('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat_op('*') {
                BinOp::Mul
            } else if self.eat_op('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat_op('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat_op('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat_op('^') {
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let tok = self
            .peek()
            .cloned()
            .ok_or_else(|| Error::Expr(format!("unexpected end of {:?}", self.src)))?;
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Op('(') => {
                let e = self.expr()?;
                self.expect_op(')')?;
                Ok(e)
            }
            Tok::Ident(name) => match name.as_str() {
                "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                "e" => Ok(Expr::Num(std::f64::consts::E)),
                "i" => Ok(Expr::Regime),
                "gamma" => Ok(Expr::Gamma),
                "x" => {
                    if self.eat_op('[') {
                        let idx = match self.peek() {
                            Some(Tok::Num(v)) if v.fract() == 0.0 && *v >= 1.0 => *v as usize,
                            _ => {
                                return Err(Error::Expr(format!(
                                    "x[k] needs a positive integer index in {:?}",
                                    self.src
                                )))
                            }
                        };
                        self.pos += 1;
                        self.expect_op(']')?;
                        Ok(Expr::X(idx - 1))
                    } else {
                        Ok(Expr::X(0))
                    }
                }
                "sin" | "cos" | "exp" | "ln" | "abs" => {
                    let f = match name.as_str() {
                        "sin" => Func::Sin,
                        "cos" => Func::Cos,
                        "exp" => Func::Exp,
                        "ln" => Func::Ln,
                        _ => Func::Abs,
                    };
                    self.expect_op('(')?;
                    let arg = self.expr()?;
                    self.expect_op(')')?;
                    Ok(Expr::Call(f, Box::new(arg)))
                }
                other => Err(Error::Expr(format!(
                    "unknown identifier {other:?} in {:?}",
                    self.src
                ))),
            },
            Tok::Op(c) => Err(Error::Expr(format!("unexpected '{c}' in {:?}", self.src))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, x: &[f64]) -> f64 {
        Expr::parse(src).unwrap().eval(x, 2.0, 0.5)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3", &[]), 7.0);
        assert_eq!(ev("(1 + 2) * 3", &[]), 9.0);
        assert_eq!(ev("2 ^ 3 ^ 2", &[]), 512.0);
        assert_eq!(ev("-2 ^ 2", &[]), -4.0);
        assert_eq!(ev("8 / 2 / 2", &[]), 2.0);
        assert_eq!(ev("1 - 2 - 3", &[]), -4.0);
        assert_eq!(ev("2 ^ -1", &[]), 0.5);
    }

    #[test]
    fn variables_and_functions() {
        let x = [0.3, -1.5];
        assert_eq!(ev("x", &x), 0.3);
        assert_eq!(ev("x[2]", &x), -1.5);
        assert_eq!(ev("i", &x), 2.0);
        assert_eq!(ev("gamma", &x), 0.5);
        assert!((ev("x*sin(x)/8", &x) - 0.3 * 0.3f64.sin() / 8.0).abs() < 1e-16);
        assert_eq!(ev("abs(x[2])", &x), 1.5);
        assert!((ev("ln(e)", &x) - 1.0).abs() < 1e-15);
        assert!((ev("cos(pi)", &x) + 1.0).abs() < 1e-15);
        assert!((ev("exp(1.5e-1)", &x) - 0.15f64.exp()).abs() < 1e-15);
        assert_eq!(ev("(-2)^3", &x), -8.0);
    }

    #[test]
    fn parse_errors() {
        for bad in ["", "1 +", "foo", "x[0]", "x[", "sin 1", "(1", "1 $ 2", "2 3"] {
            assert!(Expr::parse(bad).is_err(), "{bad:?} should fail");
        }
    }

    #[test]
    fn index_bookkeeping() {
        let e = Expr::parse("x[3] * x + gamma").unwrap();
        assert_eq!(e.max_state_index(), Some(2));
        assert!(e.uses_gamma());
        assert_eq!(Expr::parse("1").unwrap().max_state_index(), None);
    }
}
