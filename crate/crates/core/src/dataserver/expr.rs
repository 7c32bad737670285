//! Arithmetic expressions over column names, e.g. `sqrt(x) + 2*y^2`.
//!
//! Grammar (lowest to highest precedence): `+ -`, `* /`, unary `-`, `^`
//! (right associative), atoms (numbers, column names, function calls,
//! parentheses). Functions: exp, log, sin, cos, tan, sqrt, abs.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("parse error at offset {pos}: {msg}")]
    ParseError { pos: usize, msg: String },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Tan,
    Sqrt,
    Abs,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => Self::Exp,
            "log" => Self::Log,
            "sin" => Self::Sin,
            "cos" => Self::Cos,
            "tan" => Self::Tan,
            "sqrt" => Self::Sqrt,
            "abs" => Self::Abs,
            _ => return None,
        })
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Self::Exp => v.exp(),
            Self::Log => v.ln(),
            Self::Sin => v.sin(),
            Self::Cos => v.cos(),
            Self::Tan => v.tan(),
            Self::Sqrt => v.sqrt(),
            Self::Abs => v.abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Column(usize),
    Neg(Box<Expr>),
    Bin(char, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self, ExprError> {
        let mut p = Parser {
            src: src.as_bytes(),
            pos: 0,
        };
        let e = p.sum()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }

    /// Resolves column names to indices into `names`.
    pub fn bind(&self, names: &[&str]) -> Result<Self, ExprError> {
        Ok(match self {
            Self::Var(n) => Self::Column(
                names
                    .iter()
                    .position(|c| c == n)
                    .ok_or_else(|| ExprError::UnknownColumn(n.clone()))?,
            ),
            Self::Neg(a) => Self::Neg(Box::new(a.bind(names)?)),
            Self::Bin(op, a, b) => Self::Bin(*op, Box::new(a.bind(names)?), Box::new(b.bind(names)?)),
            Self::Call(f, a) => Self::Call(*f, Box::new(a.bind(names)?)),
            other => other.clone(),
        })
    }

    /// Evaluates a bound expression on one row. Unbound variables evaluate to NaN.
    pub fn eval(&self, row: &[f64]) -> f64 {
        match self {
            Self::Num(v) => *v,
            Self::Var(_) => f64::NAN,
            Self::Column(i) => row[*i],
            Self::Neg(a) => -a.eval(row),
            Self::Bin(op, a, b) => {
                let (x, y) = (a.eval(row), b.eval(row));
                match op {
                    '+' => x + y,
                    '-' => x - y,
                    '*' => x * y,
                    '/' => x / y,
                    _ => x.powf(y),
                }
            }
            Self::Call(f, a) => f.apply(a.eval(row)),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> ExprError {
        ExprError::ParseError {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn sum(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.product()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.product()?;
            lhs = Expr::Bin(c as char, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(c as char, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Bin('^', Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.sum()?;
                if self.peek() != Some(b')') {
                    return Err(self.error("expected `)`"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || matches!(self.src[self.pos], b'_' | b'.'))
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos])
                    .expect("ascii")
                    .to_string();
                if self.peek() == Some(b'(') {
                    let f = Func::from_name(&name).ok_or_else(|| self.error(&format!("unknown function `{name}`")))?;
                    self.pos += 1;
                    let arg = self.sum()?;
                    if self.peek() != Some(b')') {
                        return Err(self.error("expected `)`"));
                    }
                    self.pos += 1;
                    return Ok(Expr::Call(f, Box::new(arg)));
                }
                Ok(Expr::Var(name))
            }
            Some(_) => Err(self.error("unexpected character")),
            None => Err(self.error("unexpected end of expression")),
        }
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        let s = self.src;
        while self.pos < s.len() && (s[self.pos].is_ascii_digit() || s[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < s.len() && matches!(s[self.pos], b'e' | b'E') {
            let mark = self.pos;
            self.pos += 1;
            if self.pos < s.len() && matches!(s[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            if self.pos < s.len() && s[self.pos].is_ascii_digit() {
                while self.pos < s.len() && s[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&s[start..self.pos]).expect("ascii");
        text.parse::<f64>().map(Expr::Num).map_err(|_| ExprError::ParseError {
            pos: start,
            msg: format!("bad number `{text}`"),
        })
    }
}
