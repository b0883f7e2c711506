//! A small closed expression grammar for scenario fields.
//!
//! ```text
//! expr    := term (("+" | "-") term)*
//! term    := unary (("*" | "/") unary)*
//! unary   := "-" unary | power
//! power   := primary ("^" unary)?
//! primary := number | "t" | "x1".."xd" | "r" | "pi"
//!          | func "(" expr ("," expr)* ")" | "(" expr ")" | "|" expr "|"
//! func    := exp | log | arctan | atan | abs | min | max | inbox | inball
//! ```
//!
//! `r` is `|x|`. `inbox(lo, hi)` is the indicator of `[lo, hi]^d`, and
//! `inbox(lo1, hi1, …, lod, hid)` of a general box. `inball(rad)` is the
//! indicator of the closed ball about the origin, `inball(rad, c1, …, cd)`
//! about `c`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fields::ScalarField;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Exp,
    Log,
    Atan,
    Abs,
    Min,
    Max,
    InBox,
    InBall,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Time,
    Coord(usize),
    Radius,
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// A parsed expression over `t` and `x1..xd`.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    dim: usize,
    uses_time: bool,
}

impl Expr {
    pub fn parse(src: &str, dim: usize) -> Result<Self> {
        let tokens = lex(src)?;
        let mut p = Parser { tokens, pos: 0, dim, uses_time: false };
        let root = p.expr()?;
        if let Some((at, tok)) = p.tokens.get(p.pos) {
            return Err(Error::Expr { pos: *at, msg: format!("unexpected {tok:?}") });
        }
        Ok(Self { root, dim, uses_time: p.uses_time })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn uses_time(&self) -> bool {
        self.uses_time
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        eval(&self.root, t, x)
    }

    pub fn into_field(self) -> ScalarField {
        let autonomous = !self.uses_time;
        let e = Arc::new(self);
        let f = ScalarField::new(move |t, x| e.eval(t, x));
        if autonomous {
            f.autonomous()
        } else {
            f
        }
    }
}

fn eval(node: &Node, t: f64, x: &[f64]) -> f64 {
    match node {
        Node::Num(v) => *v,
        Node::Time => t,
        Node::Coord(k) => x[*k],
        Node::Radius => crate::fields::norm(x),
        Node::Neg(a) => -eval(a, t, x),
        Node::Add(a, b) => eval(a, t, x) + eval(b, t, x),
        Node::Sub(a, b) => eval(a, t, x) - eval(b, t, x),
        Node::Mul(a, b) => eval(a, t, x) * eval(b, t, x),
        Node::Div(a, b) => eval(a, t, x) / eval(b, t, x),
        Node::Pow(a, b) => {
            let base = eval(a, t, x);
            match b.as_ref() {
                Node::Num(e) if e.fract() == 0.0 && e.abs() < 64.0 => base.powi(*e as i32),
                other => base.powf(eval(other, t, x)),
            }
        }
        Node::Call(f, args) => {
            let v = |i: usize| eval(&args[i], t, x);
            match f {
                Func::Exp => v(0).exp(),
                Func::Log => v(0).ln(),
                Func::Atan => v(0).atan(),
                Func::Abs => v(0).abs(),
                Func::Min => args.iter().map(|a| eval(a, t, x)).fold(f64::INFINITY, f64::min),
                Func::Max => args.iter().map(|a| eval(a, t, x)).fold(f64::NEG_INFINITY, f64::max),
                Func::InBox => {
                    let inside = if args.len() == 2 {
                        let (lo, hi) = (v(0), v(1));
                        x.iter().all(|c| *c >= lo && *c <= hi)
                    } else {
                        x.iter().enumerate().all(|(k, c)| *c >= v(2 * k) && *c <= v(2 * k + 1))
                    };
                    inside as u8 as f64
                }
                Func::InBall => {
                    let rad = v(0);
                    let r2: f64 = if args.len() == 1 {
                        x.iter().map(|c| c * c).sum()
                    } else {
                        x.iter().enumerate().map(|(k, c)| (c - v(k + 1)).powi(2)).sum()
                    };
                    (r2 <= rad * rad) as u8 as f64
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let save = i;
                i += 1;
                if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
                    i += 1;
                }
                if i < bytes.len() && bytes[i].is_ascii_digit() {
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                } else {
                    i = save;
                }
            }
            let text = &src[start..i];
            let v = text
                .parse::<f64>()
                .map_err(|_| Error::Expr { pos: start, msg: format!("bad number {text:?}") })?;
            out.push((start, Tok::Num(v)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else if "+-*/^(),|".contains(c) {
            out.push((i, Tok::Op(c)));
            i += 1;
        } else {
            return Err(Error::Expr { pos: i, msg: format!("unexpected character {c:?}") });
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Tok)>,
    pos: usize,
    dim: usize,
    uses_time: bool,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map(|(p, _)| *p).unwrap_or(usize::MAX)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Expr { pos: self.offset(), msg: msg.into() })
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Op(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            self.err(format!("expected {c:?}"))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat('-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        let base = self.primary()?;
        if self.eat('^') {
            return Ok(Node::Pow(Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node> {
        let Some(tok) = self.peek().cloned() else {
            return self.err("unexpected end of expression");
        };
        match tok {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Node::Num(v))
            }
            Tok::Op('(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Op('|') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect('|')?;
                Ok(Node::Call(Func::Abs, vec![e]))
            }
            Tok::Ident(name) => {
                self.pos += 1;
                self.ident(&name)
            }
            Tok::Op(c) => self.err(format!("unexpected {c:?}")),
        }
    }

    fn ident(&mut self, name: &str) -> Result<Node> {
        let func = match name {
            "t" => {
                self.uses_time = true;
                return Ok(Node::Time);
            }
            "r" => return Ok(Node::Radius),
            "pi" => return Ok(Node::Num(std::f64::consts::PI)),
            "exp" => Func::Exp,
            "log" => Func::Log,
            "arctan" | "atan" => Func::Atan,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            "inbox" => Func::InBox,
            "inball" => Func::InBall,
            _ => {
                if let Some(k) = name.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
                    if k >= 1 && k <= self.dim {
                        return Ok(Node::Coord(k - 1));
                    }
                    self.pos -= 1;
                    return self.err(format!("coordinate {name} out of range for d = {}", self.dim));
                }
                self.pos -= 1;
                return self.err(format!("unknown identifier {name:?}"));
            }
        };
        self.expect('(')?;
        let mut args = vec![self.expr()?];
        while self.eat(',') {
            args.push(self.expr()?);
        }
        self.expect(')')?;
        let d = self.dim;
        let ok = match func {
            Func::Exp | Func::Log | Func::Atan | Func::Abs => args.len() == 1,
            Func::Min | Func::Max => args.len() >= 2,
            Func::InBox => args.len() == 2 || args.len() == 2 * d,
            Func::InBall => args.len() == 1 || args.len() == 1 + d,
        };
        if !ok {
            return self.err(format!("wrong number of arguments ({}) for {name}", args.len()));
        }
        Ok(Node::Call(func, args))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, x: &[f64]) -> f64 {
        Expr::parse(src, x.len()).unwrap().eval(0.5, x)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3", &[0.0]), 7.0);
        assert_eq!(ev("2 ^ 3 ^ 2", &[0.0]), 512.0);
        assert_eq!(ev("-2 ^ 2", &[0.0]), -4.0);
        assert_eq!(ev("(1 - 2) - 3", &[0.0]), -4.0);
        assert_eq!(ev("8 / 2 / 2", &[0.0]), 2.0);
    }

    #[test]
    fn variables_and_functions() {
        let x = [3.0, -4.0];
        assert_eq!(ev("r", &x), 5.0);
        assert_eq!(ev("|x2|", &x), 4.0);
        assert_eq!(ev("t * x1", &x), 1.5);
        assert_eq!(ev("max(x1, x2, 10)", &x), 10.0);
        assert_eq!(ev("min(x1, x2)", &x), -4.0);
        assert!((ev("arctan(1)", &x) - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        assert!((ev("exp(log(2))", &x) - 2.0).abs() < 1e-15);
        assert_eq!(ev("1e-3 * 2E+1", &x), 0.02);
    }

    #[test]
    fn indicators() {
        assert_eq!(ev("inbox(0, 1)", &[0.5, 0.5]), 1.0);
        assert_eq!(ev("inbox(0, 1)", &[0.5, 1.5]), 0.0);
        assert_eq!(ev("inbox(0, 1, 1, 2)", &[0.5, 1.5]), 1.0);
        assert_eq!(ev("inball(1)", &[0.6, 0.8]), 1.0);
        assert_eq!(ev("inball(1, 2, 0)", &[0.6, 0.0]), 0.0);
    }

    #[test]
    fn time_dependence_is_tracked() {
        assert!(Expr::parse("t + x1", 1).unwrap().uses_time());
        assert!(!Expr::parse("x1", 1).unwrap().uses_time());
        assert!(Expr::parse("x1", 1).unwrap().into_field().is_autonomous());
    }

    #[test]
    fn errors_carry_positions() {
        assert!(matches!(Expr::parse("x3", 2), Err(Error::Expr { pos: 0, .. })));
        assert!(matches!(Expr::parse("1 + ", 1), Err(Error::Expr { .. })));
        assert!(matches!(Expr::parse("foo(1)", 1), Err(Error::Expr { pos: 0, .. })));
        assert!(matches!(Expr::parse("exp(1, 2)", 1), Err(Error::Expr { .. })));
        assert!(matches!(Expr::parse("1 $ 2", 1), Err(Error::Expr { pos: 2, .. })));
        assert!(matches!(Expr::parse("(1 + 2", 1), Err(Error::Expr { .. })));
    }
}
