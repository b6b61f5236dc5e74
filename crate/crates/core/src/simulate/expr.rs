//! A small expression language for variance and volatility profiles.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | primary
//! primary := number | 's' | 't' | 'r' | 'pi'
//!          | ('sqrt' | 'exp' | 'cos') '(' expr ')'
//!          | ('ind' | 'indicator') '(' expr cmp expr ')'
//!          | '(' expr ')'
//! cmp     := '<=' | '<' | '>=' | '>'
//! ```
//!
//! `r` is an alias of `t`. Indicators evaluate to 1 or 0.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Sqrt,
    Exp,
    Cos,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Cmp {
    Le,
    Lt,
    Ge,
    Gt,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    S,
    T,
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
    Ind(Cmp, Box<Node>, Box<Node>),
}

impl Node {
    fn eval(&self, s: f64, t: f64) -> f64 {
        match self {
            Node::Const(c) => *c,
            Node::S => s,
            Node::T => t,
            Node::Neg(x) => -x.eval(s, t),
            Node::Bin(op, a, b) => {
                let (a, b) = (a.eval(s, t), b.eval(s, t));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                }
            }
            Node::Call(f, x) => {
                let x = x.eval(s, t);
                match f {
                    Func::Sqrt => x.sqrt(),
                    Func::Exp => x.exp(),
                    Func::Cos => x.cos(),
                }
            }
            Node::Ind(c, a, b) => {
                let (a, b) = (a.eval(s, t), b.eval(s, t));
                let hit = match c {
                    Cmp::Le => a <= b,
                    Cmp::Lt => a < b,
                    Cmp::Ge => a >= b,
                    Cmp::Gt => a > b,
                };
                if hit {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn uses_t(&self) -> bool {
        match self {
            Node::T => true,
            Node::Const(_) | Node::S => false,
            Node::Neg(x) | Node::Call(_, x) => x.uses_t(),
            Node::Bin(_, a, b) | Node::Ind(_, a, b) => a.uses_t() || b.uses_t(),
        }
    }

    fn uses_s(&self) -> bool {
        match self {
            Node::S => true,
            Node::Const(_) | Node::T => false,
            Node::Neg(x) | Node::Call(_, x) => x.uses_s(),
            Node::Bin(_, a, b) | Node::Ind(_, a, b) => a.uses_s() || b.uses_s(),
        }
    }
}

/// A parsed profile expression in the variables `s` and `t`.
#[derive(Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.source)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Expr {
    pub fn parse(source: &str) -> Result<Self> {
        let tokens = tokenize(source)?;
        let mut parser = Parser { tokens, pos: 0 };
        let root = parser.expr()?;
        if parser.pos != parser.tokens.len() {
            return Err(Error::Expression(format!(
                "unexpected {} in {source:?}",
                parser.tokens[parser.pos]
            )));
        }
        Ok(Expr {
            source: source.trim().to_string(),
            root,
        })
    }

    pub fn eval(&self, s: f64, t: f64) -> f64 {
        self.root.eval(s, t)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// True when the expression ignores `t`.
    pub fn is_time_invariant(&self) -> bool {
        !self.root.uses_t()
    }

    /// True when the expression ignores `s`.
    pub fn is_space_invariant(&self) -> bool {
        !self.root.uses_s()
    }
}

impl TryFrom<String> for Expr {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Expr::parse(&s)
    }
}

impl From<Expr> for String {
    fn from(e: Expr) -> String {
        e.source
    }
}

impl Serialize for Expr {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(de)?;
        Expr::parse(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(&'static str),
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Num(x) => write!(f, "number {x}"),
            Token::Ident(s) => write!(f, "identifier {s:?}"),
            Token::Op(o) => write!(f, "{o:?}"),
        }
    }
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            // exponent part
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text: String = chars[start..i].iter().collect();
            let value = text
                .parse::<f64>()
                .map_err(|_| Error::Expression(format!("bad number {text:?}")))?;
            out.push(Token::Num(value));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else {
            let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
            let op = match two.as_str() {
                "<=" => Some("<="),
                ">=" => Some(">="),
                _ => None,
            };
            if let Some(op) = op {
                out.push(Token::Op(op));
                i += 2;
                continue;
            }
            let op = match c {
                '+' => "+",
                '-' => "-",
                '*' => "*",
                '/' => "/",
                '(' => "(",
                ')' => ")",
                '<' => "<",
                '>' => ">",
                _ => return Err(Error::Expression(format!("unexpected character {c:?}"))),
            };
            out.push(Token::Op(op));
            i += 1;
        }
    }
    if out.is_empty() {
        return Err(Error::Expression("empty expression".into()));
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek_op(&self) -> Option<&'static str> {
        match self.tokens.get(self.pos) {
            Some(Token::Op(o)) => Some(o),
            _ => None,
        }
    }

    fn expect(&mut self, op: &'static str) -> Result<()> {
        if self.peek_op() == Some(op) {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::Expression(match self.tokens.get(self.pos) {
                Some(t) => format!("expected {op:?}, found {t}"),
                None => format!("expected {op:?} at end of input"),
            }))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(op) = self.peek_op() {
            let op = match op {
                "+" => BinOp::Add,
                "-" => BinOp::Sub,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.peek_op() {
            let op = match op {
                "*" => BinOp::Mul,
                "/" => BinOp::Div,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        if self.peek_op() == Some("-") {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.peek_op() == Some("+") {
            self.pos += 1;
            return self.unary();
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Node> {
        let token = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| Error::Expression("unexpected end of input".into()))?;
        self.pos += 1;
        match token {
            Token::Num(x) => Ok(Node::Const(x)),
            Token::Op("(") => {
                let inner = self.expr()?;
                self.expect(")")?;
                Ok(inner)
            }
            Token::Op(o) => Err(Error::Expression(format!("unexpected {o:?}"))),
            Token::Ident(name) => match name.as_str() {
                "s" => Ok(Node::S),
                "t" | "r" => Ok(Node::T),
                "pi" => Ok(Node::Const(std::f64::consts::PI)),
                "sqrt" | "exp" | "cos" => {
                    let f = match name.as_str() {
                        "sqrt" => Func::Sqrt,
                        "exp" => Func::Exp,
                        _ => Func::Cos,
                    };
                    self.expect("(")?;
                    let arg = self.expr()?;
                    self.expect(")")?;
                    Ok(Node::Call(f, Box::new(arg)))
                }
                "ind" | "indicator" => {
                    self.expect("(")?;
                    let lhs = self.expr()?;
                    let cmp = match self.peek_op() {
                        Some("<=") => Cmp::Le,
                        Some("<") => Cmp::Lt,
                        Some(">=") => Cmp::Ge,
                        Some(">") => Cmp::Gt,
                        _ => {
                            return Err(Error::Expression(
                                "indicator needs a comparison (<=, <, >=, >)".into(),
                            ))
                        }
                    };
                    self.pos += 1;
                    let rhs = self.expr()?;
                    self.expect(")")?;
                    Ok(Node::Ind(cmp, Box::new(lhs), Box::new(rhs)))
                }
                other => Err(Error::Expression(format!("unknown identifier {other:?}"))),
            },
        }
    }
}
