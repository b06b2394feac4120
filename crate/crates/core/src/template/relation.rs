//! Cross-parameter constraints such as `p1 <= p2` or `0 <= p1 < p2 - 1`.
//!
//! Grammar (integers only, `len(name)` lifts a string parameter):
//!
//! ```text
//! relation := expr (cmp expr)+          chained comparisons are conjunctions
//! cmp      := "<=" | "<" | ">=" | ">" | "==" | "=" | "!="
//! expr     := term (("+" | "-") term)*
//! term     := unary (("*" | "%") unary)*
//! unary    := "-" unary | atom
//! atom     := integer | name | "len" "(" name ")" | "(" expr ")"
//! ```

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{ParameterValuation, Value};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationError(pub String);

impl fmt::Display for RelationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for RelationError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cmp {
    Le,
    Lt,
    Ge,
    Gt,
    Eq,
    Ne,
}

impl Cmp {
    fn holds(self, a: i128, b: i128) -> bool {
        match self {
            Cmp::Le => a <= b,
            Cmp::Lt => a < b,
            Cmp::Ge => a >= b,
            Cmp::Gt => a > b,
            Cmp::Eq => a == b,
            Cmp::Ne => a != b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Expr {
    Lit(i128),
    Var(String),
    Len(String),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Rem(Box<Expr>, Box<Expr>),
}

impl Expr {
    fn eval(&self, v: &ParameterValuation) -> Result<i128, RelationError> {
        let overflow = || RelationError("arithmetic overflow".into());
        Ok(match self {
            Expr::Lit(n) => *n,
            Expr::Var(name) => match v.get(name) {
                Some(Value::Int(n)) => i128::from(*n),
                Some(Value::Str(_)) => {
                    return Err(RelationError(format!(
                        "string parameter `{name}` used as a number; use len({name})"
                    )))
                }
                None => return Err(RelationError(format!("no value for `{name}`"))),
            },
            Expr::Len(name) => match v.get(name) {
                Some(Value::Str(s)) => s.chars().count() as i128,
                Some(Value::Int(_)) => {
                    return Err(RelationError(format!("len() applied to integer `{name}`")))
                }
                None => return Err(RelationError(format!("no value for `{name}`"))),
            },
            Expr::Neg(e) => e.eval(v)?.checked_neg().ok_or_else(overflow)?,
            Expr::Add(a, b) => a.eval(v)?.checked_add(b.eval(v)?).ok_or_else(overflow)?,
            Expr::Sub(a, b) => a.eval(v)?.checked_sub(b.eval(v)?).ok_or_else(overflow)?,
            Expr::Mul(a, b) => a.eval(v)?.checked_mul(b.eval(v)?).ok_or_else(overflow)?,
            Expr::Rem(a, b) => {
                let d = b.eval(v)?;
                if d == 0 {
                    return Err(RelationError("modulo by zero".into()));
                }
                a.eval(v)?.rem_euclid(d)
            }
        })
    }

    fn names(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Lit(_) => {}
            Expr::Var(n) | Expr::Len(n) => {
                out.insert(n.clone());
            }
            Expr::Neg(e) => e.names(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Rem(a, b) => {
                a.names(out);
                b.names(out);
            }
        }
    }
}

/// A parsed constraint; keeps its source text for display and round-tripping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relation {
    source: String,
    first: Expr,
    rest: Vec<(Cmp, Expr)>,
}

impl Relation {
    pub fn parse(source: &str) -> Result<Self, RelationError> {
        let tokens = tokenize(source)?;
        let mut p = Parser { tokens, pos: 0 };
        let first = p.expr()?;
        let mut rest = Vec::new();
        while let Some(cmp) = p.cmp() {
            rest.push((cmp, p.expr()?));
        }
        if rest.is_empty() {
            return Err(RelationError(format!(
                "`{source}` has no comparison operator"
            )));
        }
        if p.pos != p.tokens.len() {
            return Err(RelationError(format!(
                "unexpected `{}` in `{source}`",
                p.tokens[p.pos]
            )));
        }
        Ok(Self {
            source: source.trim().to_string(),
            first,
            rest,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Parameter names the relation reads.
    pub fn names(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.first.names(&mut out);
        for (_, e) in &self.rest {
            e.names(&mut out);
        }
        out
    }

    pub fn holds(&self, v: &ParameterValuation) -> Result<bool, RelationError> {
        let mut lhs = self.first.eval(v)?;
        for (cmp, e) in &self.rest {
            let rhs = e.eval(v)?;
            if !cmp.holds(lhs, rhs) {
                return Ok(false);
            }
            lhs = rhs;
        }
        Ok(true)
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Serialize for Relation {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for Relation {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Relation::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Int(i128),
    Ident(String),
    Op(&'static str),
    LParen,
    RParen,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Int(n) => write!(f, "{n}"),
            Tok::Ident(s) => f.write_str(s),
            Tok::Op(s) => f.write_str(s),
            Tok::LParen => f.write_str("("),
            Tok::RParen => f.write_str(")"),
        }
    }
}

fn tokenize(src: &str) -> Result<Vec<Tok>, RelationError> {
    const OPS: [&str; 11] = ["<=", ">=", "==", "!=", "<", ">", "=", "+", "-", "*", "%"];
    let mut out = Vec::new();
    let bytes = src.as_bytes();
    let mut i = 0;
    'outer: while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let n = src[start..i]
                .parse::<i128>()
                .map_err(|e| RelationError(e.to_string()))?;
            out.push(Tok::Int(n));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Tok::Ident(src[start..i].to_string()));
            continue;
        }
        match c {
            '(' => {
                out.push(Tok::LParen);
                i += 1;
                continue;
            }
            ')' => {
                out.push(Tok::RParen);
                i += 1;
                continue;
            }
            _ => {}
        }
        for op in OPS {
            if src[i..].starts_with(op) {
                out.push(Tok::Op(op));
                i += op.len();
                continue 'outer;
            }
        }
        return Err(RelationError(format!("unexpected character `{c}` in `{src}`")));
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn eat_op(&mut self, ops: &[&str]) -> Option<&'static str> {
        if let Some(Tok::Op(op)) = self.peek() {
            if ops.contains(op) {
                let op = *op;
                self.pos += 1;
                return Some(op);
            }
        }
        None
    }

    fn cmp(&mut self) -> Option<Cmp> {
        self.eat_op(&["<=", "<", ">=", ">", "==", "=", "!="])
            .map(|op| match op {
                "<=" => Cmp::Le,
                "<" => Cmp::Lt,
                ">=" => Cmp::Ge,
                ">" => Cmp::Gt,
                "!=" => Cmp::Ne,
                _ => Cmp::Eq,
            })
    }

    fn expr(&mut self) -> Result<Expr, RelationError> {
        let mut lhs = self.term()?;
        while let Some(op) = self.eat_op(&["+", "-"]) {
            let rhs = self.term()?;
            lhs = if op == "+" {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, RelationError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.eat_op(&["*", "%"]) {
            let rhs = self.unary()?;
            lhs = if op == "*" {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Rem(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, RelationError> {
        if self.eat_op(&["-"]).is_some() {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, RelationError> {
        let tok = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| RelationError("unexpected end of relation".into()))?;
        self.pos += 1;
        match tok {
            Tok::Int(n) => Ok(Expr::Lit(n)),
            Tok::Ident(name) if name == "len" && self.peek() == Some(&Tok::LParen) => {
                self.pos += 1;
                let arg = match self.tokens.get(self.pos) {
                    Some(Tok::Ident(a)) => a.clone(),
                    _ => return Err(RelationError("len() expects a parameter name".into())),
                };
                self.pos += 1;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(RelationError("missing `)` after len(".into()));
                }
                self.pos += 1;
                Ok(Expr::Len(arg))
            }
            Tok::Ident(name) => Ok(Expr::Var(name)),
            Tok::LParen => {
                let e = self.expr()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(RelationError("missing `)`".into()));
                }
                self.pos += 1;
                Ok(e)
            }
            other => Err(RelationError(format!("unexpected `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn val(pairs: &[(&str, Value)]) -> ParameterValuation {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect()
    }

    #[test]
    fn simple_and_chained() {
        let r = Relation::parse("p1 <= p2").unwrap();
        assert!(r.holds(&val(&[("p1", Value::Int(1)), ("p2", Value::Int(8))])).unwrap());
        assert!(!r.holds(&val(&[("p1", Value::Int(5)), ("p2", Value::Int(3))])).unwrap());

        let chain = Relation::parse("0 <= p1 < p2 - 1").unwrap();
        assert!(chain.holds(&val(&[("p1", Value::Int(0)), ("p2", Value::Int(2))])).unwrap());
        assert!(!chain.holds(&val(&[("p1", Value::Int(0)), ("p2", Value::Int(1))])).unwrap());
    }

    #[test]
    fn names_and_len() {
        let r = Relation::parse("len(s) + 2 * k % 3 != -1").unwrap();
        let names: Vec<_> = r.names().into_iter().collect();
        assert_eq!(names, vec!["k".to_string(), "s".to_string()]);
        let v = val(&[("s", Value::Str("abc".into())), ("k", Value::Int(4))]);
        // 3 + (2*4 % 3) = 3 + 2 = 5
        assert!(r.holds(&v).unwrap());
    }

    #[test]
    fn single_equals_is_equality() {
        let r = Relation::parse("p1 = p1").unwrap();
        assert!(r.holds(&val(&[("p1", Value::Int(1))])).unwrap());
    }

    #[test]
    fn rejects_garbage() {
        assert!(Relation::parse("p1").is_err());
        assert!(Relation::parse("p1 <= ").is_err());
        assert!(Relation::parse("p1 <= p2 )").is_err());
        assert!(Relation::parse("p1 & p2").is_err());
    }

    #[test]
    fn type_errors_surface() {
        let r = Relation::parse("s < 3").unwrap();
        assert!(r.holds(&val(&[("s", Value::Str("x".into()))])).is_err());
    }
}
