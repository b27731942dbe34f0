//! Tensor index notation: `A(i,j) = B(i,j,k) * c(k)`.
//!
//! Grammar: `name(vars) = term (+ term)*` with `term = access (* access)*`.
//! Index variables that appear only on the right-hand side are summed over.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Access {
    pub tensor: String,
    pub vars: Vec<String>,
}

impl Access {
    pub fn new(tensor: impl Into<String>, vars: &[&str]) -> Self {
        Access {
            tensor: tensor.into(),
            vars: vars.iter().map(|v| v.to_string()).collect(),
        }
    }

    pub fn mode_of(&self, var: &str) -> Option<usize> {
        self.vars.iter().position(|v| v == var)
    }
}

impl fmt::Display for Access {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.tensor, self.vars.join(","))
    }
}

/// A validated assignment in sum-of-products form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TinStatement {
    lhs: Access,
    terms: Vec<Vec<Access>>,
    reduction_vars: Vec<String>,
}

impl TinStatement {
    pub fn new(lhs: Access, terms: Vec<Vec<Access>>) -> Result<Self> {
        validate(&lhs, &terms)?;
        Ok(Self::build(lhs, terms))
    }

    fn build(lhs: Access, terms: Vec<Vec<Access>>) -> Self {
        let mut reduction_vars = Vec::new();
        for a in terms.iter().flatten() {
            for v in &a.vars {
                if !lhs.vars.contains(v) && !reduction_vars.contains(v) {
                    reduction_vars.push(v.clone());
                }
            }
        }
        TinStatement {
            lhs,
            terms,
            reduction_vars,
        }
    }

    /// `T'(vars) = T(vars)`: the statement whose only job is to place `T`.
    pub fn identity(tensor: &str, vars: Vec<String>) -> Self {
        let rhs = Access {
            tensor: tensor.to_string(),
            vars: vars.clone(),
        };
        let lhs = Access {
            tensor: format!("{tensor}'"),
            vars,
        };
        Self::build(lhs, vec![vec![rhs]])
    }

    pub fn lhs(&self) -> &Access {
        &self.lhs
    }

    pub fn output(&self) -> &str {
        &self.lhs.tensor
    }

    pub fn terms(&self) -> &[Vec<Access>] {
        &self.terms
    }

    pub fn reduction_vars(&self) -> &[String] {
        &self.reduction_vars
    }

    pub fn is_reduction(&self, var: &str) -> bool {
        self.reduction_vars.iter().any(|v| v == var)
    }

    /// Right-hand-side accesses in order of appearance.
    pub fn inputs(&self) -> impl Iterator<Item = &Access> {
        self.terms.iter().flatten()
    }

    /// Every tensor named in the statement, output first.
    pub fn tensors(&self) -> Vec<&str> {
        std::iter::once(self.lhs.tensor.as_str())
            .chain(self.inputs().map(|a| a.tensor.as_str()))
            .collect()
    }

    pub fn access(&self, tensor: &str) -> Option<&Access> {
        std::iter::once(&self.lhs)
            .chain(self.inputs())
            .find(|a| a.tensor == tensor)
    }

    /// Index variables in order of first appearance on the right-hand side.
    /// This is the default loop order.
    pub fn vars(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for a in self.inputs() {
            for v in &a.vars {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
        }
        out
    }

    /// Extent of every index variable, taken from the dimensions of the
    /// tensors that it indexes. Tensors missing from `dims` are skipped.
    pub fn var_extents(&self, dims: &BTreeMap<String, Vec<usize>>) -> Result<BTreeMap<String, usize>> {
        let mut out: BTreeMap<String, usize> = BTreeMap::new();
        for a in std::iter::once(&self.lhs).chain(self.inputs()) {
            let Some(d) = dims.get(&a.tensor) else { continue };
            if d.len() != a.vars.len() {
                return Err(Error::Shape(format!(
                    "{} is accessed with {} indices but has order {}",
                    a.tensor,
                    a.vars.len(),
                    d.len()
                )));
            }
            for (v, &n) in a.vars.iter().zip(d) {
                if let Some(&prev) = out.get(v) {
                    if prev != n {
                        return Err(Error::Shape(format!(
                            "index variable {v} ranges over both {prev} and {n}"
                        )));
                    }
                }
                out.insert(v.clone(), n);
            }
        }
        for v in self.vars() {
            if !out.contains_key(&v) {
                return Err(Error::validation(format!("no dimension known for index variable {v}")));
            }
        }
        Ok(out)
    }
}

fn validate(lhs: &Access, terms: &[Vec<Access>]) -> Result<()> {
    if terms.is_empty() || terms.iter().any(Vec::is_empty) {
        return Err(Error::validation("empty right-hand side"));
    }
    let all: Vec<&Access> = std::iter::once(lhs).chain(terms.iter().flatten()).collect();
    for (k, a) in all.iter().enumerate() {
        if a.vars.is_empty() {
            return Err(Error::validation(format!("{} has no index variables", a.tensor)));
        }
        for (i, v) in a.vars.iter().enumerate() {
            if a.vars[..i].contains(v) {
                return Err(Error::validation(format!(
                    "{} repeats index variable {v}",
                    a.tensor
                )));
            }
        }
        if all[..k].iter().any(|b| b.tensor == a.tensor) {
            return Err(Error::validation(format!(
                "tensor {} appears more than once",
                a.tensor
            )));
        }
    }
    for v in &lhs.vars {
        if !terms.iter().flatten().any(|a| a.vars.contains(v)) {
            return Err(Error::validation(format!(
                "left-hand side variable {v} does not appear on the right-hand side"
            )));
        }
    }
    fn var_set(t: &[Access]) -> Vec<&String> {
        let mut s: Vec<&String> = t.iter().flat_map(|a| &a.vars).collect();
        s.sort();
        s.dedup();
        s
    }
    let first = var_set(&terms[0]);
    if terms.iter().any(|t| var_set(t) != first) {
        return Err(Error::Unsupported(
            "every term of a sum must use the same index variables".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    LParen,
    RParen,
    Comma,
    Eq,
    Plus,
    Star,
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        match c {
            _ if c.is_whitespace() => {}
            '(' => out.push((col, Tok::LParen)),
            ')' => out.push((col, Tok::RParen)),
            ',' => out.push((col, Tok::Comma)),
            '=' => out.push((col, Tok::Eq)),
            '+' => out.push((col, Tok::Plus)),
            '*' | '·' => out.push((col, Tok::Star)),
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i + 1 < chars.len() && (chars[i + 1].is_ascii_alphanumeric() || chars[i + 1] == '_') {
                    i += 1;
                }
                out.push((col, Tok::Ident(chars[start..=i].iter().collect())));
            }
            _ => return Err(Error::parse(col, format!("unexpected character '{c}'"))),
        }
        i += 1;
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(_, t)| t)
    }

    fn column(&self) -> usize {
        self.toks.get(self.at).map(|(c, _)| *c).unwrap_or(self.end)
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<()> {
        if self.peek() == Some(&want) {
            self.at += 1;
            Ok(())
        } else {
            Err(Error::parse(self.column(), format!("expected {what}")))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.at += 1;
                Ok(s)
            }
            _ => Err(Error::parse(self.column(), format!("expected {what}"))),
        }
    }

    fn access(&mut self) -> Result<Access> {
        let tensor = self.ident("tensor name")?;
        self.expect(Tok::LParen, "'('")?;
        let mut vars = vec![self.ident("index variable")?];
        while self.peek() == Some(&Tok::Comma) {
            self.at += 1;
            vars.push(self.ident("index variable")?);
        }
        self.expect(Tok::RParen, "')'")?;
        Ok(Access { tensor, vars })
    }
}

impl FromStr for TinStatement {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut p = Parser {
            toks: lex(text)?,
            at: 0,
            end: text.chars().count() + 1,
        };
        let lhs = p.access()?;
        p.expect(Tok::Eq, "'='")?;
        let mut terms = vec![vec![p.access()?]];
        loop {
            match p.peek() {
                None => break,
                Some(Tok::Plus) => {
                    p.at += 1;
                    terms.push(vec![p.access()?]);
                }
                Some(Tok::Star) => {
                    p.at += 1;
                    let a = p.access()?;
                    terms.last_mut().expect("non-empty").push(a);
                }
                Some(_) => return Err(Error::parse(p.column(), "expected '+', '*' or end of input")),
            }
        }
        TinStatement::new(lhs, terms)
    }
}

/// Parse a tensor index notation statement.
pub fn parse_tin(text: &str) -> Result<TinStatement> {
    text.parse()
}

impl fmt::Display for TinStatement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = ", self.lhs)?;
        for (k, term) in self.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            let parts: Vec<String> = term.iter().map(|a| a.to_string()).collect();
            write!(f, "{}", parts.join(" * "))?;
        }
        Ok(())
    }
}
