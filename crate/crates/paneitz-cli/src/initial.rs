//! Initial data written as a small expression, e.g. `1 + 0.1*cos(s)` or
//! `1 + 0.05*zonal(2)`.
//!
//! Variables: `s` (circle coordinate), `t` (polar angle of the sphere factor),
//! `x1`..`xn` (torus coordinates). `cos(k*v)` and `sin(k*v)` take a numeric
//! multiple; `zonal(k)` is the degree-k zonal harmonic normalized to 1 at the
//! north pole.

use std::sync::Arc;

use paneitz::{Discretization, Field, ModelKind, Symmetry};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq)]
enum Expr {
    Num(f64),
    Cos(f64, String),
    Sin(f64, String),
    Zonal(usize),
    Neg(Box<Expr>),
    Sum(Box<Expr>, Box<Expr>),
    Diff(Box<Expr>, Box<Expr>),
    Prod(Box<Expr>, Box<Expr>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct InitialData {
    source: String,
    expr: Expr,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

fn tokenize(s: &str) -> Result<Vec<Tok>, String> {
    let mut out = Vec::new();
    let chars: Vec<char> = s.chars().collect();
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
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                i += 1;
                if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                    i += 1;
                }
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let text: String = chars[start..i].iter().collect();
            out.push(Tok::Num(
                text.parse().map_err(|_| format!("bad number {text:?}"))?,
            ));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "+-*()".contains(c) {
            out.push(Tok::Sym(c));
            i += 1;
        } else {
            return Err(format!("unexpected character {c:?}"));
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, c: char) -> Result<(), String> {
        match self.next() {
            Some(Tok::Sym(x)) if x == c => Ok(()),
            other => Err(format!("expected {c:?}, found {other:?}")),
        }
    }

    fn expr(&mut self) -> Result<Expr, String> {
        let mut lhs = self.term()?;
        while let Some(Tok::Sym(c @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if c == '+' {
                Expr::Sum(lhs.into(), rhs.into())
            } else {
                Expr::Diff(lhs.into(), rhs.into())
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, String> {
        let mut lhs = self.factor()?;
        while let Some(Tok::Sym('*')) = self.peek() {
            self.pos += 1;
            lhs = Expr::Prod(lhs.into(), self.factor()?.into());
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, String> {
        match self.next() {
            Some(Tok::Num(x)) => Ok(Expr::Num(x)),
            Some(Tok::Sym('-')) => Ok(Expr::Neg(self.factor()?.into())),
            Some(Tok::Sym('(')) => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(Tok::Ident(f)) => {
                self.expect('(')?;
                let e = match f.as_str() {
                    "cos" | "sin" => {
                        let (k, var) = match self.next() {
                            Some(Tok::Num(k)) => {
                                self.expect('*')?;
                                match self.next() {
                                    Some(Tok::Ident(v)) => (k, v),
                                    other => {
                                        return Err(format!("expected a variable, found {other:?}"))
                                    }
                                }
                            }
                            Some(Tok::Ident(v)) => (1.0, v),
                            other => return Err(format!("expected k*variable, found {other:?}")),
                        };
                        if f == "cos" {
                            Expr::Cos(k, var)
                        } else {
                            Expr::Sin(k, var)
                        }
                    }
                    "zonal" => match self.next() {
                        Some(Tok::Num(k)) if k >= 0.0 && k.fract() == 0.0 => {
                            Expr::Zonal(k as usize)
                        }
                        other => {
                            return Err(format!(
                                "zonal needs a non-negative integer degree, found {other:?}"
                            ))
                        }
                    },
                    other => return Err(format!("unknown function {other:?}")),
                };
                self.expect(')')?;
                Ok(e)
            }
            other => Err(format!("unexpected token {other:?}")),
        }
    }
}

/// Zonal harmonic of degree k on S^m: C_k^λ(cos θ)/C_k^λ(1), λ = (m-1)/2.
pub fn zonal_harmonic(m: usize, k: usize, theta: f64) -> f64 {
    let lam = (m as f64 - 1.0) / 2.0;
    let gegenbauer = |x: f64| {
        let (mut c0, mut c1) = (1.0, 2.0 * lam * x);
        if k == 0 {
            return c0;
        }
        for j in 2..=k {
            let jf = j as f64;
            let c2 = (2.0 * x * (jf + lam - 1.0) * c1 - (jf + 2.0 * lam - 2.0) * c0) / jf;
            c0 = c1;
            c1 = c2;
        }
        c1
    };
    gegenbauer(theta.cos()) / gegenbauer(1.0)
}

impl InitialData {
    pub fn parse(src: &str) -> Result<Self, String> {
        let mut p = Parser {
            toks: tokenize(src)?,
            pos: 0,
        };
        if p.toks.is_empty() {
            return Err("empty expression".into());
        }
        let expr = p.expr()?;
        if p.pos != p.toks.len() {
            return Err(format!("trailing input after token {}", p.pos));
        }
        Ok(Self {
            source: src.to_string(),
            expr,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Project the expression onto `disc`.
    pub fn field(&self, disc: &Arc<Discretization>) -> Result<Field, CliError> {
        let model = disc.model();
        let n = model.dim();
        let vars: Vec<String> = match (model.kind(), disc.symmetry()) {
            (ModelKind::RoundSphere, _) => vec!["t".into()],
            (ModelKind::CircleCrossSphere, Symmetry::CircleOnly) => vec!["s".into()],
            (ModelKind::CircleCrossSphere, _) => vec!["s".into(), "t".into()],
            (ModelKind::FlatTorus, _) => (1..=n).map(|i| format!("x{i}")).collect(),
        };
        let sphere_dim = if model.kind() == ModelKind::RoundSphere {
            n
        } else {
            n - 1
        };
        self.check(&self.expr, &vars)?;
        let expr = &self.expr;
        Ok(Field::from_fn(disc, |x| eval(expr, &vars, x, sphere_dim))?)
    }

    fn check(&self, e: &Expr, vars: &[String]) -> Result<(), CliError> {
        let missing = |v: &str| CliError::Range {
            key: "u0".into(),
            message: format!(
                "variable {v:?} is not a coordinate of this discretization (have {})",
                vars.join(", ")
            ),
        };
        match e {
            Expr::Num(_) => Ok(()),
            Expr::Cos(_, v) | Expr::Sin(_, v) => vars
                .iter()
                .any(|x| x == v)
                .then_some(())
                .ok_or_else(|| missing(v)),
            Expr::Zonal(_) => vars
                .iter()
                .any(|x| x == "t")
                .then_some(())
                .ok_or_else(|| missing("t")),
            Expr::Neg(a) => self.check(a, vars),
            Expr::Sum(a, b) | Expr::Diff(a, b) | Expr::Prod(a, b) => {
                self.check(a, vars)?;
                self.check(b, vars)
            }
        }
    }
}

fn eval(e: &Expr, vars: &[String], x: &[f64], sphere_dim: usize) -> f64 {
    let var = |v: &str| x[vars.iter().position(|n| n == v).expect("checked variable")];
    match e {
        Expr::Num(c) => *c,
        Expr::Cos(k, v) => (k * var(v)).cos(),
        Expr::Sin(k, v) => (k * var(v)).sin(),
        Expr::Zonal(k) => zonal_harmonic(sphere_dim, *k, var("t")),
        Expr::Neg(a) => -eval(a, vars, x, sphere_dim),
        Expr::Sum(a, b) => eval(a, vars, x, sphere_dim) + eval(b, vars, x, sphere_dim),
        Expr::Diff(a, b) => eval(a, vars, x, sphere_dim) - eval(b, vars, x, sphere_dim),
        Expr::Prod(a, b) => eval(a, vars, x, sphere_dim) * eval(b, vars, x, sphere_dim),
    }
}
