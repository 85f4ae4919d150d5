//! A small arithmetic language for writing drift and control fields in
//! configuration files.
//!
//! Grammar (highest precedence last):
//!
//! ```text
//! expr    := term (("+" | "-") term)*
//! term    := unary (("*" | "/") unary)*
//! unary   := "-" unary | power
//! power   := atom ("^" unary)?            // right associative
//! atom    := number | var | func "(" expr ("," expr)* ")" | "(" expr ")"
//! var     := "x1" .. "xn" | declared alias
//! func    := sin | cos | tan | exp | log | sqrt | abs | atan2
//! ```
//!
//! `-x1^2` parses as `-(x1^2)`. Numbers accept scientific notation (`1e-3`).
//! Evaluation is plain IEEE-754 double arithmetic; [`Expr::eval_dual`] also
//! returns the exact directional derivative along a seed vector.

mod eval;
mod lexer;
mod parser;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

pub use lexer::{tokenize, Token, TokenKind};
pub use parser::parse;

/// Errors raised while lexing, parsing or evaluating expressions.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("lexical error at offset {offset}: {message}")]
    Lex { offset: usize, message: String },
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("arity error at offset {offset}: {func} takes {expected} argument(s), got {found}")]
    Arity {
        offset: usize,
        func: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("domain error in `{expr}`: {reason}")]
    Domain { expr: String, reason: &'static str },
    #[error("expression references x{index} but only {dim} values were supplied")]
    Dimension { index: usize, dim: usize },
}

/// Names visible to the expression language: `x1..xn` plus optional aliases.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scope {
    dim: usize,
    aliases: BTreeMap<String, usize>,
}

impl Scope {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            aliases: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Declares `name` as an alias for the 1-based state index `index`.
    pub fn with_alias(mut self, name: &str, index: usize) -> Result<Self, ExprError> {
        let bad = |message: String| ExprError::Lex { offset: 0, message };
        if index == 0 || index > self.dim {
            return Err(bad(format!(
                "alias `{name}` points at x{index}, outside x1..x{}",
                self.dim
            )));
        }
        let valid = name
            .chars()
            .next()
            .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
            && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
        if !valid {
            return Err(bad(format!("`{name}` is not a valid identifier")));
        }
        if Func::from_name(name).is_some() || parse_state_name(name).is_some() {
            return Err(bad(format!("alias `{name}` shadows a reserved name")));
        }
        self.aliases.insert(name.to_string(), index - 1);
        Ok(self)
    }

    /// Resolves a variable name to a 0-based state index.
    pub fn resolve(&self, name: &str) -> Option<usize> {
        if let Some(&i) = self.aliases.get(name) {
            return Some(i);
        }
        match parse_state_name(name) {
            Some(k) if k >= 1 && k <= self.dim => Some(k - 1),
            _ => None,
        }
    }
}

fn parse_state_name(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('x')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
    Atan2,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "atan2" => Func::Atan2,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Atan2 => "atan2",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Atan2 => 2,
            _ => 1,
        }
    }
}

/// Expression tree. Variables hold 0-based state indices.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    /// Tokenizes and parses `text` against `scope`.
    pub fn parse(text: &str, scope: &Scope) -> Result<Expr, ExprError> {
        parse(&tokenize(text, scope)?)
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    /// True when the expression mentions state `index` (0-based).
    pub fn depends_on(&self, index: usize) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(i) => *i == index,
            Expr::Neg(e) => e.depends_on(index),
            Expr::Binary(_, a, b) => a.depends_on(index) || b.depends_on(index),
            Expr::Call(_, args) => args.iter().any(|a| a.depends_on(index)),
        }
    }

    /// Largest referenced 0-based index, if any variable appears.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Num(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(e) => e.max_var(),
            Expr::Binary(_, a, b) => a.max_var().max(b.max_var()),
            Expr::Call(_, args) => args.iter().filter_map(Expr::max_var).max(),
        }
    }
}

/// Canonical form: every compound subexpression and negative literal is
/// parenthesized, variables
/// print as `xk`, and numbers print in shortest round-trip form.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) if v.is_sign_negative() => write!(f, "({v:?})"),
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (k, a) in args.iter().enumerate() {
                    if k > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}
