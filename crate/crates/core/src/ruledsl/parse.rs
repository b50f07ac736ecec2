//! Rule language grammar:
//!
//! ```text
//! rule    := or
//! or      := and ('or' and)*
//! and     := not ('and' not)*
//! not     := 'not' not | cmp
//! cmp     := sum (('<' | '<=' | '=' | '!=' | '>=' | '>') sum)?
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | primary
//! primary := number | 'true' | 'false'
//!          | 'desc' '(' name ')'
//!          | 'count' '(' pattern ')'
//!          | '(' rule ')'
//! ```
//!
//! `pattern` is the molgraph pattern language; its parentheses must balance.

use std::fmt;

use crate::molgraph::Pattern;

use super::{Phase, RuleError};

pub const MAX_DEPTH: usize = 32;
const MAX_NESTING: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Type {
    Real,
    Bool,
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Type::Real => "real",
            Type::Bool => "boolean",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Ne,
    Ge,
    Gt,
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Bool(bool),
    Desc { name: String, pos: usize },
    Count { pattern: Pattern, pos: usize },
    Neg(Box<Expr>),
    Arith { op: ArithOp, lhs: Box<Expr>, rhs: Box<Expr>, pos: usize },
    Cmp { op: CmpOp, lhs: Box<Expr>, rhs: Box<Expr> },
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
}

impl ArithOp {
    fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }
}

/// Fully parenthesized source that parses back to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Bool(b) => write!(f, "{b}"),
            Expr::Desc { name, .. } => write!(f, "desc({name})"),
            Expr::Count { pattern, .. } => write!(f, "count({})", pattern.source()),
            Expr::Neg(x) => write!(f, "(-{x})"),
            Expr::Not(x) => write!(f, "(not {x})"),
            Expr::Arith { op, lhs, rhs, .. } => write!(f, "({lhs} {} {rhs})", op.symbol()),
            Expr::Cmp { op, lhs, rhs } => write!(f, "({lhs} {} {rhs})", op.symbol()),
            Expr::And(a, b) => write!(f, "({a} and {b})"),
            Expr::Or(a, b) => write!(f, "({a} or {b})"),
        }
    }
}

impl Expr {
    pub fn depth(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Bool(_) | Expr::Desc { .. } | Expr::Count { .. } => 1,
            Expr::Neg(e) | Expr::Not(e) => 1 + e.depth(),
            Expr::Arith { lhs, rhs, .. } | Expr::Cmp { lhs, rhs, .. } => 1 + lhs.depth().max(rhs.depth()),
            Expr::And(a, b) | Expr::Or(a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    /// Static type, or the first type error found.
    pub fn type_of(&self) -> Result<Type, String> {
        let want = |e: &Expr, t: Type, ctx: &str| -> Result<(), String> {
            let got = e.type_of()?;
            if got == t {
                Ok(())
            } else {
                Err(format!("{ctx} expects {t} operands, found {got}"))
            }
        };
        match self {
            Expr::Num(_) | Expr::Desc { .. } | Expr::Count { .. } => Ok(Type::Real),
            Expr::Bool(_) => Ok(Type::Bool),
            Expr::Neg(e) => want(e, Type::Real, "negation").map(|_| Type::Real),
            Expr::Arith { lhs, rhs, .. } => {
                want(lhs, Type::Real, "arithmetic")?;
                want(rhs, Type::Real, "arithmetic")?;
                Ok(Type::Real)
            }
            Expr::Cmp { op, lhs, rhs } => {
                let ctx = format!("comparison '{}'", op.symbol());
                want(lhs, Type::Real, &ctx)?;
                want(rhs, Type::Real, &ctx)?;
                Ok(Type::Bool)
            }
            Expr::And(a, b) | Expr::Or(a, b) => {
                want(a, Type::Bool, "'and'/'or'")?;
                want(b, Type::Bool, "'and'/'or'")?;
                Ok(Type::Bool)
            }
            Expr::Not(e) => want(e, Type::Bool, "'not'").map(|_| Type::Bool),
        }
    }

    /// Descriptor names referenced anywhere in the tree.
    pub fn descriptors(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let Expr::Desc { name, .. } = e {
                out.push(name.as_str());
            }
        });
        out
    }

    fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Neg(e) | Expr::Not(e) => e.walk(f),
            Expr::Arith { lhs, rhs, .. } | Expr::Cmp { lhs, rhs, .. } => {
                lhs.walk(f);
                rhs.walk(f);
            }
            Expr::And(a, b) | Expr::Or(a, b) => {
                a.walk(f);
                b.walk(f);
            }
            _ => {}
        }
    }
}

/// Parses and type-checks `src`.
pub fn parse(src: &str) -> Result<(Expr, Type), RuleError> {
    if src.trim().is_empty() {
        return Err(RuleError::new(Phase::Parse, "empty rule", 0));
    }
    let mut p = Parser {
        s: src.as_bytes(),
        src,
        pos: 0,
        nesting: 0,
    };
    let expr = p.or()?;
    p.skip_ws();
    if p.pos < p.s.len() {
        return Err(p.err(format!("unexpected '{}'", p.rest_char())));
    }
    if expr.depth() > MAX_DEPTH {
        return Err(RuleError::new(
            Phase::Typecheck,
            format!("expression depth {} exceeds {MAX_DEPTH}", expr.depth()),
            0,
        ));
    }
    let ty = expr
        .type_of()
        .map_err(|m| RuleError::new(Phase::Typecheck, m, 0))?;
    Ok((expr, ty))
}

struct Parser<'a> {
    s: &'a [u8],
    src: &'a str,
    pos: usize,
    nesting: usize,
}

impl Parser<'_> {
    fn err(&self, msg: impl Into<String>) -> RuleError {
        RuleError::new(Phase::Parse, msg, self.pos)
    }

    fn rest_char(&self) -> char {
        self.src[self.pos..].chars().next().unwrap_or(' ')
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn eat(&mut self, tok: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(tok) {
            self.pos += tok.len();
            true
        } else {
            false
        }
    }

    /// Consumes `kw` only when it is a whole word.
    fn keyword(&mut self, kw: &str) -> bool {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        if !rest.starts_with(kw) {
            return false;
        }
        let next = rest[kw.len()..].chars().next();
        if next.is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
            return false;
        }
        self.pos += kw.len();
        true
    }

    fn expect(&mut self, tok: &str) -> Result<(), RuleError> {
        if self.eat(tok) {
            Ok(())
        } else {
            self.skip_ws();
            if self.pos >= self.s.len() {
                Err(self.err(format!("expected '{tok}', found end of input")))
            } else {
                Err(self.err(format!("expected '{tok}', found '{}'", self.rest_char())))
            }
        }
    }

    fn enter(&mut self) -> Result<(), RuleError> {
        self.nesting += 1;
        if self.nesting > MAX_NESTING {
            return Err(self.err("expression nested too deeply"));
        }
        Ok(())
    }

    fn or(&mut self) -> Result<Expr, RuleError> {
        let mut lhs = self.and()?;
        while self.keyword("or") {
            let rhs = self.and()?;
            lhs = Expr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Expr, RuleError> {
        let mut lhs = self.not()?;
        while self.keyword("and") {
            let rhs = self.not()?;
            lhs = Expr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn not(&mut self) -> Result<Expr, RuleError> {
        if self.keyword("not") {
            self.enter()?;
            let inner = self.not()?;
            self.nesting -= 1;
            return Ok(Expr::Not(Box::new(inner)));
        }
        self.cmp()
    }

    fn cmp(&mut self) -> Result<Expr, RuleError> {
        let lhs = self.sum()?;
        // two-character operators first
        let ops = [
            ("<=", CmpOp::Le),
            (">=", CmpOp::Ge),
            ("!=", CmpOp::Ne),
            ("<", CmpOp::Lt),
            (">", CmpOp::Gt),
            ("=", CmpOp::Eq),
        ];
        for (tok, op) in ops {
            if self.eat(tok) {
                let rhs = self.sum()?;
                return Ok(Expr::Cmp {
                    op,
                    lhs: Box::new(lhs),
                    rhs: Box::new(rhs),
                });
            }
        }
        Ok(lhs)
    }

    fn sum(&mut self) -> Result<Expr, RuleError> {
        let mut lhs = self.product()?;
        loop {
            self.skip_ws();
            let pos = self.pos;
            let op = if self.eat("+") {
                ArithOp::Add
            } else if self.eat("-") {
                ArithOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.product()?;
            lhs = Expr::Arith {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
                pos,
            };
        }
    }

    fn product(&mut self) -> Result<Expr, RuleError> {
        let mut lhs = self.unary()?;
        loop {
            self.skip_ws();
            let pos = self.pos;
            let op = if self.eat("*") {
                ArithOp::Mul
            } else if self.eat("/") {
                ArithOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Expr::Arith {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
                pos,
            };
        }
    }

    fn unary(&mut self) -> Result<Expr, RuleError> {
        if self.eat("-") {
            self.enter()?;
            let inner = self.unary()?;
            self.nesting -= 1;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, RuleError> {
        self.skip_ws();
        let start = self.pos;
        let Some(&c) = self.s.get(self.pos) else {
            return Err(self.err("unexpected end of input"));
        };
        if c.is_ascii_digit() || c == b'.' {
            return self.number();
        }
        if c == b'(' {
            self.pos += 1;
            self.enter()?;
            let inner = self.or()?;
            self.nesting -= 1;
            self.expect(")")?;
            return Ok(inner);
        }
        if self.keyword("true") {
            return Ok(Expr::Bool(true));
        }
        if self.keyword("false") {
            return Ok(Expr::Bool(false));
        }
        if self.keyword("desc") {
            self.expect("(")?;
            self.skip_ws();
            let name_start = self.pos;
            while self.pos < self.s.len() && (self.s[self.pos].is_ascii_alphanumeric() || self.s[self.pos] == b'_') {
                self.pos += 1;
            }
            if self.pos == name_start {
                return Err(self.err("expected descriptor name"));
            }
            let name = self.src[name_start..self.pos].to_string();
            self.expect(")")?;
            return Ok(Expr::Desc { name, pos: start });
        }
        if self.keyword("count") {
            self.expect("(")?;
            let body_start = self.pos;
            let mut depth = 0usize;
            while self.pos < self.s.len() {
                match self.s[self.pos] {
                    b'(' => depth += 1,
                    b')' if depth == 0 => break,
                    b')' => depth -= 1,
                    _ => {}
                }
                self.pos += 1;
            }
            if self.pos >= self.s.len() {
                return Err(RuleError::new(Phase::Parse, "unclosed 'count('", body_start));
            }
            let raw = &self.src[body_start..self.pos];
            let lead = raw.len() - raw.trim_start().len();
            let pattern = Pattern::parse(raw.trim()).map_err(|e| {
                RuleError::new(Phase::Parse, format!("bad pattern: {}", e.msg), body_start + lead + e.pos)
            })?;
            self.pos += 1;
            return Ok(Expr::Count { pattern, pos: start });
        }
        Err(self.err(format!("unexpected '{}'", self.rest_char())))
    }

    fn number(&mut self) -> Result<Expr, RuleError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            while p.pos < p.s.len() && p.s[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
        };
        digits(self);
        if self.s.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            digits(self);
        }
        if matches!(self.s.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.s.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            let exp_start = self.pos;
            digits(self);
            if self.pos == exp_start {
                self.pos = save;
            }
        }
        self.src[start..self.pos]
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Expr::Num)
            .ok_or_else(|| RuleError::new(Phase::Parse, "malformed number", start))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let (e, t) = parse("1 + 2 * 3 > 6 and not false").unwrap();
        assert_eq!(t, Type::Bool);
        let Expr::And(lhs, _) = e else { panic!() };
        let Expr::Cmp { lhs, .. } = *lhs else { panic!() };
        assert!(matches!(*lhs, Expr::Arith { op: ArithOp::Add, .. }));
    }

    #[test]
    fn malformed_position() {
        let err = parse("desc(logp) + * 2").unwrap_err();
        assert_eq!(err.phase, Phase::Parse);
        assert_eq!(err.pos, 13);
    }

    #[test]
    fn type_errors() {
        let err = parse("desc(logp) and true").unwrap_err();
        assert_eq!(err.phase, Phase::Typecheck);
        assert!(parse("not 1").is_err());
        assert!(parse("(1 < 2) + 1").is_err());
    }

    #[test]
    fn patterns_with_branches() {
        let (e, t) = parse("count(C(=O)[O;H1]) >= 1").unwrap();
        assert_eq!(t, Type::Bool);
        let Expr::Cmp { lhs, .. } = e else { panic!() };
        assert!(matches!(*lhs, Expr::Count { .. }));
        let err = parse("count(C(=O) > 1").unwrap_err();
        assert_eq!(err.phase, Phase::Parse);
        let err = parse("count([Xx]) > 1").unwrap_err();
        assert!(err.message.contains("bad pattern"));
    }

    #[test]
    fn depth_limit() {
        let deep = format!("{}1{}", "(".repeat(40), ")".repeat(40));
        assert!(parse(&deep).is_ok());
        let chain = vec!["1"; 40].join(" + ");
        assert_eq!(parse(&chain).unwrap_err().phase, Phase::Typecheck);
        let nested = format!("{}1", "-".repeat(300));
        assert!(parse(&nested).is_err());
    }

    #[test]
    fn keywords_need_boundaries() {
        assert!(parse("notable").is_err());
        assert!(parse("1e3 > 2.5E-1").is_ok());
    }

    #[test]
    fn display_round_trips() {
        for src in [
            "desc(logp) + 2 * -count([O;H1]c) >= 1 and not false",
            "(1 - 2) - 3 / desc(tpsa) < 0 or true",
            "count(C(=O)[O;H1]) != 0.25",
        ] {
            let (e, _) = parse(src).unwrap();
            let (back, _) = parse(&e.to_string()).unwrap_or_else(|err| panic!("{e}: {err:?}"));
            assert_eq!(back.to_string(), e.to_string());
        }
    }
}
