//! Executable heuristic rules: a small typed expression language over
//! descriptors and substructure counts.

mod ground;
mod parse;

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptors::{registry, DescriptorRegistry};
use crate::molgraph::{match_pattern_unique, Molecule};

pub use ground::{ground_rules, GroundingOutcome, PROBE_SMILES};
pub use parse::{ArithOp, CmpOp, Expr, Type, MAX_DEPTH};

pub const DEFAULT_MAX_RETRIES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Parse,
    Typecheck,
    Eval,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Parse => "parse",
            Phase::Typecheck => "typecheck",
            Phase::Eval => "eval",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{phase} error at {pos}: {message}")]
pub struct RuleError {
    pub phase: Phase,
    pub message: String,
    pub pos: usize,
}

impl RuleError {
    pub fn new(phase: Phase, message: impl Into<String>, pos: usize) -> Self {
        RuleError {
            phase,
            message: message.into(),
            pos,
        }
    }

    pub fn trace(&self, rule_id: &str) -> ErrorTrace {
        ErrorTrace {
            rule_id: rule_id.to_string(),
            phase: self.phase,
            message: self.message.clone(),
            position: self.pos,
        }
    }
}

/// A failure captured while grounding or evaluating a rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorTrace {
    pub rule_id: String,
    pub phase: Phase,
    pub message: String,
    pub position: usize,
}

impl fmt::Display for ErrorTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "rule {}: {} error at position {}: {}",
            self.rule_id, self.phase, self.position, self.message
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Real(f64),
    Bool(bool),
}

impl Value {
    pub fn as_real(self) -> Option<f64> {
        match self {
            Value::Real(v) => Some(v),
            Value::Bool(_) => None,
        }
    }

    pub fn as_bool(self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(b),
            Value::Real(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Real(v) => write!(f, "{v}"),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

/// A parsed, type-checked rule.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleAst {
    expr: Expr,
    ty: Type,
    source: String,
}

impl RuleAst {
    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn ty(&self) -> Type {
        self.ty
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, mol: &Molecule) -> Result<Value, RuleError> {
        self.eval_with(registry(), mol)
    }

    pub fn eval_with(&self, reg: &DescriptorRegistry, mol: &Molecule) -> Result<Value, RuleError> {
        let v = eval_expr(&self.expr, reg, mol)?;
        if let Value::Real(x) = v {
            if !x.is_finite() {
                return Err(RuleError::new(Phase::Eval, "result is not finite", 0));
            }
        }
        Ok(v)
    }
}

pub fn parse_rule(src: &str) -> Result<RuleAst, RuleError> {
    let (expr, ty) = parse::parse(src)?;
    Ok(RuleAst {
        expr,
        ty,
        source: src.trim().to_string(),
    })
}

pub fn eval_rule(rule: &RuleAst, mol: &Molecule) -> Result<Value, RuleError> {
    rule.eval(mol)
}

fn eval_expr(e: &Expr, reg: &DescriptorRegistry, mol: &Molecule) -> Result<Value, RuleError> {
    let real = |e: &Expr| -> Result<f64, RuleError> {
        Ok(eval_expr(e, reg, mol)?.as_real().expect("type-checked"))
    };
    let boolean = |e: &Expr| -> Result<bool, RuleError> {
        Ok(eval_expr(e, reg, mol)?.as_bool().expect("type-checked"))
    };
    Ok(match e {
        Expr::Num(v) => Value::Real(*v),
        Expr::Bool(b) => Value::Bool(*b),
        Expr::Desc { name, pos } => Value::Real(
            reg.compute(name, mol)
                .map_err(|err| RuleError::new(Phase::Eval, err.to_string(), *pos))?,
        ),
        Expr::Count { pattern, .. } => Value::Real(match_pattern_unique(mol, pattern).len() as f64),
        Expr::Neg(x) => Value::Real(-real(x)?),
        Expr::Arith { op, lhs, rhs, pos } => {
            let (a, b) = (real(lhs)?, real(rhs)?);
            Value::Real(match op {
                ArithOp::Add => a + b,
                ArithOp::Sub => a - b,
                ArithOp::Mul => a * b,
                ArithOp::Div => {
                    if b == 0.0 {
                        return Err(RuleError::new(Phase::Eval, "division by zero", *pos));
                    }
                    a / b
                }
            })
        }
        Expr::Cmp { op, lhs, rhs } => {
            let (a, b) = (real(lhs)?, real(rhs)?);
            Value::Bool(match op {
                CmpOp::Lt => a < b,
                CmpOp::Le => a <= b,
                CmpOp::Eq => a == b,
                CmpOp::Ne => a != b,
                CmpOp::Ge => a >= b,
                CmpOp::Gt => a > b,
            })
        }
        Expr::And(a, b) => Value::Bool(boolean(a)? && boolean(b)?),
        Expr::Or(a, b) => Value::Bool(boolean(a)? || boolean(b)?),
        Expr::Not(a) => Value::Bool(!boolean(a)?),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleKind {
    Feature,
    Heuristic,
}

impl RuleKind {
    pub fn for_type(ty: Type) -> Self {
        match ty {
            Type::Real => RuleKind::Feature,
            Type::Bool => RuleKind::Heuristic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub provider: String,
    pub retries: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub id: String,
    /// The natural-language sentence the rule was grounded from.
    pub sentence: String,
    pub ast: RuleAst,
    pub kind: RuleKind,
    pub weight: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleSetError {
    #[error("duplicate rule id '{0}'")]
    DuplicateId(String),
    #[error("rule '{id}' is declared {declared:?} but its expression is {actual}")]
    KindMismatch {
        id: String,
        declared: RuleKind,
        actual: Type,
    },
    #[error("rule '{id}': {err}")]
    Rule { id: String, err: RuleError },
    #[error("rule set file: {0}")]
    Io(String),
    #[error("rule set file: {0}")]
    Format(String),
}

/// Ordered rules with unique ids; the kind of each rule agrees with its type.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RuleSet {
    rules: Vec<Rule>,
}

impl RuleSet {
    pub fn new(rules: Vec<Rule>) -> Result<Self, RuleSetError> {
        let mut ids = BTreeSet::new();
        for r in &rules {
            if !ids.insert(r.id.as_str()) {
                return Err(RuleSetError::DuplicateId(r.id.clone()));
            }
            if RuleKind::for_type(r.ast.ty()) != r.kind {
                return Err(RuleSetError::KindMismatch {
                    id: r.id.clone(),
                    declared: r.kind,
                    actual: r.ast.ty(),
                });
            }
        }
        Ok(RuleSet { rules })
    }

    /// Convenience constructor from `(id, source)` pairs; kinds follow types.
    pub fn from_sources<I, A, B>(items: I) -> Result<Self, RuleSetError>
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: AsRef<str>,
    {
        let mut rules = Vec::new();
        for (id, src) in items {
            let id = id.into();
            let ast = parse_rule(src.as_ref()).map_err(|err| RuleSetError::Rule { id: id.clone(), err })?;
            rules.push(Rule {
                kind: RuleKind::for_type(ast.ty()),
                sentence: String::new(),
                id,
                ast,
                weight: 1.0,
                provenance: Provenance::default(),
            });
        }
        RuleSet::new(rules)
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.id == id)
    }

    pub fn heuristics(&self) -> impl Iterator<Item = &Rule> {
        self.rules.iter().filter(|r| r.kind == RuleKind::Heuristic)
    }

    pub fn features(&self) -> impl Iterator<Item = &Rule> {
        self.rules.iter().filter(|r| r.kind == RuleKind::Feature)
    }

    pub fn to_document(&self) -> RuleSetDocument {
        RuleSetDocument {
            schema: RULESET_SCHEMA.to_string(),
            rules: self
                .rules
                .iter()
                .map(|r| RuleRecord {
                    id: r.id.clone(),
                    kind: r.kind,
                    source: r.ast.source().to_string(),
                    sentence: r.sentence.clone(),
                    weight: r.weight,
                    provenance: r.provenance.clone(),
                })
                .collect(),
        }
    }

    pub fn from_document(doc: &RuleSetDocument) -> Result<Self, RuleSetError> {
        if doc.schema != RULESET_SCHEMA {
            return Err(RuleSetError::Format(format!("unsupported schema '{}'", doc.schema)));
        }
        let rules = doc
            .rules
            .iter()
            .map(|rec| {
                let ast = parse_rule(&rec.source).map_err(|err| RuleSetError::Rule {
                    id: rec.id.clone(),
                    err,
                })?;
                Ok(Rule {
                    id: rec.id.clone(),
                    sentence: rec.sentence.clone(),
                    ast,
                    kind: rec.kind,
                    weight: rec.weight,
                    provenance: rec.provenance.clone(),
                })
            })
            .collect::<Result<Vec<_>, RuleSetError>>()?;
        RuleSet::new(rules)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("rule set serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, RuleSetError> {
        let doc: RuleSetDocument = serde_json::from_str(text).map_err(|e| RuleSetError::Format(e.to_string()))?;
        Self::from_document(&doc)
    }

    pub fn save(&self, path: &Path) -> Result<(), RuleSetError> {
        std::fs::write(path, self.to_json()).map_err(|e| RuleSetError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, RuleSetError> {
        let text = std::fs::read_to_string(path).map_err(|e| RuleSetError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

pub const RULESET_SCHEMA: &str = "molsearch.ruleset/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSetDocument {
    pub schema: String,
    pub rules: Vec<RuleRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleRecord {
    pub id: String,
    pub kind: RuleKind,
    pub source: String,
    #[serde(default)]
    pub sentence: String,
    #[serde(default = "unit_weight")]
    pub weight: f64,
    #[serde(default)]
    pub provenance: Provenance,
}

fn unit_weight() -> f64 {
    1.0
}

/// Number of heuristic rules that evaluate to true on `mol`. Feature rules
/// are ignored; a rule that fails to evaluate counts as unsatisfied.
pub fn alignment_score(rules: &RuleSet, mol: &Molecule) -> usize {
    rules
        .heuristics()
        .filter(|r| match r.ast.eval(mol) {
            Ok(v) => v.as_bool() == Some(true),
            Err(e) => {
                log::debug!("rule {} failed: {e}", r.id);
                false
            }
        })
        .count()
}

/// Weighted variant: Σ wᵢ over satisfied heuristic rules.
pub fn weighted_alignment(rules: &RuleSet, mol: &Molecule) -> f64 {
    rules
        .heuristics()
        .filter(|r| matches!(r.ast.eval(mol), Ok(Value::Bool(true))))
        .map(|r| r.weight)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::parse_smiles;

    fn mol(s: &str) -> Molecule {
        parse_smiles(s).unwrap()
    }

    #[test]
    fn evaluates_descriptors_and_counts() {
        let mw = parse_rule("desc(molecular_weight)").unwrap();
        assert_eq!(mw.ty(), Type::Real);
        let benzene = mol("c1ccccc1");
        let want = registry().compute("molecular_weight", &benzene).unwrap();
        assert_eq!(mw.eval(&benzene).unwrap(), Value::Real(want));

        let phenol = parse_rule("count([O;H1]c) >= 1").unwrap();
        assert_eq!(phenol.eval(&mol("Oc1ccccc1")).unwrap(), Value::Bool(true));
        assert_eq!(phenol.eval(&mol("C")).unwrap(), Value::Bool(false));

        assert_eq!(parse_rule("1.0").unwrap().eval(&mol("C")).unwrap(), Value::Real(1.0));
        let no_donor = parse_rule("desc(hbd_count) = 0").unwrap();
        assert_eq!(no_donor.eval(&mol("CCO")).unwrap(), Value::Bool(false));
    }

    #[test]
    fn eval_errors_are_traces() {
        let r = parse_rule("desc(heavy_atom_count) / desc(ring_count)").unwrap();
        let err = r.eval(&mol("CCO")).unwrap_err();
        assert_eq!(err.phase, Phase::Eval);
        assert_eq!(err.pos, 23);
        let r = parse_rule("desc(no_such_thing) > 1").unwrap();
        assert_eq!(r.eval(&mol("CCO")).unwrap_err().pos, 0);
    }

    #[test]
    fn alignment_counts_true_heuristics() {
        let empty = RuleSet::default();
        assert_eq!(alignment_score(&empty, &mol("CCO")), 0);
        let rules = RuleSet::from_sources([
            ("a", "desc(hbd_count) >= 1"),
            ("b", "count(O) = 1"),
            ("c", "desc(logp)"),
            ("d", "1 / 0 > 1"),
            ("e", "true"),
        ])
        .unwrap();
        assert_eq!(alignment_score(&rules, &mol("CCO")), 3);
        assert_eq!(weighted_alignment(&rules, &mol("CCO")), 3.0);
    }

    #[test]
    fn rule_set_invariants() {
        assert!(matches!(
            RuleSet::from_sources([("a", "1"), ("a", "2")]),
            Err(RuleSetError::DuplicateId(_))
        ));
        let ast = parse_rule("1 > 0").unwrap();
        let bad = Rule {
            id: "x".into(),
            sentence: String::new(),
            ast,
            kind: RuleKind::Feature,
            weight: 1.0,
            provenance: Provenance::default(),
        };
        assert!(matches!(RuleSet::new(vec![bad]), Err(RuleSetError::KindMismatch { .. })));
    }

    #[test]
    fn document_round_trip() {
        let rules = RuleSet::from_sources([("r1", "desc(logp) + 1"), ("r2", "count(c) >= 6")]).unwrap();
        let back = RuleSet::from_json(&rules.to_json()).unwrap();
        assert_eq!(back, rules);
        assert!(RuleSet::from_json("{\"schema\":\"other\",\"rules\":[]}").is_err());
    }
}
