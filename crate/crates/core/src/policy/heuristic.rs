//! Offline provider built from keyword tables and the transform library.

use std::hash::Hasher;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use twox_hash::XxHash64;

use crate::descriptors::registry;
use crate::molgraph::{canonical_smiles, parse_smiles, transform_library};
use crate::ruledsl::{parse_rule, ArithOp, Expr, Phase};
use crate::tasks::{Metric, Objective, Property, TaskSpec};

use super::{ActionProposal, PolicyError, PolicyProvider, PolicyRequest, RequestContext, SearchState, TransformRef};

/// Keyword groups in priority order, each with the real-valued expression it
/// grounds to and the threshold used for "presence of" phrasing.
const GROUNDINGS: &[(&[&str], &str, u32)] = &[
    (&["steric hindrance"], "desc(polar_steric_hindrance)", 1),
    (&["can ionize", "ionizable", "ionisable", "pka"], "desc(ionizable_group_count)", 1),
    (&["multiple functional group"], "desc(functional_group_count)", 2),
    (&["polar functional group", "polar group"], "desc(polar_group_count)", 1),
    (&["hydrophilic substituent"], "count([O;H1]) + count([N;H2])", 1),
    (&["hydrophobic region", "hydrophobic carbon"], "desc(hydrophobic_carbon_count)", 1),
    (&["molecular weight"], "desc(molecular_weight)", 1),
    (&["hydrogen bond donor", "h-bond donor"], "desc(hbd_count)", 1),
    (&["hydrogen bond acceptor", "h-bond acceptor"], "desc(hba_count)", 1),
    (&["ionic group", "charged atom", "charged group"], "desc(charged_atom_count)", 1),
    (&["branching"], "desc(branching_degree)", 1),
    (&["aromatic ring"], "desc(aromatic_ring_count)", 1),
    (&["overall charge", "net charge", "formal charge"], "desc(formal_charge_total)", 1),
    (&["logp", "partition coefficient"], "desc(logp)", 1),
    (&["polar surface", "tpsa"], "desc(tpsa)", 1),
    (&["rotatable"], "desc(rotatable_bonds)", 1),
    (&["drug-likeness", "druglikeness", "qed"], "desc(qed)", 1),
    (&["structural alert"], "desc(qed_alerts)", 1),
    (&["heavy atom"], "desc(heavy_atom_count)", 1),
    (&["carbon atom"], "desc(carbon_count)", 1),
    (&["fluorine"], "desc(fluorine_count)", 1),
    (&["halogen"], "desc(halogen_count)", 1),
    (&["sulfur", "phosphorus"], "desc(sulfur_phosphorus_count)", 1),
    (&["symmetry"], "desc(symmetry_classes) / desc(heavy_atom_count)", 1),
    (&["sp3"], "desc(fraction_csp3)", 1),
    (&["functional group"], "desc(functional_group_count)", 1),
    (&["phenolic hydroxyl", "phenol"], "count([O;H1]c)", 1),
    (&["nitro"], "count([N;+1](=O)[O;-1])", 1),
    (&["lipophilic alkyl", "alkyl substituent"], "count([C;H3]c) + count([C;H3][C;A;H1])", 1),
    (&["hydroxyl"], "count([O;H1])", 1),
    (&["amide n-h", "amide nh", "secondary amide"], "count([N;H1]C=O)", 1),
    (&["carbonyl"], "count([C]=O)", 1),
    (&["cyclic structure", "ring"], "desc(ring_count)", 1),
];

/// Rule source for a sentence, or `None` when no keyword applies.
pub(crate) fn ground_sentence(sentence: &str) -> Option<String> {
    let s = sentence.to_lowercase();
    let (_, expr, threshold) = GROUNDINGS.iter().find(|(keys, _, _)| keys.iter().any(|k| s.contains(k)))?;
    Some(if s.contains("absence of") || s.contains("no ") && s.contains("whether") {
        format!("{expr} = 0")
    } else if s.contains("presence of") || s.contains("whether") {
        format!("{expr} >= {threshold}")
    } else {
        expr.to_string()
    })
}

/// Transform name and the knowledge keywords that favour it.
const TRANSFORM_KEYWORDS: &[(&str, &[&str])] = &[
    ("o_methylation", &["phenol", "hydroxyl", "donor", "polar"]),
    ("n_methylation", &["amide", "donor", "n-methyl"]),
    ("nitro_to_isopropyl", &["nitro", "isopropyl", "lipophilic"]),
    ("nitro_to_carboxyl", &["nitro", "carboxyl"]),
    ("side_chain_truncation", &["side chain", "simplif", "ether", "truncat"]),
    ("aromatic_methylation", &["lipophilic", "alkyl", "logp", "hydrophobic"]),
    ("add_isopropyl", &["isopropyl", "branch", "side chain", "bulk"]),
    ("halogenation", &["halogen", "fluor", "chlor", "lipophilic"]),
];

const MATCHES_PER_TRANSFORM: usize = 2;

#[derive(Debug, Clone)]
pub struct HeuristicProvider {
    seed: u64,
}

impl HeuristicProvider {
    pub fn new(seed: u64) -> Self {
        HeuristicProvider { seed }
    }

    /// Per-request generator so replies do not depend on call order.
    fn rng(&self, salt: &str) -> ChaCha8Rng {
        let mut h = XxHash64::with_seed(self.seed);
        h.write(salt.as_bytes());
        ChaCha8Rng::seed_from_u64(h.finish())
    }

    fn synthesize(&self, task: &TaskSpec) -> Vec<&'static str> {
        match &task.objective {
            Objective::Optimization { property: Property::Logp, .. } => vec![
                "Calculate the logP value.",
                "Calculate the absence of phenolic hydroxyl groups.",
                "Calculate the absence of nitro groups.",
                "Calculate the presence of aromatic rings.",
                "Calculate the presence of lipophilic alkyl substituents.",
                "Calculate the number of hydrogen bond donors in the structure.",
            ],
            Objective::Optimization { property: Property::Qed, .. } => vec![
                "Calculate the drug-likeness score.",
                "Calculate the absence of nitro groups.",
                "Calculate the absence of structural alerts.",
                "Calculate the presence of aromatic rings.",
                "Calculate the molecular weight.",
                "Calculate the number of rotatable bonds.",
            ],
            Objective::Prediction { metric, .. } => {
                let mut v = vec![
                    "Calculate the logP value.",
                    "Calculate the molecular weight.",
                    "Calculate the topological polar surface area.",
                    "Calculate the number of hydrogen bond donors in the structure.",
                    "Calculate the number of hydrogen bond acceptors in the structure.",
                    "Calculate the number of rotatable bonds.",
                    "Calculate the presence of aromatic rings.",
                    "Calculate the number of polar functional groups present in the molecule.",
                    "Calculate the size of the hydrophobic regions.",
                    "Calculate the fraction of sp3 carbons.",
                ];
                if *metric == Metric::Auc {
                    v.push("Calculate the overall charge of the molecule.");
                }
                v
            }
        }
    }

    fn rectify(&self, sentence: &str, source: &str, phase: Phase, message: &str) -> String {
        if phase == Phase::Eval {
            if let Ok(ast) = parse_rule(source) {
                let fixed = if message.contains("unknown descriptor") {
                    rename_unknown(ast.expr())
                } else {
                    guard_denominators(ast.expr())
                };
                return fixed.to_string();
            }
        }
        match ground_sentence(sentence) {
            Some(src) if src != source => src,
            _ => source.to_string(),
        }
    }

    fn expand(&self, state: &SearchState, knowledge: &[String], k: usize) -> Vec<ActionProposal> {
        let lower: Vec<String> = knowledge.iter().map(|s| s.to_lowercase()).collect();
        let mut rng = self.rng(&state.summary());
        let mut scored: Vec<(usize, ActionProposal)> = match state {
            SearchState::Optimization { smiles } => {
                let Ok(mol) = parse_smiles(smiles) else {
                    return Vec::new();
                };
                let own = canonical_smiles(&mol);
                let mut out = Vec::new();
                for t in transform_library() {
                    let keys = TRANSFORM_KEYWORDS
                        .iter()
                        .find(|(n, _)| *n == t.name)
                        .map(|(_, k)| *k)
                        .unwrap_or(&[]);
                    let hits: Vec<&String> = knowledge
                        .iter()
                        .zip(&lower)
                        .filter(|(_, l)| keys.iter().any(|k| l.contains(k)))
                        .map(|(s, _)| s)
                        .collect();
                    let n = t.matches(&mol).len().min(MATCHES_PER_TRANSFORM);
                    for m in 0..n {
                        let Ok(product) = t.apply(&mol, m) else { continue };
                        let smi = canonical_smiles(&product);
                        if smi == own {
                            continue;
                        }
                        let rationale = match hits.first() {
                            Some(rule) => format!("{} follows: {rule}", t.name),
                            None => format!("{} explores a nearby structure", t.name),
                        };
                        out.push((
                            hits.len(),
                            ActionProposal {
                                candidate: smi,
                                rationale,
                                transform: Some(TransformRef {
                                    name: t.name.clone(),
                                    match_index: m,
                                }),
                            },
                        ));
                    }
                }
                out
            }
            SearchState::Prediction { features } => registry()
                .names()
                .filter(|n| !features.iter().any(|f| f == n))
                .map(|name| {
                    let needle = format!("desc({name})");
                    let hits: Vec<&String> = knowledge
                        .iter()
                        .filter(|s| ground_sentence(s).is_some_and(|g| g.contains(&needle)))
                        .collect();
                    let rationale = match hits.first() {
                        Some(rule) => format!("adds {name}, grounded from: {rule}"),
                        None => format!("adds {name} to widen the feature set"),
                    };
                    (
                        hits.len(),
                        ActionProposal {
                            candidate: name.to_string(),
                            rationale,
                            transform: None,
                        },
                    )
                })
                .collect(),
        };
        scored.shuffle(&mut rng);
        // stable: shuffled order survives among equal scores
        scored.sort_by(|a, b| b.0.cmp(&a.0));
        let mut seen = std::collections::BTreeSet::new();
        scored
            .into_iter()
            .map(|(_, p)| p)
            .filter(|p| seen.insert(p.candidate.clone()))
            .take(k)
            .collect()
    }
}

fn guard_denominators(e: &Expr) -> Expr {
    map_expr(e, &|node| match node {
        Expr::Arith {
            op: ArithOp::Div,
            lhs,
            rhs,
            pos,
        } => Some(Expr::Arith {
            op: ArithOp::Div,
            lhs: lhs.clone(),
            rhs: Box::new(Expr::Arith {
                op: ArithOp::Add,
                lhs: rhs.clone(),
                rhs: Box::new(Expr::Num(1.0)),
                pos: *pos,
            }),
            pos: *pos,
        }),
        _ => None,
    })
}

fn rename_unknown(e: &Expr) -> Expr {
    let reg = registry();
    map_expr(e, &|node| match node {
        Expr::Desc { name, pos } if !reg.contains(name) => {
            let best = reg
                .names()
                .max_by(|a, b| {
                    strsim::normalized_levenshtein(name, a)
                        .total_cmp(&strsim::normalized_levenshtein(name, b))
                        .then_with(|| b.cmp(a))
                })
                .expect("registry is not empty");
            Some(Expr::Desc {
                name: best.to_string(),
                pos: *pos,
            })
        }
        _ => None,
    })
}

/// Rebuilds `e` bottom-up, letting `f` replace nodes (children first).
fn map_expr(e: &Expr, f: &dyn Fn(&Expr) -> Option<Expr>) -> Expr {
    let b = |x: &Expr| Box::new(map_expr(x, f));
    let rebuilt = match e {
        Expr::Neg(x) => Expr::Neg(b(x)),
        Expr::Not(x) => Expr::Not(b(x)),
        Expr::Arith { op, lhs, rhs, pos } => Expr::Arith {
            op: *op,
            lhs: b(lhs),
            rhs: b(rhs),
            pos: *pos,
        },
        Expr::Cmp { op, lhs, rhs } => Expr::Cmp {
            op: *op,
            lhs: b(lhs),
            rhs: b(rhs),
        },
        Expr::And(x, y) => Expr::And(b(x), b(y)),
        Expr::Or(x, y) => Expr::Or(b(x), b(y)),
        leaf => leaf.clone(),
    };
    f(&rebuilt).unwrap_or(rebuilt)
}

fn fenced(body: &str) -> String {
    format!("```\n{body}\n```\n")
}

impl PolicyProvider for HeuristicProvider {
    fn id(&self) -> String {
        format!("heuristic:{}", self.seed)
    }

    fn complete(&self, request: &PolicyRequest) -> Result<String, PolicyError> {
        Ok(match &request.context {
            RequestContext::Synthesize { task } => {
                let rules = self.synthesize(task);
                fenced(&serde_json::json!({ "rules": rules }).to_string())
            }
            RequestContext::Ground { sentence } => match ground_sentence(sentence) {
                Some(src) => fenced(&src),
                None => format!("No descriptor matches this rule.\n{}", fenced("?")),
            },
            RequestContext::Rectify { sentence, source, trace } => {
                fenced(&self.rectify(sentence, source, trace.phase, &trace.message))
            }
            RequestContext::Expand { state, knowledge, k, .. } => {
                let proposals = self.expand(state, knowledge, *k);
                fenced(&serde_json::to_string(&proposals).expect("proposals serialize"))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::Policy;
    use crate::ruledsl::{ErrorTrace, Type};
    use std::sync::Arc;

    #[test]
    fn grounds_presence_and_quantities() {
        assert_eq!(ground_sentence("Calculate the molecular weight.").unwrap(), "desc(molecular_weight)");
        assert_eq!(
            ground_sentence("Calculate the presence of aromatic rings.").unwrap(),
            "desc(aromatic_ring_count) >= 1"
        );
        assert_eq!(
            ground_sentence("Calculate the presence of functional groups that can ionize.").unwrap(),
            "desc(ionizable_group_count) >= 1"
        );
        assert_eq!(
            ground_sentence("Calculate the absence of nitro groups.").unwrap(),
            "count([N;+1](=O)[O;-1]) = 0"
        );
        assert!(ground_sentence("Calculate the colour.").is_none());
        let src = ground_sentence("Calculate the presence of multiple functional groups.").unwrap();
        assert_eq!(parse_rule(&src).unwrap().ty(), Type::Bool);
    }

    #[test]
    fn rectify_guards_division() {
        let p = HeuristicProvider::new(0);
        let fixed = p.rectify("x", "desc(logp) / desc(ring_count)", Phase::Eval, "division by zero");
        assert_eq!(fixed, "(desc(logp) / (desc(ring_count) + 1))");
        let mol = parse_smiles("CCO").unwrap();
        assert!(parse_rule(&fixed).unwrap().eval(&mol).is_ok());
        let renamed = p.rectify("x", "desc(molecular_weigth)", Phase::Eval, "unknown descriptor 'molecular_weigth'");
        assert_eq!(renamed, "desc(molecular_weight)");
    }

    #[test]
    fn rectify_prompt_carries_trace() {
        let policy = Policy::new(Arc::new(HeuristicProvider::new(0)));
        let trace = ErrorTrace {
            rule_id: "r1".into(),
            phase: Phase::Eval,
            message: "division by zero".into(),
            position: 11,
        };
        let out = policy.rectify("Calculate x.", "desc(logp) / 0", &trace).unwrap();
        assert_eq!(out, "(desc(logp) / (0 + 1))");
    }

    #[test]
    fn phenol_gets_o_methylation() {
        let p = HeuristicProvider::new(7);
        let state = SearchState::Optimization { smiles: "Oc1ccc(CC)cc1".into() };
        let knowledge = vec!["Replace aromatic hydroxyl (phenol) with methoxy.".to_string()];
        let out = p.expand(&state, &knowledge, 5);
        assert!(!out.is_empty() && out.len() <= 5);
        assert_eq!(out[0].transform.as_ref().unwrap().name, "o_methylation");
        assert_eq!(out[0].candidate, canonical_smiles(&parse_smiles("COc1ccc(CC)cc1").unwrap()));
    }

    #[test]
    fn feature_proposals_exhaust() {
        let p = HeuristicProvider::new(1);
        let all: Vec<String> = registry().names().map(String::from).collect();
        let state = SearchState::Prediction { features: all };
        assert!(p.expand(&state, &[], 5).is_empty());
        let state = SearchState::Prediction {
            features: vec!["logp".into()],
        };
        let out = p.expand(&state, &["Calculate the molecular weight.".into()], 3);
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].candidate, "molecular_weight");
        assert!(out.iter().all(|o| o.candidate != "logp"));
    }

    #[test]
    fn deterministic_for_seed() {
        let state = SearchState::Optimization { smiles: "c1ccccc1CCO".into() };
        let a = HeuristicProvider::new(3).expand(&state, &[], 4);
        let b = HeuristicProvider::new(3).expand(&state, &[], 4);
        assert_eq!(a, b);
    }
}
