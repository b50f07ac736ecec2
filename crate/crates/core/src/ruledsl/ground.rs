use crate::molgraph::parse_smiles;
use crate::policy::{Policy, PolicyError};

use super::{parse_rule, Provenance, Rule, RuleAst, RuleError, RuleKind, RuleSet, RuleSetError, ErrorTrace};

/// Molecule every grounded rule must evaluate on before it is accepted.
pub const PROBE_SMILES: &str = "CCO";

#[derive(Debug, Clone, PartialEq)]
pub struct GroundingOutcome {
    pub rules: RuleSet,
    /// Every failed check, in the order it happened.
    pub traces: Vec<ErrorTrace>,
    /// Sentences given up on, with their last error.
    pub dropped: Vec<(String, ErrorTrace)>,
    /// Total number of rectification requests made.
    pub rectifications: usize,
}

fn check(src: &str) -> Result<RuleAst, RuleError> {
    let ast = parse_rule(src)?;
    let probe = parse_smiles(PROBE_SMILES).expect("probe parses");
    ast.eval(&probe)?;
    Ok(ast)
}

/// Turns sentences into executable rules: ground, check on the probe, and
/// rectify up to `max_retries` times. Ids run `r01`, `r02`, ... over the
/// accepted rules. Provider failures abort the whole call.
pub fn ground_rules(texts: &[String], policy: &Policy, max_retries: usize) -> Result<GroundingOutcome, PolicyError> {
    let mut rules = Vec::new();
    let mut traces = Vec::new();
    let mut dropped = Vec::new();
    let mut rectifications = 0;
    for (i, sentence) in texts.iter().enumerate() {
        let label = format!("s{:02}", i + 1);
        let mut src = policy.ground(sentence)?;
        let mut retries = 0;
        loop {
            match check(&src) {
                Ok(ast) => {
                    let id = format!("r{:02}", rules.len() + 1);
                    rules.push(Rule {
                        id,
                        sentence: sentence.clone(),
                        kind: RuleKind::for_type(ast.ty()),
                        ast,
                        weight: 1.0,
                        provenance: Provenance {
                            provider: policy.provider_id(),
                            retries,
                        },
                    });
                    break;
                }
                Err(err) => {
                    let trace = err.trace(&label);
                    log::info!("{trace} (source: {src})");
                    traces.push(trace.clone());
                    if retries == max_retries {
                        log::warn!("dropping '{sentence}' after {retries} rectifications");
                        dropped.push((sentence.clone(), trace));
                        break;
                    }
                    retries += 1;
                    rectifications += 1;
                    src = policy.rectify(sentence, &src, &trace)?;
                }
            }
        }
    }
    let rules = RuleSet::new(rules).map_err(|e: RuleSetError| PolicyError::Malformed(e.to_string()))?;
    Ok(GroundingOutcome {
        rules,
        traces,
        dropped,
        rectifications,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{HeuristicProvider, RequestKind, ScriptRecord, ScriptedProvider};
    use crate::ruledsl::Phase;
    use std::sync::Arc;

    fn sentences(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn rectifies_then_accepts() {
        let script = ScriptedProvider::from_records(vec![
            ScriptRecord::new(RequestKind::Ground, "desc(heavy_atom_count) / desc(ring_count)".into()),
            ScriptRecord::new(RequestKind::Rectify, "desc(heavy_atom_count) / (desc(ring_count) + 1)".into()),
            ScriptRecord::new(RequestKind::Ground, "desc(hbd_count) >= 1".into()),
        ]);
        let policy = Policy::new(Arc::new(script));
        let out = ground_rules(&sentences(&["Calculate a ratio.", "Calculate donors."]), &policy, 3).unwrap();
        assert_eq!(out.rules.len(), 2);
        assert_eq!(out.rectifications, 1);
        assert_eq!(out.traces.len(), 1);
        assert_eq!(out.traces[0].phase, Phase::Eval);
        assert_eq!(out.traces[0].position, 23);
        let r1 = out.rules.get("r01").unwrap();
        assert_eq!(r1.kind, RuleKind::Feature);
        assert_eq!(r1.provenance.retries, 1);
        assert_eq!(out.rules.get("r02").unwrap().kind, RuleKind::Heuristic);
    }

    #[test]
    fn drops_after_retry_budget() {
        let mut recs = vec![ScriptRecord::new(RequestKind::Ground, "desc(logp) +".into())];
        for _ in 0..2 {
            recs.push(ScriptRecord::new(RequestKind::Rectify, "desc(logp) > true".into()));
        }
        let policy = Policy::new(Arc::new(ScriptedProvider::from_records(recs)));
        let out = ground_rules(&sentences(&["Calculate nonsense."]), &policy, 2).unwrap();
        assert!(out.rules.is_empty());
        assert_eq!(out.dropped.len(), 1);
        assert_eq!(out.dropped[0].1.phase, Phase::Typecheck);
        assert_eq!(out.traces.len(), 3);
        assert_eq!(out.traces[0].phase, Phase::Parse);
    }

    #[test]
    fn heuristic_provider_grounds_common_sentences() {
        let policy = Policy::new(Arc::new(HeuristicProvider::new(0)));
        let texts = sentences(&[
            "Calculate the logP value.",
            "Calculate the presence of aromatic rings.",
            "Calculate the ratio of symmetry classes to atoms.",
            "Calculate the favourite colour.",
        ]);
        let out = ground_rules(&texts, &policy, 3).unwrap();
        assert_eq!(out.rules.len(), 3);
        assert_eq!(out.dropped.len(), 1);
        assert_eq!(out.dropped[0].0, "Calculate the favourite colour.");
    }
}
