use crate::descriptors::registry;
use crate::mcts::{lit, Real, RewardTerms, SearchTask};
use crate::molgraph::{canonical_smiles, fingerprint, parse_smiles, sanitize, tanimoto, transform_library, Fingerprint, Molecule};
use crate::policy::{ActionProposal, SearchState};
use crate::ruledsl::{alignment_score, RuleSet};

use super::{Objective, PolicyTask, Property, TaskError, TaskSpec};

/// A sanitized molecule keyed by its canonical SMILES.
#[derive(Debug, Clone)]
pub struct OptState {
    pub smiles: String,
    pub mol: Molecule,
}

impl OptState {
    pub fn from_smiles(text: &str) -> Result<Self, TaskError> {
        let mol = parse_smiles(text).map_err(|e| TaskError::InvalidMolecule(format!("{text}: {e}")))?;
        Self::from_molecule(&mol)
    }

    /// Sanitizes, canonicalizes, and re-reads the canonical form so that the
    /// state does not depend on the input atom order.
    pub fn from_molecule(mol: &Molecule) -> Result<Self, TaskError> {
        let report = sanitize(mol);
        if !report.is_valid() {
            return Err(TaskError::InvalidMolecule(report.summary().unwrap_or_default()));
        }
        if mol.heavy_atom_count() == 0 {
            return Err(TaskError::InvalidMolecule("no heavy atoms".into()));
        }
        let smiles = canonical_smiles(mol);
        let mol = parse_smiles(&smiles).map_err(|e| TaskError::InvalidMolecule(format!("{smiles}: {e}")))?;
        Ok(OptState { smiles, mol })
    }
}

/// Materializes a proposal. A named library transform wins over the
/// candidate SMILES.
pub fn apply_action(state: &OptState, proposal: &ActionProposal) -> Result<OptState, TaskError> {
    if let Some(t) = &proposal.transform {
        let edit = transform_library()
            .into_iter()
            .find(|x| x.name == t.name)
            .ok_or_else(|| TaskError::InvalidAction(format!("unknown transform '{}'", t.name)))?;
        let mol = edit
            .apply(&state.mol, t.match_index)
            .map_err(|e| TaskError::InvalidAction(format!("{}: {e}", t.name)))?;
        return OptState::from_molecule(&mol);
    }
    OptState::from_smiles(proposal.candidate.trim())
}

pub struct OptimizationTask {
    spec: TaskSpec,
    property: Property,
    start: OptState,
    start_fp: Fingerprint,
    rules: RuleSet,
}

impl OptimizationTask {
    pub fn new(spec: TaskSpec, rules: RuleSet) -> Result<Self, TaskError> {
        let Objective::Optimization { property, start } = &spec.objective else {
            return Err(TaskError::Spec("not an optimization task".into()));
        };
        let property = *property;
        let start = OptState::from_smiles(start)?;
        let start_fp = fingerprint(&start.mol);
        Ok(OptimizationTask {
            spec,
            property,
            start,
            start_fp,
            rules,
        })
    }

    pub fn start(&self) -> &OptState {
        &self.start
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    pub fn property(&self) -> Property {
        self.property
    }

    pub fn property_value(&self, state: &OptState) -> Result<f64, TaskError> {
        registry()
            .compute(self.property.descriptor(), &state.mol)
            .map_err(|e| TaskError::InvalidMolecule(e.to_string()))
    }

    pub fn similarity_to_start(&self, state: &OptState) -> f64 {
        tanimoto(&fingerprint(&state.mol), &self.start_fp).expect("fingerprints share a length")
    }
}

impl<F: Real> SearchTask<F> for OptimizationTask {
    type State = OptState;
    type Action = ActionProposal;

    fn root(&self) -> OptState {
        self.start.clone()
    }

    fn key(&self, state: &OptState) -> String {
        state.smiles.clone()
    }

    fn describe_state(&self, state: &OptState) -> String {
        state.smiles.clone()
    }

    fn describe_action(&self, a: &ActionProposal) -> String {
        match &a.transform {
            Some(t) => format!("{}#{}", t.name, t.match_index),
            None => a.candidate.clone(),
        }
    }

    fn rationale(&self, a: &ActionProposal) -> String {
        a.rationale.clone()
    }

    fn apply(&self, state: &OptState, a: &ActionProposal) -> Result<OptState, String> {
        apply_action(state, a).map_err(|e| e.to_string())
    }

    fn evaluate(&self, state: &OptState) -> Result<RewardTerms<F>, String> {
        let task = self.property_value(state).map_err(|e| e.to_string())?;
        let heuristic = alignment_score(&self.rules, &state.mol) as f64;
        let penalty = -(1.0 - self.similarity_to_start(state));
        Ok(RewardTerms {
            task: lit(task),
            heuristic: lit(heuristic),
            penalty: lit(penalty),
        })
    }
}

impl<F: Real> PolicyTask<F> for OptimizationTask {
    fn spec(&self) -> &TaskSpec {
        &self.spec
    }

    fn search_state(&self, state: &OptState) -> SearchState {
        SearchState::Optimization {
            smiles: state.smiles.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::TransformRef;
    use approx::assert_abs_diff_eq;

    fn proposal(c: &str) -> ActionProposal {
        ActionProposal {
            candidate: c.into(),
            rationale: String::new(),
            transform: None,
        }
    }

    #[test]
    fn start_has_no_penalty() {
        let spec = TaskSpec::optimization(Property::Logp, "OC(=O)c1ccccc1O");
        let task = OptimizationTask::new(spec, RuleSet::default()).unwrap();
        let t: RewardTerms<f64> = task.evaluate(task.start()).unwrap();
        assert_eq!(t.penalty, 0.0);
        assert_eq!(t.heuristic, 0.0);
    }

    #[test]
    fn actions_validate_and_canonicalize() {
        let s = OptState::from_smiles("c1ccccc1O").unwrap();
        assert!(apply_action(&s, &proposal("C1CC")).is_err());
        assert!(apply_action(&s, &proposal("C(C)(C)(C)(C)C")).is_err());
        let a = apply_action(&s, &proposal("COc1ccccc1")).unwrap();
        let b = apply_action(&s, &proposal("c1ccc(OC)cc1")).unwrap();
        assert_eq!(a.smiles, b.smiles);
        let t = ActionProposal {
            candidate: String::new(),
            rationale: String::new(),
            transform: Some(TransformRef {
                name: "o_methylation".into(),
                match_index: 0,
            }),
        };
        assert_eq!(apply_action(&s, &t).unwrap().smiles, a.smiles);
    }

    #[test]
    fn reward_invariant_under_retraversal() {
        let spec = TaskSpec::optimization(Property::Qed, "CC(=O)Nc1ccc(O)cc1");
        let task = OptimizationTask::new(spec, RuleSet::from_sources([("r", "count([O;H1]c) = 0")]).unwrap()).unwrap();
        let a = OptState::from_smiles("Oc1ccc(NC(C)=O)cc1").unwrap();
        let b = OptState::from_smiles("CC(=O)Nc1ccc(O)cc1").unwrap();
        let ta: RewardTerms<f64> = task.evaluate(&a).unwrap();
        let tb: RewardTerms<f64> = task.evaluate(&b).unwrap();
        assert_eq!(ta, tb);
        assert_abs_diff_eq!(ta.penalty, 0.0);
    }
}
