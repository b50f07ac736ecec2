use crate::mcts::{Proposer, Real, SearchTask};
use crate::policy::{ActionProposal, Policy, SearchState};

use super::TaskSpec;

/// A task whose actions come from a [`Policy`].
pub trait PolicyTask<F>: SearchTask<F, Action = ActionProposal> {
    fn spec(&self) -> &TaskSpec;
    fn search_state(&self, state: &Self::State) -> SearchState;
}

/// Adapts a policy to the search engine's proposer interface. The textual
/// knowledge is passed along with every expansion request.
pub struct PolicyProposer<'a> {
    policy: &'a Policy,
    knowledge: Vec<String>,
}

impl<'a> PolicyProposer<'a> {
    pub fn new(policy: &'a Policy, knowledge: Vec<String>) -> Self {
        PolicyProposer { policy, knowledge }
    }
}

impl<F: Real, T: PolicyTask<F>> Proposer<F, T> for PolicyProposer<'_> {
    fn id(&self) -> String {
        self.policy.provider_id()
    }

    fn propose(&self, task: &T, state: &T::State, k: usize) -> Result<Vec<ActionProposal>, String> {
        self.policy
            .propose_actions(task.spec(), &task.search_state(state), &self.knowledge, k)
            .map_err(|e| e.to_string())
    }
}
