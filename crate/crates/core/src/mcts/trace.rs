use serde::Serialize;

use super::{Real, RewardBreakdown, SearchConfig, SearchTree};

pub const TRACE_SCHEMA: &str = "molsearch.trace/1";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceHeader<F> {
    pub config: SearchConfig<F>,
    pub seed: u64,
    pub provider: String,
    pub fingerprint_hash_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeRecord<F> {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub action: String,
    pub state: String,
    pub q: F,
    pub n: u64,
    pub reward: RewardBreakdown<F>,
    pub valid: bool,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord<F> {
    pub iteration: usize,
    /// Root-to-leaf selection path.
    pub selected: Vec<usize>,
    pub added: Vec<usize>,
    pub best_node: usize,
    pub best_total: F,
}

/// Everything needed to audit a finished search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchTrace<F> {
    pub schema: String,
    pub header: TraceHeader<F>,
    pub nodes: Vec<NodeRecord<F>>,
    pub iterations: Vec<IterationRecord<F>>,
    pub best: usize,
    /// Set when the proposer failed; holds its message.
    pub truncated: Option<String>,
    /// The tree ran out of selectable nodes before the budget.
    pub exhausted: bool,
}

impl<F: Real> SearchTrace<F> {
    pub(crate) fn build<S, A>(
        header: TraceHeader<F>,
        tree: &SearchTree<F, S, A>,
        iterations: Vec<IterationRecord<F>>,
        best: usize,
        truncated: Option<String>,
        exhausted: bool,
    ) -> Self {
        let nodes = tree
            .nodes()
            .iter()
            .map(|n| NodeRecord {
                id: n.id,
                parent: n.parent,
                depth: n.depth,
                action: n.action_text.clone(),
                state: n.state_text.clone(),
                q: n.q,
                n: n.n,
                reward: n.reward,
                valid: n.valid(),
                rationale: n.rationale.clone(),
            })
            .collect();
        SearchTrace {
            schema: TRACE_SCHEMA.to_string(),
            header,
            nodes,
            iterations,
            best,
            truncated,
            exhausted,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes") + "\n"
    }

    /// Best total after each iteration.
    pub fn best_per_iteration(&self) -> Vec<F> {
        self.iterations.iter().map(|r| r.best_total).collect()
    }
}
